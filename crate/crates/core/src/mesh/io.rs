//! Plain-text mesh files.
//!
//! ```text
//! polymesh 1 2
//! V <count>
//! x y
//! ...
//! C <count>
//! m i1 ... im
//! ...
//! ```
//!
//! Indices are 0-based and `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{build_mesh, PolyMesh, Vec2};

struct Cursor<'a> {
    path: PathBuf,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

struct Tok<'a> {
    line: usize,
    column: usize,
    text: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(path: &Path, src: &'a str) -> Self {
        let lines = src
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("")))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        Cursor { path: path.to_path_buf(), lines, pos: 0 }
    }

    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.clone(), line, column, message: message.into() }
    }

    fn next_line(&mut self, what: &str) -> Result<Vec<Tok<'a>>> {
        let Some(&(line, text)) = self.lines.get(self.pos) else {
            let last = self.lines.last().map_or(1, |l| l.0);
            return Err(self.err(last, 1, format!("unexpected end of file, expected {what}")));
        };
        self.pos += 1;
        let mut toks = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    toks.push(Tok { line, column: s + 1, text: &text[s..i] });
                    start = None;
                }
                _ => {}
            }
        }
        Ok(toks)
    }

    fn parse<T: std::str::FromStr>(&self, tok: &Tok<'_>, what: &str) -> Result<T> {
        tok.text
            .parse()
            .map_err(|_| self.err(tok.line, tok.column, format!("expected {what}, found '{}'", tok.text)))
    }

    fn header(&mut self, tag: &str) -> Result<usize> {
        let toks = self.next_line(&format!("'{tag} <count>'"))?;
        match toks.as_slice() {
            [t, n] if t.text == tag => self.parse(n, "count"),
            [t, ..] => Err(self.err(t.line, t.column, format!("expected '{tag} <count>'"))),
            [] => unreachable!(),
        }
    }
}

/// Parses a mesh from the text format. `path` only labels error messages.
pub fn parse_mesh(src: &str, path: &Path) -> Result<PolyMesh> {
    let mut cur = Cursor::new(path, src);
    let toks = cur.next_line("'polymesh 1 2'")?;
    match toks.as_slice() {
        [a, b, c] if a.text == "polymesh" => {
            let version: u32 = cur.parse(b, "version")?;
            let dim: u32 = cur.parse(c, "dimension")?;
            if version != 1 || dim != 2 {
                return Err(cur.err(b.line, b.column, format!("unsupported version {version} / dimension {dim}")));
            }
        }
        [t, ..] => return Err(cur.err(t.line, t.column, "expected 'polymesh 1 2'")),
        [] => unreachable!(),
    }

    let nv = cur.header("V")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let toks = cur.next_line("vertex coordinates")?;
        if toks.len() != 2 {
            return Err(cur.err(toks[0].line, toks[0].column, "expected two coordinates"));
        }
        let x: f64 = cur.parse(&toks[0], "coordinate")?;
        let y: f64 = cur.parse(&toks[1], "coordinate")?;
        vertices.push(Vec2::new(x, y));
    }

    let nc = cur.header("C")?;
    if nc == 0 {
        let (line, _) = cur.lines[cur.pos - 1];
        return Err(cur.err(line, 1, "empty cell list"));
    }
    let mut loops = Vec::with_capacity(nc);
    for _ in 0..nc {
        let toks = cur.next_line("cell vertex loop")?;
        let m: usize = cur.parse(&toks[0], "vertex count")?;
        if toks.len() != m + 1 {
            return Err(cur.err(toks[0].line, toks[0].column, format!("expected {m} vertex indices, found {}", toks.len() - 1)));
        }
        let mut lp = Vec::with_capacity(m);
        for t in &toks[1..] {
            let i: usize = cur.parse(t, "vertex index")?;
            if i >= nv {
                return Err(cur.err(t.line, t.column, format!("vertex index {i} out of range ({nv} vertices)")));
            }
            lp.push(i);
        }
        loops.push(lp);
    }
    if let Some(&(line, _)) = cur.lines.get(cur.pos) {
        return Err(cur.err(line, 1, "trailing content after cell list"));
    }
    build_mesh(vertices, loops)
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<PolyMesh> {
    let path = path.as_ref();
    let src = fs::read_to_string(path)?;
    parse_mesh(&src, path)
}

/// Serializes a mesh; coordinates carry 17 significant digits.
pub fn write_mesh(mesh: &PolyMesh) -> String {
    let mut s = String::new();
    s.push_str("polymesh 1 2\n");
    let _ = writeln!(s, "V {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.16e} {:.16e}", v.x, v.y);
    }
    let _ = writeln!(s, "C {}", mesh.cells.len());
    for c in &mesh.cells {
        let _ = write!(s, "{}", c.vertices.len());
        for v in &c.vertices {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn save_mesh(mesh: &PolyMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_mesh(mesh))?;
    Ok(())
}
