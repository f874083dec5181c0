//! Acceptance gate: runs every criterion and prints one PASS/FAIL line each.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use polyhho::bench::{compute_eoc, run_cavity, run_kovasznay, run_robustness, solve_level, CavityConfig, StudyConfig};
use polyhho::checks::run_checks;
use polyhho::discretization::Discretization;
use polyhho::forms::Mode;
use polyhho::mesh::Family;
use polyhho::problems::{Kovasznay, Rotation};
use polyhho::quadrature::simplex_points;
use polyhho::solver::{SolveStatus, SolverConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|e| Outcome { pass: false, detail: format!("panicked: {:?}", e.downcast_ref::<String>()) });
    let elapsed = start.elapsed();
    let pass = outcome.pass && elapsed <= budget;
    println!(
        "{} {name}: {} [{:.1} s, budget {} s]",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn operator_properties() -> Outcome {
    let results = run_checks(50, 2024).expect("checks");
    let failed: Vec<String> = results.iter().filter(|r| !r.passed()).map(|r| r.line()).collect();
    let worst = results.iter().map(|r| r.value / r.tolerance).fold(0.0, f64::max);
    Outcome {
        pass: failed.is_empty(),
        detail: format!("{} checks, worst value/tolerance {worst:.2e}; failures: {failed:?}", results.len()),
    }
}

fn kovasznay_convergence() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for k in 0..=1 {
        let report = run_kovasznay(&StudyConfig { k, ..StudyConfig::default() }).expect("study");
        let e = report.eoc_energy().last().copied().flatten().unwrap_or(f64::NAN);
        let u = report.eoc_u().last().copied().flatten().unwrap_or(f64::NAN);
        let ok = e >= k as f64 + 1.0 - 0.2 && u >= k as f64 + 2.0 - 0.35 && !report.any_nonconverged();
        pass &= ok;
        detail.push(format!("k={k} eoc energy {e:.3} l2 {u:.3}"));
    }
    Outcome { pass, detail: detail.join(", ") }
}

fn robustness() -> Outcome {
    let base = StudyConfig { k: 1, levels: 1, ..StudyConfig::default() };
    let robust = run_robustness(&base, 1e6).expect("robust run");
    let classic_cfg = StudyConfig { solver: SolverConfig { mode: Mode::Classic, ..base.solver }, ..base };
    let classic = run_robustness(&classic_cfg, 1e6).expect("classic run");
    let (r, c) = (&robust.rows[0], &classic.rows[0]);
    let robust_ok = r.err_energy <= 1e-8 && r.err_u_l2 <= 1e-9;
    let classic_ok = c.err_energy >= 1e2;

    let mesh = base.family.generate(base.base_n, Rotation { lambda: 0.0 }.domain()).expect("mesh");
    let disc = Discretization::new(mesh, 1).expect("discretization");
    let sols: Vec<DVector<f64>> = [0.0, 1e3, 1e6]
        .iter()
        .map(|&lambda| solve_level(disc.clone(), &Rotation { lambda }.problem(), &base.solver).expect("solve").state.u)
        .collect();
    let mut sweep = 0.0f64;
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            sweep = sweep.max((&sols[i] - &sols[j]).norm());
        }
    }
    Outcome {
        pass: robust_ok && classic_ok && sweep <= 1e-9,
        detail: format!(
            "robust energy {:.2e} l2 {:.2e} ({:?}); classic energy {:.2e} ({:?}); lambda sweep {sweep:.2e}",
            r.err_energy, r.err_u_l2, r.status, c.err_energy, c.status
        ),
    }
}

fn cavity() -> Outcome {
    let base = CavityConfig { reynolds: 100.0, lambda: 0.0, n: 16, k: 1, family: Family::Cartesian, ..CavityConfig::default() };
    let plain = run_cavity(&base).expect("cavity");
    let st = &plain.solution.state;
    let converged = st.status == SolveStatus::Converged && st.final_residual() < 1e-11 && st.iterations <= 60;
    let forced = run_cavity(&CavityConfig { lambda: 1e3, ..base }).expect("forced cavity");
    let change = (&forced.solution.state.u - &st.u).norm();

    let classic_solver = SolverConfig { mode: Mode::Classic, ..base.solver };
    let classic = run_cavity(&CavityConfig { solver: classic_solver, ..base }).expect("classic cavity");
    let classic_forced = run_cavity(&CavityConfig { lambda: 1e3, solver: classic_solver, ..base }).expect("classic forced cavity");
    let deviation = classic
        .vertical
        .iter()
        .zip(&classic_forced.vertical)
        .map(|(a, b)| (a.1 - b.1).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: converged && change <= 1e-8 && deviation >= 1e-2,
        detail: format!(
            "robust {:?} in {} iterations, residual {:.2e}; forced change {change:.2e}; classic centerline deviation {deviation:.2e} (classic {:?}, classic forced {:?} after {} iterations)",
            st.status,
            st.iterations,
            st.final_residual(),
            classic.solution.state.status,
            classic_forced.solution.state.status,
            classic_forced.solution.state.iterations
        ),
    }
}

fn approximation_rates() -> Outcome {
    let kov = Kovasznay::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for k in 0..=2 {
        let (mut h, mut er, mut eg) = (Vec::new(), Vec::new(), Vec::new());
        for n in [4, 8, 16, 32] {
            let mesh = Family::Cartesian.generate(n, kov.domain()).expect("mesh");
            let d = Discretization::new(mesh, k).expect("discretization");
            let ui = d.interpolate(|p| kov.velocity(p), 2 * k + 8);
            let field = d.reconstruction(&ui);
            let (mut r2, mut g2) = (0.0, 0.0);
            for c in 0..d.mesh.num_cells() {
                let local = d.gather(c, &ui);
                let gsub = d.ops[c].gradient_submesh(&d.mesh, 2 * (k + 1)).expect("submesh gradient");
                for (s, simplex) in d.mesh.cells[c].subtri.simplices.iter().enumerate() {
                    for (p, w) in simplex_points(&d.mesh, simplex, 2 * k + 8).iter() {
                        r2 += w * (field.eval_in(c, s, p).0 - kov.velocity(p)).norm_squared();
                        g2 += w * (gsub[s].eval(&local, p) - kov.gradient(p)).norm_squared();
                    }
                }
            }
            h.push(d.mesh.h());
            er.push(r2.sqrt());
            eg.push(g2.sqrt());
        }
        let last = |e: &[f64]| compute_eoc(e, &h).last().copied().flatten().unwrap_or(f64::NAN);
        let (rr, rg) = (last(&er), last(&eg));
        pass &= rr >= k as f64 + 1.0 - 0.15 && rg >= k as f64 - 0.15;
        detail.push(format!("k={k} eoc reconstruction {rr:.3} gradient {rg:.3}"));
    }
    Outcome { pass, detail: detail.join(", ") }
}

fn oracle_equivalence() -> Outcome {
    let (diff, residual) = common::oracle::sweep(3, 99);
    Outcome { pass: diff <= 1e-9 && residual <= 1e-9, detail: format!("max relative difference {diff:.2e}, oracle residual {residual:.2e}") }
}

fn main() -> ExitCode {
    let min = |m: u64| Duration::from_secs(60 * m);
    let results = [
        run("1 operator properties", min(1), operator_properties),
        run("2 kovasznay convergence", min(10), kovasznay_convergence),
        run("3 robustness", min(2), robustness),
        run("4 cavity", min(5), cavity),
        run("5 approximation rates", min(2), approximation_rates),
        run("6 oracle equivalence", min(1), oracle_equivalence),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
