mod common;

use common::oracle::{compare, sweep};
use nalgebra::DVector;
use polyhho::discretization::Discretization;
use polyhho::mesh::{Family, Rect};

#[test]
fn constructive_reconstruction_matches_least_norm_solve() {
    let (diff, res) = sweep(3, 7);
    assert!(res < 1e-9, "oracle residual {res:e}");
    assert!(diff < 1e-9, "relative difference {diff:e}");
}

#[test]
fn oracle_test_space_matches_interior_dofs() {
    for family in [Family::Cartesian, Family::Hexagonal, Family::Kershaw] {
        let mesh = family.generate(3, Rect::unit()).unwrap();
        for k in 0..=2 {
            let d = Discretization::new(mesh.clone(), k).unwrap();
            let c = d.mesh.num_cells() / 2;
            let dofs = DVector::from_element(d.ops[c].n_dofs(), 1.0);
            let cmp = compare(&d.mesh, &d.ops[c], &d.recs[c], &dofs);
            let space = &d.recs[c].space;
            assert_eq!(cmp.test_space_dim, space.dim() - space.n_boundary, "{family} k={k}");
        }
    }
}

