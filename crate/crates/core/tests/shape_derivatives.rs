use std::sync::Arc;

use nalgebra::DMatrix;
use symspec::domain::{make_domain, make_field, BoundaryField, Mode, TransportMap, DEFAULT_CUTOFF};
use symspec::eigen::EigenOptions;
use symspec::fem::boundary_tangential_gradient;
use symspec::grouprep::{build_group, FiniteGroup, GroupKind};
use symspec::oracle::{bessel_j, bessel_j_prime_zeros};
use symspec::problem::SolvedProblem;
use symspec::shapederiv::{
    boundary_nodes, derivative_report, eigenfunction_derivatives, first_derivative_matrix,
    first_derivative_matrix_nodal, sorted_eigen, BoundaryForm,
};
use symspec::{Error, Execution};

fn group(kind: GroupKind) -> Arc<FiniteGroup> {
    Arc::new(build_group(kind).unwrap())
}

fn solve(kind: GroupKind, modes: &[Mode], h: f64, count: usize) -> SolvedProblem {
    let d = make_domain(&group(kind), 1.0, modes).unwrap();
    SolvedProblem::new(&d, h, count, &EigenOptions::default(), Execution::available()).unwrap()
}

#[test]
fn zero_field_gives_zero_derivatives() {
    let p = solve(GroupKind::Dihedral(3), &[], 0.08, 6);
    let zero = BoundaryField::zero(&p.group);
    let rep = derivative_report(&p, &[1, 2], &zero, true, &EigenOptions::default(), Execution::available()).unwrap();
    assert!(rep.first.iter().flatten().all(|v| *v == 0.0));
    assert!(rep.second.unwrap().iter().flatten().all(|v| *v == 0.0));
    assert!(rep.branches.iter().all(|b| b.lambda_dot == 0.0 && b.lambda_ddot == Some(0.0)));
}

#[test]
fn constant_mode_has_vanishing_first_derivative() {
    let p = solve(GroupKind::Cyclic(3), &[Mode::cos(3, 0.1)], 0.08, 4);
    let f = make_field(&p.group, &[Mode::cos(0, 0.5), Mode::cos(3, 1.0)]).unwrap();
    let map = TransportMap::new(&p.domain, &f, DEFAULT_CUTOFF).unwrap();
    let m = first_derivative_matrix(&p, &[0], &map).unwrap();
    assert!(m[(0, 0)].abs() < 1e-10, "{}", m[(0, 0)]);
}

#[test]
fn slopes_do_not_depend_on_the_cluster_basis() {
    let p = solve(GroupKind::Cyclic(3), &[Mode::new(3, 0.1, 0.04)], 0.07, 6);
    let f = make_field(&p.group, &[Mode::cos(3, 1.0), Mode::new(6, 0.2, 0.5)]).unwrap();
    let map = TransportMap::new(&p.domain, &f, DEFAULT_CUTOFF).unwrap();
    let m = first_derivative_matrix(&p, &[1, 2], &map).unwrap();
    let (a, _) = sorted_eigen(&m);
    // rotate the basis by an orthogonal 2×2 matrix: C^T M C has the same spectrum
    let (s, c) = 0.7f64.sin_cos();
    let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let (b, _) = sorted_eigen(&(q.transpose() * &m * &q));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
    }
    // a single 2-dim irrep cannot split at first order
    assert!((a[1] - a[0]).abs() < 1e-8 * p.spectrum.values[1]);
}

#[test]
fn segment_and_nodal_quadratures_agree() {
    let p = solve(GroupKind::Dihedral(3), &[Mode::cos(3, 0.08)], 0.05, 6);
    let f = make_field(&p.group, &[Mode::cos(0, 0.3), Mode::cos(6, 1.0)]).unwrap();
    let map = TransportMap::new(&p.domain, &f, DEFAULT_CUTOFF).unwrap();
    let a = sorted_eigen(&first_derivative_matrix(&p, &[3], &map).unwrap()).0[0];
    let b = sorted_eigen(&first_derivative_matrix_nodal(&p, &[3], &map).unwrap()).0[0];
    assert!((a - b).abs() < 0.02 * a.abs(), "{a} vs {b}");
}

#[test]
fn derivative_vectors_are_orthogonal_to_the_cluster() {
    let p = solve(GroupKind::Cyclic(5), &[Mode::cos(5, 0.1)], 0.07, 6);
    let f = make_field(&p.group, &[Mode::cos(5, 1.0)]).unwrap();
    let map = TransportMap::new(&p.domain, &f, DEFAULT_CUTOFF).unwrap();
    let nodes = boundary_nodes(&p, &map).unwrap();
    let form = BoundaryForm::new(&p, &nodes, p.spectrum.values[1]);
    let d = eigenfunction_derivatives(&p, &[1, 2], &form, &EigenOptions::default(), Execution::available()).unwrap();
    assert!(d.orthogonality < 1e-10, "{}", d.orthogonality);
    assert!(d.residuals.iter().all(|r| *r < 1e-8));
}

#[test]
fn dilation_derivative_of_radial_mode_matches_bessel_oracle() {
    let p = solve(GroupKind::Dihedral(3), &[], 0.03, 7);
    let j = 5;
    let k = bessel_j_prime_zeros(0, 5.0)[0];
    assert!((p.spectrum.values[j] - k * k).abs() < 0.01 * k * k);
    let f = BoundaryField::dilation(&p.group);
    let map = TransportMap::new(&p.domain, &f, DEFAULT_CUTOFF).unwrap();
    let nodes = boundary_nodes(&p, &map).unwrap();
    let form = BoundaryForm::new(&p, &nodes, p.spectrum.values[j]);
    let d = eigenfunction_derivatives(&p, &[j], &form, &EigenOptions::default(), Execution::available()).unwrap();

    // u = c J_0(kr) on the unit disk; the Eulerian derivative along x ↦ (1+t)x
    // is −u − x·∇u, and x·∇u = −c k r J_1(kr)
    let phi = p.spectrum.vector(j);
    let m = &p.system.mass;
    let mdot = |a: &[f64], b: &[f64]| a.iter().zip(m.mul_vec(b)).map(|(x, y)| x * y).sum::<f64>();
    let u: Vec<f64> = p.mesh.vertices.iter().map(|x| bessel_j(0, k * x[0].hypot(x[1]))).collect();
    let scale = mdot(&u, &phi).signum() / mdot(&u, &u).sqrt();
    let mut oracle: Vec<f64> =
        p.mesh.vertices.iter().map(|x| scale * k * x[0].hypot(x[1]) * bessel_j(1, k * x[0].hypot(x[1]))).collect();
    let c = mdot(&oracle, &phi);
    for (o, q) in oracle.iter_mut().zip(&phi) {
        *o -= c * q;
    }
    let diff: Vec<f64> = d.vectors[0].iter().zip(&oracle).map(|(a, b)| a - b).collect();
    let rel = (mdot(&diff, &diff) / mdot(&oracle, &oracle)).sqrt();
    assert!(rel < 0.02, "relative M-norm error {rel}");
}

#[test]
fn block_sums_of_boundary_data_are_invariant() {
    let p = solve(GroupKind::Cyclic(3), &[Mode::new(3, 0.1, 0.05)], 0.06, 6);
    let lambda0 = p.spectrum.values[1];
    let mut q = vec![0.0; p.mesh.boundary_loop.len()];
    for j in [1, 2] {
        let u = p.spectrum.vector(j);
        let du = boundary_tangential_gradient(&p.mesh, &u);
        for (i, &v) in p.mesh.boundary_loop.iter().enumerate() {
            q[i] += du[i] * du[i] - lambda0 * u[v] * u[v];
        }
    }
    let pos: std::collections::HashMap<usize, usize> =
        p.mesh.boundary_loop.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let scale = q.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for g in 0..p.group.order() {
        let perm = p.mesh.orbit_action.perm(g);
        for (i, &v) in p.mesh.boundary_loop.iter().enumerate() {
            assert!((q[pos[&perm[v]]] - q[i]).abs() < 1e-8 * scale);
        }
    }
}

#[test]
fn unconverged_input_is_rejected() {
    let mut p = solve(GroupKind::Dihedral(3), &[], 0.1, 4);
    p.spectrum.residuals[1] = 1e-3;
    let f = BoundaryField::dilation(&p.group);
    let r = derivative_report(&p, &[1, 2], &f, false, &EigenOptions::default(), Execution::Sequential);
    assert!(matches!(r, Err(Error::UnreliableInput(_))));
}
