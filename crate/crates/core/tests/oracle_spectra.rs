use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use symspec::domain::make_domain;
use symspec::eigen::EigenOptions;
use symspec::grouprep::{build_group, real_irreps, GroupKind};
use symspec::oracle::{
    bessel_j, bessel_j_miller, bessel_j_prime, disk_spectrum, disk_symmetry_labels, label_totals, oracle_csv,
    rectangle_spectrum,
};
use symspec::problem::SolvedProblem;
use symspec::specsym::fem_cluster_tol;
use symspec::Execution;

proptest! {
    #[test]
    fn series_and_recurrence_agree(m in 0u32..12, x in 0.0f64..20.0) {
        let a = bessel_j(m, x);
        let b = bessel_j_miller(m, x);
        prop_assert!((a - b).abs() < 1e-12, "J_{}({}) series {} recurrence {}", m, x, a, b);
    }

    #[test]
    fn rectangle_spectrum_is_sorted_with_consistent_multiplicities(lx in 0.5f64..3.0, ly in 0.5f64..3.0) {
        let s = rectangle_spectrum(lx, ly, 30).unwrap();
        let v = s.values();
        prop_assert!(v.windows(2).all(|w| w[0] <= w[1]));
        for e in &s.entries {
            let same = s.entries.iter().filter(|o| (o.lambda - e.lambda).abs() <= 1e-12 * e.lambda.max(1.0)).count();
            prop_assert_eq!(same, e.multiplicity);
        }
    }
}

#[test]
fn bessel_derivative_zero_is_a_root() {
    let z = 1.841_183_781_340_659_3;
    assert!(bessel_j_prime(1, z).abs() < 1e-13);
}

#[test]
fn disk_spectrum_heads() {
    let s = disk_spectrum(1.0, 6).unwrap();
    assert_eq!(s.entries[0].lambda, 0.0);
    assert_eq!(s.entries[0].multiplicity, 1);
    assert!((s.entries[1].lambda - 3.3900).abs() < 1e-4 && s.entries[1].multiplicity == 2);
    let m0 = s.entries.iter().find(|e| e.m == 0 && e.n_or_k == 1).unwrap();
    assert!((m0.lambda - 14.682).abs() < 1e-3);
    // radius scales eigenvalues by 1/R²
    let s2 = disk_spectrum(2.0, 6).unwrap();
    assert!((s2.entries[1].lambda * 4.0 - s.entries[1].lambda).abs() < 1e-12);
}

#[test]
fn square_double_representations() {
    let s = rectangle_spectrum(PI, PI, 40).unwrap();
    let at25: Vec<_> = s.entries.iter().filter(|e| (e.lambda - 25.0).abs() < 1e-9).collect();
    assert_eq!(at25.len(), 4);
    assert!(at25.iter().all(|e| e.multiplicity == 4));
    let generic = rectangle_spectrum(1.0, 1.234_567_89, 25).unwrap();
    assert!(generic.entries.iter().all(|e| e.multiplicity == 1));
}

#[test]
fn two_dim_labels_carry_even_multiplicity() {
    for kind in [GroupKind::Cyclic(3), GroupKind::Cyclic(5), GroupKind::Dihedral(4), GroupKind::Dihedral(5)] {
        let g = build_group(kind).unwrap();
        let s = disk_symmetry_labels(&disk_spectrum(1.0, 200).unwrap(), &g).unwrap();
        let irreps = real_irreps(&g);
        for (label, total) in label_totals(&s) {
            let d = irreps.iter().find(|r| r.label == label).unwrap().dim;
            assert_eq!(total % d, 0, "{kind}: {label} total {total}");
        }
    }
}

#[test]
fn cyclic_three_labels() {
    let g = build_group(GroupKind::Cyclic(3)).unwrap();
    let s = disk_symmetry_labels(&disk_spectrum(1.0, 5).unwrap(), &g).unwrap();
    assert_eq!(s.entries[0].labels, vec!["A"]);
    assert_eq!(s.entries[1].labels, vec!["E1", "E1"]);
    let csv = oracle_csv(&s);
    assert!(csv.starts_with("lambda,m,n_or_k,multiplicity,sigma_label\n"));
    assert!(csv.lines().nth(2).unwrap().ends_with(",1,1,2,E1"));
}

#[test]
fn fem_classification_matches_oracle_labels_on_the_disk() {
    for kind in [GroupKind::Dihedral(4), GroupKind::Klein, GroupKind::Cyclic(3)] {
        let g = Arc::new(build_group(kind).unwrap());
        let d = make_domain(&g, 1.0, &[]).unwrap();
        let p = SolvedProblem::new(&d, 0.05, 12, &EigenOptions::default(), Execution::available()).unwrap();
        let exact = disk_symmetry_labels(&disk_spectrum(1.0, 12).unwrap(), &g).unwrap();
        // pairs split by the mesh are rejoined with the discretization tolerance
        let res = p.classify(fem_cluster_tol(0.05), Execution::available());
        for (c, e) in res.clusters.iter().zip(exact.entries.iter()).take(5) {
            let mut got: Vec<&str> = c.isotypic.iter().flat_map(|x| std::iter::repeat_n(x.label.as_str(), x.rank)).collect();
            let mut want: Vec<&str> = e.labels.iter().map(String::as_str).collect();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want, "{kind} at λ ≈ {}", e.lambda);
        }
    }
}
