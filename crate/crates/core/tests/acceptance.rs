//! Acceptance gate: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symspec::domain::{make_domain, make_field, BoundaryField, Mode, SymmetricDomain};
use symspec::eigen::EigenOptions;
use symspec::fem::assemble;
use symspec::grouprep::{all_projectors, build_group, FiniteGroup, GroupKind};
use symspec::mesh::{generate_mesh, restrict_mesh, SymmetricMesh};
use symspec::oracle::disk_spectrum;
use symspec::problem::SolvedProblem;
use symspec::shapederiv::{derivative_report, fd_validate, rel_err};
use symspec::specsym::{divisibility_report, SpectralResult, Verdict, DEFAULT_CLUSTER_TOL};
use symspec::splitter::{
    candidate_fields, default_k_max, find_splitting_direction, genericity_sweep, random_invariant_field,
    split_experiment, sweep_groups, track_branches, SweepSettings,
};
use symspec::Execution;

type Outcome = Result<String, String>;

fn group(kind: GroupKind) -> Arc<FiniteGroup> {
    Arc::new(build_group(kind).unwrap())
}

fn opts() -> EigenOptions {
    EigenOptions::default()
}

fn exec() -> Execution {
    Execution::available()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn disk_problem(kind: GroupKind, h: f64, count: usize) -> SolvedProblem {
    let d = make_domain(&group(kind), 1.0, &[]).unwrap();
    SolvedProblem::new(&d, h, count, &opts(), exec()).unwrap()
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let p = disk_problem(GroupKind::Dihedral(3), 0.03, 7);
    let exact = disk_spectrum(1.0, 7).unwrap().values();
    let worst = (1..7).map(|i| rel_err(p.spectrum.values[i], exact[i])).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst <= 0.01 && secs < 120.0,
        format!("n = {}, max rel error {worst:.2e} over 6 nonzero modes, first double {:.4}, {secs:.1} s", p.mesh.vertex_count(), p.spectrum.values[1]),
    )
}

fn random_domain(g: &Arc<FiniteGroup>, seed: u64, amplitude: f64) -> SymmetricDomain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_invariant_field(g, (2 * g.p()) as u32, &mut rng);
    let modes: Vec<Mode> = f.modes.iter().map(|m| Mode::new(m.k, amplitude * m.a, amplitude * m.b)).collect();
    make_domain(g, 1.0, &modes).unwrap()
}

fn classify_below(domain: &SymmetricDomain, h: f64, cutoff: f64) -> SpectralResult {
    let mesh = generate_mesh(domain, h).unwrap();
    let p = SolvedProblem::below_cutoff(domain, mesh, cutoff, &opts(), exec()).unwrap();
    p.classify(DEFAULT_CLUSTER_TOL, exec())
}

fn criterion_2() -> Outcome {
    let (z5, klein) = (group(GroupKind::Cyclic(5)), group(GroupKind::Klein));
    let mut violations = 0;
    let mut doubles = 0;
    let mut klein_multiple = 0;
    for seed in [1u64, 2, 3] {
        let res = classify_below(&random_domain(&z5, seed, 0.1), 0.05, 60.0);
        let rep = divisibility_report(&res, &z5, 60.0);
        violations += rep.violations + usize::from(!rep.pass);
        doubles += res.clusters.iter().filter(|c| c.mean < 60.0 && c.size == 2).count();
        let res = classify_below(&random_domain(&klein, seed, 0.1), 0.05, 60.0);
        let rep = divisibility_report(&res, &klein, 60.0);
        violations += rep.violations + usize::from(!rep.pass);
        klein_multiple += res.clusters.iter().filter(|c| c.mean < 60.0 && c.size > 1).count();
    }
    check(
        violations == 0 && doubles >= 3,
        format!("3 seeds: {violations} violations, {doubles} size-2 clusters on Z5 flowers, {klein_multiple} multiple clusters on klein domains"),
    )
}

fn test_meshes() -> Vec<SymmetricMesh> {
    let mut out = Vec::new();
    for (kind, modes, h) in [
        (GroupKind::Cyclic(3), vec![Mode::cos(3, 0.1), Mode::new(6, 0.02, 0.03)], 0.06),
        (GroupKind::Cyclic(5), vec![Mode::cos(5, 0.1)], 0.05),
        (GroupKind::Dihedral(3), vec![Mode::cos(3, 0.12)], 0.06),
        (GroupKind::Dihedral(4), vec![Mode::cos(4, 0.1)], 0.03),
        (GroupKind::Klein, vec![Mode::cos(2, 0.1), Mode::new(4, 0.02, 0.0)], 0.06),
    ] {
        let d = make_domain(&group(kind), 1.0, &modes).unwrap();
        out.push(generate_mesh(&d, h).unwrap());
    }
    out
}

fn criterion_3(meshes: &[SymmetricMesh]) -> Outcome {
    let mut worst = [0.0f64; 3];
    let mut largest = 0;
    for mesh in meshes {
        let n = mesh.vertex_count();
        largest = largest.max(n);
        let sys = assemble(mesh, Execution::Sequential).unwrap();
        let projs = all_projectors(&mesh.group, &mesh.orbit_action).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let unorm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut sum = vec![0.0; n];
        let pu: Vec<Vec<f64>> = projs.iter().map(|p| p.apply(&u)).collect();
        let pw: Vec<Vec<f64>> = projs.iter().map(|p| p.apply(&w)).collect();
        for (p, x) in projs.iter().zip(&pu) {
            let ppx = p.apply(x);
            let d = ppx.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / unorm;
            worst[0] = worst[0].max(d);
            for (s, v) in sum.iter_mut().zip(x) {
                *s += v;
            }
        }
        let d = sum.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / unorm;
        worst[1] = worst[1].max(d);
        let mnorm = |x: &[f64]| x.iter().zip(sys.mass.mul_vec(x)).map(|(a, b)| a * b).sum::<f64>().sqrt();
        for a in 0..projs.len() {
            let ma = sys.mass.mul_vec(&pu[a]);
            for b in 0..projs.len() {
                if a != b {
                    let ip: f64 = ma.iter().zip(&pw[b]).map(|(x, y)| x * y).sum();
                    worst[2] = worst[2].max(ip.abs() / (mnorm(&u) * mnorm(&w)));
                }
            }
        }
    }
    check(
        worst.iter().all(|&x| x <= 1e-10),
        format!("up to {largest} vertices: |P^2-P| {:.1e}, |sum P - I| {:.1e}, cross-class M-inner {:.1e}", worst[0], worst[1], worst[2]),
    )
}

fn criterion_4(meshes: &[SymmetricMesh]) -> Outcome {
    let mut worst = 0.0f64;
    for mesh in meshes {
        let sys = assemble(mesh, Execution::Sequential).unwrap();
        for g in 0..mesh.group.order() {
            let perm = mesh.orbit_action.perm(g);
            for mat in [&sys.stiffness, &sys.mass] {
                for i in 0..mat.dim() {
                    let (cols, vals) = mat.row(i);
                    for (&j, &v) in cols.iter().zip(vals) {
                        worst = worst.max((mat.get(perm[i], perm[j]) - v).abs());
                    }
                }
            }
        }
    }
    check(worst <= 1e-12, format!("max |P_g^T K P_g - K| and mass analogue over {} meshes: {worst:.1e}", meshes.len()))
}

fn criterion_5() -> Outcome {
    let d3 = group(GroupKind::Dihedral(3));
    let disk = make_domain(&d3, 1.0, &[]).unwrap();
    let p = SolvedProblem::new(&disk, 0.025, 8, &opts(), exec()).unwrap();
    let mut fd_worst = 0.0f64;
    let field = make_field(&d3, &[Mode::cos(0, 0.3), Mode::cos(6, 1.0)]).unwrap();
    let clusters = [vec![1, 2], vec![3, 4], vec![5]];
    for members in &clusters {
        let rep = derivative_report(&p, members, &field, false, &opts(), exec()).unwrap();
        let v = fd_validate(&p, members, &field, &[1e-4], &rep.branches, &opts(), exec()).unwrap();
        for b in &v.steps[0].branches {
            fd_worst = fd_worst.max(b.first_rel_error);
        }
    }
    // splitting double: accidental B1/B2 pair on a D4 flower meshed with D4
    let d4 = group(GroupKind::Dihedral(4));
    let klein = group(GroupKind::Klein);
    let flower = make_domain(&d4, 1.0, &[Mode::cos(4, 0.1)]).unwrap();
    let mesh = restrict_mesh(&generate_mesh(&flower, 0.025).unwrap(), &klein).unwrap();
    let kd = make_domain(&klein, 1.0, &[Mode::cos(4, 0.1)]).unwrap();
    let pk = SolvedProblem::from_mesh(&kd, mesh, 4, &opts(), exec()).unwrap();
    let split_field = make_field(&klein, &[Mode::cos(2, 1.0)]).unwrap();
    let rep = derivative_report(&pk, &[1, 2], &split_field, false, &opts(), exec()).unwrap();
    let v = fd_validate(&pk, &[1, 2], &split_field, &[1e-4], &rep.branches, &opts(), exec()).unwrap();
    let split_worst = v.steps[0].branches.iter().map(|b| b.first_rel_error).fold(0.0, f64::max);
    let slopes: Vec<f64> = rep.branches.iter().map(|b| b.lambda_dot).collect();

    let pd = disk_problem(GroupKind::Dihedral(3), 0.03, 8);
    let dil = BoundaryField::dilation(&d3);
    let mut dil_worst = 0.0f64;
    for members in &clusters {
        let rep = derivative_report(&pd, members, &dil, false, &opts(), exec()).unwrap();
        for b in &rep.branches {
            dil_worst = dil_worst.max(rel_err(b.lambda_dot, -2.0 * rep.lambda0));
        }
    }
    check(
        fd_worst <= 1e-3 && split_worst <= 1e-3 && dil_worst <= 5e-3,
        format!(
            "FD at t = 1e-4: disk clusters {fd_worst:.2e}, split double (slopes {:.3}, {:.3}) {split_worst:.2e}; dilation vs -2*lambda0 {dil_worst:.2e}",
            slopes[0], slopes[1]
        ),
    )
}

fn criterion_6() -> Outcome {
    let d3 = group(GroupKind::Dihedral(3));
    let p = disk_problem(GroupKind::Dihedral(3), 0.05, 8);
    let dil = BoundaryField::dilation(&d3);
    let mut asym = 0.0f64;
    let mut dil_worst = 0.0f64;
    for members in [vec![1, 2], vec![3, 4], vec![5]] {
        let rep = derivative_report(&p, &members, &dil, true, &opts(), exec()).unwrap();
        asym = asym.max(rep.second_asymmetry.unwrap());
        for b in &rep.branches {
            dil_worst = dil_worst.max(rel_err(b.lambda_ddot.unwrap(), 6.0 * rep.lambda0));
        }
    }
    let field = make_field(&d3, &[Mode::cos(0, 0.3), Mode::cos(6, 1.0)]).unwrap();
    let rep = derivative_report(&p, &[1, 2], &field, true, &opts(), exec()).unwrap();
    asym = asym.max(rep.second_asymmetry.unwrap());
    let v = fd_validate(&p, &[1, 2], &field, &[4e-3, 2e-3], &rep.branches, &opts(), exec()).unwrap();
    let rich = v.richardson.as_ref().unwrap();
    let fd2_worst = rep
        .branches
        .iter()
        .zip(rich)
        .map(|(b, &(_, fd2))| rel_err(b.lambda_ddot.unwrap(), fd2))
        .fold(0.0, f64::max);
    check(
        asym <= 1e-8 && dil_worst <= 0.02 && fd2_worst <= 0.01,
        format!("symmetry defect {asym:.1e}; dilation vs 6*lambda0 {dil_worst:.2e}; FD2 (cos 6 field, first double) {fd2_worst:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let d4 = group(GroupKind::Dihedral(4));
    let klein = group(GroupKind::Klein);
    let flower = make_domain(&d4, 1.0, &[Mode::cos(4, 0.1)]).unwrap();
    let mesh = restrict_mesh(&generate_mesh(&flower, 0.05).unwrap(), &klein).unwrap();
    let kd = make_domain(&klein, 1.0, &[Mode::cos(4, 0.1)]).unwrap();
    let p = SolvedProblem::from_mesh(&kd, mesh, 8, &opts(), exec()).unwrap();
    let res = p.classify(DEFAULT_CLUSTER_TOL, exec());
    let Some(acc) = res.clusters.iter().find(|c| c.verdict == Verdict::Accidental && c.members.iter().all(|&j| j < 7)) else {
        return Err("no accidental double engineered".into());
    };
    let fields = candidate_fields(&klein, default_k_max(&klein));
    let search = find_splitting_direction(&p, &acc.members, &fields, exec()).unwrap();
    let Some(best) = search.best else {
        return Err("no splitting direction found for the accidental double".into());
    };
    let e = split_experiment(&p, &acc.members, &fields[best], 1e-2, DEFAULT_CLUSTER_TOL, &opts(), exec()).unwrap();

    // first-order obstruction inside a single 2-dim irrep
    let z3 = group(GroupKind::Cyclic(3));
    let fz = make_domain(&z3, 1.0, &[Mode::new(3, 0.1, 0.05)]).unwrap();
    let pz = SolvedProblem::new(&fz, 0.05, 8, &opts(), exec()).unwrap();
    let rz = pz.classify(DEFAULT_CLUSTER_TOL, exec());
    let e_cluster = rz.clusters.iter().find(|c| c.size == 2 && c.verdict == Verdict::GSimple).unwrap();
    let sz = find_splitting_direction(&pz, &e_cluster.members, &candidate_fields(&z3, default_k_max(&z3)), exec()).unwrap();
    let max_spread = sz.candidates.iter().map(|c| c.spread).fold(0.0, f64::max);
    check(
        e.gap_rel_error <= 0.2 && sz.best.is_none() && e.refines,
        format!(
            "accidental {:?} at {:.4}: spread {:.3}, gap predicted {:.4e} achieved {:.4e} (rel {:.2e}); Z3 E-cluster max spread {max_spread:.1e} vs threshold {:.1e}",
            acc.isotypic.iter().map(|x| x.label.as_str()).collect::<Vec<_>>(),
            acc.mean,
            search.candidates[best].spread,
            e.predicted_gap,
            e.achieved_gap,
            e.gap_rel_error,
            sz.threshold
        ),
    )
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in sweep_groups() {
        let d = make_domain(&group(kind), 1.0, &[]).unwrap();
        let settings = SweepSettings {
            h_target: 0.05,
            cutoff: 40.0,
            trials: 20,
            seed: 2024,
            amplitude: 1e-2,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            k_max: None,
        };
        let r = genericity_sweep(&d, &settings, &opts(), exec()).unwrap();
        ok &= r.fraction_g_simple >= 0.95;
        parts.push(format!("{kind} {:.2} ({} failures)", r.fraction_g_simple, r.failures.len()));
    }
    let secs = t0.elapsed().as_secs_f64();
    check(ok && secs < 900.0, format!("G-simple fractions: {}; {secs:.1} s", parts.join(", ")))
}

fn criterion_9() -> Outcome {
    let d3 = group(GroupKind::Dihedral(3));
    let disk = make_domain(&d3, 1.0, &[]).unwrap();
    let p = SolvedProblem::new(&disk, 0.05, 12, &opts(), exec()).unwrap();
    let grid: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.01).collect();
    let curves = track_branches(&p, &BoundaryField::radial_scaling(&disk), &grid, 16.0, &opts(), exec()).unwrap();
    let worst = curves.fits.iter().map(|f| f.rel_residual).fold(0.0, f64::max);
    check(worst <= 1e-6, format!("{} branches on 9-point grid |t| <= 0.04, worst quartic residual {worst:.1e}", curves.fits.len()))
}

fn main() {
    let meshes = test_meshes();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("oracle convergence (disk)", Box::new(criterion_1)),
        ("multiplicity structure", Box::new(criterion_2)),
        ("projector algebra", Box::new(|| criterion_3(&meshes))),
        ("equivariance", Box::new(|| criterion_4(&meshes))),
        ("first derivative", Box::new(criterion_5)),
        ("second derivative", Box::new(criterion_6)),
        ("splitting", Box::new(criterion_7)),
        ("genericity sweep", Box::new(criterion_8)),
        ("branch analyticity", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {}: PASS  {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
