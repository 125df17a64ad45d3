//! Experiment orchestration and report emission.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use symspec::eigen::EigenOptions;
use symspec::fem::spectrum_csv;
use symspec::mesh::{generate_mesh, MeshStats, SymmetricMesh};
use symspec::oracle::{disk_spectrum, disk_symmetry_labels, oracle_csv, rectangle_spectrum};
use symspec::problem::SolvedProblem;
use symspec::shapederiv::{derivative_report, fd_validate};
use symspec::specsym::{classification_csv, divisibility_report, ClusterClassification, SpectralResult, RANK_TOL};
use symspec::splitter::{
    candidate_fields, default_k_max, find_splitting_direction, genericity_sweep, split_experiment, SweepSettings,
};
use symspec::{Error, Execution, Result};

use crate::config::{Config, ExperimentConfig, OracleShape, Prepared};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub cluster_tol: f64,
    pub rank_tol: f64,
    pub h_target: f64,
    pub eigen: EigenOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub kind: &'static str,
    pub seed: u64,
    pub config: Config,
    pub tolerances: Tolerances,
    pub mesh: Option<MeshStats>,
    /// Wall-clock seconds per stage; the only field that varies between
    /// identical runs.
    pub timings: Vec<Timing>,
    pub files: Vec<String>,
    pub summary: Value,
}

struct Session<'a> {
    config: &'a Config,
    out: PathBuf,
    verbose: bool,
    exec: Execution,
    timings: Vec<Timing>,
    files: Vec<String>,
    mesh: Option<MeshStats>,
    started: Instant,
}

impl Session<'_> {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[{:>8.3}s] {msg}", self.started.elapsed().as_secs_f64());
        }
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        self.log(&format!("{stage} ..."));
        let t0 = Instant::now();
        let v = f()?;
        self.timings.push(Timing { stage: stage.to_string(), seconds: t0.elapsed().as_secs_f64() });
        Ok(v)
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        std::fs::write(self.out.join(name), content)?;
        self.files.push(name.to_string());
        self.log(&format!("wrote {name}"));
        Ok(())
    }

    fn write_report(&mut self, name: &str, report: impl Serialize) -> Result<()> {
        let doc = json!({
            "version": VERSION,
            "cluster_tol": self.config.solver.cluster_tol,
            "h_target": self.config.mesh.h_target,
            "report": report,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    fn mesh(&mut self, prepared: &Prepared) -> Result<SymmetricMesh> {
        let h = self.config.mesh.h_target;
        let mesh = self.timed("mesh", || generate_mesh(&prepared.domain, h))?;
        self.mesh = Some(mesh.stats());
        self.write("mesh.txt", &mesh.to_text())?;
        Ok(mesh)
    }

    fn solve(&mut self, prepared: &Prepared, count: usize) -> Result<SolvedProblem> {
        let mesh = self.mesh(prepared)?;
        let count = count.min(mesh.vertex_count());
        let (opts, exec) = (self.config.solver.eigen, self.exec);
        let solved = self.timed("solve", || SolvedProblem::from_mesh(&prepared.domain, mesh, count, &opts, exec))?;
        self.write("spectrum.csv", &spectrum_csv(&solved.spectrum))?;
        Ok(solved)
    }

    fn classify(&mut self, solved: &SolvedProblem) -> Result<SpectralResult> {
        let (tol, exec) = (self.config.solver.cluster_tol, self.exec);
        let result = self.timed("classify", || Ok(solved.classify(tol, exec)))?;
        self.write("classification.csv", &classification_csv(&result))?;
        Ok(result)
    }
}

/// Clusters whose top member is the last computed eigenvalue may be cut off.
fn complete_clusters(result: &SpectralResult, computed: usize) -> Vec<&ClusterClassification> {
    result.clusters.iter().filter(|c| c.members.iter().all(|&j| j + 1 < computed)).collect()
}

fn pick_cluster(result: &SpectralResult, id: usize, computed: usize) -> Result<ClusterClassification> {
    let c = result
        .clusters
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::ConfigInvalid(format!("cluster {id} does not exist; {} were found", result.clusters.len())))?;
    if c.members.iter().any(|&j| j + 1 >= computed) {
        return Err(Error::ConfigInvalid(format!(
            "cluster {id} touches the last computed eigenvalue; raise solver.num_eigs"
        )));
    }
    Ok(c.clone())
}

/// Run one experiment and write its reports into `out`. The config is fully
/// validated before the directory is created.
pub fn run(config: &Config, out: &Path, verbose: bool) -> Result<Manifest> {
    let prepared = config.prepare()?;
    std::fs::create_dir_all(out)?;
    let mut s = Session {
        config,
        out: out.to_path_buf(),
        verbose,
        exec: Execution::available(),
        timings: Vec::new(),
        files: Vec::new(),
        mesh: None,
        started: Instant::now(),
    };
    let opts = config.solver.eigen;
    let exec = s.exec;
    let num = config.solver.num_eigs;
    let summary = match &config.experiment {
        ExperimentConfig::Spectrum => {
            let solved = s.solve(&prepared, num)?;
            json!({ "eigenvalues": solved.spectrum.values, "max_residual": max(&solved.spectrum.residuals) })
        }
        ExperimentConfig::Classify { cutoff } => {
            let solved = s.solve(&prepared, num)?;
            let result = s.classify(&solved)?;
            let computed = solved.spectrum.values.len();
            let cutoff = cutoff.unwrap_or_else(|| {
                complete_clusters(&result, computed).last().map_or(0.0, |c| c.mean * (1.0 + 1e-9))
            });
            let report = divisibility_report(&result, &prepared.group, cutoff);
            json!({ "clusters": result.clusters.len(), "divisibility": report })
        }
        ExperimentConfig::Derivative { cluster, field, second, fd_steps } => {
            let solved = s.solve(&prepared, num)?;
            let result = s.classify(&solved)?;
            let c = pick_cluster(&result, *cluster, solved.spectrum.values.len())?;
            let field = field.build(&prepared.domain)?;
            let mut report =
                s.timed("derivative", || derivative_report(&solved, &c.members, &field, *second, &opts, exec))?;
            if !fd_steps.is_empty() {
                let v = s.timed("finite differences", || {
                    fd_validate(&solved, &c.members, &field, fd_steps, &report.branches, &opts, exec)
                })?;
                report.validation = Some(v);
            }
            let summary = json!({
                "lambda0": report.lambda0,
                "branches": report.branches,
                "second_asymmetry": report.second_asymmetry,
            });
            s.write_report("derivative.json", &report)?;
            summary
        }
        ExperimentConfig::Split { cluster, t, k_max } => {
            let solved = s.solve(&prepared, num)?;
            let result = s.classify(&solved)?;
            let c = pick_cluster(&result, *cluster, solved.spectrum.values.len())?;
            let fields = candidate_fields(&prepared.group, k_max.unwrap_or_else(|| default_k_max(&prepared.group)));
            let search = s.timed("search", || find_splitting_direction(&solved, &c.members, &fields, exec))?;
            let experiment = match search.best {
                Some(b) => Some(s.timed("split", || {
                    split_experiment(&solved, &c.members, &fields[b], *t, config.solver.cluster_tol, &opts, exec)
                })?),
                None => None,
            };
            let summary = json!({
                "splitting_field": search.best_candidate().map(|c| &c.modes),
                "spread": search.best_candidate().map(|c| c.spread),
                "predicted_gap": experiment.as_ref().map(|e| e.predicted_gap),
                "achieved_gap": experiment.as_ref().map(|e| e.achieved_gap),
            });
            s.write_report("split.json", json!({ "search": search, "experiment": experiment }))?;
            summary
        }
        ExperimentConfig::Sweep { trials, amplitude, cutoff, k_max } => {
            s.mesh(&prepared)?;
            let settings = SweepSettings {
                h_target: config.mesh.h_target,
                cutoff: *cutoff,
                trials: *trials,
                seed: config.seed,
                amplitude: *amplitude,
                cluster_tol: config.solver.cluster_tol,
                k_max: *k_max,
            };
            let report = s.timed("sweep", || genericity_sweep(&prepared.domain, &settings, &opts, exec))?;
            let summary = json!({
                "fraction_G_simple": report.fraction_g_simple,
                "fraction_G_sigma_simple": report.fraction_g_sigma_simple,
                "fraction_no_accidental": report.fraction_no_accidental,
                "failures": report.failures.len(),
            });
            s.write_report("sweep.json", &report)?;
            summary
        }
        ExperimentConfig::OracleCheck { shape: OracleShape::Rectangle, count, lx, ly } => {
            let spectrum = rectangle_spectrum(lx.unwrap_or_default(), ly.unwrap_or_default(), *count)?;
            s.write("oracle.csv", &oracle_csv(&spectrum))?;
            json!({ "oracle_eigenvalues": spectrum.values() })
        }
        ExperimentConfig::OracleCheck { shape: OracleShape::Disk, count, .. } => {
            let exact = disk_symmetry_labels(&disk_spectrum(config.domain.r0, *count)?, &prepared.group)?;
            s.write("oracle.csv", &oracle_csv(&exact))?;
            let solved = s.solve(&prepared, *count)?;
            let values = exact.values();
            let errors: Vec<f64> = values
                .iter()
                .zip(&solved.spectrum.values)
                .skip(1)
                .map(|(e, f)| (f - e).abs() / e)
                .collect();
            json!({
                "oracle_eigenvalues": &values[..solved.spectrum.values.len().min(values.len())],
                "fem_eigenvalues": solved.spectrum.values,
                "relative_errors": errors,
                "max_relative_error": max(&errors),
            })
        }
    };
    s.timings.push(Timing { stage: "total".into(), seconds: s.started.elapsed().as_secs_f64() });
    let manifest = Manifest {
        version: VERSION,
        kind: config.experiment.kind(),
        seed: config.seed,
        config: config.clone(),
        tolerances: Tolerances {
            cluster_tol: config.solver.cluster_tol,
            rank_tol: RANK_TOL,
            h_target: config.mesh.h_target,
            eigen: opts,
        },
        mesh: s.mesh,
        timings: std::mem::take(&mut s.timings),
        files: {
            let mut f = std::mem::take(&mut s.files);
            f.push("manifest.json".into());
            f
        },
        summary,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numerical(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}
