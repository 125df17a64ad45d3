//! Experiment configuration: a JSON document validated before any work runs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use symspec::domain::{make_domain, make_field, BoundaryField, Mode, SymmetricDomain};
use symspec::eigen::EigenOptions;
use symspec::grouprep::{build_group, FiniteGroup, GroupKind, GroupKindName};
use symspec::specsym::DEFAULT_CLUSTER_TOL;
use symspec::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub kind: GroupKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

fn default_r0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub h_target: f64,
}

fn default_num_eigs() -> usize {
    20
}

fn default_cluster_tol() -> f64 {
    DEFAULT_CLUSTER_TOL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_num_eigs")]
    pub num_eigs: usize,
    #[serde(default = "default_cluster_tol")]
    pub cluster_tol: f64,
    #[serde(default)]
    pub eigen: EigenOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { num_eigs: default_num_eigs(), cluster_tol: default_cluster_tol(), eigen: EigenOptions::default() }
    }
}

/// Normal-velocity field of a perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    /// ρ ≡ 1.
    Dilation,
    /// ρ = r, the exact dilation x ↦ (1 + t)x.
    RadialScaling,
    Modes { modes: Vec<Mode> },
}

impl FieldConfig {
    pub fn build(&self, domain: &SymmetricDomain) -> Result<BoundaryField> {
        match self {
            FieldConfig::Dilation => Ok(BoundaryField::dilation(&domain.group)),
            FieldConfig::RadialScaling => Ok(BoundaryField::radial_scaling(domain)),
            FieldConfig::Modes { modes } => make_field(&domain.group, modes),
        }
    }
}

fn default_split_t() -> f64 {
    1e-2
}

fn default_trials() -> usize {
    20
}

fn default_amplitude() -> f64 {
    1e-2
}

fn default_sweep_cutoff() -> f64 {
    40.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleShape {
    /// Compare the FEM spectrum of the configured disk with the Bessel oracle.
    Disk,
    /// Analytic rectangle spectrum with sides `lx`, `ly`.
    Rectangle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    Spectrum,
    Classify {
        /// Eigenvalues below this enter the divisibility report.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    Derivative {
        /// Cluster id in the classification of the base spectrum.
        cluster: usize,
        field: FieldConfig,
        #[serde(default)]
        second: bool,
        /// Positive steps for central finite differences; empty skips them.
        #[serde(default)]
        fd_steps: Vec<f64>,
    },
    Split {
        cluster: usize,
        #[serde(default = "default_split_t")]
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_max: Option<u32>,
    },
    Sweep {
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_sweep_cutoff")]
        cutoff: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_max: Option<u32>,
    },
    OracleCheck {
        shape: OracleShape,
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lx: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ly: Option<f64>,
    },
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Spectrum => "spectrum",
            ExperimentConfig::Classify { .. } => "classify",
            ExperimentConfig::Derivative { .. } => "derivative",
            ExperimentConfig::Split { .. } => "split",
            ExperimentConfig::Sweep { .. } => "sweep",
            ExperimentConfig::OracleCheck { .. } => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub group: GroupConfig,
    #[serde(default = "DomainConfig::disk")]
    pub domain: DomainConfig,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl DomainConfig {
    fn disk() -> Self {
        Self { r0: 1.0, modes: Vec::new() }
    }
}

/// Objects built from a validated config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub group: Arc<FiniteGroup>,
    pub domain: SymmetricDomain,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) | Error::Geometry(m) | Error::SymmetryViolation(m) => Error::ConfigInvalid(m),
        other => other,
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Check every value and build the group and domain.
    pub fn prepare(&self) -> Result<Prepared> {
        let kind = GroupKind::from_parts(self.group.kind, self.group.p).map_err(config_err)?;
        let group = Arc::new(build_group(kind).map_err(config_err)?);
        positive("mesh.h_target", self.mesh.h_target)?;
        positive("solver.cluster_tol", self.solver.cluster_tol)?;
        positive("solver.eigen.shift", self.solver.eigen.shift)?;
        positive("solver.eigen.tol", self.solver.eigen.tol)?;
        if self.solver.num_eigs == 0 {
            return Err(Error::ConfigInvalid("solver.num_eigs must be at least 1".into()));
        }
        let domain = make_domain(&group, self.domain.r0, &self.domain.modes).map_err(config_err)?;
        match &self.experiment {
            ExperimentConfig::Classify { cutoff: Some(c) } => positive("experiment.cutoff", *c)?,
            ExperimentConfig::Derivative { field, fd_steps, .. } => {
                field.build(&domain).map_err(config_err)?;
                for &t in fd_steps {
                    positive("experiment.fd_steps", t)?;
                }
            }
            ExperimentConfig::Split { t, .. } => {
                if !(t.is_finite() && *t != 0.0) {
                    return Err(Error::ConfigInvalid(format!("experiment.t must be finite and nonzero, got {t}")));
                }
            }
            ExperimentConfig::Sweep { trials, amplitude, cutoff, .. } => {
                if *trials == 0 {
                    return Err(Error::ConfigInvalid("experiment.trials must be at least 1".into()));
                }
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::ConfigInvalid(format!("experiment.amplitude must be ≥ 0, got {amplitude}")));
                }
                positive("experiment.cutoff", *cutoff)?;
            }
            ExperimentConfig::OracleCheck { shape, count, lx, ly } => {
                if *count == 0 {
                    return Err(Error::ConfigInvalid("experiment.count must be at least 1".into()));
                }
                match shape {
                    OracleShape::Rectangle => {
                        positive("experiment.lx", lx.unwrap_or(f64::NAN))?;
                        positive("experiment.ly", ly.unwrap_or(f64::NAN))?;
                    }
                    OracleShape::Disk if !self.domain.modes.iter().all(|m| m.a == 0.0 && m.b == 0.0) => {
                        return Err(Error::ConfigInvalid("the disk oracle needs a domain without modes".into()));
                    }
                    OracleShape::Disk => {}
                }
            }
            _ => {}
        }
        Ok(Prepared { group, domain })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = Config::from_json(
            r#"{"group":{"kind":"cyclic","p":5},"mesh":{"h_target":0.1},"experiment":{"kind":"spectrum"}}"#,
        )
        .unwrap();
        assert_eq!(c.solver.num_eigs, 20);
        assert_eq!(c.domain.r0, 1.0);
        assert!(c.prepare().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = Config::from_json(
            r#"{"group":{"kind":"klein"},"mesh":{"h_target":0.1,"extra":1},"experiment":{"kind":"spectrum"}}"#,
        )
        .unwrap_err();
        assert!(matches!(e, Error::ConfigInvalid(_)));
        let e = Config::from_json(
            r#"{"group":{"kind":"klein"},"mesh":{"h_target":0.1},"experiment":{"kind":"classify","bogus":2}}"#,
        );
        assert!(e.is_err());
    }

    #[test]
    fn asymmetric_mode_is_invalid() {
        let c = Config::from_json(
            r#"{"group":{"kind":"cyclic","p":3},"domain":{"modes":[{"k":2,"a":0.1}]},
                "mesh":{"h_target":0.1},"experiment":{"kind":"spectrum"}}"#,
        )
        .unwrap();
        assert!(matches!(c.prepare(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn rectangle_oracle_config() {
        let c = Config::from_json(
            r#"{"group":{"kind":"klein"},"mesh":{"h_target":0.1},
                "experiment":{"kind":"oracle-check","shape":"rectangle","lx":2.0,"ly":1.0,"count":10}}"#,
        )
        .unwrap();
        assert!(matches!(c.experiment, ExperimentConfig::OracleCheck { shape: OracleShape::Rectangle, count: 10, .. }));
        assert!(c.prepare().is_ok());
    }
}
