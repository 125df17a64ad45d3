//! A meshed, assembled and solved symmetric Neumann problem.

use std::sync::Arc;

use crate::domain::SymmetricDomain;
use crate::eigen::EigenOptions;
use crate::error::Result;
use crate::exec::Execution;
use crate::fem::{assemble, solve_neumann_eigs, FemSystem, NeumannSpectrum};
use crate::grouprep::{all_projectors, FiniteGroup, IsotypicProjector};
use crate::mesh::{generate_mesh, SymmetricMesh};
use crate::specsym::{classify_spectrum, SpectralResult};

#[derive(Debug, Clone)]
pub struct SolvedProblem {
    pub group: Arc<FiniteGroup>,
    pub domain: SymmetricDomain,
    pub mesh: SymmetricMesh,
    pub system: FemSystem,
    pub spectrum: NeumannSpectrum,
    pub projectors: Vec<IsotypicProjector>,
}

impl SolvedProblem {
    /// Mesh, assemble and solve for the lowest `count` eigenpairs.
    pub fn new(
        domain: &SymmetricDomain,
        h_target: f64,
        count: usize,
        opts: &EigenOptions,
        exec: Execution,
    ) -> Result<Self> {
        let mesh = generate_mesh(domain, h_target)?;
        Self::from_mesh(domain, mesh, count, opts, exec)
    }

    /// Assemble and solve on a given mesh of `domain`.
    pub fn from_mesh(
        domain: &SymmetricDomain,
        mesh: SymmetricMesh,
        count: usize,
        opts: &EigenOptions,
        exec: Execution,
    ) -> Result<Self> {
        let group = Arc::clone(&domain.group);
        let system = assemble(&mesh, exec)?;
        let spectrum = solve_neumann_eigs(&system, &mesh, count, opts, exec)?;
        let projectors = all_projectors(&group, &mesh.orbit_action)?;
        Ok(Self { group, domain: domain.clone(), mesh, system, spectrum, projectors })
    }

    /// Solve until every eigenvalue below `cutoff` is captured; the count
    /// starts from a two-term Weyl estimate and doubles if it falls short.
    pub fn below_cutoff(
        domain: &SymmetricDomain,
        mesh: SymmetricMesh,
        cutoff: f64,
        opts: &EigenOptions,
        exec: Execution,
    ) -> Result<Self> {
        let n = mesh.vertices.len();
        let area = domain.area();
        let perimeter = domain.arclength(0.0, 2.0 * std::f64::consts::PI, 2048);
        let weyl = (area * cutoff + perimeter * cutoff.max(0.0).sqrt()) / (4.0 * std::f64::consts::PI);
        let mut count = ((1.2 * weyl).ceil() as usize + 8).min(n);
        let mut mesh = Some(mesh);
        loop {
            let solved = Self::from_mesh(domain, mesh.take().unwrap(), count, opts, exec)?;
            if solved.spectrum.values.last().copied().unwrap_or(f64::INFINITY) >= cutoff || count == n {
                return Ok(solved);
            }
            count = (2 * count).min(n);
            mesh = Some(solved.mesh);
        }
    }

    /// Indices of eigenvalues strictly below `cutoff`.
    pub fn count_below(&self, cutoff: f64) -> usize {
        self.spectrum.values.iter().take_while(|&&v| v < cutoff).count()
    }

    pub fn classify(&self, cluster_tol: f64, exec: Execution) -> SpectralResult {
        classify_spectrum(
            &self.spectrum.values,
            &self.spectrum.vectors,
            &self.projectors,
            &self.system.mass,
            cluster_tol,
            exec,
        )
    }
}
