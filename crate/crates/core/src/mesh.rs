//! Exactly equivariant triangulations.
//!
//! One fundamental sector is meshed with layered strips from the origin,
//! cleaned with Lawson flips and guarded smoothing, then replicated by every
//! group element. Vertices on the sector rays are identified between copies
//! by orbit canonicalization (group index arithmetic), never by coordinate
//! snapping.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::domain::{SymmetricDomain, TransportMap};
use crate::error::{Error, Result};
use crate::grouprep::{FiniteGroup, SectorGluing, VertexPermutations};

/// Minimum triangle angle required of generated meshes (degrees).
pub const MIN_ANGLE_DEG: f64 = 20.0;
/// Minimum angle tolerated after transport (degrees).
pub const MIN_TRANSPORT_ANGLE_DEG: f64 = 10.0;
/// Tolerance of the coordinate equivariance check.
pub const EQUIVARIANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SymmetricMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertices ordered by increasing θ.
    pub boundary_loop: Vec<usize>,
    /// Polar angle θ ∈ [0, 2π) of each `boundary_loop` entry.
    pub boundary_theta: Vec<f64>,
    pub orbit_action: Arc<VertexPermutations>,
    /// Group element whose copy of the fundamental sector owns the vertex.
    pub sector_tag: Vec<usize>,
    pub h_target: f64,
    pub group: Arc<FiniteGroup>,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
    pub boundary_vertices: usize,
    pub min_angle_deg: f64,
    pub max_edge: f64,
    pub h_target: f64,
}

impl SymmetricMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn stats(&self) -> MeshStats {
        let mut max_edge = 0.0f64;
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (self.vertices[t[e]], self.vertices[t[(e + 1) % 3]]);
                max_edge = max_edge.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        MeshStats {
            vertices: self.vertices.len(),
            triangles: self.triangles.len(),
            boundary_vertices: self.boundary_loop.len(),
            min_angle_deg: min_angle_deg(&self.vertices, &self.triangles),
            max_edge,
            h_target: self.h_target,
        }
    }

    /// Largest |x_{perm_g(v)} − g·x_v| over all elements and vertices.
    pub fn equivariance_defect(&self) -> f64 {
        coordinate_defect(&self.group, &self.vertices, |g| self.orbit_action.perm(g))
    }

    /// Length of the boundary polyline.
    pub fn boundary_length(&self) -> f64 {
        let n = self.boundary_loop.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[self.boundary_loop[i]];
                let b = self.vertices[self.boundary_loop[(i + 1) % n]];
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .sum()
    }

    /// Every edge in one or two triangles; single edges form the boundary loop.
    pub fn check_conformity(&self) -> Result<()> {
        let counts = edge_counts(&self.triangles);
        let n = self.boundary_loop.len();
        let mut boundary = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (self.boundary_loop[i], self.boundary_loop[(i + 1) % n]);
            boundary.push((a.min(b), a.max(b)));
        }
        boundary.sort_unstable();
        let mut singles = Vec::new();
        for (&e, &c) in &counts {
            match c {
                1 => singles.push(e),
                2 => {}
                _ => return Err(Error::Meshing(format!("edge {e:?} shared by {c} triangles"))),
            }
        }
        singles.sort_unstable();
        if singles != boundary {
            return Err(Error::Meshing("boundary edges do not match the boundary loop".into()));
        }
        Ok(())
    }

    /// Triangle set maps onto itself under every vertex permutation.
    pub fn check_triangle_closure(&self) -> Result<()> {
        let key = |t: &[usize; 3]| {
            let mut k = *t;
            k.sort_unstable();
            k
        };
        let mut set: Vec<[usize; 3]> = self.triangles.iter().map(key).collect();
        set.sort_unstable();
        for g in 0..self.group.order() {
            let p = self.orbit_action.perm(g);
            for t in &self.triangles {
                let img = key(&[p[t[0]], p[t[1]], p[t[2]]]);
                if set.binary_search(&img).is_err() {
                    return Err(Error::EquivarianceViolation(format!(
                        "triangle {t:?} has no image under element {g}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text node/element export.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.triangles.len());
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{i} {:e} {:e}", v[0], v[1]);
        }
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {}", t[0], t[1], t[2]);
        }
        s
    }
}

fn coordinate_defect<'a>(
    group: &FiniteGroup,
    vertices: &[[f64; 2]],
    perm: impl Fn(usize) -> &'a [usize],
) -> f64 {
    let mut worst = 0.0f64;
    for (g, e) in group.elements.iter().enumerate() {
        let p = perm(g);
        for (v, &x) in vertices.iter().enumerate() {
            let gx = e.apply(x);
            let y = vertices[p[v]];
            worst = worst.max((gx[0] - y[0]).abs()).max((gx[1] - y[1]).abs());
        }
    }
    worst
}

fn edge_counts(tris: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for t in tris {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn angle_at(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1]];
    let v = [c[0] - a[0], c[1] - a[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    cross.abs().atan2(dot)
}

fn triangle_min_angle(p: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (p[t[0]], p[t[1]], p[t[2]]);
    if signed_area(a, b, c) <= 0.0 {
        return 0.0;
    }
    angle_at(a, b, c).min(angle_at(b, c, a)).min(angle_at(c, a, b))
}

fn min_angle_deg(p: &[[f64; 2]], tris: &[[usize; 3]]) -> f64 {
    tris.iter().map(|t| triangle_min_angle(p, t)).fold(PI, f64::min).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SectorTag {
    Center,
    Ray0,
    Ray1,
    Interior,
}

struct SectorMesh {
    points: Vec<[f64; 2]>,
    tags: Vec<SectorTag>,
    /// Layer index of every point (0 = center).
    layer: Vec<usize>,
    /// θ of points on the outer layer.
    theta: Vec<Option<f64>>,
    /// Ray-0 point index of each layer (cyclic gluing).
    ray0_of_layer: Vec<usize>,
    tris: Vec<[usize; 3]>,
}

/// Inverse cumulative arclength on [0, α].
struct ArcTable {
    theta: Vec<f64>,
    cum: Vec<f64>,
}

impl ArcTable {
    fn new(domain: &SymmetricDomain, alpha: f64) -> Self {
        let m = 4096;
        let theta: Vec<f64> = (0..=m).map(|i| alpha * i as f64 / m as f64).collect();
        let w: Vec<f64> = theta
            .iter()
            .map(|&t| {
                let [r, dr, _] = domain.radius(t);
                (r * r + dr * dr).sqrt()
            })
            .collect();
        let mut cum = vec![0.0; m + 1];
        for i in 1..=m {
            cum[i] = cum[i - 1] + 0.5 * (w[i] + w[i - 1]) * (theta[i] - theta[i - 1]);
        }
        Self { theta, cum }
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn at_fraction(&self, f: f64) -> f64 {
        let target = f * self.total();
        let i = self.cum.partition_point(|&c| c < target).clamp(1, self.cum.len() - 1);
        let (c0, c1) = (self.cum[i - 1], self.cum[i]);
        let u = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        self.theta[i - 1] + u * (self.theta[i] - self.theta[i - 1])
    }
}

fn build_sector(
    domain: &SymmetricDomain,
    alpha: f64,
    gluing: SectorGluing,
    h: f64,
    layers: usize,
) -> SectorMesh {
    let group = &domain.group;
    let arc = ArcTable::new(domain, alpha);
    let total = arc.total();

    let mut points = vec![[0.0, 0.0]];
    let mut tags = vec![SectorTag::Center];
    let mut layer = vec![0usize];
    let mut theta = vec![None];
    let mut ray0_of_layer = vec![0usize];
    let mut rows: Vec<Vec<usize>> = vec![vec![0]];

    for i in 1..=layers {
        let s = i as f64 / layers as f64;
        let n = ((s * total / h).round() as usize).max(1);
        let mut row = Vec::with_capacity(n + 1);
        let mut ray0_point = [0.0, 0.0];
        for j in 0..=n {
            let th = if j == 0 {
                0.0
            } else if j == n {
                alpha
            } else {
                arc.at_fraction(j as f64 / n as f64)
            };
            let r = s * domain.radius(th)[0];
            let mut p = [r * th.cos(), r * th.sin()];
            let tag = if j == 0 {
                p = [r, 0.0];
                ray0_point = p;
                SectorTag::Ray0
            } else if j == n {
                if let SectorGluing::Rotation { generator } = gluing {
                    p = group.elements[generator].apply(ray0_point);
                }
                SectorTag::Ray1
            } else {
                SectorTag::Interior
            };
            row.push(points.len());
            if j == 0 {
                ray0_of_layer.push(points.len());
            }
            points.push(p);
            tags.push(tag);
            layer.push(i);
            theta.push(if i == layers { Some(th) } else { None });
        }
        rows.push(row);
    }

    let mut tris = Vec::new();
    for i in 0..layers {
        let (a, b) = (&rows[i], &rows[i + 1]);
        let (m, n) = (a.len() - 1, b.len() - 1);
        let (mut ia, mut ib) = (0usize, 0usize);
        while ia < m || ib < n {
            let advance_b = if ia == m {
                true
            } else if ib == n {
                false
            } else {
                (ib + 1) as f64 / n as f64 <= (ia + 1) as f64 / m as f64
            };
            if advance_b {
                tris.push([a[ia], b[ib], b[ib + 1]]);
                ib += 1;
            } else {
                tris.push([a[ia], b[ib], a[ia + 1]]);
                ia += 1;
            }
        }
    }
    for t in &mut tris {
        if signed_area(points[t[0]], points[t[1]], points[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }

    let mut sector = SectorMesh { points, tags, layer, theta, ray0_of_layer, tris };
    lawson_flips(&mut sector);
    for _ in 0..4 {
        smooth(&mut sector, layers);
        lawson_flips(&mut sector);
    }
    sector
}

/// Flip interior edges until the sector triangulation is Delaunay.
fn lawson_flips(sector: &mut SectorMesh) {
    let pts = &sector.points;
    for _pass in 0..200 {
        let mut owners: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (ti, t) in sector.tris.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                owners.entry((a.min(b), a.max(b))).or_default().push((ti, e));
            }
        }
        let mut touched = vec![false; sector.tris.len()];
        let mut flipped = 0;
        for ti in 0..sector.tris.len() {
            for e in 0..3 {
                let t = sector.tris[ti];
                let (a, b) = (t[e], t[(e + 1) % 3]);
                let Some(own) = owners.get(&(a.min(b), a.max(b))) else { continue };
                if own.len() != 2 {
                    continue;
                }
                let (tj, _) = if own[0].0 == ti { own[1] } else { own[0] };
                if touched[ti] || touched[tj] {
                    continue;
                }
                let c = t[(e + 2) % 3];
                let u = sector.tris[tj];
                let Some(d) = u.iter().copied().find(|&v| v != a && v != b) else { continue };
                let opp = angle_at(pts[c], pts[a], pts[b]) + angle_at(pts[d], pts[a], pts[b]);
                if opp <= PI + 1e-12 {
                    continue;
                }
                // t = (a, b, c) counter-clockwise; new triangles (c, a, d) and (d, b, c)
                let t1 = [c, a, d];
                let t2 = [d, b, c];
                if signed_area(pts[t1[0]], pts[t1[1]], pts[t1[2]]) <= 0.0
                    || signed_area(pts[t2[0]], pts[t2[1]], pts[t2[2]]) <= 0.0
                {
                    continue;
                }
                sector.tris[ti] = t1;
                sector.tris[tj] = t2;
                touched[ti] = true;
                touched[tj] = true;
                flipped += 1;
            }
        }
        if flipped == 0 {
            break;
        }
    }
}

/// Move strictly interior points toward the centroid of their neighbours when
/// that does not lower the worst angle of their star.
fn smooth(sector: &mut SectorMesh, layers: usize) {
    let n = sector.points.len();
    let mut star: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ti, t) in sector.tris.iter().enumerate() {
        for &v in t {
            star[v].push(ti);
        }
    }
    for v in 0..n {
        if sector.tags[v] != SectorTag::Interior || sector.layer[v] == layers {
            continue;
        }
        let mut nbrs: Vec<usize> = star[v].iter().flat_map(|&ti| sector.tris[ti]).filter(|&w| w != v).collect();
        nbrs.sort_unstable();
        nbrs.dedup();
        let k = nbrs.len() as f64;
        let target = nbrs.iter().fold([0.0, 0.0], |acc, &w| {
            [acc[0] + sector.points[w][0] / k, acc[1] + sector.points[w][1] / k]
        });
        let worst = |pts: &[[f64; 2]]| {
            star[v].iter().map(|&ti| triangle_min_angle(pts, &sector.tris[ti])).fold(PI, f64::min)
        };
        let before = worst(&sector.points);
        let old = sector.points[v];
        sector.points[v] = target;
        if worst(&sector.points) <= before {
            sector.points[v] = old;
        }
    }
}

/// Canonical (group element, sector vertex) key of a replicated vertex.
fn canonical(group: &FiniteGroup, sector: &SectorMesh, gluing: SectorGluing, g: usize, w: usize) -> (usize, usize) {
    match (sector.tags[w], gluing) {
        (SectorTag::Center, _) => (0, w),
        (SectorTag::Ray1, SectorGluing::Rotation { generator }) => {
            (group.mul(g, generator), sector.ray0_of_layer[sector.layer[w]])
        }
        (SectorTag::Ray0, SectorGluing::Mirrors { mirror0, .. }) => (g.min(group.mul(g, mirror0)), w),
        (SectorTag::Ray1, SectorGluing::Mirrors { mirror1, .. }) => (g.min(group.mul(g, mirror1)), w),
        _ => (g, w),
    }
}

/// Mesh the domain with an exactly G-equivariant triangulation.
pub fn generate_mesh(domain: &SymmetricDomain, h_target: f64) -> Result<SymmetricMesh> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(Error::InvalidParameter(format!("h_target = {h_target}")));
    }
    let group = Arc::clone(&domain.group);
    let spec = group.sector();
    if spec.angle.to_degrees() < MIN_ANGLE_DEG {
        return Err(Error::Meshing(format!(
            "sector angle {:.2}° of {} is below the {MIN_ANGLE_DEG}° quality floor",
            spec.angle.to_degrees(),
            group.kind
        )));
    }
    let arc_len = domain.arclength(0.0, spec.angle, 512);
    let segments = (arc_len / h_target).round() as usize;
    if segments < 8 {
        return Err(Error::Meshing(format!(
            "sector arc gets {segments} boundary segments at h = {h_target}; need at least 8"
        )));
    }
    let mean_r = 0.5 * (domain.min_radius() + domain.max_radius());
    let base = ((mean_r / h_target).round() as usize).max(2);

    let mut chosen: Option<SectorMesh> = None;
    let mut worst_seen = 0.0f64;
    for delta in [0isize, 1, -1, 2, -2, 3] {
        let layers = base as isize + delta;
        if layers < 2 {
            continue;
        }
        let sector = build_sector(domain, spec.angle, spec.gluing, h_target, layers as usize);
        let q = min_angle_deg(&sector.points, &sector.tris);
        worst_seen = worst_seen.max(q);
        if q >= MIN_ANGLE_DEG {
            chosen = Some(sector);
            break;
        }
    }
    let Some(sector) = chosen else {
        return Err(Error::Meshing(format!(
            "best sector mesh reaches a minimum angle of {worst_seen:.2}° (< {MIN_ANGLE_DEG}°)"
        )));
    };
    replicate(domain, &group, &sector, spec.gluing, h_target)
}

fn replicate(
    domain: &SymmetricDomain,
    group: &Arc<FiniteGroup>,
    sector: &SectorMesh,
    gluing: SectorGluing,
    h_target: f64,
) -> Result<SymmetricMesh> {
    let order = group.order();
    let ns = sector.points.len();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut keys: Vec<(usize, usize)> = Vec::new();
    let mut local = vec![0usize; order * ns];
    for g in 0..order {
        for w in 0..ns {
            let key = canonical(group, sector, gluing, g, w);
            let id = *index.entry(key).or_insert_with(|| {
                keys.push(key);
                keys.len() - 1
            });
            local[g * ns + w] = id;
        }
    }
    let vertices: Vec<[f64; 2]> =
        keys.iter().map(|&(g, w)| group.elements[g].apply(sector.points[w])).collect();
    let sector_tag: Vec<usize> = keys.iter().map(|&(g, _)| g).collect();

    let mut triangles = Vec::with_capacity(order * sector.tris.len());
    for g in 0..order {
        let flip = group.elements[g].reflection;
        for t in &sector.tris {
            let mut tri = [local[g * ns + t[0]], local[g * ns + t[1]], local[g * ns + t[2]]];
            if flip {
                tri.swap(1, 2);
            }
            triangles.push(tri);
        }
    }

    let perms: Vec<Vec<usize>> = (0..order)
        .map(|g| {
            keys.iter()
                .map(|&(h, w)| index[&canonical(group, sector, gluing, group.mul(g, h), w)])
                .collect()
        })
        .collect();
    let action = Arc::new(VertexPermutations::new(group, perms)?);

    let mut boundary: Vec<(f64, usize)> = Vec::new();
    for (id, &(g, w)) in keys.iter().enumerate() {
        if let Some(th) = sector.theta[w] {
            boundary.push((group.elements[g].map_angle(th), id));
        }
    }
    boundary.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mesh = SymmetricMesh {
        vertices,
        triangles,
        boundary_loop: boundary.iter().map(|b| b.1).collect(),
        boundary_theta: boundary.iter().map(|b| b.0).collect(),
        orbit_action: action,
        sector_tag,
        h_target,
        group: Arc::clone(group),
    };
    let _ = domain;
    mesh.check_conformity()?;
    check_orientation(&mesh.vertices, &mesh.triangles)?;
    let defect = mesh.equivariance_defect();
    if defect > EQUIVARIANCE_TOL {
        return Err(Error::EquivarianceViolation(format!("vertex coordinates off by {defect:e}")));
    }
    Ok(mesh)
}

fn check_orientation(vertices: &[[f64; 2]], tris: &[[usize; 3]]) -> Result<()> {
    for (index, t) in tris.iter().enumerate() {
        let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle { index, area });
        }
    }
    Ok(())
}

/// Validate that the mesh coordinates realize the given group action exactly.
pub fn vertex_permutations(mesh: &SymmetricMesh, group: &Arc<FiniteGroup>) -> Result<Arc<VertexPermutations>> {
    if group.kind != mesh.group.kind {
        return Err(Error::SymmetryViolation(format!(
            "mesh was built for {}, not {}",
            mesh.group.kind, group.kind
        )));
    }
    let defect = mesh.equivariance_defect();
    if defect > EQUIVARIANCE_TOL {
        return Err(Error::EquivarianceViolation(format!(
            "vertex permutation misses g·x by {defect:e}"
        )));
    }
    mesh.check_triangle_closure()?;
    Ok(Arc::clone(&mesh.orbit_action))
}

/// Reinterpret a mesh built for a group as a mesh for one of its subgroups.
pub fn restrict_mesh(mesh: &SymmetricMesh, subgroup: &Arc<FiniteGroup>) -> Result<SymmetricMesh> {
    let mut perms = Vec::with_capacity(subgroup.order());
    for e in &subgroup.elements {
        let parent = mesh
            .group
            .elements
            .iter()
            .position(|p| (p.matrix - e.matrix).amax() < 1e-12)
            .ok_or_else(|| {
                Error::SymmetryViolation(format!("{} is not a subgroup of {}", subgroup.kind, mesh.group.kind))
            })?;
        perms.push(mesh.orbit_action.perm(parent).to_vec());
    }
    let action = Arc::new(VertexPermutations::new(subgroup, perms)?);
    Ok(SymmetricMesh { orbit_action: action, group: Arc::clone(subgroup), ..mesh.clone() })
}

/// Push every vertex through `x ↦ x + tV(x)`, keeping connectivity.
pub fn transport_mesh(mesh: &SymmetricMesh, map: &TransportMap, t: f64) -> Result<SymmetricMesh> {
    if !Arc::ptr_eq(&mesh.group, &map.domain.group) && mesh.group.kind != map.domain.group.kind {
        return Err(Error::SymmetryViolation("mesh and transport use different groups".into()));
    }
    map.check_t(t)?;
    let vertices: Vec<[f64; 2]> = mesh.vertices.iter().map(|&x| map.apply(t, x)).collect();
    if let Err(Error::DegenerateTriangle { index, area }) = check_orientation(&vertices, &mesh.triangles) {
        return Err(Error::Transport(format!(
            "triangle {index} inverted (area {area:e}) at t = {t}; use a smaller t"
        )));
    }
    let q = min_angle_deg(&vertices, &mesh.triangles);
    if q < MIN_TRANSPORT_ANGLE_DEG {
        return Err(Error::Transport(format!(
            "minimum angle collapsed to {q:.2}° at t = {t}; use a smaller t"
        )));
    }
    let boundary_theta = mesh
        .boundary_loop
        .iter()
        .zip(&mesh.boundary_theta)
        .map(|(&v, &th)| {
            let p = vertices[v];
            let a = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
            // keep θ = 0 at 0 rather than 2π
            if (a - th).abs() > PI { th } else { a }
        })
        .collect();
    let out = SymmetricMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        boundary_loop: mesh.boundary_loop.clone(),
        boundary_theta,
        orbit_action: Arc::clone(&mesh.orbit_action),
        sector_tag: mesh.sector_tag.clone(),
        h_target: mesh.h_target,
        group: Arc::clone(&mesh.group),
    };
    let defect = out.equivariance_defect();
    if defect > 1e-11 {
        return Err(Error::EquivarianceViolation(format!("transported mesh off by {defect:e}")));
    }
    Ok(out)
}
