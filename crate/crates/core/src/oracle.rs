//! Closed-form Neumann spectra of rectangles and disks.
//!
//! Disk eigenvalues are squares of positive zeros of J′_m. J_m is summed from
//! its ascending series in double-double arithmetic, which keeps the
//! cancellation error below 1e-16 for arguments up to [`ZERO_TABLE_LIMIT`];
//! an independent Miller backward recurrence is provided as a cross-check.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grouprep::{FiniteGroup, GroupKind};

/// Zeros of J′_m are tabulated on (0, ZERO_TABLE_LIMIT).
pub const ZERO_TABLE_LIMIT: f64 = 40.0;
/// Bisection stops once the bracket is narrower than this.
pub const ZERO_TOL: f64 = 1e-12;

/// Unevaluated sum hi + lo with |lo| ≤ ulp(hi)/2.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let lo = s.lo + self.lo + o.lo;
        Dd::two_sum(s.hi, lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::two_sum(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn div_f64(self, d: f64) -> Dd {
        let q = self.hi / d;
        // remainder self − q·d, exact in the leading part
        let p = Dd::new(q).mul(Dd::new(d));
        let r = self.add(Dd { hi: -p.hi, lo: -p.lo });
        Dd::two_sum(q, r.hi / d)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// J_m(x) by the ascending series Σ (−1)^k (x/2)^{2k+m} / (k!(k+m)!).
pub fn bessel_j(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let half = Dd::new(0.5 * x);
    let mut term = Dd::new(1.0);
    for j in 1..=m {
        term = term.mul(half).div_f64(j as f64);
    }
    let q = half.mul(half).neg();
    let mut sum = term;
    for k in 1u32.. {
        term = term.mul(q).div_f64(k as f64 * (k + m) as f64);
        sum = sum.add(term);
        if term.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) || term.hi == 0.0 {
            break;
        }
    }
    sum.value()
}

/// J′_m(x) from J′_0 = −J_1 and J′_m = (J_{m−1} − J_{m+1})/2.
pub fn bessel_j_prime(m: u32, x: f64) -> f64 {
    if m == 0 {
        -bessel_j(1, x)
    } else {
        0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x))
    }
}

/// J_m(x) by Miller's backward recurrence normalized with
/// J_0 + 2Σ J_{2k} = 1.
pub fn bessel_j_miller(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let top = (m as f64).max(x);
    let mut n = (top + 30.0 + (50.0 * top).sqrt()) as u32;
    n += n % 2;
    let (mut jp, mut j) = (0.0f64, 1e-300f64);
    let (mut norm, mut wanted) = (0.0f64, 0.0f64);
    for k in (0..n).rev() {
        // j holds J_{k+1}, jp holds J_{k+2}
        let jm = 2.0 * (k + 1) as f64 / x * j - jp;
        jp = j;
        j = jm;
        if k == m {
            wanted = j;
        }
        if k % 2 == 0 && k > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    norm += j;
    wanted / norm
}

/// Positive zeros of J′_m below `limit`, bracketed on a π/4 grid and bisected.
///
/// For m = 0 the root at x = 0 is excluded; it belongs to the constant mode.
pub fn bessel_j_prime_zeros(m: u32, limit: f64) -> Vec<f64> {
    let f = |x: f64| bessel_j_prime(m, x);
    let mut zeros = Vec::new();
    let mut a = FRAC_PI_4;
    let mut fa = f(a);
    while a < limit {
        let b = (a + FRAC_PI_4).min(limit);
        let fb = f(b);
        if fa == 0.0 {
            zeros.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            while hi - lo > ZERO_TOL {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm * flo < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            zeros.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    zeros
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct DiskZero {
    z: f64,
    m: u32,
    k: u32,
}

fn disk_zero_table() -> &'static [DiskZero] {
    static TABLE: OnceLock<Vec<DiskZero>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::new();
        // j′_{m,1} > m, so no m ≥ limit contributes
        for m in 0..ZERO_TABLE_LIMIT as u32 {
            for (i, z) in bessel_j_prime_zeros(m, ZERO_TABLE_LIMIT).into_iter().enumerate() {
                out.push(DiskZero { z, m, k: i as u32 + 1 });
            }
        }
        out.sort_by(|a, b| a.z.total_cmp(&b.z));
        out
    })
}

/// One eigenvalue of an analytic spectrum together with its quantum numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticEntry {
    pub lambda: f64,
    /// Angular order (disk) or x-index (rectangle).
    pub m: u32,
    /// Radial index (disk) or y-index (rectangle).
    pub n_or_k: u32,
    /// Dimension of the eigenspace of `lambda`.
    pub multiplicity: usize,
    /// Symmetry label of each basis function carried by this entry.
    pub labels: Vec<String>,
}

impl AnalyticEntry {
    /// Number of eigenfunctions the entry contributes.
    pub fn functions(&self, disk: bool) -> usize {
        if disk && self.m > 0 {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticSpectrum {
    pub disk: bool,
    pub entries: Vec<AnalyticEntry>,
}

impl AnalyticSpectrum {
    /// Eigenvalues repeated by multiplicity, ascending.
    pub fn values(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.lambda, e.functions(self.disk)))
            .collect()
    }
}

/// Neumann spectrum of the disk of radius `r`: λ = 0 followed by (j′_{m,k}/r)²,
/// with every m ≥ 1 entry carrying the cos/sin pair. Entries are added until at
/// least `count` eigenvalues (with multiplicity) are listed.
pub fn disk_spectrum(r: f64, count: usize) -> Result<AnalyticSpectrum> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("disk radius must be positive, got {r}")));
    }
    let mut entries = vec![AnalyticEntry { lambda: 0.0, m: 0, n_or_k: 0, multiplicity: 1, labels: vec![] }];
    let mut have = 1;
    let table = disk_zero_table();
    let mut it = table.iter();
    while have < count {
        let z = it.next().ok_or_else(|| {
            Error::Range(format!(
                "{count} disk eigenvalues requested but only {} are tabulated (j′ < {ZERO_TABLE_LIMIT})",
                table.iter().map(|z| if z.m > 0 { 2 } else { 1 }).sum::<usize>() + 1
            ))
        })?;
        let mult = if z.m > 0 { 2 } else { 1 };
        entries.push(AnalyticEntry {
            lambda: (z.z / r).powi(2),
            m: z.m,
            n_or_k: z.k,
            multiplicity: mult,
            labels: vec![],
        });
        have += mult;
    }
    Ok(AnalyticSpectrum { disk: true, entries })
}

fn klein_label(x_odd: bool, y_odd: bool) -> &'static str {
    match (x_odd, y_odd) {
        (false, false) => "A",
        (true, false) => "B1",
        (false, true) => "B2",
        (true, true) => "B3",
    }
}

/// Neumann spectrum of the centred rectangle [−Lx/2, Lx/2] × [−Ly/2, Ly/2]:
/// λ = (mπ/Lx)² + (nπ/Ly)², labelled by the klein group through the parity
/// of (m, n) (B1 odd in x, B2 odd in y).
pub fn rectangle_spectrum(lx: f64, ly: f64, count: usize) -> Result<AnalyticSpectrum> {
    if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
        return Err(Error::InvalidParameter(format!("rectangle sides must be positive, got {lx} × {ly}")));
    }
    let bound = count as u32;
    let mut entries: Vec<AnalyticEntry> = (0..=bound)
        .flat_map(|m| (0..=bound).map(move |n| (m, n)))
        .map(|(m, n)| AnalyticEntry {
            lambda: (m as f64 * PI / lx).powi(2) + (n as f64 * PI / ly).powi(2),
            m,
            n_or_k: n,
            multiplicity: 1,
            labels: vec![klein_label(m % 2 == 1, n % 2 == 1).to_string()],
        })
        .collect();
    entries.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.m.cmp(&b.m)));
    entries.truncate(count);
    // coincidences with the full candidate list would be exact; within the
    // truncated list a group cut at the end is flagged by the next entry only
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    let mut i = 0;
    while i < entries.len() {
        let j = (i..entries.len()).take_while(|&j| same(entries[j].lambda, entries[i].lambda)).count() + i;
        for e in &mut entries[i..j] {
            e.multiplicity = j - i;
        }
        i = j;
    }
    Ok(AnalyticSpectrum { disk: false, entries })
}

/// Labels of the (cos mθ, sin mθ) pair under `group`.
pub fn angular_mode_labels(group: &FiniteGroup, m: u32) -> Vec<String> {
    let functions = if m == 0 { 1 } else { 2 };
    let pair = |c: &str, s: &str| -> Vec<String> {
        [c, s].iter().take(functions).map(|x| x.to_string()).collect()
    };
    match group.kind {
        GroupKind::Cyclic(p) | GroupKind::Dihedral(p) => {
            let p = p as u32;
            let r = m % p;
            let dihedral = matches!(group.kind, GroupKind::Dihedral(_));
            if r == 0 {
                if dihedral { pair("A1", "A2") } else { pair("A", "A") }
            } else if p % 2 == 0 && r == p / 2 {
                if dihedral { pair("B1", "B2") } else { pair("B", "B") }
            } else {
                let e = format!("E{}", r.min(p - r));
                pair(&e, &e)
            }
        }
        GroupKind::Klein => {
            if m % 2 == 0 {
                pair("A", "B3")
            } else {
                pair("B1", "B2")
            }
        }
    }
}

/// Attach symmetry labels under `group` to a disk spectrum.
pub fn disk_symmetry_labels(spectrum: &AnalyticSpectrum, group: &FiniteGroup) -> Result<AnalyticSpectrum> {
    if !spectrum.disk {
        return Err(Error::InvalidParameter("disk labels need a disk spectrum".into()));
    }
    let entries = spectrum
        .entries
        .iter()
        .map(|e| AnalyticEntry { labels: angular_mode_labels(group, e.m), ..e.clone() })
        .collect();
    Ok(AnalyticSpectrum { disk: true, entries })
}

/// Total number of eigenfunctions per label.
pub fn label_totals(spectrum: &AnalyticSpectrum) -> Vec<(String, usize)> {
    let mut totals: Vec<(String, usize)> = Vec::new();
    for l in spectrum.entries.iter().flat_map(|e| &e.labels) {
        match totals.iter_mut().find(|(x, _)| x == l) {
            Some(t) => t.1 += 1,
            None => totals.push((l.clone(), 1)),
        }
    }
    totals
}

/// `lambda,m,n_or_k,multiplicity,sigma_label` rows; distinct labels of one
/// entry are joined by `;`.
pub fn oracle_csv(spectrum: &AnalyticSpectrum) -> String {
    let mut s = String::from("lambda,m,n_or_k,multiplicity,sigma_label\n");
    for e in &spectrum.entries {
        let mut labels: Vec<&str> = Vec::new();
        for l in &e.labels {
            if !labels.contains(&l.as_str()) {
                labels.push(l);
            }
        }
        let _ = writeln!(s, "{:.15e},{},{},{},{}", e.lambda, e.m, e.n_or_k, e.multiplicity, labels.join(";"));
    }
    s
}
