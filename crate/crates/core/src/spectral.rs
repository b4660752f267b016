//! The spectral determinant `Q = det(1 - N2 P2^{-1} P1 N1^{-1})` on the
//! imaginary axis, and real-axis eigenvalue scans of single curves.
//!
//! `ln Q` is evaluated as `ln det(1 - U V)` with `U = P2^{-1} P1` and
//! `V = N1^{-1} N2`. Every block is held as a column-normalised mantissa
//! plus a per-column log scale; the scales of `U` and `V` only enter through
//! two diagonal matrices, `D_a = e^{c(P1) - c(N1)}` and `D_b = e^{c(N2) - c(P2)}`,
//! which stay representable even when the raw entries are not.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    angular, build_blocks_on, lu_condition, mode_of_column, reduce_blocks, AssemblyError, BoundaryCondition,
    LedgerMatrix, SceneConfig, SpectralPoint, CONDITION_LIMIT,
};
use crate::geometry::{sample_curve, CurveSpec, GeometryError, Placement, SampledBoundary};
use crate::specfun::{bessel_j_sequence, bessel_y0_from_sequence, SpecFunError};

/// Below this Frobenius norm `ln det(1 - A)` is summed as a trace series,
/// which keeps full relative accuracy when `Q` is close to 1.
const SERIES_NORM: f64 = 1e-2;

/// Largest row rescaling applied during equilibration.
const MAX_ROW_SHIFT: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error("invalid scan range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("scan step too coarse near lambda in [{lo}, {hi}]; use a finer step")]
    ScanTooCoarse { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDet {
    /// `ln |det|`.
    pub value: f64,
    pub sign: f64,
    pub condition_flag: bool,
}

impl LogDet {
    pub const ZERO: LogDet = LogDet {
        value: 0.0,
        sign: 1.0,
        condition_flag: false,
    };

    /// Usable as an energy-path node: positive and well conditioned.
    pub fn is_clean(&self) -> bool {
        self.sign > 0.0 && !self.condition_flag && self.value.is_finite()
    }
}

/// The four reduced blocks entering `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QBlocks {
    pub n1: LedgerMatrix,
    pub n2: LedgerMatrix,
    pub p1: LedgerMatrix,
    pub p2: LedgerMatrix,
}

/// Order of the two solves when forming the product inside the determinant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveOrder {
    /// `A = U V` (solve with `P2` first).
    InnerFirst,
    /// `A = V U` (solve with `N1` first).
    OuterFirst,
}

/// `ln det(1 - A)`.
pub fn log_det_one_minus(a: &DMatrix<f64>) -> LogDet {
    let n = a.nrows();
    if !a.iter().all(|v| v.is_finite()) {
        return LogDet {
            value: f64::NAN,
            sign: 1.0,
            condition_flag: true,
        };
    }
    let norm = a.norm();
    if norm == 0.0 {
        return LogDet::ZERO;
    }
    if norm <= SERIES_NORM {
        // ln det(1 - A) = -sum_k tr(A^k) / k, with tr(A^{i+j}) = <A^i, (A^j)^T>
        let mut sum = -a.trace();
        let mut prev = a.clone();
        let mut cur = a * a;
        let mut k = 2;
        loop {
            let even = frobenius_pair(&prev, &prev) / k as f64;
            let odd = frobenius_pair(&cur, &prev) / (k + 1) as f64;
            sum -= even + odd;
            if norm.powi(k + 1) / (k + 1) as f64 <= 1e-17 * sum.abs() || k > 400 {
                break;
            }
            prev = cur;
            cur = &prev * a;
            k += 2;
        }
        return LogDet {
            value: sum,
            sign: 1.0,
            condition_flag: false,
        };
    }
    let m = DMatrix::identity(n, n) - a;
    log_det(m)
}

/// `tr(X Y) = sum_ik X_ik Y_ki`.
fn frobenius_pair(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += x[(i, k)] * y[(k, i)];
        }
    }
    s
}

fn log_det(m: DMatrix<f64>) -> LogDet {
    let n = m.nrows();
    let lu = m.lu();
    let mut value = 0.0;
    let mut sign = lu.p().determinant::<f64>();
    let u = lu.u();
    for i in 0..n {
        let d = u[(i, i)];
        value += d.abs().ln();
        sign *= d.signum();
    }
    let cond = lu_condition(u.diagonal().iter().copied());
    LogDet {
        value,
        sign,
        condition_flag: !(cond < CONDITION_LIMIT) || !value.is_finite(),
    }
}

/// Scales the rows of both matrices by the inverse row maximum of `lead`,
/// which leaves `Q` unchanged.
fn equilibrate_rows(lead: &mut DMatrix<f64>, other: &mut DMatrix<f64>) {
    for i in 0..lead.nrows() {
        let m = lead.row(i).amax();
        if m > 0.0 && m.is_finite() {
            let s = (1.0 / m).min(MAX_ROW_SHIFT.exp());
            lead.row_mut(i).scale_mut(s);
            other.row_mut(i).scale_mut(s);
        }
    }
}

/// `e^{x_j - y_j}` per column.
fn ledger_ratio(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| (a - b).exp()).collect()
}

fn scale_cols(m: &mut DMatrix<f64>, d: &[f64]) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col *= d[j];
    }
}

/// `ln Q` from reduced blocks.
pub fn log_q_from_blocks(q: &QBlocks, order: SolveOrder) -> LogDet {
    let n = q.n1.mantissa.nrows();
    let (mut n1, mut n2) = (q.n1.mantissa.clone(), q.n2.mantissa.clone());
    let (mut p2, mut p1) = (q.p2.mantissa.clone(), q.p1.mantissa.clone());
    if p1.iter().all(|v| *v == 0.0) {
        return LogDet::ZERO;
    }
    equilibrate_rows(&mut n1, &mut n2);
    equilibrate_rows(&mut p2, &mut p1);

    let lu_n1 = n1.lu();
    let lu_p2 = p2.lu();
    let cond_n = lu_condition(lu_n1.u().diagonal().iter().copied());
    let cond_p = lu_condition(lu_p2.u().diagonal().iter().copied());
    let flagged = |ld: LogDet| LogDet {
        condition_flag: ld.condition_flag || !(cond_n.is_finite() && cond_p.is_finite()),
        ..ld
    };
    let (Some(mut u), Some(mut v)) = (lu_p2.solve(&p1), lu_n1.solve(&n2)) else {
        return LogDet {
            value: f64::NAN,
            sign: 1.0,
            condition_flag: true,
        };
    };
    let d_a = ledger_ratio(&q.p1.col_log, &q.n1.col_log);
    let d_b = ledger_ratio(&q.n2.col_log, &q.p2.col_log);
    scale_cols(&mut u, &d_a);
    scale_cols(&mut v, &d_b);
    debug_assert_eq!(u.nrows(), n);
    let a = match order {
        SolveOrder::InnerFirst => &u * &v,
        SolveOrder::OuterFirst => &v * &u,
    };
    flagged(log_det_one_minus(&a))
}

/// Cached meshes for repeated `ln Q` evaluations of one scene.
#[derive(Debug, Clone)]
pub struct LogQEvaluator {
    scene: SceneConfig,
    mesh_inner: SampledBoundary,
    mesh_outer: SampledBoundary,
}

impl LogQEvaluator {
    pub fn new(scene: &SceneConfig) -> Result<Self, SpectralError> {
        scene.validate()?;
        let (mesh_inner, mesh_outer) = scene.meshes()?;
        Ok(LogQEvaluator {
            scene: scene.clone(),
            mesh_inner,
            mesh_outer,
        })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn blocks(&self, sp: &SpectralPoint) -> Result<QBlocks, SpectralError> {
        let blocks = build_blocks_on(&self.scene, sp, &self.mesh_inner, &self.mesh_outer)?;
        let (p1, p2) = reduce_blocks(&blocks).map_err(|e| match e {
            AssemblyError::SingularInterface { condition, .. } => AssemblyError::SingularInterface {
                condition,
                xi: sp.xi,
                kz: sp.kz,
            },
            other => other,
        })?;
        Ok(QBlocks {
            n1: blocks.n1.to_ledger(),
            n2: blocks.n2.to_ledger(),
            p1,
            p2,
        })
    }

    pub fn eval(&self, sp: &SpectralPoint) -> Result<LogDet, SpectralError> {
        self.eval_ordered(sp, SolveOrder::InnerFirst)
    }

    pub fn eval_ordered(&self, sp: &SpectralPoint, order: SolveOrder) -> Result<LogDet, SpectralError> {
        Ok(log_q_from_blocks(&self.blocks(sp)?, order))
    }
}

/// `ln Q(i xi, kz)` for `scene` (validates the scene on every call; use
/// [`LogQEvaluator`] in loops).
pub fn log_q(scene: &SceneConfig, sp: &SpectralPoint) -> Result<LogDet, SpectralError> {
    LogQEvaluator::new(scene)?.eval(sp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Pmm,
    Mfs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueList {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub method: EigenMethod,
    /// Set when some collocation matrix was close to singular for reasons
    /// other than an eigenvalue (typical of MFS with distant sources).
    pub conditioning_warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub step: f64,
    pub tolerance: f64,
    /// A refined minimum counts as a root when `|D|` there is below this
    /// fraction of its neighbours.
    pub dip_ratio: f64,
    pub source_scale: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            step: 0.01,
            tolerance: 1e-8,
            dip_ratio: 1e-6,
            source_scale: 1.5,
        }
    }
}

/// Minima with a dip between these ratios are neither clear roots nor
/// ordinary minima.
const AMBIGUOUS_DIP: f64 = 1e-3;
/// For `|D|` surrogates a simple zero sits slightly off the real axis and
/// `|D|` has a V-shaped minimum; its depth is measured against the coarse
/// window ends instead.
const UNSIGNED_DIP: f64 = 0.05;
const SUBGRID: usize = 33;
const MERGE_DISTANCE: f64 = 1e-6;

/// Signed, normalised determinant surrogate `D(lambda)`.
trait Surrogate: Sync {
    fn eval(&self, lambda: f64) -> Result<(f64, bool), SpectralError>;
    fn signed(&self) -> bool;
}

struct PmmSurrogate {
    mesh: SampledBoundary,
    bc: BoundaryCondition,
    truncation: usize,
    mean_radius: f64,
}

impl Surrogate for PmmSurrogate {
    fn eval(&self, lambda: f64) -> Result<(f64, bool), SpectralError> {
        let s = self.truncation;
        let n = 2 * s + 1;
        let mut mat = DMatrix::zeros(n, n);
        for q in 0..n {
            let r = self.mesh.radii[q];
            let theta = self.mesh.angles[q];
            let j = bessel_j_sequence(s + 1, lambda * r)?;
            let (st, ct) = theta.sin_cos();
            let nrm = self.mesh.normals[q];
            let n_r = nrm[0] * ct + nrm[1] * st;
            let n_t = -nrm[0] * st + nrm[1] * ct;
            for col in 0..n {
                let m = mode_of_column(col, s);
                let k = m.unsigned_abs() as usize;
                let (t, dt) = angular(m, theta);
                mat[(q, col)] = match self.bc {
                    BoundaryCondition::Dirichlet => j[k] * t,
                    BoundaryCondition::Neumann => {
                        n_r * lambda * j_prime(&j, k) * t + n_t * j[k] * dt / r
                    }
                };
            }
        }
        // divide each column by the size of its radial factor at the mean
        // radius: a column transform, so roots are unchanged
        let j = bessel_j_sequence(s + 1, lambda * self.mean_radius)?;
        let ld = log_det(mat);
        let mut norm = 0.0;
        for col in 0..n {
            let k = mode_of_column(col, s).unsigned_abs() as usize;
            let scale = match self.bc {
                BoundaryCondition::Dirichlet => j[k].hypot(j_prime(&j, k)),
                BoundaryCondition::Neumann => lambda * j[k].hypot(j_prime(&j, k)),
            };
            norm += scale.ln();
        }
        Ok((ld.sign * (ld.value - norm).exp(), false))
    }

    fn signed(&self) -> bool {
        true
    }
}

fn j_prime(j: &[f64], k: usize) -> f64 {
    if k == 0 {
        -j[1]
    } else {
        0.5 * (j[k - 1] - j[k + 1])
    }
}

struct MfsSurrogate {
    points: Vec<[f64; 2]>,
    sources: Vec<[f64; 2]>,
}

impl Surrogate for MfsSurrogate {
    fn eval(&self, lambda: f64) -> Result<(f64, bool), SpectralError> {
        let n = self.points.len();
        let mut mat = DMatrix::<Complex64>::zeros(n, n);
        for (q, p) in self.points.iter().enumerate() {
            for (j, s) in self.sources.iter().enumerate() {
                let x = lambda * (p[0] - s[0]).hypot(p[1] - s[1]);
                let seq = bessel_j_sequence(0, x)?;
                mat[(q, j)] = Complex64::new(seq[0], bessel_y0_from_sequence(x, &seq));
            }
        }
        // Hadamard normalisation: |det| / prod of column norms lies in [0, 1]
        let col_norms: f64 = mat.column_iter().map(|c| c.norm().ln()).sum();
        let lu = mat.lu();
        let u = lu.u();
        let mut value = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = u[(i, i)].norm();
            value += d.ln();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let warn = lo == 0.0 || hi / lo > CONDITION_LIMIT;
        Ok(((value - col_norms).exp(), warn))
    }

    fn signed(&self) -> bool {
        false
    }
}

fn check_range(range: (f64, f64), opts: &ScanOptions) -> Result<(), SpectralError> {
    let (lo, hi) = range;
    if !(lo > 0.0) || !(hi > lo) || !hi.is_finite() || !(opts.step > 0.0) {
        return Err(SpectralError::InvalidRange { lo, hi });
    }
    Ok(())
}

/// Dirichlet or Neumann eigenvalues of the region bounded by `curve`, from
/// the point-matching determinant in the `J_m` basis.
pub fn eigen_scan_pmm(
    curve: &CurveSpec,
    bc: BoundaryCondition,
    range: (f64, f64),
    truncation: usize,
    opts: &ScanOptions,
) -> Result<EigenvalueList, SpectralError> {
    check_range(range, opts)?;
    curve.validate()?;
    let mesh = sample_curve(curve, &Placement::identity(), 2 * truncation + 1)?;
    let mean_radius = mesh.radii.iter().sum::<f64>() / mesh.len() as f64;
    let sur = PmmSurrogate {
        mesh,
        bc,
        truncation,
        mean_radius,
    };
    scan(&sur, range, opts, EigenMethod::Pmm)
}

/// Dirichlet eigenvalues from the method of fundamental solutions with
/// `H_0^(1)` sources on the curve scaled by `opts.source_scale`.
pub fn eigen_scan_mfs(
    curve: &CurveSpec,
    range: (f64, f64),
    truncation: usize,
    opts: &ScanOptions,
) -> Result<EigenvalueList, SpectralError> {
    check_range(range, opts)?;
    curve.validate()?;
    if !(opts.source_scale > 1.0) {
        return Err(SpectralError::InvalidRange {
            lo: opts.source_scale,
            hi: f64::NAN,
        });
    }
    let mesh = sample_curve(curve, &Placement::identity(), 2 * truncation + 1)?;
    let sources = mesh
        .points
        .iter()
        .map(|p| [p[0] * opts.source_scale, p[1] * opts.source_scale])
        .collect();
    let sur = MfsSurrogate {
        points: mesh.points,
        sources,
    };
    scan(&sur, range, opts, EigenMethod::Mfs)
}

fn sample_grid(sur: &dyn Surrogate, xs: &[f64]) -> Result<(Vec<f64>, bool), SpectralError> {
    let vals: Vec<(f64, bool)> = xs.par_iter().map(|&x| sur.eval(x)).collect::<Result<_, _>>()?;
    let warn = vals.iter().any(|v| v.1);
    Ok((vals.into_iter().map(|v| v.0).collect(), warn))
}

fn bisect(sur: &dyn Surrogate, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> Result<f64, SpectralError> {
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = sur.eval(m)?.0;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn golden_min(sur: &dyn Surrogate, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64), SpectralError> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = sur.eval(c)?.0.abs();
    let mut fd = sur.eval(d)?.0.abs();
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sur.eval(c)?.0.abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sur.eval(d)?.0.abs();
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Roots inside `[a, b]` found on a fine subgrid.
fn refine_cell(
    sur: &dyn Surrogate,
    a: f64,
    b: f64,
    opts: &ScanOptions,
    out: &mut Vec<(f64, f64)>,
) -> Result<(), SpectralError> {
    let xs: Vec<f64> = (0..SUBGRID)
        .map(|i| a + (b - a) * i as f64 / (SUBGRID - 1) as f64)
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| sur.eval(x).map(|v| v.0)).collect::<Result<_, _>>()?;
    let mut found = Vec::new();
    if sur.signed() {
        for i in 0..SUBGRID - 1 {
            if fs[i] == 0.0 {
                found.push((xs[i], 0.0));
            } else if fs[i].signum() != fs[i + 1].signum() && fs[i + 1] != 0.0 {
                let r = bisect(sur, xs[i], xs[i + 1], fs[i], opts.tolerance)?;
                found.push((r, sur.eval(r)?.0.abs()));
            }
        }
    }
    for i in 1..SUBGRID - 1 {
        let (l, c, r) = (fs[i - 1].abs(), fs[i].abs(), fs[i + 1].abs());
        if !(c < l && c <= r) {
            continue;
        }
        if sur.signed() && (fs[i - 1].signum() != fs[i].signum() || fs[i].signum() != fs[i + 1].signum()) {
            continue;
        }
        let (x, fx) = golden_min(sur, xs[i - 1], xs[i + 1], opts.tolerance)?;
        if !sur.signed() {
            if fx < UNSIGNED_DIP * fs[0].abs().max(fs[SUBGRID - 1].abs()) {
                found.push((x, fx));
            }
            continue;
        }
        let ratio = fx / l.max(r);
        if ratio < opts.dip_ratio {
            found.push((x, fx));
        } else if ratio < AMBIGUOUS_DIP {
            return Err(SpectralError::ScanTooCoarse { lo: a, hi: b });
        }
    }
    out.extend(found);
    Ok(())
}

fn scan(
    sur: &dyn Surrogate,
    range: (f64, f64),
    opts: &ScanOptions,
    method: EigenMethod,
) -> Result<EigenvalueList, SpectralError> {
    let (lo, hi) = range;
    let cells = ((hi - lo) / opts.step).ceil().max(1.0) as usize;
    let xs: Vec<f64> = (0..=cells).map(|i| lo + (hi - lo) * i as f64 / cells as f64).collect();
    let (fs, mut warn) = sample_grid(sur, &xs)?;

    // candidate windows in index order
    let mut windows: Vec<(usize, usize)> = Vec::new();
    for i in 0..cells {
        if sur.signed() && (fs[i] == 0.0 || fs[i].signum() != fs[i + 1].signum()) {
            windows.push((i, i + 1));
        }
    }
    for i in 1..cells {
        if fs[i].abs() < fs[i - 1].abs() && fs[i].abs() <= fs[i + 1].abs() {
            windows.push((i - 1, i + 1));
        }
    }
    windows.sort_unstable();
    windows.dedup();

    let found: Vec<Vec<(f64, f64)>> = windows
        .par_iter()
        .map(|&(i, j)| {
            let mut v = Vec::new();
            refine_cell(sur, xs[i], xs[j], opts, &mut v)?;
            Ok(v)
        })
        .collect::<Result<_, SpectralError>>()?;
    let mut roots: Vec<(f64, f64)> = found.into_iter().flatten().filter(|r| r.0 >= lo && r.0 <= hi).collect();
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for r in roots {
        match merged.last_mut() {
            Some(last) if r.0 - last.0 < MERGE_DISTANCE => {
                if r.1 < last.1 {
                    *last = r;
                }
            }
            _ => merged.push(r),
        }
    }
    if method == EigenMethod::Mfs {
        warn |= merged.iter().any(|r| sur.eval(r.0).map(|v| v.1).unwrap_or(true));
    }
    Ok(EigenvalueList {
        values: merged.iter().map(|r| r.0).collect(),
        residuals: merged.iter().map(|r| r.1).collect(),
        method,
        conditioning_warning: warn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_i_scaled, bessel_k_scaled};
    use crate::specfun::ScaledValue;
    use approx::assert_relative_eq;

    fn per_mode_log_q(a: f64, b: f64, y: f64, s: usize) -> f64 {
        let mut total = 0.0;
        for m in -(s as i64)..=(s as i64) {
            let k = m.unsigned_abs() as usize;
            let ratio = bessel_i_scaled(k, y * a).unwrap() * bessel_k_scaled(k, y * b).unwrap()
                / (bessel_i_scaled(k, y * b).unwrap() * bessel_k_scaled(k, y * a).unwrap());
            total += (1.0 - ratio.value()).ln();
        }
        total
    }

    #[test]
    fn concentric_log_q_matches_mode_sum() {
        let s = 12;
        let scene = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Dirichlet, s);
        let ev = LogQEvaluator::new(&scene).unwrap();
        for y in [0.5, 1.0, 2.0, 5.0] {
            let got = ev.eval(&SpectralPoint::on_axis(y)).unwrap();
            assert!(got.is_clean());
            let want = per_mode_log_q(1.0, 2.0, y, s);
            assert!((got.value - want).abs() <= 1e-8 * want.abs().max(1e-300), "y={y}: {} vs {want}", got.value);
        }
    }

    #[test]
    fn decoupled_at_large_argument() {
        let scene = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Dirichlet, 10);
        let got = log_q(&scene, &SpectralPoint::on_axis(50.0)).unwrap();
        assert!(got.value.abs() < 1e-12);
        assert!(got.value <= 0.0);
    }

    #[test]
    fn extreme_argument_stays_finite() {
        let scene = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Neumann, 10);
        let got = log_q(&scene, &SpectralPoint::on_axis(2000.0)).unwrap();
        assert!(got.value.is_finite() && got.value.abs() < 1e-100);
    }

    #[test]
    fn solve_order_does_not_matter() {
        let scene = SceneConfig::conductors(
            CurveSpec::CorrugatedCircle {
                radius: 1.0,
                amplitude: 0.1,
                frequency: 3,
                phase: 0.0,
            },
            CurveSpec::CorrugatedCircle {
                radius: 2.0,
                amplitude: 0.1,
                frequency: 3,
                phase: 0.9,
            },
            Placement::identity(),
            BoundaryCondition::Dirichlet,
            10,
        );
        let ev = LogQEvaluator::new(&scene).unwrap();
        for y in [0.3, 1.0, 3.0] {
            let sp = SpectralPoint::on_axis(y);
            let a = ev.eval_ordered(&sp, SolveOrder::InnerFirst).unwrap();
            let b = ev.eval_ordered(&sp, SolveOrder::OuterFirst).unwrap();
            assert!((a.value - b.value).abs() <= 1e-10 * a.value.abs().max(1e-10));
        }
    }

    #[test]
    fn column_rescaling_invariance() {
        // multiply basis column j by c_j in every block
        let scene = SceneConfig::conductors(
            CurveSpec::Circle { radius: 1.0 },
            CurveSpec::Ellipse {
                semiminor: 2.0,
                semimajor: 2.3,
            },
            Placement::new([0.0, 0.4], 0.0),
            BoundaryCondition::Neumann,
            8,
        );
        let ev = LogQEvaluator::new(&scene).unwrap();
        let sp = SpectralPoint::on_axis(0.7);
        let base = ev.eval(&sp).unwrap();
        let blocks = crate::assembly::build_blocks(&scene, &sp).unwrap();
        let factors: Vec<ScaledValue> = (0..scene.modes())
            .map(|j| ScaledValue::from_f64(if j % 2 == 0 { 1.0 } else { -1.0 } * (0.3 + 0.37 * j as f64).exp()))
            .collect();
        let q = QBlocks {
            n1: blocks.n1.scale_columns(&factors).to_ledger(),
            n2: blocks.n2.scale_columns(&factors).to_ledger(),
            p1: blocks.m1.scale_columns(&factors).to_ledger(),
            p2: blocks.m2.scale_columns(&factors).to_ledger(),
        };
        let got = log_q_from_blocks(&q, SolveOrder::InnerFirst);
        assert!((got.value - base.value).abs() <= 1e-10 * base.value.abs());
    }

    #[test]
    fn equal_media_give_zero() {
        let scene = SceneConfig::dielectric_circles(1.0, 2.0, 3.0, 3.0, BoundaryCondition::Dirichlet, 6);
        let ev = LogQEvaluator::new(&scene).unwrap();
        for (xi, kz) in [(0.1, 0.0), (1.0, 2.0), (0.0, 0.5)] {
            assert_eq!(ev.eval(&SpectralPoint::new(xi, kz)).unwrap(), LogDet::ZERO);
        }
    }

    #[test]
    fn trace_series_agrees_with_lu() {
        let a = DMatrix::from_fn(5, 5, |i, j| 0.04 * ((i * 7 + j * 3) % 5) as f64 - 0.07);
        let series = log_det_one_minus(&a);
        let direct = log_det(DMatrix::identity(5, 5) - &a);
        assert_relative_eq!(series.value, direct.value, max_relative = 1e-13);
    }

    #[test]
    fn disk_dirichlet_eigenvalues() {
        let list = eigen_scan_pmm(
            &CurveSpec::Circle { radius: 1.0 },
            BoundaryCondition::Dirichlet,
            (2.0, 6.0),
            10,
            &ScanOptions::default(),
        )
        .unwrap();
        let want = [2.404825557695773, 3.831705970207512, 5.135622301840683, 5.520078110286311];
        assert_eq!(list.values.len(), 4, "{:?}", list.values);
        for (g, w) in list.values.iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "{g} vs {w}");
        }
    }

    #[test]
    fn disk_neumann_first_eigenvalue() {
        let list = eigen_scan_pmm(
            &CurveSpec::Circle { radius: 1.0 },
            BoundaryCondition::Neumann,
            (1.0, 3.5),
            10,
            &ScanOptions::default(),
        )
        .unwrap();
        assert!((list.values[0] - 1.841183781340659).abs() < 1e-6, "{:?}", list.values);
        assert!((list.values[1] - 3.054_236_928_227_14).abs() < 1e-6);
    }

    #[test]
    fn eigenvalues_scale_inversely_with_size() {
        let opts = ScanOptions::default();
        let unit = eigen_scan_pmm(&CurveSpec::Circle { radius: 1.0 }, BoundaryCondition::Dirichlet, (2.0, 4.0), 10, &opts).unwrap();
        let big = eigen_scan_pmm(&CurveSpec::Circle { radius: 2.0 }, BoundaryCondition::Dirichlet, (1.0, 2.0), 10, &opts).unwrap();
        assert_eq!(unit.values.len(), big.values.len());
        for (u, b) in unit.values.iter().zip(&big.values) {
            assert!((u - 2.0 * b).abs() < 1e-6);
        }
    }

    #[test]
    fn mfs_disk_and_agreement_with_pmm() {
        let opts = ScanOptions::default();
        let disk = eigen_scan_mfs(&CurveSpec::Circle { radius: 1.0 }, (2.0, 2.8), 10, &opts).unwrap();
        assert_eq!(disk.values.len(), 1);
        assert!((disk.values[0] - 2.404825557695773).abs() < 1e-3);

        let curve = CurveSpec::CorrugatedCircle {
            radius: 1.0,
            amplitude: 0.1,
            frequency: 3,
            phase: 0.0,
        };
        let pmm = eigen_scan_pmm(&curve, BoundaryCondition::Dirichlet, (2.0, 5.0), 15, &opts).unwrap();
        let mfs = eigen_scan_mfs(&curve, (2.0, 5.0), 15, &opts).unwrap();
        assert_eq!(pmm.values.len(), mfs.values.len(), "{:?} {:?}", pmm.values, mfs.values);
        for (p, m) in pmm.values.iter().zip(&mfs.values) {
            assert!((p - m).abs() < 1e-3, "{p} vs {m}");
        }
    }
}
