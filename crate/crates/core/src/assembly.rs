//! Boundary-condition block matrices on the imaginary spectral axis.
//!
//! Region II (between the curves) carries the expansion
//! `u = sum_m [B_m I_m(l r) + C_m K_m(l r)] t_m(theta)` and region I (inside
//! a dielectric inner curve) `u = sum_m A_m I_m(l1 r) t_m(theta)`, where
//! `t_m` is the real angular basis `cos(m theta)` for `m >= 0` and
//! `sin(|m| theta)` for `m < 0`. The real basis differs from `e^{i m theta}`
//! by a column transform shared by every block, which leaves the spectral
//! determinant unchanged; so do the constant per-mode phase factors that
//! relate `J_m, H_m` at imaginary argument to `I_m, K_m`.
//!
//! Block naming follows the usual point-matching layout:
//! - `N1`, `N2`: outer-curve condition on the `I` / `K` columns,
//! - `M1`, `M2`: inner-curve values (or normal derivatives for a Neumann
//!   conductor),
//! - `R1`, `R2`, `M1'`, `M2'`: dielectric continuity rows,
//! - `P1`, `P2`: the inner blocks after eliminating region I.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ray_intersection, sample_curve, CurveSpec, GeometryError, Placement, SampledBoundary};
use crate::specfun::{ModifiedBessel, ScaledValue, SpecFunError};

/// Condition estimate beyond which a factorisation is treated as singular.
pub const CONDITION_LIMIT: f64 = 1.0e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error("degenerate spectral point xi = {xi}, kz = {kz}")]
    DegeneratePoint { xi: f64, kz: f64 },
    #[error("interface block R2 is singular (condition estimate {condition:.3e}) at xi = {xi}, kz = {kz}")]
    SingularInterface { condition: f64, xi: f64, kz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    PerfectConductorDirichlet,
    PerfectConductorNeumann,
    DielectricInterface,
}

impl InnerKind {
    pub fn is_conductor(self) -> bool {
        !matches!(self, InnerKind::DielectricInterface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedCurve {
    pub curve: CurveSpec,
    #[serde(default)]
    pub placement: Placement,
}

fn one() -> f64 {
    1.0
}

/// Two-curve waveguide cross-section. Lengths are in units of the inner
/// radius `a`; the origin is the inner-cylinder centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub outer: PlacedCurve,
    pub inner: CurveSpec,
    pub bc_outer: BoundaryCondition,
    pub inner_kind: InnerKind,
    /// Permittivity inside the inner curve (region I).
    #[serde(default = "one")]
    pub eps_inner: f64,
    /// Permittivity between the curves (region II).
    #[serde(default = "one")]
    pub eps_outer: f64,
    /// Angular truncation `S`; the basis holds `2S + 1` modes.
    pub truncation: usize,
    /// Collocation points per curve; must equal `2S + 1`.
    pub points_per_curve: usize,
}

impl SceneConfig {
    /// Perfect-conductor scene with the same condition on both curves.
    pub fn conductors(
        inner: CurveSpec,
        outer: CurveSpec,
        outer_placement: Placement,
        bc: BoundaryCondition,
        truncation: usize,
    ) -> Self {
        SceneConfig {
            outer: PlacedCurve {
                curve: outer,
                placement: outer_placement,
            },
            inner,
            bc_outer: bc,
            inner_kind: match bc {
                BoundaryCondition::Dirichlet => InnerKind::PerfectConductorDirichlet,
                BoundaryCondition::Neumann => InnerKind::PerfectConductorNeumann,
            },
            eps_inner: 1.0,
            eps_outer: 1.0,
            truncation,
            points_per_curve: 2 * truncation + 1,
        }
    }

    /// Concentric circles of radii `a < b`.
    pub fn concentric_circles(a: f64, b: f64, bc: BoundaryCondition, truncation: usize) -> Self {
        Self::conductors(
            CurveSpec::Circle { radius: a },
            CurveSpec::Circle { radius: b },
            Placement::identity(),
            bc,
            truncation,
        )
    }

    /// Dielectric circle of radius `a` inside a conductor circle of radius `b`.
    pub fn dielectric_circles(
        a: f64,
        b: f64,
        eps_inner: f64,
        eps_outer: f64,
        bc_outer: BoundaryCondition,
        truncation: usize,
    ) -> Self {
        SceneConfig {
            outer: PlacedCurve {
                curve: CurveSpec::Circle { radius: b },
                placement: Placement::identity(),
            },
            inner: CurveSpec::Circle { radius: a },
            bc_outer,
            inner_kind: InnerKind::DielectricInterface,
            eps_inner,
            eps_outer,
            truncation,
            points_per_curve: 2 * truncation + 1,
        }
    }

    pub fn with_truncation(mut self, truncation: usize) -> Self {
        self.truncation = truncation;
        self.points_per_curve = 2 * truncation + 1;
        self
    }

    pub fn modes(&self) -> usize {
        2 * self.truncation + 1
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        let bad = |msg: String| Err(AssemblyError::InvalidScene(msg));
        self.inner.validate()?;
        self.outer.curve.validate()?;
        if self.truncation == 0 {
            return bad("truncation order must be positive".into());
        }
        if self.points_per_curve != self.modes() {
            return bad(format!(
                "points_per_curve must equal 2S+1 = {}, got {}",
                self.modes(),
                self.points_per_curve
            ));
        }
        if !(self.eps_inner >= 1.0) || !(self.eps_outer >= 1.0) {
            return bad("permittivities must be >= 1".into());
        }
        match self.inner_kind {
            InnerKind::DielectricInterface => {
                if self.eps_inner < self.eps_outer {
                    return bad("dielectric interface requires eps_inner >= eps_outer".into());
                }
                if !matches!(self.inner, CurveSpec::Circle { .. }) {
                    return bad("dielectric interfaces are supported on circular inner curves only".into());
                }
            }
            _ => {
                if self.eps_inner != 1.0 || self.eps_outer != 1.0 {
                    return bad("conductor scenes take eps_inner = eps_outer = 1".into());
                }
            }
        }
        let grid = 720;
        for k in 0..grid {
            let theta = std::f64::consts::TAU * k as f64 / grid as f64;
            let r_in = self.inner.radius_at(theta);
            let (r_out, _) = ray_intersection(&self.outer.curve, &self.outer.placement, theta)?;
            if !(r_in < r_out) {
                return bad(format!("inner curve touches or crosses the outer curve at angle {theta:.4}"));
            }
        }
        Ok(())
    }

    /// `(inner, outer)` collocation meshes.
    pub fn meshes(&self) -> Result<(SampledBoundary, SampledBoundary), AssemblyError> {
        let n = self.points_per_curve;
        let inner = sample_curve(&self.inner, &Placement::identity(), n)?;
        let outer = sample_curve(&self.outer.curve, &self.outer.placement, n)?;
        Ok((inner, outer))
    }

    /// Smallest distance between the two curves, from dense samplings.
    pub fn min_gap(&self) -> Result<f64, AssemblyError> {
        let n = 720;
        let inner = sample_curve(&self.inner, &Placement::identity(), n)?;
        let outer = sample_curve(&self.outer.curve, &self.outer.placement, n)?;
        let mut best = f64::INFINITY;
        for p in &inner.points {
            for q in &outer.points {
                best = best.min((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        Ok(best)
    }
}

/// A point `omega = i xi` on the imaginary frequency axis with axial
/// wavenumber `kz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub xi: f64,
    pub kz: f64,
}

impl SpectralPoint {
    pub fn new(xi: f64, kz: f64) -> Self {
        SpectralPoint { xi, kz }
    }

    /// The conductor-case point `lambda = i y`.
    pub fn on_axis(y: f64) -> Self {
        SpectralPoint { xi: y, kz: 0.0 }
    }

    /// `sqrt(eps xi^2 + kz^2)`, the imaginary-axis magnitude of `lambda`.
    pub fn lambda(&self, eps: f64) -> f64 {
        (eps * self.xi * self.xi + self.kz * self.kz).sqrt()
    }

    pub fn check(&self) -> Result<(), AssemblyError> {
        if !(self.xi >= 0.0) || !(self.kz >= 0.0) || (self.xi == 0.0 && self.kz == 0.0) {
            return Err(AssemblyError::DegeneratePoint {
                xi: self.xi,
                kz: self.kz,
            });
        }
        Ok(())
    }
}

/// Dense matrix of [`ScaledValue`] entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    rows: usize,
    cols: usize,
    data: Vec<ScaledValue>,
}

impl ScaledMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ScaledMatrix {
            rows,
            cols,
            data: vec![ScaledValue::ZERO; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> ScaledValue {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: ScaledValue) {
        self.data[i * self.cols + j] = v;
    }

    /// Per-column reference scale: `max_i ln|a_ij|` to within `ln 2`
    /// (mantissas are normalised); zero columns get 0.
    pub fn column_ledger(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| {
                let m = (0..self.rows)
                    .map(|i| self.get(i, j))
                    .filter(|v| !v.is_zero())
                    .map(|v| v.log_scale())
                    .fold(f64::NEG_INFINITY, f64::max);
                if m.is_finite() {
                    m
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Plain matrix `a_ij e^{-ledger_j}`.
    pub fn to_plain(&self, ledger: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).value_shifted(-ledger[j]))
    }

    /// Column-normalised form: every nonzero column has max magnitude 1.
    pub fn to_ledger(&self) -> LedgerMatrix {
        let col_log = self.column_ledger();
        LedgerMatrix {
            mantissa: self.to_plain(&col_log),
            col_log,
        }
    }

    /// Multiplies column `j` by `factors[j]`.
    pub fn scale_columns(&self, factors: &[ScaledValue]) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for (j, f) in factors.iter().enumerate().take(self.cols) {
                out.set(i, j, self.get(i, j) * *f);
            }
        }
        out
    }
}

/// `mantissa * diag(e^{col_log})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerMatrix {
    pub mantissa: DMatrix<f64>,
    pub col_log: Vec<f64>,
}

impl LedgerMatrix {
    /// Dense value; only for small, well-scaled test matrices.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = self.mantissa.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= self.col_log[j].exp();
        }
        out
    }
}

/// Row data of the dielectric interface.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceBlocks {
    pub r1: ScaledMatrix,
    pub r2: ScaledMatrix,
    pub m1_prime: ScaledMatrix,
    pub m2_prime: ScaledMatrix,
}

/// All blocks at one spectral point. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBlocks {
    pub n1: ScaledMatrix,
    pub n2: ScaledMatrix,
    pub m1: ScaledMatrix,
    pub m2: ScaledMatrix,
    pub interface: Option<InterfaceBlocks>,
    /// Set when region I and region II see identical media.
    pub equal_media: bool,
}

/// Signed order `m_j = j - S` of basis column `j`.
pub fn mode_of_column(j: usize, truncation: usize) -> i64 {
    j as i64 - truncation as i64
}

/// Angular basis function and its theta-derivative.
pub fn angular(m: i64, theta: f64) -> (f64, f64) {
    let mf = m.unsigned_abs() as f64;
    let (s, c) = (mf * theta).sin_cos();
    if m >= 0 {
        (c, -mf * s)
    } else {
        (s, mf * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Radial {
    I,
    K,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Condition {
    Value,
    /// `d/dr` only (dielectric interface rows).
    RadialDerivative,
    /// Outward normal derivative on the actual curve.
    NormalDerivative,
}

struct PointBessel {
    r: f64,
    normal_r: f64,
    normal_t: f64,
    /// `(t_m, dt_m / dtheta)` per basis column.
    trig: Vec<(f64, f64)>,
    seq: ModifiedBessel,
}

fn point_sequences(
    mesh: &SampledBoundary,
    lambda: f64,
    truncation: usize,
) -> Result<Vec<PointBessel>, AssemblyError> {
    let mut out: Vec<PointBessel> = Vec::with_capacity(mesh.len());
    let cols = 2 * truncation + 1;
    for k in 0..mesh.len() {
        let r = mesh.radii[k];
        // points on a circle share their argument
        let seq = match out.iter().rev().find(|p| p.r == r) {
            Some(prev) => prev.seq.clone(),
            None => ModifiedBessel::new(truncation, lambda * r)?,
        };
        let theta = mesh.angles[k];
        let (st, ct) = theta.sin_cos();
        let n = mesh.normals[k];
        out.push(PointBessel {
            r,
            normal_r: n[0] * ct + n[1] * st,
            normal_t: -n[0] * st + n[1] * ct,
            trig: (0..cols).map(|j| angular(mode_of_column(j, truncation), theta)).collect(),
            seq,
        });
    }
    Ok(out)
}

fn radial_block(
    pts: &[PointBessel],
    lambda: f64,
    truncation: usize,
    radial: Radial,
    cond: Condition,
    factor: f64,
) -> ScaledMatrix {
    let cols = 2 * truncation + 1;
    let mut out = ScaledMatrix::zeros(pts.len(), cols);
    let need_value = cond != Condition::RadialDerivative;
    let need_derivative = cond != Condition::Value;
    let mut radial_vals = vec![(ScaledValue::ZERO, ScaledValue::ZERO); truncation + 1];
    for (q, p) in pts.iter().enumerate() {
        // components of the normal along r_hat and theta_hat
        let (n_r, n_t) = (p.normal_r, p.normal_t);
        for (order, slot) in radial_vals.iter_mut().enumerate() {
            *slot = match radial {
                Radial::I => (
                    if need_value { p.seq.i(order) } else { ScaledValue::ZERO },
                    if need_derivative { p.seq.di(order) } else { ScaledValue::ZERO },
                ),
                Radial::K => (
                    if need_value { p.seq.k(order) } else { ScaledValue::ZERO },
                    if need_derivative { p.seq.dk(order) } else { ScaledValue::ZERO },
                ),
            };
        }
        for j in 0..cols {
            let order = mode_of_column(j, truncation).unsigned_abs() as usize;
            let (f, df) = radial_vals[order];
            let (t, dt) = p.trig[j];
            let v = match cond {
                Condition::Value => f.scale(t * factor),
                Condition::RadialDerivative => df.scale(lambda * t * factor),
                Condition::NormalDerivative => {
                    df.scale(n_r * lambda * t * factor) + f.scale(n_t * dt / p.r * factor)
                }
            };
            out.set(q, j, v);
        }
    }
    out
}

fn condition_for(bc: BoundaryCondition) -> Condition {
    match bc {
        BoundaryCondition::Dirichlet => Condition::Value,
        BoundaryCondition::Neumann => Condition::NormalDerivative,
    }
}

/// Outer-curve blocks `(N1, N2)`.
pub fn build_outer_blocks(
    scene: &SceneConfig,
    sp: &SpectralPoint,
    mesh_outer: &SampledBoundary,
) -> Result<(ScaledMatrix, ScaledMatrix), AssemblyError> {
    sp.check()?;
    let lambda = sp.lambda(scene.eps_outer);
    let s = scene.truncation;
    let pts = point_sequences(mesh_outer, lambda, s)?;
    let cond = condition_for(scene.bc_outer);
    Ok((
        radial_block(&pts, lambda, s, Radial::I, cond, 1.0),
        radial_block(&pts, lambda, s, Radial::K, cond, 1.0),
    ))
}

/// Inner perfect-conductor blocks `(M1, M2)`.
pub fn build_inner_conductor_blocks(
    scene: &SceneConfig,
    sp: &SpectralPoint,
    mesh_inner: &SampledBoundary,
) -> Result<(ScaledMatrix, ScaledMatrix), AssemblyError> {
    sp.check()?;
    let cond = match scene.inner_kind {
        InnerKind::PerfectConductorDirichlet => Condition::Value,
        InnerKind::PerfectConductorNeumann => Condition::NormalDerivative,
        InnerKind::DielectricInterface => {
            return Err(AssemblyError::InvalidScene(
                "conductor blocks requested for a dielectric interface".into(),
            ))
        }
    };
    let lambda = sp.lambda(scene.eps_outer);
    let s = scene.truncation;
    let pts = point_sequences(mesh_inner, lambda, s)?;
    Ok((
        radial_block(&pts, lambda, s, Radial::I, cond, 1.0),
        radial_block(&pts, lambda, s, Radial::K, cond, 1.0),
    ))
}

/// Dielectric-interface blocks: continuity of the field and of its radial
/// derivative. Returns `(R1, R2, M1, M2, M1', M2')` where the ratio
/// `lambda_I / lambda_II` is carried by `R2`, so that `R1 R2^{-1}` scales
/// like `lambda_II / lambda_I`.
#[allow(clippy::type_complexity)]
pub fn build_inner_interface_blocks(
    scene: &SceneConfig,
    sp: &SpectralPoint,
    mesh_inner: &SampledBoundary,
) -> Result<
    (
        ScaledMatrix,
        ScaledMatrix,
        ScaledMatrix,
        ScaledMatrix,
        ScaledMatrix,
        ScaledMatrix,
    ),
    AssemblyError,
> {
    sp.check()?;
    if scene.inner_kind != InnerKind::DielectricInterface {
        return Err(AssemblyError::InvalidScene(
            "interface blocks requested for a conductor scene".into(),
        ));
    }
    let s = scene.truncation;
    let l1 = sp.lambda(scene.eps_inner);
    let l2 = sp.lambda(scene.eps_outer);
    let pts2 = point_sequences(mesh_inner, l2, s)?;
    let pts1 = if scene.eps_inner == scene.eps_outer {
        None
    } else {
        Some(point_sequences(mesh_inner, l1, s)?)
    };
    let pts1_ref = pts1.as_deref().unwrap_or(&pts2);
    let r1 = radial_block(pts1_ref, l1, s, Radial::I, Condition::Value, 1.0);
    // d/dr [I_m(l1 r)] = l1 I'_m; dividing the whole row by l2 gives the l1/l2 factor
    let r2 = radial_block(pts1_ref, l1, s, Radial::I, Condition::RadialDerivative, 1.0 / l2);
    let m1 = radial_block(&pts2, l2, s, Radial::I, Condition::Value, 1.0);
    let m2 = radial_block(&pts2, l2, s, Radial::K, Condition::Value, 1.0);
    let m1p = radial_block(&pts2, l2, s, Radial::I, Condition::RadialDerivative, 1.0 / l2);
    let m2p = radial_block(&pts2, l2, s, Radial::K, Condition::RadialDerivative, 1.0 / l2);
    Ok((r1, r2, m1, m2, m1p, m2p))
}

/// Every block of `scene` at `sp`.
pub fn build_blocks(scene: &SceneConfig, sp: &SpectralPoint) -> Result<BoundaryBlocks, AssemblyError> {
    let (mesh_inner, mesh_outer) = scene.meshes()?;
    build_blocks_on(scene, sp, &mesh_inner, &mesh_outer)
}

/// As [`build_blocks`] with precomputed meshes.
pub fn build_blocks_on(
    scene: &SceneConfig,
    sp: &SpectralPoint,
    mesh_inner: &SampledBoundary,
    mesh_outer: &SampledBoundary,
) -> Result<BoundaryBlocks, AssemblyError> {
    let (n1, n2) = build_outer_blocks(scene, sp, mesh_outer)?;
    if scene.inner_kind.is_conductor() {
        let (m1, m2) = build_inner_conductor_blocks(scene, sp, mesh_inner)?;
        return Ok(BoundaryBlocks {
            n1,
            n2,
            m1,
            m2,
            interface: None,
            equal_media: false,
        });
    }
    let (r1, r2, m1, m2, m1_prime, m2_prime) = build_inner_interface_blocks(scene, sp, mesh_inner)?;
    Ok(BoundaryBlocks {
        n1,
        n2,
        m1,
        m2,
        interface: Some(InterfaceBlocks {
            r1,
            r2,
            m1_prime,
            m2_prime,
        }),
        equal_media: scene.eps_inner == scene.eps_outer,
    })
}

/// Rough condition estimate from the diagonal of an LU factor.
pub(crate) fn lu_condition(u_diag: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in u_diag {
        lo = lo.min(d.abs());
        hi = hi.max(d.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `R1 R2^{-1}` with the common column scale removed (it cancels).
pub fn interface_transfer(iface: &InterfaceBlocks) -> Result<DMatrix<f64>, AssemblyError> {
    let ledger = iface.r2.column_ledger();
    let r1 = iface.r1.to_plain(&ledger);
    let r2 = iface.r2.to_plain(&ledger);
    // Z R2 = R1  <=>  R2^T Z^T = R1^T
    let lu = r2.transpose().lu();
    let cond = lu_condition(lu.u().diagonal().iter().copied());
    let zt = lu
        .solve(&r1.transpose())
        .filter(|_| cond < CONDITION_LIMIT)
        .ok_or(AssemblyError::SingularInterface {
            condition: cond,
            xi: f64::NAN,
            kz: f64::NAN,
        })?;
    Ok(zt.transpose())
}

/// Eliminates region I: `P1 = M1 - R1 R2^{-1} M1'`, `P2 = M2 - R1 R2^{-1} M2'`.
/// Conductor blocks pass through as `(M1, M2)`.
pub fn reduce_blocks(blocks: &BoundaryBlocks) -> Result<(LedgerMatrix, LedgerMatrix), AssemblyError> {
    let Some(iface) = &blocks.interface else {
        return Ok((blocks.m1.to_ledger(), blocks.m2.to_ledger()));
    };
    // X = R2^{-1} M'  (columnwise solves, R-pair column scale cancels)
    let r_ledger = iface.r2.column_ledger();
    let r1 = iface.r1.to_plain(&r_ledger);
    let r2 = iface.r2.to_plain(&r_ledger);
    let lu = r2.clone().lu();
    let cond = lu_condition(lu.u().diagonal().iter().copied());
    if !(cond < CONDITION_LIMIT) {
        return Err(AssemblyError::SingularInterface {
            condition: cond,
            xi: f64::NAN,
            kz: f64::NAN,
        });
    }
    let reduce = |m: &ScaledMatrix, mp: &ScaledMatrix, zero: bool| -> LedgerMatrix {
        let lm = m.column_ledger();
        let lp = mp.column_ledger();
        let ledger: Vec<f64> = lm.iter().zip(&lp).map(|(a, b)| a.max(*b)).collect();
        if zero {
            return LedgerMatrix {
                mantissa: DMatrix::zeros(m.rows(), m.cols()),
                col_log: vec![0.0; m.cols()],
            };
        }
        let mm = m.to_plain(&ledger);
        let x = lu.solve(&mp.to_plain(&ledger)).expect("checked above");
        LedgerMatrix {
            mantissa: mm - &r1 * x,
            col_log: ledger,
        }
    };
    // with identical media M1 = R1 and M1' = R2 entrywise, so P1 vanishes
    let p1 = reduce(&blocks.m1, &iface.m1_prime, blocks.equal_media);
    let p2 = reduce(&blocks.m2, &iface.m2_prime, false);
    Ok((p1, p2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_i_scaled, bessel_k_scaled};
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    /// Projects the columns of `a` (sampled at angles `2 pi k / n`) onto the
    /// real angular basis: for circle-shaped blocks the result is diagonal.
    fn fourier_coefficients(a: &ScaledMatrix, truncation: usize, ledger: &[f64]) -> DMatrix<f64> {
        let n = a.rows();
        let plain = a.to_plain(ledger);
        DMatrix::from_fn(a.cols(), a.cols(), |row, col| {
            let m = mode_of_column(row, truncation);
            let norm = if m == 0 { n as f64 } else { n as f64 / 2.0 };
            (0..n)
                .map(|k| angular(m, TAU * k as f64 / n as f64).0 * plain[(k, col)])
                .sum::<f64>()
                / norm
        })
    }

    fn off_diagonal_max(c: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                if i != j {
                    worst = worst.max(c[(i, j)].abs());
                }
            }
        }
        worst
    }

    #[test]
    fn concentric_outer_blocks_are_fourier_diagonal() {
        let s = 6;
        let scene = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Dirichlet, s);
        let sp = SpectralPoint::on_axis(1.3);
        let (_, mesh_outer) = scene.meshes().unwrap();
        let (n1, n2) = build_outer_blocks(&scene, &sp, &mesh_outer).unwrap();
        for block in [&n1, &n2] {
            let ledger = block.column_ledger();
            let c = fourier_coefficients(block, s, &ledger);
            assert!(off_diagonal_max(&c) < 1e-10);
        }
        // diagonal equals I_m(lambda b) in the unscaled frame
        let ledger = vec![0.0; n1.cols()];
        let c = fourier_coefficients(&n1, s, &ledger);
        for j in 0..n1.cols() {
            let m = mode_of_column(j, s).unsigned_abs() as usize;
            let want = bessel_i_scaled(m, 2.6).unwrap().value();
            assert_relative_eq!(c[(j, j)], want, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_amplitude_corrugation_gives_circle_blocks() {
        let s = 5;
        let circ = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Neumann, s);
        let mut corr = circ.clone();
        corr.inner = CurveSpec::CorrugatedCircle {
            radius: 1.0,
            amplitude: 0.0,
            frequency: 3,
            phase: 0.0,
        };
        corr.outer.curve = CurveSpec::CorrugatedCircle {
            radius: 2.0,
            amplitude: 0.0,
            frequency: 3,
            phase: 0.7,
        };
        let sp = SpectralPoint::on_axis(0.8);
        let a = build_blocks(&circ, &sp).unwrap();
        let b = build_blocks(&corr, &sp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn neumann_inner_circle_diagonal_is_derivative() {
        let s = 4;
        let scene = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Neumann, s);
        let y = 0.9;
        let sp = SpectralPoint::on_axis(y);
        let (mesh_inner, _) = scene.meshes().unwrap();
        let (m1, m2) = build_inner_conductor_blocks(&scene, &sp, &mesh_inner).unwrap();
        let zero = vec![0.0; m1.cols()];
        let c1 = fourier_coefficients(&m1, s, &zero);
        let c2 = fourier_coefficients(&m2, s, &zero);
        assert!(off_diagonal_max(&c1) < 1e-12);
        for j in 0..m1.cols() {
            let m = mode_of_column(j, s).unsigned_abs() as usize;
            let seq = ModifiedBessel::new(m, y).unwrap();
            assert_relative_eq!(c1[(j, j)], y * seq.di(m).value(), max_relative = 1e-12);
            assert_relative_eq!(c2[(j, j)], y * seq.dk(m).value(), max_relative = 1e-12);
        }
    }

    #[test]
    fn equal_media_interface_rows_coincide() {
        let scene = SceneConfig::dielectric_circles(1.0, 2.0, 2.5, 2.5, BoundaryCondition::Dirichlet, 4);
        let sp = SpectralPoint::new(0.7, 0.4);
        let (mesh_inner, _) = scene.meshes().unwrap();
        let (r1, r2, m1, _, m1p, _) = build_inner_interface_blocks(&scene, &sp, &mesh_inner).unwrap();
        assert_eq!(r1, m1);
        assert_eq!(r2, m1p);
        let blocks = build_blocks(&scene, &sp).unwrap();
        let (p1, _) = reduce_blocks(&blocks).unwrap();
        assert!(p1.mantissa.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn concentric_interface_blocks_are_fourier_diagonal() {
        let s = 5;
        let scene = SceneConfig::dielectric_circles(1.0, 2.0, 4.0, 1.0, BoundaryCondition::Dirichlet, s);
        let sp = SpectralPoint::new(0.8, 0.3);
        let blocks = build_blocks(&scene, &sp).unwrap();
        let iface = blocks.interface.as_ref().unwrap();
        for b in [&iface.r1, &iface.r2, &blocks.m1, &blocks.m2, &iface.m1_prime, &iface.m2_prime] {
            let ledger = b.column_ledger();
            assert!(off_diagonal_max(&fourier_coefficients(b, s, &ledger)) < 1e-10);
        }
        let (p1, p2) = reduce_blocks(&blocks).unwrap();
        for p in [&p1, &p2] {
            let mut sm = ScaledMatrix::zeros(p.mantissa.nrows(), p.mantissa.ncols());
            for i in 0..sm.rows {
                for j in 0..sm.cols {
                    sm.set(i, j, ScaledValue::from_f64(p.mantissa[(i, j)]));
                }
            }
            let zero = vec![0.0; sm.cols];
            assert!(off_diagonal_max(&fourier_coefficients(&sm, s, &zero)) < 1e-10);
        }
    }

    #[test]
    fn huge_permittivity_suppresses_transfer() {
        let scene = SceneConfig::dielectric_circles(1.0, 2.0, 1e6, 1.0, BoundaryCondition::Dirichlet, 6);
        let sp = SpectralPoint::new(1.0, 0.0);
        let blocks = build_blocks(&scene, &sp).unwrap();
        let z = interface_transfer(blocks.interface.as_ref().unwrap()).unwrap();
        // spectral norm of R1 R2^{-1}; for a circle it is max_m (l2/l1) I_m/I'_m(l1 a)
        let norm = z.clone().svd(false, false).singular_values.max();
        assert!(norm > 0.5e-3 && norm < 1.5e-3, "norm = {norm}");

        let (p1, _) = reduce_blocks(&blocks).unwrap();
        let m1 = blocks.m1.to_ledger();
        // compare in a common column frame
        let diff = DMatrix::from_fn(p1.mantissa.nrows(), p1.mantissa.ncols(), |i, j| {
            p1.mantissa[(i, j)] * (p1.col_log[j] - m1.col_log[j]).exp() - m1.mantissa[(i, j)]
        });
        let rel = diff.norm() / m1.mantissa.norm();
        assert!(rel <= 1e-2, "rel = {rel}");
    }

    #[test]
    fn analytic_continuation_of_real_axis_entries() {
        use num_complex::Complex64;
        // J_m(i z) = i^m I_m(z) by the power series evaluated at complex argument
        fn j_series(m: usize, z: Complex64) -> Complex64 {
            let mut term = (z / 2.0).powu(m as u32);
            for k in 1..=m {
                term /= k as f64;
            }
            let mut sum = term;
            let q = -(z * z) / 4.0;
            for k in 1..200 {
                term *= q / (k as f64 * (k + m) as f64);
                sum += term;
                if term.norm() < 1e-18 * sum.norm() {
                    break;
                }
            }
            sum
        }
        // H0(iz) = J0(iz) + i Y0(iz) = -(2i/pi) K0(z), with the complex log series for Y0
        fn h0_series(z: Complex64) -> Complex64 {
            let j0 = j_series(0, z);
            let q = -(z * z) / 4.0;
            let mut term = Complex64::new(1.0, 0.0);
            let mut harmonic = 0.0;
            let mut tail = Complex64::new(0.0, 0.0);
            for k in 1..200 {
                term *= q / (k as f64 * k as f64);
                harmonic += 1.0 / k as f64;
                tail += term * harmonic;
                if term.norm() < 1e-18 {
                    break;
                }
            }
            let y0 = ((z / 2.0).ln() + crate::specfun::EULER_GAMMA) * j0 * std::f64::consts::FRAC_2_PI
                - tail * std::f64::consts::FRAC_2_PI;
            j0 + Complex64::i() * y0
        }
        let lambda = 0.5;
        let scene = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Dirichlet, 4);
        let sp = SpectralPoint::on_axis(lambda);
        let (mesh_inner, mesh_outer) = scene.meshes().unwrap();
        let (n1, n2) = build_outer_blocks(&scene, &sp, &mesh_outer).unwrap();
        let (m1, m2) = build_inner_conductor_blocks(&scene, &sp, &mesh_inner).unwrap();
        for (block, mesh) in [(&n1, &mesh_outer), (&m1, &mesh_inner)] {
            for q in 0..block.rows() {
                for j in 0..block.cols() {
                    let m = mode_of_column(j, 4);
                    let order = m.unsigned_abs() as usize;
                    let z = Complex64::new(0.0, lambda * mesh.radii[q]);
                    let via_j = j_series(order, z) / Complex64::i().powu(order as u32);
                    let t = angular(m, mesh.angles[q]).0;
                    let got = block.get(q, j).value();
                    assert!((via_j.re * t - got).abs() < 1e-10 * (1.0 + got.abs()));
                    assert!(via_j.im.abs() < 1e-12);
                }
            }
        }
        for (block, mesh) in [(&n2, &mesh_outer), (&m2, &mesh_inner)] {
            let j = 4; // m = 0 column
            for q in 0..block.rows() {
                let x = lambda * mesh.radii[q];
                let h = h0_series(Complex64::new(0.0, x));
                let via_h = h * std::f64::consts::FRAC_PI_2 / (-Complex64::i());
                let got = block.get(q, j).value();
                assert!((via_h.re - got).abs() < 1e-10);
                assert_relative_eq!(got, bessel_k_scaled(0, x).unwrap().value(), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn scene_validation() {
        let mut s = SceneConfig::concentric_circles(1.0, 2.0, BoundaryCondition::Dirichlet, 5);
        assert!(s.validate().is_ok());
        s.points_per_curve = 10;
        assert!(s.validate().is_err());
        let touching = SceneConfig::concentric_circles(2.0, 2.0, BoundaryCondition::Dirichlet, 5);
        assert!(touching.validate().is_err());
        let mut diel = SceneConfig::dielectric_circles(1.0, 2.0, 1.0, 2.0, BoundaryCondition::Dirichlet, 3);
        assert!(diel.validate().is_err());
        diel.eps_inner = 3.0;
        assert!(diel.validate().is_ok());
        diel.inner = CurveSpec::Ellipse {
            semiminor: 1.0,
            semimajor: 1.1,
        };
        assert!(diel.validate().is_err());
        assert!(SpectralPoint::new(0.0, 0.0).check().is_err());
    }

    #[test]
    fn min_gap_of_shifted_ellipse() {
        let scene = SceneConfig::conductors(
            CurveSpec::Circle { radius: 1.0 },
            CurveSpec::Ellipse {
                semiminor: 4.0,
                semimajor: 4.33,
            },
            Placement::new([0.0, -2.5], 0.0),
            BoundaryCondition::Dirichlet,
            6,
        );
        scene.validate().unwrap();
        let g = scene.min_gap().unwrap();
        assert!((g - 0.83).abs() < 1e-3, "gap {g}");
    }
}
