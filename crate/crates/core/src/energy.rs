//! Casimir interaction energies from quadrature of `ln Q` along the
//! imaginary axis, with torques, parameter sweeps and cosine fits.
//!
//! Energies are per unit length in units of `L / a^2`, with `a` the inner
//! radius (lengths in a scene are taken in units of `a`).
//!
//! For perfect conductors `ln Q` depends on `xi` and `kz` only through
//! `y = sqrt(xi^2 + kz^2)`, and
//!
//! `E = (1 / 4 pi) int_0^inf y ln Q(i y) dy`.
//!
//! With a dielectric inner region the integrand is no longer isotropic and
//! the energy is the double integral
//!
//! `E = (1 / 4 pi^2) int_0^inf dxi int_{-inf}^{inf} dkz ln Q(i xi, kz)`,
//!
//! which reduces to the single integral above in polar coordinates whenever
//! the integrand is isotropic.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AssemblyError, BoundaryCondition, InnerKind, SceneConfig, SpectralPoint};
use crate::geometry::CurveSpec;
use crate::spectral::{LogDet, LogQEvaluator, SpectralError};

/// Tolerance for `ln Q <= 0` on Dirichlet conductor scenes, per collocation
/// point: round-off in the `N x N` determinant.
pub fn log_q_roundoff(points: usize) -> f64 {
    64.0 * f64::EPSILON * points as f64
}

/// Maximum depth of panel bisection around flagged nodes.
const MAX_SUBDIVISION: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("wrong scene kind: {0}")]
    WrongScene(String),
    #[error("flagged spectral node at xi = {xi}, kz = {kz}: ln Q = {log_q}, sign = {sign}, condition flag = {condition_flag}")]
    FlaggedNode {
        xi: f64,
        kz: f64,
        log_q: f64,
        sign: f64,
        condition_flag: bool,
    },
    #[error("ln Q = {log_q:.3e} > 0 at y = {y} on a Dirichlet conductor scene")]
    PositiveLogQ { y: f64, log_q: f64 },
    #[error("quadrature did not converge: last change {change:.3e}, tolerance {tolerance:.3e}")]
    NoConvergence { change: f64, tolerance: f64 },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("sweep point {parameter} = {value}: {source}")]
    SweepPoint {
        parameter: String,
        value: f64,
        #[source]
        source: Box<EnergyError>,
    },
    #[error("cosine fit needs at least 8 samples over a full period, got {0}")]
    InsufficientData(usize),
}

/// Composite Gauss-Legendre rule on `[0, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Upper cutoff; `None` selects `max(40 / gap, 20 / a)`.
    pub y_max: Option<f64>,
    pub refinement_tolerance: f64,
    /// Panel doublings allowed beyond the first.
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            panels: 12,
            nodes_per_panel: 12,
            y_max: None,
            refinement_tolerance: 1e-6,
            max_refinements: 3,
        }
    }
}

impl QuadratureSpec {
    fn check(&self) -> Result<(), EnergyError> {
        if self.panels == 0 || self.nodes_per_panel == 0 {
            return Err(EnergyError::InvalidSweep("quadrature needs panels and nodes".into()));
        }
        if let Some(y) = self.y_max {
            if !(y > 0.0) {
                return Err(EnergyError::InvalidSweep("y_max must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Angular rule for the dielectric double integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AngularSpec {
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Width ratio of successive panels towards `xi = 0`.
    pub grading: f64,
}

impl Default for AngularSpec {
    fn default() -> Self {
        AngularSpec {
            panels: 14,
            nodes_per_panel: 6,
            grading: 0.35,
        }
    }
}

/// How the dielectric double integral is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleRoute {
    /// `(y, phi)` with `xi = y cos phi`, `kz = y sin phi`.
    Polar,
    /// Product rule over `xi` and `kz` on `[0, y_max]^2`.
    Cartesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EnergyFlags {
    /// Panel doublings performed.
    pub refinements: usize,
    /// Panels bisected around flagged nodes.
    pub subdivided_panels: usize,
    /// Largest `ln Q` seen at any node.
    pub max_log_q: f64,
    pub tail_bound: f64,
    pub y_max: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyResult {
    pub energy: f64,
    pub error_estimate: f64,
    pub truncation: usize,
    pub points: usize,
    pub node_count: usize,
    pub flags: EnergyFlags,
}

fn gauss_rule(nodes: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(nodes).expect("positive node count");
    GaussLegendre::new(n).as_node_weight_pairs().to_vec()
}

/// Radial panel edges, graded quadratically towards the origin where the
/// integrand has its log-log behaviour.
fn radial_edges(panels: usize, y_max: f64) -> Vec<f64> {
    (0..=panels)
        .map(|k| {
            let t = k as f64 / panels as f64;
            y_max * t * t
        })
        .collect()
}

/// Angular panel edges on `[0, pi/2]`, geometric towards `phi = pi/2`
/// (`xi = 0`), where a large permittivity contrast stops suppressing the
/// interface.
fn angular_edges(spec: &AngularSpec) -> Vec<f64> {
    let mut gaps: Vec<f64> = (0..spec.panels).map(|k| FRAC_PI_2 * spec.grading.powi(k as i32)).collect();
    gaps.push(0.0);
    gaps.iter().map(|g| FRAC_PI_2 - g).collect()
}

fn halve(edges: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * edges.len());
    for w in edges.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*edges.last().unwrap());
    out
}

/// A node failure that may go away on a finer panel.
#[derive(Debug, Clone)]
struct NodeFailure {
    sp: SpectralPoint,
    ld: Option<LogDet>,
    err: Option<SpectralError>,
}

impl NodeFailure {
    fn into_error(self) -> EnergyError {
        match (self.err, self.ld) {
            (Some(e), _) => EnergyError::Spectral(e),
            (None, Some(ld)) => EnergyError::FlaggedNode {
                xi: self.sp.xi,
                kz: self.sp.kz,
                log_q: ld.value,
                sign: ld.sign,
                condition_flag: ld.condition_flag,
            },
            (None, None) => unreachable!(),
        }
    }
}

/// `ln Q` at a node, with the round-off guard applied.
fn node_value(ev: &LogQEvaluator, sp: SpectralPoint) -> Result<f64, NodeFailure> {
    match ev.eval(&sp) {
        Ok(ld) if ld.is_clean() => Ok(ld.value),
        Ok(ld) => Err(NodeFailure {
            sp,
            ld: Some(ld),
            err: None,
        }),
        Err(e) => Err(NodeFailure {
            sp,
            ld: None,
            err: Some(e),
        }),
    }
}

/// Integral of `g` over one panel, bisecting around failing nodes.
fn panel_integral<F>(a: f64, b: f64, rule: &[(f64, f64)], g: &F, depth: usize, stats: &mut PanelStats) -> Result<f64, NodeFailure>
where
    F: Fn(f64) -> Result<(f64, f64), NodeFailure>,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for &(x, w) in rule {
        match g(mid + half * x) {
            Ok((v, lq)) => {
                sum += w * v;
                if lq > stats.max_log_q {
                    stats.max_log_q = lq;
                    stats.argmax = mid + half * x;
                }
                stats.nodes += 1;
            }
            Err(_) if depth < MAX_SUBDIVISION => {
                stats.subdivided += 1;
                let left = panel_integral(a, mid, rule, g, depth + 1, stats)?;
                let right = panel_integral(mid, b, rule, g, depth + 1, stats)?;
                return Ok(left + right);
            }
            Err(f) => return Err(f),
        }
    }
    Ok(half * sum)
}

#[derive(Debug, Clone, Copy)]
struct PanelStats {
    nodes: usize,
    subdivided: usize,
    max_log_q: f64,
    argmax: f64,
}

impl PanelStats {
    fn merge(&mut self, other: &PanelStats) {
        self.nodes += other.nodes;
        self.subdivided += other.subdivided;
        if other.max_log_q > self.max_log_q {
            self.max_log_q = other.max_log_q;
            self.argmax = other.argmax;
        }
    }
}

impl Default for PanelStats {
    fn default() -> Self {
        PanelStats {
            nodes: 0,
            subdivided: 0,
            max_log_q: f64::NEG_INFINITY,
            argmax: f64::NAN,
        }
    }
}

/// Composite integral over `edges`, panels in parallel, summed in order.
fn composite<F>(edges: &[f64], rule: &[(f64, f64)], g: &F) -> Result<(f64, PanelStats), EnergyError>
where
    F: Fn(f64) -> Result<(f64, f64), NodeFailure> + Sync,
{
    let parts: Vec<Result<(f64, PanelStats), NodeFailure>> = edges
        .par_windows(2)
        .map(|w| {
            let mut st = PanelStats::default();
            panel_integral(w[0], w[1], rule, g, 0, &mut st).map(|v| (v, st))
        })
        .collect();
    let mut total = 0.0;
    let mut stats = PanelStats::default();
    for p in parts {
        let (v, st) = p.map_err(NodeFailure::into_error)?;
        total += v;
        stats.merge(&st);
    }
    Ok((total, stats))
}

fn default_y_max(scene: &SceneConfig) -> Result<f64, EnergyError> {
    let gap = scene.min_gap()?;
    Ok((40.0 / gap).max(20.0 / scene.inner.scale_length()))
}

fn must_be_nonpositive(scene: &SceneConfig) -> bool {
    scene.bc_outer == BoundaryCondition::Dirichlet && scene.inner_kind == InnerKind::PerfectConductorDirichlet
}

/// Bound on `int_{y_max}^inf y |ln Q| dy` assuming decay `e^{-2 gap y}`.
fn tail_bound(value_at_cutoff: f64, y_max: f64, gap: f64) -> f64 {
    let rate = 2.0 * gap;
    value_at_cutoff.abs() * y_max / rate * (1.0 + 1.0 / (rate * y_max))
}

/// Repeats `level(k)` with doubled panels until successive values agree.
fn refine<L>(quad: &QuadratureSpec, mut level: L) -> Result<(f64, f64, PanelStats, usize), EnergyError>
where
    L: FnMut(usize) -> Result<(f64, PanelStats), EnergyError>,
{
    let (mut coarse, mut stats) = level(0)?;
    let mut change = f64::INFINITY;
    for k in 1..=quad.max_refinements.max(1) {
        let (fine, st) = level(k)?;
        change = (fine - coarse).abs();
        stats.merge(&st);
        coarse = fine;
        if change <= quad.refinement_tolerance * fine.abs() || fine == 0.0 {
            return Ok((fine, change, stats, k));
        }
    }
    Err(EnergyError::NoConvergence {
        change,
        tolerance: quad.refinement_tolerance * coarse.abs(),
    })
}

fn check_log_q_sign(scene: &SceneConfig, stats: &PanelStats) -> Result<(), EnergyError> {
    if must_be_nonpositive(scene) && stats.max_log_q > log_q_roundoff(scene.points_per_curve) {
        return Err(EnergyError::PositiveLogQ {
            y: stats.argmax,
            log_q: stats.max_log_q,
        });
    }
    Ok(())
}

/// `E = (1/4 pi) int y ln Q(i y) dy` for two perfect conductors.
pub fn energy_conductor(scene: &SceneConfig, quad: &QuadratureSpec) -> Result<EnergyResult, EnergyError> {
    quad.check()?;
    let ev = LogQEvaluator::new(scene)?;
    if !scene.inner_kind.is_conductor() && scene.eps_inner != scene.eps_outer {
        return Err(EnergyError::WrongScene(
            "the single-integral energy needs perfect conductors or identical media".into(),
        ));
    }
    let gap = scene.min_gap()?;
    let y_max = match quad.y_max {
        Some(y) => y,
        None => default_y_max(scene)?,
    };
    let rule = gauss_rule(quad.nodes_per_panel);
    let g = |y: f64| node_value(&ev, SpectralPoint::on_axis(y)).map(|lq| (y * lq, lq));
    let (value, change, stats, refinements) = refine(quad, |k| {
        let mut edges = radial_edges(quad.panels, y_max);
        for _ in 0..k {
            edges = halve(&edges);
        }
        composite(&edges, &rule, &g)
    })?;
    check_log_q_sign(scene, &stats)?;
    let at_cut = node_value(&ev, SpectralPoint::on_axis(y_max)).map_err(NodeFailure::into_error)?;
    let tail = tail_bound(at_cut, y_max, gap) / (4.0 * PI);
    let energy = value / (4.0 * PI);
    Ok(EnergyResult {
        energy,
        error_estimate: change / (4.0 * PI) + tail,
        truncation: scene.truncation,
        points: scene.points_per_curve,
        node_count: stats.nodes,
        flags: EnergyFlags {
            refinements,
            subdivided_panels: stats.subdivided,
            max_log_q: if stats.nodes > 0 { stats.max_log_q } else { 0.0 },
            tail_bound: tail,
            y_max,
            converged: true,
        },
    })
}

/// `E = (1/4 pi^2) int dxi int dkz ln Q(i xi, kz)` over the full `kz` axis.
pub fn energy_dielectric(
    scene: &SceneConfig,
    radial: &QuadratureSpec,
    angular: &AngularSpec,
) -> Result<EnergyResult, EnergyError> {
    energy_double(scene, radial, angular, DoubleRoute::Polar)
}

/// As [`energy_dielectric`] with an explicit layout; accepts any scene.
pub fn energy_double(
    scene: &SceneConfig,
    radial: &QuadratureSpec,
    angular: &AngularSpec,
    route: DoubleRoute,
) -> Result<EnergyResult, EnergyError> {
    radial.check()?;
    if angular.panels == 0 || angular.nodes_per_panel == 0 || !(angular.grading > 0.0 && angular.grading < 1.0) {
        return Err(EnergyError::InvalidSweep("angular rule needs panels, nodes and 0 < grading < 1".into()));
    }
    let ev = LogQEvaluator::new(scene)?;
    let gap = scene.min_gap()?;
    let y_max = match radial.y_max {
        Some(y) => y,
        None => default_y_max(scene)?,
    };
    let rule_r = gauss_rule(radial.nodes_per_panel);
    let rule_a = gauss_rule(angular.nodes_per_panel);
    let equal = scene.eps_inner == scene.eps_outer && !scene.inner_kind.is_conductor();

    let (value, change, stats, refinements) = if equal {
        (0.0, 0.0, PanelStats::default(), 0)
    } else {
        refine(radial, |k| {
            let mut r_edges = radial_edges(radial.panels, y_max);
            let mut a_edges = angular_edges(angular);
            for _ in 0..k {
                r_edges = halve(&r_edges);
                a_edges = halve(&a_edges);
            }
            match route {
                DoubleRoute::Polar => {
                    // outer integral over y, inner over phi at fixed y
                    let g = |y: f64| -> Result<(f64, f64), NodeFailure> {
                        let mut inner = 0.0;
                        let mut worst = f64::NEG_INFINITY;
                        for w in a_edges.windows(2) {
                            let (lo, hi) = (w[0], w[1]);
                            let half = 0.5 * (hi - lo);
                            let mid = 0.5 * (hi + lo);
                            for &(x, wt) in &rule_a {
                                let phi = mid + half * x;
                                let sp = SpectralPoint::new(y * phi.cos(), y * phi.sin());
                                let lq = node_value(&ev, sp)?;
                                worst = worst.max(lq);
                                inner += half * wt * lq;
                            }
                        }
                        Ok((y * inner, worst))
                    };
                    composite(&r_edges, &rule_r, &g)
                }
                DoubleRoute::Cartesian => {
                    let g = |xi: f64| -> Result<(f64, f64), NodeFailure> {
                        let mut inner = 0.0;
                        let mut worst = f64::NEG_INFINITY;
                        for w in r_edges.windows(2) {
                            let half = 0.5 * (w[1] - w[0]);
                            let mid = 0.5 * (w[1] + w[0]);
                            for &(x, wt) in &rule_r {
                                let lq = node_value(&ev, SpectralPoint::new(xi, mid + half * x))?;
                                worst = worst.max(lq);
                                inner += half * wt * lq;
                            }
                        }
                        Ok((inner, worst))
                    };
                    composite(&r_edges, &rule_r, &g)
                }
            }
        })?
    };
    check_log_q_sign(scene, &stats)?;
    // 2x the kz >= 0 half plane
    let norm = 2.0 / (4.0 * PI * PI);
    let tail = if equal {
        0.0
    } else {
        let at_cut = node_value(&ev, SpectralPoint::new(y_max, 0.0)).map_err(NodeFailure::into_error)?;
        norm * FRAC_PI_2 * tail_bound(at_cut, y_max, gap)
    };
    Ok(EnergyResult {
        energy: norm * value,
        error_estimate: norm * change + tail,
        truncation: scene.truncation,
        points: scene.points_per_curve,
        node_count: stats.nodes,
        flags: EnergyFlags {
            refinements,
            subdivided_panels: stats.subdivided,
            max_log_q: if stats.nodes > 0 { stats.max_log_q } else { 0.0 },
            tail_bound: tail,
            y_max,
            converged: true,
        },
    })
}

/// Energy by whichever integral fits the scene.
pub fn energy(scene: &SceneConfig, quad: &QuadratureSpec, angular: &AngularSpec) -> Result<EnergyResult, EnergyError> {
    if scene.inner_kind.is_conductor() || scene.eps_inner == scene.eps_outer {
        energy_conductor(scene, quad)
    } else {
        energy_dielectric(scene, quad, angular)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Phase of the outer corrugation.
    Phi0,
    /// Vertical position of the inner cylinder relative to the outer curve.
    EpsY,
    /// Horizontal position of the inner cylinder relative to the outer curve.
    EpsX,
    /// Corrugation amplitude of both curves.
    H,
    /// Permittivity of the inner region.
    Eps1,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Phi0 => "phi0",
            SweepParameter::EpsY => "eps_y",
            SweepParameter::EpsX => "eps_x",
            SweepParameter::H => "h",
            SweepParameter::Eps1 => "eps1",
        }
    }

    /// `template` with this parameter set to `value`. The inner cylinder
    /// stays at the origin, so moving it by `(eps_x, eps_y)` shifts the
    /// outer curve by the opposite amount.
    pub fn apply(self, template: &SceneConfig, value: f64) -> Result<SceneConfig, EnergyError> {
        let mut s = template.clone();
        let not_corrugated = || {
            EnergyError::InvalidSweep(format!("parameter {} needs corrugated curves", self.name()))
        };
        match self {
            SweepParameter::Phi0 => match &mut s.outer.curve {
                CurveSpec::CorrugatedCircle { phase, .. } => *phase = value,
                _ => return Err(not_corrugated()),
            },
            SweepParameter::EpsY => s.outer.placement.offset[1] = -value,
            SweepParameter::EpsX => s.outer.placement.offset[0] = -value,
            SweepParameter::H => {
                for c in [&mut s.inner, &mut s.outer.curve] {
                    match c {
                        CurveSpec::CorrugatedCircle { amplitude, .. } => *amplitude = value,
                        _ => return Err(not_corrugated()),
                    }
                }
            }
            SweepParameter::Eps1 => s.eps_inner = value,
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub results: Vec<EnergyResult>,
}

/// Energies of `template` with `parameter` set to each grid value.
pub fn sweep(
    template: &SceneConfig,
    parameter: SweepParameter,
    grid: &[f64],
    quad: &QuadratureSpec,
    angular: &AngularSpec,
) -> Result<SweepTable, EnergyError> {
    if grid.is_empty() {
        return Err(EnergyError::InvalidSweep("empty grid".into()));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) || grid.iter().any(|v| !v.is_finite()) {
        return Err(EnergyError::InvalidSweep("grid must be strictly monotone".into()));
    }
    let wrap = |value: f64, e: EnergyError| EnergyError::SweepPoint {
        parameter: parameter.name().into(),
        value,
        source: Box::new(e),
    };
    let mut scenes = Vec::with_capacity(grid.len());
    for &v in grid {
        let s = parameter.apply(template, v).map_err(|e| wrap(v, e))?;
        s.validate().map_err(|e| wrap(v, EnergyError::Assembly(e)))?;
        scenes.push(s);
    }
    let results: Vec<Result<EnergyResult, EnergyError>> =
        scenes.par_iter().map(|s| energy(s, quad, angular)).collect();
    let mut out = Vec::with_capacity(grid.len());
    for (r, &v) in results.into_iter().zip(grid) {
        out.push(r.map_err(|e| wrap(v, e))?);
    }
    Ok(SweepTable {
        parameter,
        values: grid.to_vec(),
        results: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueResult {
    pub torque: f64,
    pub error_estimate: f64,
}

/// `-dE/dphi0` by a central difference of width `2 delta`.
pub fn torque(
    scene: &SceneConfig,
    phi0: f64,
    delta: f64,
    quad: &QuadratureSpec,
    angular: &AngularSpec,
) -> Result<TorqueResult, EnergyError> {
    if !matches!(scene.inner, CurveSpec::CorrugatedCircle { .. }) {
        return Err(EnergyError::WrongScene("torque needs corrugated curves".into()));
    }
    if !(delta > 0.0) {
        return Err(EnergyError::InvalidSweep("delta must be positive".into()));
    }
    let plus = energy(&SweepParameter::Phi0.apply(scene, phi0 + delta)?, quad, angular)?;
    let minus = energy(&SweepParameter::Phi0.apply(scene, phi0 - delta)?, quad, angular)?;
    Ok(TorqueResult {
        torque: -(plus.energy - minus.energy) / (2.0 * delta),
        error_estimate: (plus.error_estimate + minus.error_estimate) / (2.0 * delta),
    })
}

/// Default torque step, one degree.
pub const TORQUE_STEP: f64 = PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosFit {
    pub amplitude: f64,
    pub offset: f64,
    pub residual_rms: f64,
}

/// Least-squares fit `E(phi0) = E0 + A cos(phi0)`.
pub fn cos_fit(table: &SweepTable) -> Result<CosFit, EnergyError> {
    let energies: Vec<f64> = table.results.iter().map(|r| r.energy).collect();
    cos_fit_values(&table.values, &energies)
}

/// [`cos_fit`] on bare samples.
pub fn cos_fit_values(phi0: &[f64], energy: &[f64]) -> Result<CosFit, EnergyError> {
    let n = phi0.len().min(energy.len());
    if n < 8 {
        return Err(EnergyError::InsufficientData(n));
    }
    let (lo, hi) = phi0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let step = (hi - lo) / (n - 1) as f64;
    if hi - lo + step < TAU * (1.0 - 1e-9) {
        return Err(EnergyError::InsufficientData(n));
    }
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { phi0[i].cos() });
    let rhs = DVector::from_column_slice(&energy[..n]);
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| EnergyError::InvalidSweep(e.to_string()))?;
    let resid = &rhs - &design * &coef;
    Ok(CosFit {
        offset: coef[0],
        amplitude: coef[1],
        residual_rms: (resid.norm_squared() / n as f64).sqrt(),
    })
}
