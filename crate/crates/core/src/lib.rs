//! Casimir interaction energies of translation-invariant waveguides by the
//! point-matching method.
//!
//! The interaction energy per unit length follows from the spectral
//! determinant `Q` of the boundary-collocation system, integrated along
//! the imaginary frequency axis. The crate covers:
//!
//! - [`geometry`]: parametric cross-section curves and collocation meshes,
//! - [`specfun`]: exponentially scaled Bessel functions,
//! - [`assembly`]: boundary-condition block matrices,
//! - [`spectral`]: `ln Q` and real-axis eigenvalue scans,
//! - [`energy`]: energies, torques, sweeps and cosine fits.
//!
//! Lengths are in units of the inner radius `a`; energies in `L / a^2`.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod energy;
pub mod geometry;
pub mod specfun;
pub mod spectral;

pub use assembly::{AssemblyError, BoundaryCondition, InnerKind, PlacedCurve, SceneConfig, SpectralPoint};
pub use energy::{
    cos_fit, energy, energy_conductor, energy_dielectric, sweep, torque, AngularSpec, CosFit, EnergyError,
    EnergyResult, QuadratureSpec, SweepParameter, SweepTable, TorqueResult,
};
pub use geometry::{CurveSpec, GeometryError, Placement, SampledBoundary};
pub use specfun::{ScaledValue, SpecFunError};
pub use spectral::{
    eigen_scan_mfs, eigen_scan_pmm, log_q, EigenMethod, EigenvalueList, LogDet, ScanOptions, SpectralError,
};
