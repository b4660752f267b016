use std::f64::consts::TAU;

use casimir_core::{AngularSpec, BoundaryCondition, CurveSpec, Placement, QuadratureSpec, SceneConfig, SweepParameter};

use crate::config::{RunConfig, SweepConfig, Task};
use crate::output::PresetEcho;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
}

/// One table of a preset.
#[derive(Debug, Clone)]
pub struct Job {
    pub stem: String,
    pub config: RunConfig,
    pub echo: Option<PresetEcho>,
}

pub const TRUNCATION: usize = 15;
pub const ALPHA: f64 = 2.0;
pub const NU: u32 = 3;
pub const FIG2_AMPLITUDES: [f64; 3] = [0.1, 0.2, 0.3];
pub const FIG3_AMPLITUDE: f64 = 0.3;
pub const PHI0_POINTS: usize = 16;
pub const ELLIPSE_B1: f64 = 4.0;
pub const ELLIPSE_B2: f64 = 4.33;
pub const ECCENTRICITY_POINTS: usize = 13;
pub const ECCENTRICITY_MAX: f64 = 2.5;

fn corrugated_pair(h: f64) -> SceneConfig {
    let curve = |radius| CurveSpec::CorrugatedCircle {
        radius,
        amplitude: h,
        frequency: NU,
        phase: 0.0,
    };
    SceneConfig::conductors(curve(1.0), curve(ALPHA), Placement::identity(), BoundaryCondition::Dirichlet, TRUNCATION)
}

fn sweep_config(scene: SceneConfig, sweep: SweepConfig) -> RunConfig {
    RunConfig {
        task: Task::Sweep,
        scene: Some(scene),
        quadrature: QuadratureSpec::default(),
        angular: AngularSpec::default(),
        sweep: Some(sweep),
        torque: None,
        eigen: None,
        fit: None,
    }
}

fn corrugation_echo(name: &str, h: f64) -> PresetEcho {
    PresetEcho {
        name: name.into(),
        alpha: Some(ALPHA),
        nu: Some(NU),
        h: Some(h),
        ..Default::default()
    }
}

pub fn jobs(preset: Preset) -> Vec<Job> {
    let phi0 = || SweepConfig::linspace(SweepParameter::Phi0, 0.0, TAU, PHI0_POINTS);
    match preset {
        Preset::Fig2 => FIG2_AMPLITUDES
            .iter()
            .map(|&h| Job {
                stem: format!("fig2_h{h}"),
                config: sweep_config(corrugated_pair(h), phi0()),
                echo: Some(corrugation_echo("fig2", h)),
            })
            .collect(),
        Preset::Fig3 => vec![Job {
            stem: "fig3".into(),
            config: sweep_config(
                corrugated_pair(FIG3_AMPLITUDE),
                SweepConfig {
                    boundary_conditions: Some(vec![BoundaryCondition::Dirichlet, BoundaryCondition::Neumann]),
                    ..phi0()
                },
            ),
            echo: Some(corrugation_echo("fig3", FIG3_AMPLITUDE)),
        }],
        Preset::Fig4 => {
            let scene = SceneConfig::conductors(
                CurveSpec::Circle { radius: 1.0 },
                CurveSpec::Ellipse {
                    semiminor: ELLIPSE_B1,
                    semimajor: ELLIPSE_B2,
                },
                Placement::identity(),
                BoundaryCondition::Dirichlet,
                TRUNCATION,
            );
            vec![Job {
                stem: "fig4".into(),
                config: sweep_config(
                    scene,
                    SweepConfig::linspace(
                        SweepParameter::EpsY,
                        -ECCENTRICITY_MAX,
                        ECCENTRICITY_MAX,
                        ECCENTRICITY_POINTS,
                    ),
                ),
                echo: Some(PresetEcho {
                    name: "fig4".into(),
                    b1: Some(ELLIPSE_B1),
                    b2: Some(ELLIPSE_B2),
                    f: Some((ELLIPSE_B2 * ELLIPSE_B2 - ELLIPSE_B1 * ELLIPSE_B1).sqrt()),
                    ..Default::default()
                }),
            }]
        }
    }
}
