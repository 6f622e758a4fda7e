//! Named experiment scenarios: the domains, target coefficients, boundary
//! inputs, and descent defaults for the built-in test problems.

use serde::{Deserialize, Serialize};

use recon_core::mesh::{assign_regions, build_disk_mesh, build_square_mesh, PartitionSpec};
use recon_core::{CoefficientField, Result, TriMesh};

/// Closed-form scalar functions used for targets, inputs, and sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticFn {
    Constant(f64),
    /// `sin(pi x) sin(pi y)`
    SinSin,
    /// `2 + sin(pi x) sin(pi y)`
    TwoPlusSinSin,
    /// `exp(sin(pi x) sin(pi y))`
    ExpSinSin,
    /// `1 + 0.5 sin(pi x) sin(pi y)`
    OnePlusHalfSinSin,
    /// `1 + 0.5 x y`
    OnePlusHalfXy,
    /// `1 + 0.25 sin(pi x) sin(pi y)`
    OneQuarterSinSin,
    /// `1 + 0.25 x y sin(pi x) sin(pi y)`
    OneQuarterXySinSin,
    /// `1 + sin(pi x / 8) sin(pi y / 8)`
    SlowSinSin,
    /// `x + y + 2`
    LinearPlusTwo,
}

impl AnalyticFn {
    pub fn eval(self, p: [f64; 2]) -> f64 {
        use std::f64::consts::PI;
        let (x, y) = (p[0], p[1]);
        match self {
            AnalyticFn::Constant(c) => c,
            AnalyticFn::SinSin => (PI * x).sin() * (PI * y).sin(),
            AnalyticFn::TwoPlusSinSin => 2.0 + (PI * x).sin() * (PI * y).sin(),
            AnalyticFn::ExpSinSin => ((PI * x).sin() * (PI * y).sin()).exp(),
            AnalyticFn::OnePlusHalfSinSin => 1.0 + 0.5 * (PI * x).sin() * (PI * y).sin(),
            AnalyticFn::OnePlusHalfXy => 1.0 + 0.5 * x * y,
            AnalyticFn::OneQuarterSinSin => 1.0 + 0.25 * (PI * x).sin() * (PI * y).sin(),
            AnalyticFn::OneQuarterXySinSin => {
                1.0 + 0.25 * x * y * (PI * x).sin() * (PI * y).sin()
            }
            AnalyticFn::SlowSinSin => 1.0 + (PI * x / 8.0).sin() * (PI * y / 8.0).sin(),
            AnalyticFn::LinearPlusTwo => x + y + 2.0,
        }
    }
}

/// Reconstruction target: a smooth profile or one constant per subregion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetAlpha {
    Smooth(AnalyticFn),
    PerRegion(Vec<f64>),
}

/// Computational domain with its resolution parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// `(-half, half)^2` with `resolution` cells per side.
    Square { half: f64 },
    /// Disk of the given radius centered at the origin, `resolution` rings.
    Disk { radius: f64 },
}

/// A fully explicit experiment scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub domain: Domain,
    pub alpha_star: TargetAlpha,
    /// Imposed Neumann input g.
    pub g_input: AnalyticFn,
    /// Volumetric source Q.
    pub source: AnalyticFn,
    pub alpha0: f64,
    pub partition: Option<PartitionSpec>,
    /// Descent defaults a config may override.
    pub mu: f64,
    pub rho: f64,
    pub w0: f64,
    pub w1: f64,
    pub step_t: f64,
    pub k_max: usize,
    pub mesh_resolution: usize,
}

impl ScenarioSpec {
    /// Coarse inversion mesh (regions assigned when a partition is present).
    pub fn build_mesh(&self, resolution: usize) -> Result<TriMesh> {
        let mesh = match self.domain {
            Domain::Square { half } => {
                build_square_mesh(-half, half, -half, half, resolution)?
            }
            Domain::Disk { radius } => build_disk_mesh([0.0, 0.0], radius, resolution)?,
        };
        match &self.partition {
            Some(spec) => assign_regions(&mesh, spec),
            None => Ok(mesh),
        }
    }

    /// Target coefficient sampled as P0 on the given mesh.
    pub fn alpha_star_on(&self, mesh: &TriMesh) -> Result<CoefficientField> {
        match &self.alpha_star {
            TargetAlpha::Smooth(f) => Ok(CoefficientField::from_fn(mesh, |p| f.eval(p))),
            TargetAlpha::PerRegion(values) => CoefficientField::from_region_values(mesh, values),
        }
    }

    pub fn region_targets(&self) -> Option<&[f64]> {
        match &self.alpha_star {
            TargetAlpha::PerRegion(values) => Some(values),
            TargetAlpha::Smooth(_) => None,
        }
    }
}

/// Built-in presets mirroring the experiment sections.
pub const PRESET_NAMES: [&str; 7] = [
    "disk-smooth",
    "disk2-smooth-xy",
    "disk2-oscillatory",
    "disk2-oscillatory-xy",
    "two-subregions",
    "three-subregions",
    "four-quadrants",
];

/// Options that parametrize the piecewise presets.
#[derive(Debug, Clone, Copy)]
pub struct PresetOptions {
    /// Pick-a-point coordinate for the four-quadrant case.
    pub xi: f64,
    /// Radius of the central circle in the three-subregion case.
    pub circle_radius: f64,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions { xi: 0.9, circle_radius: 0.5 }
    }
}

pub fn preset(name: &str, options: &PresetOptions) -> Option<ScenarioSpec> {
    let smooth_disk = |radius: f64, alpha: AnalyticFn, g: AnalyticFn| ScenarioSpec {
        domain: Domain::Disk { radius },
        alpha_star: TargetAlpha::Smooth(alpha),
        g_input: g,
        source: AnalyticFn::Constant(1.0),
        alpha0: 1.0,
        partition: None,
        mu: 1.0,
        rho: 1e-6,
        w0: 1.0,
        w1: 1.0,
        step_t: 0.5,
        k_max: 200,
        mesh_resolution: 8,
    };
    // Piecewise recoveries live in a light-smoothing regime: heavier mu or a
    // large H1 misfit weight couples the interior subregion to its neighbors
    // and drags the picked value toward their mean.
    let piecewise = |partition: PartitionSpec,
                     values: Vec<f64>,
                     g: AnalyticFn,
                     step_t: f64,
                     k_max: usize| ScenarioSpec {
        domain: Domain::Square { half: 1.0 },
        alpha_star: TargetAlpha::PerRegion(values),
        g_input: g,
        source: AnalyticFn::LinearPlusTwo,
        alpha0: 2.0,
        partition: Some(partition),
        mu: 0.1,
        rho: 1e-8,
        w0: 1.0,
        w1: 0.1,
        step_t,
        k_max,
        mesh_resolution: 16,
    };
    match name {
        "disk-smooth" => Some(smooth_disk(1.0, AnalyticFn::OnePlusHalfXy, AnalyticFn::Constant(1.0))),
        "disk2-smooth-xy" => {
            Some(smooth_disk(2.0, AnalyticFn::OnePlusHalfXy, AnalyticFn::Constant(1.0)))
        }
        "disk2-oscillatory" => {
            Some(smooth_disk(2.0, AnalyticFn::OneQuarterSinSin, AnalyticFn::SinSin))
        }
        "disk2-oscillatory-xy" => {
            Some(smooth_disk(2.0, AnalyticFn::OneQuarterXySinSin, AnalyticFn::SinSin))
        }
        "two-subregions" => Some(piecewise(
            PartitionSpec::two_subregions(),
            vec![0.75, 0.50],
            AnalyticFn::OnePlusHalfSinSin,
            1.0,
            1000,
        )),
        "three-subregions" => Some(piecewise(
            PartitionSpec::three_subregions(options.circle_radius),
            vec![1.5, 0.75, 0.50],
            AnalyticFn::ExpSinSin,
            0.5,
            1000,
        )),
        "four-quadrants" => Some(piecewise(
            PartitionSpec::four_quadrants(options.xi),
            vec![0.25, 0.50, 0.75, 1.00],
            AnalyticFn::ExpSinSin,
            0.5,
            1000,
        )),
        _ => None,
    }
}
