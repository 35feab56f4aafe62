//! Scenario files: one TOML document describing the body, the spacecraft,
//! the observation regions and every planner/explorer knob.
//!
//! Parsing is strict. Unknown keys are rejected and reported with their
//! dotted path, and every embedded invariant is checked after parsing.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AsteroidModel, InertialState, Tolerances};
use crate::explorers::{ExplorerConfig, ExplorerMethod, HsbKnobs, NteKnobs, PgdKnobs};
use crate::observation::{ConstraintPotentialParams, ObservationRegion, SurfaceFeature, Window};

/// Bundled ten-region Eros-like scenario.
pub const EROS_SCENARIO: &str = include_str!("../scenarios/eros.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{message}")]
    Parse { message: String, path: Option<String>, line: Option<usize>, column: Option<usize> },
    #[error("invalid scenario at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub asteroid: AsteroidBlock,
    pub spacecraft: SpacecraftBlock,
    pub constraints: ConstraintsBlock,
    #[serde(default)]
    pub planner: PlannerBlock,
    #[serde(default)]
    pub integration: IntegrationBlock,
    #[serde(default)]
    pub explorer: ExplorerBlock,
    #[serde(default)]
    pub regions: Vec<RegionBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsteroidBlock {
    pub mu: f64,
    pub spin_rate: f64,
    pub ref_radius: f64,
    pub c20: f64,
    pub c22: f64,
    pub r_impact: f64,
    pub r_escape: f64,
    pub sun_dir: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacecraftBlock {
    pub epoch: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsBlock {
    pub barrier_sharpness: f64,
    pub penalty_scale: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerBlock {
    /// Arc horizon in seconds; one body rotation when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub n_arcs: usize,
    pub visit_threshold: f64,
    pub retire_visited: bool,
    /// Minimum coast after each impulse, as a fraction of the horizon.
    pub min_coast_fraction: f64,
}

impl Default for PlannerBlock {
    fn default() -> Self {
        Self { horizon: None, n_arcs: 5, visit_threshold: 0.5, retire_visited: false, min_coast_fraction: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationBlock {
    pub rel_tol: f64,
    pub abs_tol_position: f64,
    pub abs_tol_velocity: f64,
    /// Tolerance divisor for the committed-trajectory re-propagation.
    pub report_tightening: f64,
}

impl Default for IntegrationBlock {
    fn default() -> Self {
        let t = Tolerances::default();
        Self { rel_tol: t.rel, abs_tol_position: t.abs_position, abs_tol_velocity: t.abs_velocity, report_tightening: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetBlock {
    pub hsb: usize,
    pub pgd: usize,
    pub nte: usize,
    pub mc: usize,
}

impl Default for BudgetBlock {
    fn default() -> Self {
        Self { hsb: 140, pgd: 290, nte: 160, mc: 3516 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorerBlock {
    pub method: ExplorerMethod,
    pub budget: BudgetBlock,
    pub hsb: HsbKnobs,
    pub pgd: PgdKnobs,
    pub nte: NteKnobs,
}

impl Default for ExplorerBlock {
    fn default() -> Self {
        Self {
            method: ExplorerMethod::Nte,
            budget: BudgetBlock::default(),
            hsb: HsbKnobs::default(),
            pgd: PgdKnobs::default(),
            nte: NteKnobs::default(),
        }
    }
}

/// A region located either by a body-fixed `position` (km) or by
/// `lat`/`lon` (rad) and `radius` (km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBlock {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Defaults to the radial direction at the feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 3]>,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    pub range: Window,
    pub off_nadir: Window,
    pub phase: Window,
}

fn unit_weight() -> f64 {
    1.0
}

impl RegionBlock {
    fn feature(&self) -> Result<SurfaceFeature, String> {
        let base = match (self.position, self.lat, self.lon, self.radius) {
            (Some(p), None, None, None) => SurfaceFeature::radial(Vector3::from(p)),
            (None, Some(lat), Some(lon), Some(radius)) => SurfaceFeature::from_lat_lon(lat, lon, radius),
            _ => return Err("give either `position` or all of `lat`, `lon`, `radius`".into()),
        };
        Ok(match self.normal {
            Some(n) => SurfaceFeature { normal: Vector3::from(n), ..base },
            None => base,
        })
    }

    pub fn to_region(&self) -> Result<ObservationRegion, String> {
        let region = ObservationRegion {
            name: self.name.clone(),
            feature: self.feature()?,
            range: self.range,
            off_nadir: self.off_nadir,
            phase: self.phase,
            weight: self.weight,
        };
        region.validate().map_err(|e| e.to_string())?;
        Ok(region)
    }
}

/// Planner knobs resolved from a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub horizon: f64,
    pub n_arcs: usize,
    pub visit_threshold: f64,
    pub retire_visited: bool,
    pub min_coast_fraction: f64,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl ScenarioFile {
    pub fn from_toml_str(src: &str) -> Result<Self, ScenarioError> {
        let parsed: Result<Self, toml::de::Error> = toml::from_str(src);
        let scenario = match parsed {
            Ok(s) => s,
            Err(err) => {
                let (line, column) = match err.span() {
                    Some(span) => {
                        let (l, c) = line_col(src, span.start);
                        (Some(l), Some(c))
                    }
                    None => (None, None),
                };
                // A second pass recovers the dotted key path of the failure.
                let path = toml::Deserializer::parse(src).ok().and_then(|de| {
                    serde_path_to_error::deserialize::<_, Self>(de).err().map(|e| e.path().to_string())
                });
                let mut message = err.message().to_string();
                if let Some(p) = path.as_ref().filter(|p| !p.is_empty() && p.as_str() != ".") {
                    message = format!("{message} (at `{p}`)");
                }
                if let (Some(l), Some(c)) = (line, column) {
                    message = format!("line {l}, column {c}: {message}");
                }
                return Err(ScenarioError::Parse { message, path, line, column });
            }
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn bundled_eros() -> Self {
        Self::from_toml_str(EROS_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |path: &str, message: String| ScenarioError::Invalid { path: path.to_string(), message };
        self.model().validate().map_err(|e| invalid("asteroid", e.to_string()))?;
        let x0 = self.initial_state();
        if x0.r.iter().chain(x0.v.iter()).any(|c| !c.is_finite()) || !x0.t.is_finite() {
            return Err(invalid("spacecraft", "non-finite state".into()));
        }
        if x0.r.norm() <= self.asteroid.r_impact {
            return Err(invalid("spacecraft.position", "initial position inside r_impact".into()));
        }
        self.params().validate().map_err(|m| invalid("constraints", m))?;
        if !(self.constraints.u_max >= 0.0) || !self.constraints.u_max.is_finite() {
            return Err(invalid("constraints.u_max", "must be a non-negative number".into()));
        }
        let p = &self.planner;
        if let Some(h) = p.horizon {
            if !(h > 0.0) || !h.is_finite() {
                return Err(invalid("planner.horizon", "must be positive".into()));
            }
        }
        if p.n_arcs == 0 {
            return Err(invalid("planner.n_arcs", "must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&p.visit_threshold) {
            return Err(invalid("planner.visit_threshold", "must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&p.min_coast_fraction) {
            return Err(invalid("planner.min_coast_fraction", "must lie in [0, 1]".into()));
        }
        let i = &self.integration;
        for (key, v) in [("rel_tol", i.rel_tol), ("abs_tol_position", i.abs_tol_position), ("abs_tol_velocity", i.abs_tol_velocity)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(&format!("integration.{key}"), "must be positive".into()));
            }
        }
        if !(i.report_tightening >= 1.0) {
            return Err(invalid("integration.report_tightening", "must be >= 1".into()));
        }
        for method in ExplorerMethod::ALL {
            self.explorer_config(method)
                .validate()
                .map_err(|e| invalid(&format!("explorer.{}", method.name()), e.to_string()))?;
        }
        let b = &self.explorer.budget;
        if b.hsb < self.explorer.hsb.n_samples_init {
            return Err(invalid("explorer.budget.hsb", "smaller than hsb.n_samples_init".into()));
        }
        if b.pgd < self.explorer.pgd.n_samples_init {
            return Err(invalid("explorer.budget.pgd", "smaller than pgd.n_samples_init".into()));
        }
        if b.nte < self.explorer.nte.branch_width {
            return Err(invalid("explorer.budget.nte", "smaller than nte.branch_width".into()));
        }
        for (k, r) in self.regions.iter().enumerate() {
            r.to_region().map_err(|m| invalid(&format!("regions[{k}]"), m))?;
        }
        Ok(())
    }

    pub fn model(&self) -> AsteroidModel {
        let a = &self.asteroid;
        AsteroidModel {
            mu: a.mu,
            spin_rate: a.spin_rate,
            ref_radius: a.ref_radius,
            c20: a.c20,
            c22: a.c22,
            r_impact: a.r_impact,
            r_escape: a.r_escape,
            sun_dir: Vector3::from(a.sun_dir),
        }
    }

    pub fn initial_state(&self) -> InertialState {
        let s = &self.spacecraft;
        InertialState::new(Vector3::from(s.position), Vector3::from(s.velocity), s.epoch)
    }

    pub fn params(&self) -> ConstraintPotentialParams {
        ConstraintPotentialParams {
            barrier_sharpness: self.constraints.barrier_sharpness,
            penalty_scale: self.constraints.penalty_scale,
        }
    }

    pub fn regions(&self) -> Vec<ObservationRegion> {
        self.regions.iter().map(|r| r.to_region().expect("validated region")).collect()
    }

    pub fn tolerances(&self) -> Tolerances {
        let i = &self.integration;
        Tolerances { rel: i.rel_tol, abs_position: i.abs_tol_position, abs_velocity: i.abs_tol_velocity }
    }

    pub fn report_tolerances(&self) -> Tolerances {
        self.tolerances().tightened(self.integration.report_tightening)
    }

    pub fn planner_settings(&self) -> PlannerSettings {
        let p = &self.planner;
        PlannerSettings {
            horizon: p.horizon.unwrap_or_else(|| self.model().rotation_period()),
            n_arcs: p.n_arcs,
            visit_threshold: p.visit_threshold,
            retire_visited: p.retire_visited,
            min_coast_fraction: p.min_coast_fraction,
        }
    }

    pub fn budget_for(&self, method: ExplorerMethod) -> usize {
        let b = &self.explorer.budget;
        match method {
            ExplorerMethod::Hsb => b.hsb,
            ExplorerMethod::Pgd => b.pgd,
            ExplorerMethod::Nte => b.nte,
            ExplorerMethod::MonteCarlo => b.mc,
        }
    }

    /// Explorer configuration for `method` using the scenario seed.
    pub fn explorer_config(&self, method: ExplorerMethod) -> ExplorerConfig {
        ExplorerConfig {
            u_max: self.constraints.u_max,
            budget: self.budget_for(method),
            seed: self.seed,
            hsb: self.explorer.hsb,
            pgd: self.explorer.pgd,
            nte: self.explorer.nte,
        }
    }
}
