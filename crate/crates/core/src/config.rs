//! JSON run configuration.

use serde::{Deserialize, Serialize};

use crate::assembly::{CarlemanParams, ConstraintWeight};
use crate::basis::{QuadratureRule, DEFAULT_MODES, DEFAULT_QUADRATURE_NODES, MAX_MODES};
use crate::error::{Error, Result};
use crate::forward::{aligned_forward_grid, DEFAULT_SAFETY, MAX_SAFETY};
use crate::inversion::InversionSettings;
use crate::scenario::Scenario;

/// A builtin scenario name or a full inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Builtin(String),
    Inline(Scenario),
}

impl ScenarioSpec {
    pub fn resolve(&self) -> Result<Scenario> {
        match self {
            ScenarioSpec::Builtin(name) => Scenario::builtin(name).ok_or_else(|| Error::Config {
                field: "scenario".into(),
                msg: format!("unknown scenario `{name}`; builtins are {}", Scenario::BUILTINS.join(", ")),
            }),
            ScenarioSpec::Inline(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// `R`
    pub half_width: f64,
    /// `N_x`
    pub nx: usize,
    /// `R1`
    pub outer_half_width: f64,
    /// `N1`. When absent the forward step is `h / refinement` and `R1` is
    /// rounded to a whole number of forward cells.
    pub forward_nodes: Option<usize>,
    pub refinement: usize,
    pub safety: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_width: 1.0, nx: 80, outer_half_width: 6.0, forward_nodes: None, refinement: 1, safety: DEFAULT_SAFETY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub t_final: f64,
    pub modes: usize,
    pub quadrature_nodes: usize,
    pub rule: QuadratureRule,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { t_final: 1.5, modes: DEFAULT_MODES, quadrature_nodes: DEFAULT_QUADRATURE_NODES, rule: QuadratureRule::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub warm_start: bool,
    pub early_stop: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = InversionSettings::default();
        Self { tol: d.tol, max_iter: d.max_iter, warm_start: d.warm_start, early_stop: d.early_stop }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub grid: GridConfig,
    pub basis: BasisConfig,
    pub carleman: CarlemanParams,
    pub omega: ConstraintWeight,
    /// Relative noise level `δ`.
    pub noise: f64,
    pub seed: u64,
    /// Nonlinear iterations `K`.
    pub iterations: usize,
    pub solver: SolverConfig,
    /// `M` is this factor times the largest `|u|` of the noiseless forward run.
    pub cutoff_factor: f64,
    /// Also write the boundary record and the assembled matrix.
    pub dump: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::Builtin("test1".into()),
            grid: GridConfig::default(),
            basis: BasisConfig::default(),
            carleman: CarlemanParams::default(),
            omega: ConstraintWeight::default(),
            noise: 0.2,
            seed: 1,
            iterations: 5,
            solver: SolverConfig::default(),
            cutoff_factor: 10.0,
            dump: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config { field: "preset".into(), msg: format!("unknown preset `{s}` (expected full or desk)") }),
        }
    }
}

fn cfg(field: &str, msg: impl Into<String>) -> Error {
    Error::Config { field: field.into(), msg: msg.into() }
}

impl RunConfig {
    pub fn for_scenario(name: &str) -> Self {
        Self { scenario: ScenarioSpec::Builtin(name.into()), ..Default::default() }
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Full => {
                self.grid.nx = 80;
                self.grid.forward_nodes = None;
                self.basis.modes = DEFAULT_MODES;
            }
            Preset::Desk => {
                self.grid.nx = 40;
                self.grid.forward_nodes = None;
                self.grid.refinement = 1;
                self.basis.modes = 25;
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// `(N1, R1)` actually used by the forward solver.
    pub fn forward_grid(&self) -> Result<(usize, f64)> {
        let g = &self.grid;
        match g.forward_nodes {
            Some(n) => {
                let k = (n.max(1) - 1) as f64 * g.half_width / (g.outer_half_width * (g.nx - 1) as f64);
                let offset = (g.outer_half_width - g.half_width) / (2.0 * g.outer_half_width / (n.max(2) - 1) as f64);
                let whole = |v: f64| (v - v.round()).abs() < 1e-8 && v.round() >= 1.0;
                if !whole(k) || !whole(offset) {
                    return Err(cfg("grid.forward_nodes", format!("{n} forward nodes on R1 = {} do not align with {} inner nodes", g.outer_half_width, g.nx)));
                }
                Ok((n, g.outer_half_width))
            }
            None => aligned_forward_grid(g.nx, g.half_width, g.outer_half_width, g.refinement)
                .map_err(|e| cfg("grid.refinement", e.to_string())),
        }
    }

    pub fn inversion_settings(&self, cutoff_bound: f64) -> InversionSettings {
        InversionSettings {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            iterations: self.iterations,
            early_stop: self.solver.early_stop,
            warm_start: self.solver.warm_start,
            cutoff_bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            return Err(cfg("grid.half_width", format!("must be positive, got {}", g.half_width)));
        }
        if g.nx < 4 {
            return Err(cfg("grid.nx", format!("need at least 4 nodes per axis, got {}", g.nx)));
        }
        if !(g.outer_half_width > g.half_width && g.outer_half_width.is_finite()) {
            return Err(cfg("grid.outer_half_width", format!("must exceed half_width, got {}", g.outer_half_width)));
        }
        if !(g.safety > 0.0 && g.safety <= MAX_SAFETY) {
            return Err(cfg("grid.safety", format!("must be in (0, {MAX_SAFETY}], got {}", g.safety)));
        }
        self.forward_grid()?;
        let b = &self.basis;
        if !(b.t_final > 0.0 && b.t_final.is_finite()) {
            return Err(cfg("basis.t_final", format!("must be positive, got {}", b.t_final)));
        }
        if b.modes == 0 || b.modes > MAX_MODES {
            return Err(cfg("basis.modes", format!("must be in 1..={MAX_MODES}, got {}", b.modes)));
        }
        if b.quadrature_nodes % 2 == 0 || b.quadrature_nodes < 4 * b.modes + 1 {
            return Err(cfg("basis.quadrature_nodes", format!("must be odd and at least 4 modes + 1, got {}", b.quadrature_nodes)));
        }
        self.carleman.validate(g.half_width).map_err(|e| cfg("carleman", e.to_string()))?;
        match self.omega {
            ConstraintWeight::Relative { factor: w } | ConstraintWeight::Absolute { value: w } if !(w > 0.0 && w.is_finite()) => {
                return Err(cfg("omega", format!("must be positive, got {w}")));
            }
            _ => {}
        }
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return Err(cfg("noise", format!("must be in [0, 1), got {}", self.noise)));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(cfg("solver.tol", format!("must be in (0, 1), got {}", self.solver.tol)));
        }
        if self.solver.max_iter == 0 {
            return Err(cfg("solver.max_iter", "must be positive"));
        }
        if !(self.cutoff_factor > 0.0 && self.cutoff_factor.is_finite()) {
            return Err(cfg("cutoff_factor", format!("must be positive, got {}", self.cutoff_factor)));
        }
        self.scenario.resolve()?.validate(g.half_width)?;
        Ok(())
    }
}
