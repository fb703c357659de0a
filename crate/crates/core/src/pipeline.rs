//! End-to-end runs: forward synthesis, noise, projection, the fixed-point
//! iteration and artifact output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::assembly::{assemble, CarlemanParams, ConstraintWeight, EllipticSystem};
use crate::basis::TimeBasis;
use crate::carleman::{check, default_family, lambda_sweep, InequalityReport, TestFunction};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::{extract_cauchy, solve_forward, BoundaryRecord, CauchyRecord, ForwardSettings};
use crate::grid::SpatialGrid;
use crate::inversion::{metrics, InversionSettings, Inverter, IterationState, Metrics};
use crate::scenario::Scenario;

/// Everything a run produces, before it is written out.
pub struct RunOutput {
    pub config: RunConfig,
    pub scenario: Scenario,
    pub grid: SpatialGrid,
    pub basis: TimeBasis,
    pub record: BoundaryRecord,
    pub cauchy: CauchyRecord,
    pub noisy: CauchyRecord,
    pub system: EllipticSystem,
    pub settings: InversionSettings,
    pub states: Vec<IterationState>,
    pub metrics: Metrics,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per stage. Not written to the artifacts.
    pub timings: Vec<(&'static str, f64)>,
}

#[derive(Serialize)]
struct Parameters<'a> {
    half_width: f64,
    outer_half_width: f64,
    nx: usize,
    forward_nodes: usize,
    t_final: f64,
    modes: usize,
    quadrature_nodes: usize,
    carleman: &'a CarlemanParams,
    omega_rule: &'a ConstraintWeight,
    omega: f64,
    noise: f64,
    seed: u64,
    iterations: usize,
    tol: f64,
    max_iter: usize,
    warm_start: bool,
    cutoff_bound: f64,
}

#[derive(Serialize)]
struct ForwardSummary {
    steps: usize,
    dt: f64,
    max_abs: f64,
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    scenario: &'a str,
    q: String,
    parameters: Parameters<'a>,
    forward: ForwardSummary,
    warnings: &'a [String],
    #[serde(flatten)]
    metrics: &'a Metrics,
}

fn node_field(grid: &SpatialGrid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let xs = grid.coords();
    xs.iter().flat_map(|&x| xs.iter().map(move |&y| (x, y))).map(|(x, y)| f(x, y)).collect()
}

/// Runs every stage without touching the file system.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let scenario = config.scenario.resolve()?;
    let mut timings = vec![];
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let grid = SpatialGrid::new(config.grid.half_width, config.grid.nx)?;
    let b = &config.basis;
    let basis = TimeBasis::build_with_rule(b.t_final, b.modes, b.quadrature_nodes, b.rule).map_err(|e| e.in_stage("basis"))?;
    lap("basis", &mut timings);

    let (nodes, outer_half_width) = config.forward_grid()?;
    let fwd = ForwardSettings { outer_half_width, nodes, safety: config.grid.safety };
    let record = solve_forward(&scenario, &grid, &fwd, basis.times()).map_err(|e| e.in_stage("forward"))?;
    let cauchy = extract_cauchy(&record, &basis).map_err(|e| e.in_stage("projection"))?;
    let noisy = cauchy.with_noise(config.noise, config.seed).map_err(|e| e.in_stage("noise"))?;
    lap("forward", &mut timings);

    let c = node_field(&grid, |x, y| scenario.coefficient.eval(x, y));
    let system = assemble(&grid, &c, &basis.stiffness(), &config.carleman, config.omega, &noisy).map_err(|e| e.in_stage("assembly"))?;
    lap("assembly", &mut timings);

    let bound = config.cutoff_factor * record.max_abs;
    let settings = config.inversion_settings(if bound > 0.0 { bound } else { 1.0 });
    let inverter = Inverter::new(&system, &basis, &scenario.q, settings)?;
    let states = inverter.run()?;
    lap("inversion", &mut timings);

    let metrics = metrics(&states, &grid, &scenario, &config.carleman);
    let mut warnings = config.carleman.warnings(grid.half_width());
    for s in &states {
        if !s.solve.converged {
            warnings.push(format!(
                "iterate {}: least-squares solver stopped at {} iterations with relative residual {:.3e}",
                s.k, s.solve.iterations, s.solve.relative_residual
            ));
        }
    }

    Ok(RunOutput {
        config: config.clone(),
        scenario,
        grid,
        basis,
        record,
        cauchy,
        noisy,
        system,
        settings,
        states,
        metrics,
        warnings,
        timings,
    })
}

/// `x,y,value` rows over the grid, 17 significant digits.
pub fn grid_csv(grid: &SpatialGrid, values: &[f64]) -> String {
    let xs = grid.coords();
    let mut out = String::from("x,y,p\n");
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", x, y, values[grid.node_offset(i + 1, j + 1)]);
        }
    }
    out
}

impl RunOutput {
    pub fn p_true(&self) -> Vec<f64> {
        node_field(&self.grid, |x, y| self.scenario.initial(x, y))
    }

    pub fn metrics_json(&self) -> String {
        let cfg = &self.config;
        let doc = MetricsDocument {
            scenario: &self.scenario.name,
            q: self.scenario.q.label(),
            parameters: Parameters {
                half_width: cfg.grid.half_width,
                outer_half_width: cfg.forward_grid().map_or(f64::NAN, |g| g.1),
                nx: cfg.grid.nx,
                forward_nodes: cfg.forward_grid().map_or(0, |g| g.0),
                t_final: cfg.basis.t_final,
                modes: cfg.basis.modes,
                quadrature_nodes: cfg.basis.quadrature_nodes,
                carleman: &cfg.carleman,
                omega_rule: &cfg.omega,
                omega: self.system.omega,
                noise: cfg.noise,
                seed: cfg.seed,
                iterations: cfg.iterations,
                tol: self.settings.tol,
                max_iter: self.settings.max_iter,
                warm_start: self.settings.warm_start,
                cutoff_bound: self.settings.cutoff_bound,
            },
            forward: ForwardSummary { steps: self.record.steps, dt: self.record.dt, max_abs: self.record.max_abs },
            warnings: &self.warnings,
            metrics: &self.metrics,
        };
        serde_json::to_string_pretty(&doc).expect("metrics serialize") + "\n"
    }

    pub fn recursive_error_csv(&self) -> String {
        let mut out = String::from("k,recursive_error\n");
        for s in &self.states {
            if let Some(e) = s.recursive_error {
                let _ = writeln!(out, "{},{:.16e}", s.k, e);
            }
        }
        out
    }

    /// Writes the artifact set into `dir` and returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut files: Vec<(String, String)> = vec![
            ("p_true.csv".into(), grid_csv(&self.grid, &self.p_true())),
            ("metrics.json".into(), self.metrics_json()),
            ("recursive_error.csv".into(), self.recursive_error_csv()),
            ("config_echo.json".into(), self.config.to_json() + "\n"),
        ];
        for s in &self.states {
            files.push((format!("p_iter_{}.csv", s.k), grid_csv(&self.grid, &s.p)));
        }
        if self.config.dump {
            files.push(("boundary_record.csv".into(), self.record.to_csv()));
            files.push(("system_triplets.txt".into(), self.system.to_triplet_text()));
        }
        let mut out = vec![];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body)?;
            out.push(path);
        }
        Ok(out)
    }
}

pub fn run_scenario(config: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let out = execute(config)?;
    out.write(dir).map_err(|e| e.in_stage("write artifacts"))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Polynomial,
    Cosine,
    /// The polynomial and the cosine modulations `k = 1, 2, 3`.
    All,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "polynomial" => Ok(Family::Polynomial),
            "cosine" => Ok(Family::Cosine),
            "all" => Ok(Family::All),
            _ => Err(Error::Config { field: "family".into(), msg: format!("unknown family `{s}` (polynomial, cosine, all)") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanCheckConfig {
    pub params: CarlemanParams,
    pub half_width: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub count: usize,
    pub family: Family,
    pub k: f64,
    pub points: usize,
}

impl Default for CarlemanCheckConfig {
    fn default() -> Self {
        Self {
            params: CarlemanParams::default(),
            half_width: 1.0,
            lambda_min: 40.0,
            lambda_max: 400.0,
            count: 16,
            family: Family::Polynomial,
            k: 1.0,
            points: 401,
        }
    }
}

impl CarlemanCheckConfig {
    pub fn functions(&self) -> Vec<TestFunction> {
        match self.family {
            Family::Polynomial => vec![TestFunction::Polynomial { a: 1.0 }],
            Family::Cosine => vec![TestFunction::Cosine { a: 1.0, k: self.k }],
            Family::All => default_family(),
        }
    }
}

fn report_name(f: &TestFunction) -> String {
    match f {
        TestFunction::Polynomial { .. } => "carleman_report_polynomial.csv".into(),
        TestFunction::Cosine { k, .. } => format!("carleman_report_cosine_k{k}.csv"),
    }
}

/// Runs the probe and writes `carleman_report.csv` (single function) or one
/// report per function.
pub fn run_carleman_check(cfg: &CarlemanCheckConfig, dir: &Path) -> Result<Vec<(PathBuf, InequalityReport)>> {
    cfg.params.validate(cfg.half_width).map_err(|e| Error::Config { field: "carleman".into(), msg: e.to_string() })?;
    let lambdas = lambda_sweep(cfg.lambda_min, cfg.lambda_max, cfg.count)
        .map_err(|e| Error::Config { field: "lambda".into(), msg: e.to_string() })?;
    let functions = cfg.functions();
    fs::create_dir_all(dir)?;
    let mut out = vec![];
    for f in &functions {
        let report = check(f, &cfg.params, cfg.half_width, &lambdas, cfg.points).map_err(|e| e.in_stage("carleman check"))?;
        let name = if functions.len() == 1 { "carleman_report.csv".into() } else { report_name(f) };
        let path = dir.join(name);
        fs::write(&path, report.to_csv())?;
        out.push((path, report));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioSpec;

    fn tiny(name: &str) -> RunConfig {
        let mut c = RunConfig::for_scenario(name);
        c.grid.nx = 11;
        c.grid.outer_half_width = 2.0;
        c.basis.modes = 4;
        c.basis.quadrature_nodes = 129;
        c.iterations = 2;
        c
    }

    #[test]
    fn zero_scenario_is_all_zero() {
        let out = execute(&tiny("zero-smoke")).unwrap();
        assert_eq!(out.states.len(), 3);
        for s in &out.states {
            assert!(s.p.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn artifacts_are_written_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny("test1");
        let a = run_scenario(&c, &dir.path().join("a")).unwrap();
        run_scenario(&c, &dir.path().join("b")).unwrap();
        let mut names: Vec<String> = fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(names, ["config_echo.json", "metrics.json", "p_iter_0.csv", "p_iter_1.csv", "p_iter_2.csv", "p_true.csv", "recursive_error.csv"]);
        for n in &names {
            assert_eq!(fs::read(dir.path().join("a").join(n)).unwrap(), fs::read(dir.path().join("b").join(n)).unwrap(), "{n}");
        }
        let echo = RunConfig::from_json(&fs::read_to_string(dir.path().join("a/config_echo.json")).unwrap()).unwrap();
        assert_eq!(echo, c);
        assert_eq!(a.metrics.recursive_errors.len(), 2);
        let doc: serde_json::Value = serde_json::from_str(&a.metrics_json()).unwrap();
        assert_eq!(doc["scenario"], "test1");
        assert_eq!(doc["inclusions"][0]["label"], "disk");
    }

    #[test]
    fn dump_writes_boundary_and_system() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny("test1");
        c.dump = true;
        c.iterations = 0;
        let out = run_scenario(&c, dir.path()).unwrap();
        let rec = BoundaryRecord::from_csv(&fs::read_to_string(dir.path().join("boundary_record.csv")).unwrap()).unwrap();
        assert_eq!(rec.nodes.len(), 40);
        let m = crate::sparsela::CsrMatrix::from_triplet_text(&fs::read_to_string(dir.path().join("system_triplets.txt")).unwrap()).unwrap();
        assert_eq!(m, out.system.matrix);
    }

    #[test]
    fn unknown_scenario_is_a_config_error() {
        let c = RunConfig { scenario: ScenarioSpec::Builtin("nope".into()), ..tiny("test1") };
        assert!(matches!(execute(&c), Err(Error::Config { .. })));
    }

    #[test]
    fn carleman_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CarlemanCheckConfig { lambda_max: 40.0, ..Default::default() };
        let out = run_carleman_check(&cfg, dir.path()).unwrap();
        assert_eq!(out.len(), 1);
        let text = fs::read_to_string(dir.path().join("carleman_report.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        let cfg = CarlemanCheckConfig { family: Family::All, count: 3, ..Default::default() };
        let out = run_carleman_check(&cfg, dir.path()).unwrap();
        assert_eq!(out.len(), 4);
        assert!(dir.path().join("carleman_report_cosine_k3.csv").exists());
    }
}
