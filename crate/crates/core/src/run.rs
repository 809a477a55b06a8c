//! Batch runs: TOML configuration in, JSON report out.
//!
//! A report depends only on the configuration bytes and the crate version.
//! Wall-clock timing is added only on request.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::geometry::{
    divisor_intersection_points, find_degenerate_secant, restriction_check, restriction_solvability_check,
    DivisorIntersection, RestrictionSolvability, SecantSearchResult,
};
use crate::hierarchy::{
    continue_hierarchy, section_sample, GridSpec, HierarchyRun, HierarchyState, OrderFailure, OrderRecord, RunStatus,
    SampleGrid,
};
use crate::kummer::{
    addition_formula_residual, center_config, degenerate_secant_test, honest_secant_test, SecantConfig, SecantReport,
    DEFAULT_TOL_RANK,
};
use crate::sampling::{derive_seed, random_siegel, random_torus_point, rng};
use crate::series::MAX_SERIES_ORDER;
use crate::theta::{theta_eval, theta_jet, validate_siegel, SiegelMatrix, ThetaCharacteristic, TruncationPolicy};
use crate::{CVec, ARTIFACT_VERSION};

const OMEGA_SALT: u64 = 1;
const POINTS_SALT: u64 = 2;
const ADDITION_SALT: u64 = 3;
const GRID_SALT: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ThetaEval,
    AdditionCheck,
    SecantCheck,
    SecantSearch,
    HierarchyRun,
    RestrictionCheck,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecantMode {
    #[default]
    Honest,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicSpec {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// One run. Fields not used by the selected command must be absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub genus: usize,
    /// Rows of `Ω`; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<CVec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_radius: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<CVec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristic: Option<CharacteristicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<CVec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jet_order: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_check: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SecantMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<CVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<CVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<CVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<CVec>>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_search: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_solve: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_divisor: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn require<'a, T>(value: &'a Option<T>, field: &str, command: Command) -> Result<&'a T, ConfigError> {
    value
        .as_ref()
        .ok_or_else(|| invalid(field, format!("required by {}", command_name(command))))
}

fn command_name(c: Command) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Parses and validates a configuration.
pub fn parse_config(text: &[u8]) -> Result<RunConfig, ConfigError> {
    let text = std::str::from_utf8(text).map_err(|e| ConfigError::Parse {
        path: ".".into(),
        message: format!("not UTF-8: {e}"),
    })?;
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
        path: ".".into(),
        message: e.to_string().trim_end().to_owned(),
    })?;
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.into_inner().to_string().trim_end().to_owned(),
    })?;
    config.validate()?;
    Ok(config)
}

fn check_positive(value: Option<f64>, field: &str) -> Result<(), ConfigError> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(invalid(field, format!("must be positive, got {v}"))),
        _ => Ok(()),
    }
}

fn check_vectors(vs: &[CVec], g: usize, field: &str) -> Result<(), ConfigError> {
    match vs.iter().position(|v| v.len() != g) {
        Some(i) => Err(invalid(
            &format!("{field}[{i}]"),
            format!("expected {g} coordinates, got {}", vs[i].len()),
        )),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = self.genus;
        let cmd = self.command;
        if !(1..=4).contains(&g) {
            return Err(invalid("genus", format!("must lie in 1..=4, got {g}")));
        }
        for (v, f) in [
            (self.theta_tol, "theta_tol"),
            (self.max_radius, "max_radius"),
            (self.tol_check, "tol_check"),
            (self.tol_search, "tol_search"),
            (self.tol_solve, "tol_solve"),
            (self.tol_divisor, "tol_divisor"),
        ] {
            check_positive(v, f)?;
        }
        if let Some(t) = self.tol_rank {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid("tol_rank", format!("must lie in (0, 1), got {t}")));
            }
        }
        match &self.omega {
            Some(rows) => {
                let n = rows.len();
                let cols = rows.iter().map(Vec::len).find(|&c| c != n).unwrap_or(n);
                if n != g || cols != g {
                    return Err(invalid("omega", format!("expected {g}x{g}, got {n}x{cols}")));
                }
                let m = DMatrix::from_fn(g, g, |i, j| rows[i][j]);
                validate_siegel(&m).map_err(|e| invalid("omega", e.to_string()))?;
            }
            None => {
                require(&self.seed, "seed", cmd).map_err(|_| invalid("seed", "required to draw omega"))?;
            }
        }
        self.policy().map_err(|e| invalid("theta_tol", e.to_string()))?;
        for (vs, f) in [
            (&self.points, "points"),
            (&self.directions, "directions"),
            (&self.b, "b"),
        ] {
            if let Some(vs) = vs {
                check_vectors(vs, g, f)?;
            }
        }
        for (v, f) in [(&self.zeta, "zeta"), (&self.u, "u"), (&self.d1, "d1")] {
            if let Some(v) = v {
                check_vectors(std::slice::from_ref(v), g, f)
                    .map_err(|_| invalid(f, format!("expected {g} coordinates, got {}", v.len())))?;
            }
        }
        if let Some(ch) = &self.characteristic {
            if ch.a.len() != g || ch.b.len() != g {
                return Err(invalid("characteristic", format!("a and b need {g} entries")));
            }
        }
        if self.m == Some(0) {
            return Err(invalid("m", "must be at least 1"));
        }
        if let Some(s) = self.s_max {
            if s > MAX_SERIES_ORDER {
                return Err(invalid("s_max", format!("at most {MAX_SERIES_ORDER}")));
            }
        }
        match cmd {
            Command::ThetaEval => {
                require(&self.points, "points", cmd)?;
                if self.jet_order.is_some() != self.directions.is_some() {
                    return Err(invalid("jet_order", "jet_order and directions go together"));
                }
            }
            Command::AdditionCheck => {
                require(&self.seed, "seed", cmd)?;
            }
            Command::SecantCheck => match self.mode.unwrap_or_default() {
                SecantMode::Honest => match (&self.points, self.random_points) {
                    (Some(p), None) if p.len() >= 3 => {}
                    (None, Some(n)) if n >= 3 => {
                        require(&self.seed, "seed", cmd)?;
                    }
                    (Some(_), Some(_)) => return Err(invalid("points", "give points or random_points, not both")),
                    _ => return Err(invalid("points", "at least 3 points (or random_points ≥ 3) required")),
                },
                SecantMode::Degenerate => {
                    require(&self.u, "u", cmd)?;
                    require(&self.d1, "d1", cmd)?;
                    if require(&self.b, "b", cmd)?.is_empty() {
                        return Err(invalid("b", "at least one point required"));
                    }
                }
            },
            Command::SecantSearch => {
                require(&self.seed, "seed", cmd)?;
                require(&self.m, "m", cmd)?;
            }
            Command::HierarchyRun => {
                require(&self.s_max, "s_max", cmd)?;
                require(&self.seed, "seed", cmd)?;
                if self.points.is_none() {
                    require(&self.m, "m", cmd)
                        .map_err(|_| invalid("m", "required when points are absent (the secant is searched)"))?;
                } else if let (Some(p), Some(m)) = (&self.points, self.m) {
                    if p.len() != m + 2 {
                        return Err(invalid("m", format!("{} points give m = {}", p.len(), p.len() - 2)));
                    }
                }
            }
            Command::RestrictionCheck => {
                require(&self.seed, "seed", cmd)?;
                if g != 2 {
                    return Err(invalid("genus", "restriction-check needs genus 2"));
                }
                if self.m.unwrap_or(1) != 1 {
                    return Err(invalid("m", "restriction-check needs m = 1"));
                }
                if self.s_max == Some(0) {
                    return Err(invalid("s_max", "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> crate::Result<TruncationPolicy> {
        let d = TruncationPolicy::default();
        TruncationPolicy::new(self.theta_tol.unwrap_or(d.tol), self.max_radius.unwrap_or(d.max_radius))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// `Ω` from the configuration or drawn from the seed.
    pub fn siegel(&self) -> crate::Result<SiegelMatrix> {
        match &self.omega {
            Some(rows) => SiegelMatrix::from_rows(rows),
            None => Ok(random_siegel(
                self.genus,
                &mut rng(derive_seed(self.seed(), OMEGA_SALT)),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DispatchOptions {
    /// Adds per-grid-point diagnostics.
    pub verbose: bool,
    /// Adds wall-clock milliseconds; the report is then no longer
    /// byte-reproducible.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetValue {
    pub multi_order: Vec<u32>,
    pub value: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaValue {
    pub z: CVec,
    pub value: Complex64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jet: Vec<JetValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub seed: u64,
    pub count: usize,
}

/// Values of `P_s` on the grid, one list per solved order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub points: Vec<CVec>,
    pub sections: Vec<crate::hierarchy::SectionSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionValue {
    pub order: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Payload {
    ThetaEval {
        values: Vec<ThetaValue>,
    },
    AdditionCheck {
        samples: usize,
        tolerance: f64,
        max_residual: f64,
        passed: bool,
        residuals: Vec<f64>,
    },
    SecantCheck {
        mode: SecantMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<CVec>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        zeta: Option<CVec>,
        report: SecantReport,
    },
    SecantSearch {
        result: SecantSearchResult,
        rank_check: SecantReport,
    },
    HierarchyRun {
        config: SecantConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        search: Option<SecantSearchResult>,
        grid: GridInfo,
        s_max: usize,
        tol_solve: f64,
        gauge: Complex64,
        orders: Vec<OrderRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        first_failure: Option<OrderFailure>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagnostics: Option<GridDiagnostics>,
    },
    RestrictionCheck {
        search: SecantSearchResult,
        orders: Vec<OrderRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        first_failure: Option<OrderFailure>,
        intersection: DivisorIntersection,
        restriction: Vec<RestrictionValue>,
        solvability: Vec<RestrictionSolvability>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub artifact_version: String,
    pub status: RunStatus,
    pub config_echo: RunConfig,
    /// The period matrix actually used, rows of `[re, im]` pairs.
    pub omega: Vec<CVec>,
    /// `ζ` is reported directly; `V_Y` labels refer to `2ζ`.
    pub conventions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialise");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

fn omega_rows(sm: &SiegelMatrix) -> Vec<CVec> {
    let g = sm.genus();
    (0..g).map(|i| (0..g).map(|j| sm.entry(i, j)).collect()).collect()
}

/// Runs the selected workflow. Numerical failures end up in the report.
pub fn dispatch(config: &RunConfig, opts: DispatchOptions) -> RunReport {
    let start = Instant::now();
    let sm = config.siegel();
    let omega = sm.as_ref().map(omega_rows).unwrap_or_default();
    let outcome = sm.and_then(|sm| run_command(&sm, config, opts));
    let (status, payload, error) = match outcome {
        Ok((status, payload, error)) => (status, Some(payload), error),
        Err(e) => (RunStatus::Failed, None, Some(e.to_string())),
    };
    RunReport {
        artifact_version: ARTIFACT_VERSION.to_owned(),
        status,
        config_echo: config.clone(),
        omega,
        conventions: "complex numbers are [re, im]; divisor points are reported as ζ, not 2ζ".into(),
        payload,
        error,
        timing_ms: opts.timing.then(|| start.elapsed().as_millis() as u64),
    }
}

type Outcome = crate::Result<(RunStatus, Payload, Option<String>)>;

fn run_command(sm: &SiegelMatrix, config: &RunConfig, opts: DispatchOptions) -> Outcome {
    let policy = config.policy()?;
    match config.command {
        Command::ThetaEval => theta_eval_cmd(sm, config, &policy),
        Command::AdditionCheck => addition_cmd(sm, config, &policy),
        Command::SecantCheck => secant_check_cmd(sm, config, &policy),
        Command::SecantSearch => secant_search_cmd(sm, config, &policy),
        Command::HierarchyRun => hierarchy_cmd(sm, config, opts, &policy),
        Command::RestrictionCheck => restriction_cmd(sm, config, &policy),
    }
}

fn theta_eval_cmd(sm: &SiegelMatrix, config: &RunConfig, policy: &TruncationPolicy) -> Outcome {
    let g = sm.genus();
    let ch = match &config.characteristic {
        Some(c) => ThetaCharacteristic::new(c.a.clone(), c.b.clone())?,
        None => ThetaCharacteristic::zero(g),
    };
    let mut values = Vec::new();
    for z in config.points.as_deref().unwrap_or_default() {
        let entry = match (&config.directions, config.jet_order) {
            (Some(dirs), Some(order)) => {
                let jet = theta_jet(sm, &ch, z, dirs, order, policy)?;
                ThetaValue {
                    z: z.clone(),
                    value: jet.value(),
                    jet: jet
                        .entries()
                        .map(|(k, v)| JetValue {
                            multi_order: k.to_vec(),
                            value: v,
                        })
                        .collect(),
                }
            }
            _ => ThetaValue {
                z: z.clone(),
                value: theta_eval(sm, &ch, z, policy)?,
                jet: Vec::new(),
            },
        };
        values.push(entry);
    }
    Ok((RunStatus::Success, Payload::ThetaEval { values }, None))
}

fn addition_cmd(sm: &SiegelMatrix, config: &RunConfig, policy: &TruncationPolicy) -> Outcome {
    let samples = config.samples.unwrap_or(100);
    let tolerance = config.tol_check.unwrap_or(1e-9);
    let mut r = rng(derive_seed(config.seed(), ADDITION_SALT));
    let mut residuals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z = random_torus_point(sm, 0.5, &mut r);
        let w = random_torus_point(sm, 0.5, &mut r);
        residuals.push(addition_formula_residual(sm, &z, &w, policy)?);
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok((
        RunStatus::Success,
        Payload::AdditionCheck {
            samples,
            tolerance,
            max_residual,
            passed: max_residual <= tolerance,
            residuals,
        },
        None,
    ))
}

fn secant_check_cmd(sm: &SiegelMatrix, config: &RunConfig, policy: &TruncationPolicy) -> Outcome {
    let tol_rank = config.tol_rank.unwrap_or(DEFAULT_TOL_RANK);
    let mode = config.mode.unwrap_or_default();
    let g = sm.genus();
    match mode {
        SecantMode::Honest => {
            let points = match (&config.points, config.random_points) {
                (Some(p), _) => p.clone(),
                (None, n) => {
                    let mut r = rng(derive_seed(config.seed(), POINTS_SALT));
                    (0..n.unwrap_or(3))
                        .map(|_| random_torus_point(sm, 0.5, &mut r))
                        .collect()
                }
            };
            let zeta = config.zeta.clone().unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); g]);
            let sc = center_config(&points)?;
            let report = honest_secant_test(sm, &sc, &zeta, tol_rank, policy)?;
            Ok((
                RunStatus::Success,
                Payload::SecantCheck {
                    mode,
                    points: Some(points),
                    zeta: Some(zeta),
                    report,
                },
                None,
            ))
        }
        SecantMode::Degenerate => {
            let u = config.u.as_deref().unwrap_or_default();
            let d1 = config.d1.as_deref().unwrap_or_default();
            let b = config.b.as_deref().unwrap_or_default();
            let report = degenerate_secant_test(sm, u, d1, b, tol_rank, policy)?;
            Ok((
                RunStatus::Success,
                Payload::SecantCheck {
                    mode,
                    points: None,
                    zeta: None,
                    report,
                },
                None,
            ))
        }
    }
}

fn search(sm: &SiegelMatrix, config: &RunConfig, policy: &TruncationPolicy) -> crate::Result<SecantSearchResult> {
    find_degenerate_secant(
        sm,
        config.m.unwrap_or(1),
        config.seed(),
        config.tol_search.unwrap_or(1e-8),
        config.max_iters.unwrap_or(200),
        policy,
    )
}

fn secant_search_cmd(sm: &SiegelMatrix, config: &RunConfig, policy: &TruncationPolicy) -> Outcome {
    let result = search(sm, config, policy)?;
    let rank_check = degenerate_secant_test(
        sm,
        &result.config.centered_u,
        &result.d1,
        &result.config.centered_b,
        config.tol_rank.unwrap_or(DEFAULT_TOL_RANK),
        policy,
    )?;
    Ok((RunStatus::Success, Payload::SecantSearch { result, rank_check }, None))
}

fn failure_text(f: &Option<OrderFailure>) -> Option<String> {
    f.as_ref().map(|f| format!("order {}: {}", f.order, f.reason))
}

fn hierarchy_cmd(sm: &SiegelMatrix, config: &RunConfig, opts: DispatchOptions, policy: &TruncationPolicy) -> Outcome {
    let s_max = config.s_max.unwrap_or(0);
    let tol_solve = config.tol_solve.unwrap_or(1e-8);
    let (state, found) = match &config.points {
        Some(points) => {
            let sc = center_config(points)?;
            let spec = GridSpec {
                count: config.grid_size,
                seed: derive_seed(config.seed(), GRID_SALT),
            };
            let grid = SampleGrid::generate(sm, &sc.centered_u, spec, policy)?;
            (HierarchyState::new(sm.clone(), sc, grid)?, None)
        }
        None => {
            let mut found = search(sm, config, policy)?;
            let state = found.state.take().expect("search returns its state");
            (state, Some(found))
        }
    };
    let run: HierarchyRun = continue_hierarchy(state, s_max, tol_solve, policy);
    let diagnostics = if opts.verbose {
        let sections = (1..=run.state.solved_order())
            .map(|s| section_sample(&run.state, s, policy))
            .collect::<crate::Result<Vec<_>>>()?;
        Some(GridDiagnostics {
            points: run.state.grid.points.clone(),
            sections,
        })
    } else {
        None
    };
    let error = failure_text(&run.failure);
    Ok((
        run.status(),
        Payload::HierarchyRun {
            config: run.state.config.clone(),
            search: found,
            grid: GridInfo {
                seed: run.state.grid.seed,
                count: run.state.grid.count(),
            },
            s_max,
            tol_solve,
            gauge: run.state.alphas.gauge(),
            orders: run.state.order_records(),
            first_failure: run.failure.clone(),
            diagnostics,
        },
        error,
    ))
}

fn restriction_cmd(sm: &SiegelMatrix, config: &RunConfig, policy: &TruncationPolicy) -> Outcome {
    let s_max = config.s_max.unwrap_or(2);
    let mut found = search(sm, config, policy)?;
    let state = found.state.take().expect("search returns its state");
    let run = continue_hierarchy(state, s_max, config.tol_solve.unwrap_or(1e-6), policy);
    let intersection = divisor_intersection_points(
        sm,
        &found.config.centered_u,
        config.n_starts.unwrap_or(24),
        config.tol_divisor.unwrap_or(1e-10),
        policy,
    )?;
    let reachable = (run.state.solved_order() + 1).min(s_max);
    let mut restriction = Vec::new();
    let mut solvability = Vec::new();
    for s in 1..=reachable {
        restriction.push(RestrictionValue {
            order: s,
            residual: restriction_check(&run.state, s, &intersection, policy)?,
        });
        solvability.push(restriction_solvability_check(&run.state, s, &intersection, policy)?);
    }
    let error = failure_text(&run.failure);
    Ok((
        run.status(),
        Payload::RestrictionCheck {
            search: found,
            orders: run.state.order_records(),
            first_failure: run.failure,
            intersection,
            restriction,
            solvability,
        },
        error,
    ))
}

/// Whether the error is a configuration problem rather than a numerical
/// outcome.
pub fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::NotSquare { .. }
            | Error::NotSymmetric { .. }
            | Error::ImaginaryPartNotPositiveDefinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidPolicy(_)
    )
}
