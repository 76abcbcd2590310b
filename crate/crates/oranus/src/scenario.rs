//! Scenario files: one TOML document describing a study, expanded into a
//! list of deterministic runs, plus the three experiment drivers
//! (end-to-end comparison, bound validation, allocator complexity).

use crate::domain::{validate_config, CellConfig, ServiceSpec, TrafficSource};
use crate::estimator::{MdnModel, PessimisticEstimator};
use crate::near_rt::{allocate_guaranteed, brute_force_allocate, enumeration_size};
use crate::report::{fmt_sig9, write_report, write_table};
use crate::sim::{
    self, collect_windows, DelayRecord, EstimatorChoice, FsmParams, SimError, SimMode, SimRun,
};
use crate::snc::Algorithm1Params;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Run every mode over the sweep and emit per-run reports.
    #[default]
    Endtoend,
    /// Per sweep point, compare the model bound with the simulated
    /// (1-epsilon)-quantile; emits a relative-error table.
    Validate,
    /// Per sweep point, compare the iterative allocator with brute force;
    /// emits an objective/iteration table.
    Complexity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub kind: ScenarioKind,
    pub cell: CellConfig,
    pub services: Vec<ServiceSpec>,
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    /// One of `pessimistic`, `empirical`, `mdn`.
    #[serde(default = "default_estimator")]
    pub estimator: String,
    /// Model file, required when estimator = "mdn".
    #[serde(default)]
    pub mdn_model: Option<String>,
    #[serde(default)]
    pub sweep: Sweep,
    /// Subdirectory under the output root; defaults to the scenario name.
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_modes() -> Vec<String> {
    vec!["oranus".into()]
}

fn default_estimator() -> String {
    "empirical".into()
}

fn default_eta() -> f64 {
    0.75
}

fn default_tau() -> f64 {
    0.3
}

/// Each axis, when present, must be nonempty; absent axes use the base
/// config value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub n_cell_rb: Option<Vec<u32>>,
    pub t_obs: Option<Vec<u64>>,
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Config(#[from] crate::domain::ConfigError),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("modes list is empty")]
    NoModes,
    #[error("sweep axis `{0}` is present but empty")]
    EmptySweepAxis(&'static str),
    #[error("unknown estimator `{0}` (expected pessimistic, empirical, or mdn)")]
    UnknownEstimator(String),
    #[error("estimator is mdn but no mdn_model file is set")]
    MissingMdnModel,
    #[error("referenced file not found: {0}")]
    MissingFile(String),
    #[error("bad model file: {0}")]
    BadModel(#[from] crate::estimator::MdnError),
    #[error("run failed: {0}")]
    Run(#[from] SimError),
    #[error("allocator failed: {0}")]
    Allocator(#[from] crate::near_rt::NearRtError),
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

pub fn parse_mode(name: &str) -> Result<SimMode, ScenarioError> {
    match name {
        "oranus" => Ok(SimMode::Oranus),
        "ref1_edf_only" => Ok(SimMode::Ref1EdfOnly),
        "ref2_dedicated_snc" => Ok(SimMode::Ref2DedicatedSnc),
        "ref3_snc_rt_no_mitigation" => Ok(SimMode::Ref3SncRtNoMitigation),
        other => Err(ScenarioError::UnknownMode(other.into())),
    }
}

impl Scenario {
    /// Parses and fully validates a scenario file. Relative paths inside the
    /// scenario resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut scenario: Scenario = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        scenario.resolve_paths(base);
        scenario.validate()?;
        Ok(scenario)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut String| {
            if !Path::new(p).is_absolute() {
                *p = base.join(&*p).display().to_string();
            }
        };
        for svc in &mut self.services {
            if let TrafficSource::Trace { path } = &mut svc.source {
                resolve(path);
            }
        }
        if let Some(model) = &mut self.mdn_model {
            resolve(model);
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        validate_config(&self.cell, &self.services)?;
        if self.modes.is_empty() {
            return Err(ScenarioError::NoModes);
        }
        for mode in &self.modes {
            parse_mode(mode)?;
        }
        match self.estimator.as_str() {
            "pessimistic" | "empirical" => {}
            "mdn" => {
                let model = self.mdn_model.as_ref().ok_or(ScenarioError::MissingMdnModel)?;
                if !Path::new(model).is_file() {
                    return Err(ScenarioError::MissingFile(model.clone()));
                }
            }
            other => return Err(ScenarioError::UnknownEstimator(other.into())),
        }
        for svc in &self.services {
            if let TrafficSource::Trace { path } = &svc.source {
                if !Path::new(path).is_file() {
                    return Err(ScenarioError::MissingFile(path.clone()));
                }
            }
        }
        let check_axis = |name, empty: bool| {
            if empty {
                Err(ScenarioError::EmptySweepAxis(name))
            } else {
                Ok(())
            }
        };
        check_axis("n_cell_rb", self.sweep.n_cell_rb.as_deref() == Some(&[]))?;
        check_axis("t_obs", self.sweep.t_obs.as_deref() == Some(&[]))?;
        check_axis("seeds", self.sweep.seeds.as_deref() == Some(&[]))?;
        Ok(())
    }

    fn estimator_choice(&self) -> Result<EstimatorChoice, ScenarioError> {
        Ok(match self.estimator.as_str() {
            "pessimistic" => EstimatorChoice::Pessimistic,
            "empirical" => EstimatorChoice::Empirical,
            "mdn" => {
                let path = self.mdn_model.as_ref().ok_or(ScenarioError::MissingMdnModel)?;
                let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
                    path: path.clone(),
                    source,
                })?;
                EstimatorChoice::Mdn(MdnModel::load_from_string(&text)?)
            }
            other => return Err(ScenarioError::UnknownEstimator(other.into())),
        })
    }

    /// Expands the sweep into labeled deterministic runs.
    pub fn expand(&self) -> Result<Vec<(String, SimRun)>, ScenarioError> {
        let estimator = self.estimator_choice()?;
        let rbs = self
            .sweep
            .n_cell_rb
            .clone()
            .unwrap_or_else(|| vec![self.cell.n_cell_rb]);
        let t_obs_axis = self
            .sweep
            .t_obs
            .clone()
            .unwrap_or_else(|| vec![self.cell.t_obs]);
        let seeds = self.sweep.seeds.clone().unwrap_or_else(|| vec![self.seed]);
        let mut points = Vec::new();
        for mode_name in &self.modes {
            let mode = parse_mode(mode_name)?;
            for &n_cell_rb in &rbs {
                for &t_obs in &t_obs_axis {
                    for &seed in &seeds {
                        let mut cell = self.cell.clone();
                        cell.n_cell_rb = n_cell_rb;
                        cell.t_obs = t_obs;
                        let label =
                            format!("{mode_name}_rb{n_cell_rb}_tobs{t_obs}_seed{seed}");
                        points.push((
                            label,
                            SimRun {
                                mode,
                                cell,
                                specs: self.services.clone(),
                                horizon: self.horizon,
                                seed,
                                estimator: estimator.clone(),
                                fsm: FsmParams { eta: self.eta, tau: self.tau },
                            },
                        ));
                    }
                }
            }
        }
        Ok(points)
    }

    pub fn output_dir(&self, root: &Path) -> PathBuf {
        root.join(self.out_dir.as_deref().unwrap_or(&self.name))
    }
}

/// Empirical (1-epsilon)-quantile of a service's packet delays.
pub fn delay_quantile(records: &[DelayRecord], service: usize, epsilon: f64) -> Option<f64> {
    let mut delays: Vec<f64> = records
        .iter()
        .filter(|r| r.service_id == service)
        .map(|r| r.delay_s)
        .collect();
    if delays.is_empty() {
        return None;
    }
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (((1.0 - epsilon) * delays.len() as f64).ceil() as usize)
        .clamp(1, delays.len());
    Some(delays[rank - 1])
}

/// Runs the whole study and writes every report under `root`.
pub fn run_experiment(scenario: &Scenario, root: &Path) -> Result<(), ScenarioError> {
    let dir = scenario.output_dir(root);
    let points = scenario.expand()?;
    match scenario.kind {
        ScenarioKind::Endtoend => {
            let results = run_points(&points)?;
            for ((label, spec), metrics) in points.iter().zip(&results) {
                write_report(&dir, label, &scenario.name, spec, metrics)?;
            }
        }
        ScenarioKind::Validate => {
            let results = run_points(&points)?;
            let mut rows = Vec::new();
            for ((label, spec), metrics) in points.iter().zip(&results) {
                write_report(&dir, label, &scenario.name, spec, metrics)?;
                let last = metrics.allocations.iter().rev().find(|a| a.feasible);
                for (s, svc) in spec.specs.iter().enumerate() {
                    let w_mod = last.map(|a| a.w[s]).unwrap_or(f64::INFINITY);
                    let w_sim = delay_quantile(&metrics.records, s, svc.epsilon);
                    let eps_r = match (w_mod.is_finite(), w_sim) {
                        (true, Some(ws)) if ws > 0.0 => (w_mod - ws) / ws * 100.0,
                        _ => f64::NAN,
                    };
                    rows.push(format!(
                        "{},{},{},{},{},{}",
                        label,
                        spec.cell.t_obs,
                        s,
                        fmt_sig9(w_mod),
                        fmt_sig9(w_sim.unwrap_or(f64::NAN)),
                        fmt_sig9(eps_r)
                    ));
                }
            }
            write_table(
                &dir,
                "validation",
                "run,t_obs,service_id,w_mod_s,w_sim_s,eps_r_pct",
                &rows,
            )?;
        }
        ScenarioKind::Complexity => {
            let mut rows = Vec::new();
            let alg1 = Algorithm1Params::default();
            for (label, spec) in &points {
                let windows = collect_windows(spec)?;
                let estimator = PessimisticEstimator;
                let alg =
                    allocate_guaranteed(&windows, &estimator, &spec.cell, &spec.specs, alg1)?;
                let bf = brute_force_allocate(
                    &windows,
                    &estimator,
                    &spec.cell,
                    &spec.specs,
                    alg1,
                    2_000_000,
                )?;
                let enumerated = enumeration_size(spec.cell.n_cell_rb, spec.specs.len());
                let gap_pct = if bf.objective > 0.0 && bf.objective.is_finite() {
                    (alg.objective - bf.objective) / bf.objective * 100.0
                } else {
                    f64::NAN
                };
                rows.push(format!(
                    "{},{},{},{},{},{},{},{}",
                    label,
                    spec.cell.n_cell_rb,
                    spec.specs.len(),
                    fmt_sig9(alg.objective),
                    fmt_sig9(bf.objective),
                    fmt_sig9(gap_pct),
                    alg.iterations,
                    enumerated
                ));
            }
            write_table(
                &dir,
                "complexity",
                "run,n_cell_rb,n_services,alg_objective,bf_objective,gap_pct,alg_iterations,enumeration_size",
                &rows,
            )?;
        }
    }
    Ok(())
}

fn run_points(points: &[(String, SimRun)]) -> Result<Vec<sim::RunMetrics>, SimError> {
    #[cfg(feature = "parallel")]
    {
        points.par_iter().map(|(_, spec)| sim::run(spec)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|(_, spec)| sim::run(spec)).collect()
    }
}
