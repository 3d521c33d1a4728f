//! Rolling-origin evaluation: tune on a development timestep, then for every
//! test timestep train on everything strictly earlier and score.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{self, AdaptiveConfig, AdaptiveFit, Schedule, Sharing};
use crate::baselines::{fit_baseline, fit_lasso, BaselineConfig, BaselineKind, LassoSolver};
use crate::data::{CoefficientSheet, Response, Task, TimedDataset};
use crate::error::{Error, Result};
use crate::export::{sparsity_report, SparsityReport, DEFAULT_EPSILON};
use crate::likelihood::{predict, token_nll, Prediction};
use crate::optimize::{OptimizerConfig, Termination};
use crate::varprior::DEFAULT_TRUNCATION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Adaptive,
    RidgeOne,
    RidgeAll,
    RidgeTs,
    LassoOne,
    LassoAll,
}

impl Model {
    pub const ALL: [Model; 6] =
        [Model::Adaptive, Model::RidgeOne, Model::RidgeAll, Model::RidgeTs, Model::LassoOne, Model::LassoAll];

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Model::Adaptive => None,
            Model::RidgeOne => Some(BaselineKind::RidgeOne),
            Model::RidgeAll => Some(BaselineKind::RidgeAll),
            Model::RidgeTs => Some(BaselineKind::RidgeTs),
            Model::LassoOne => Some(BaselineKind::LassoOne),
            Model::LassoAll => Some(BaselineKind::LassoAll),
        }
    }

    pub fn name(self) -> &'static str {
        self.baseline().map_or("adaptive", BaselineKind::name)
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown model {s:?}")))
    }
}

/// How the adaptive model's coefficients start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Lasso on the last training timestep, copied to every timestep.
    Lasso,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub tau: Vec<f64>,
    pub strength: Vec<f64>,
    pub ts_alpha: Vec<f64>,
    pub ts_lambda: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            tau: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            strength: vec![1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0],
            ts_alpha: vec![0.0, -0.1, -0.2, -0.3, -0.4, -0.49],
            ts_lambda: vec![1e-2, 1e-1, 1.0, 10.0],
        }
    }
}

/// Alternation rounds of the default block-coordinate schedule. Joint
/// quasi-Newton steps barely move the autocorrelation rates because the
/// coefficient block dominates the curvature.
pub const DEFAULT_ROUNDS: usize = 10;
/// Lasso weight of the default starting point. Weights tuned for forecasting
/// tend to zero out whole features before the prior gets a say.
pub const DEFAULT_INIT_STRENGTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: Model,
    pub dev_timestep: usize,
    pub test_timesteps: Vec<usize>,
    pub grids: Grids,
    pub optimizer: OptimizerConfig,
    pub sharing: Sharing,
    pub schedule: Schedule,
    pub init: InitKind,
    /// Lasso weight for the adaptive model's starting point; tuned on the
    /// development timestep like lasso-one when absent.
    pub init_strength: Option<f64>,
    pub freeze_zero_groups: bool,
    pub truncation: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(model: Model, dev_timestep: usize, test_timesteps: Vec<usize>) -> Self {
        Self {
            model,
            dev_timestep,
            test_timesteps,
            grids: Grids::default(),
            optimizer: OptimizerConfig::default(),
            sharing: Sharing::Shared,
            schedule: Schedule::BlockCoordinate { rounds: DEFAULT_ROUNDS },
            init: InitKind::Lasso,
            init_strength: Some(DEFAULT_INIT_STRENGTH),
            freeze_zero_groups: false,
            truncation: DEFAULT_TRUNCATION,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }

    pub fn validate(&self, data: &TimedDataset) -> Result<()> {
        if self.dev_timestep < 2 {
            return Err(Error::config("the development timestep needs earlier training data"));
        }
        if self.test_timesteps.is_empty() {
            return Err(Error::config("at least one test timestep is required"));
        }
        for &t in &self.test_timesteps {
            if t <= self.dev_timestep {
                return Err(Error::config(format!("test timestep {t} does not follow the development timestep")));
            }
            if t > data.timesteps {
                return Err(Error::config(format!("test timestep {t} beyond the last timestep {}", data.timesteps)));
            }
        }
        if self.test_timesteps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("test timesteps must be strictly increasing"));
        }
        if data.instances_at(self.dev_timestep).next().is_none() {
            return Err(Error::config("the development timestep has no instances"));
        }
        if !data.instances.iter().any(|i| i.t < self.dev_timestep) {
            return Err(Error::config("no training data before the development timestep"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        let grid = |name: &str, v: &[f64]| {
            if v.is_empty() {
                Err(Error::config(format!("{name} grid is empty")))
            } else {
                Ok(())
            }
        };
        match self.model {
            Model::Adaptive => grid("tau", &self.grids.tau)?,
            Model::RidgeTs => {
                grid("ts_alpha", &self.grids.ts_alpha)?;
                grid("ts_lambda", &self.grids.ts_lambda)?;
            }
            _ => grid("strength", &self.grids.strength)?,
        }
        if self.model == Model::Adaptive && self.init == InitKind::Lasso && self.init_strength.is_none() {
            grid("strength", &self.grids.strength)?;
        }
        self.optimizer.validate()
    }

    fn adaptive_config(&self, tau: f64) -> AdaptiveConfig {
        AdaptiveConfig {
            tau,
            truncation: self.truncation,
            sharing: self.sharing,
            schedule: self.schedule,
            optimizer: self.optimizer.clone(),
            freeze_zero_groups: self.freeze_zero_groups,
            ..AdaptiveConfig::new(tau)
        }
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyper {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ts_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ts_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_strength: Option<f64>,
}

fn candidates(model: Model, grids: &Grids, init_strength: Option<f64>) -> Vec<Hyper> {
    match model {
        Model::Adaptive => grids.tau.iter().map(|&t| Hyper { tau: Some(t), init_strength, ..Hyper::default() }).collect(),
        Model::RidgeTs => grids
            .ts_alpha
            .iter()
            .flat_map(|&a| {
                grids.ts_lambda.iter().map(move |&l| Hyper { ts_alpha: Some(a), ts_lambda: Some(l), ..Hyper::default() })
            })
            .collect(),
        _ => grids.strength.iter().map(|&s| Hyper { strength: Some(s), ..Hyper::default() }).collect(),
    }
}

/// A model fitted on one training window, ready to predict the next timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: Model,
    pub task: Task,
    pub hyper: Hyper,
    /// Coefficients over the training timeline; a single slice for baselines
    /// that collapse time.
    pub beta: CoefficientSheet,
    /// Background log-frequencies paired with the last slice (text only).
    pub theta: Option<Vec<f64>>,
    pub adaptive: Option<AdaptiveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
}

/// The variational side of an adaptive fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSummary {
    pub expected_alpha: Vec<f64>,
    pub feature_alpha: Vec<f64>,
    pub bound: f64,
    pub truncation: f64,
    pub trace: TraceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub initial_value: f64,
    pub final_value: f64,
    pub monotone: bool,
}

impl AdaptiveSummary {
    fn from_fit(fit: &AdaptiveFit, truncation: f64) -> Self {
        let t = &fit.trace;
        Self {
            expected_alpha: fit.expected_alpha.clone(),
            feature_alpha: fit.feature_alphas(),
            bound: fit.bound,
            truncation,
            trace: TraceSummary {
                iterations: t.iterations(),
                evaluations: t.evaluations,
                termination: t.termination,
                initial_value: t.entries.first().map_or(f64::NAN, |e| e.value),
                final_value: t.final_value(),
                monotone: t.is_monotone(),
            },
        }
    }
}

impl TrainedModel {
    pub fn last_slice(&self) -> CoefficientSheet {
        self.beta.last_slice()
    }

    /// Sum of squared errors (regression) or token negative log-likelihood
    /// (text) over `instances`, and their count.
    pub fn score<'a>(&self, instances: impl Iterator<Item = &'a crate::data::Instance>) -> Result<(f64, usize)> {
        let slice = self.last_slice();
        let (mut total, mut count) = (0.0, 0);
        for inst in instances {
            let p = predict(&slice, &inst.features, self.task, self.theta.as_deref())?;
            total += match (p, &inst.response) {
                (Prediction::Real(yhat), Response::Real(y)) => (y - yhat) * (y - yhat),
                (Prediction::Distribution(probs), Response::Tokens(toks)) => {
                    let logp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
                    token_nll(&logp, toks)
                }
                _ => return Err(Error::Type("response does not match the model's task".into())),
            };
            count += 1;
        }
        Ok((total, count))
    }
}

/// Fits `model` with hyperparameters `hyper` on `train`, whose timesteps are
/// taken as the whole training timeline.
pub fn train(train: &TimedDataset, cfg: &RunConfig, model: Model, hyper: &Hyper) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::input("training data has no instances"));
    }
    let mut train = train.clone();
    if train.task == Task::Sage && train.theta.is_none() {
        train.estimate_background();
    }
    let (beta, theta, adaptive) = match model.baseline() {
        Some(kind) => {
            let bcfg = BaselineConfig {
                kind,
                strength: hyper.strength.unwrap_or(0.0),
                ts_alpha: hyper.ts_alpha,
                ts_lambda: hyper.ts_lambda,
            };
            let fit = fit_baseline(&train, &bcfg, &cfg.optimizer)?;
            (fit.beta, fit.theta, None)
        }
        None => {
            let tau = hyper.tau.ok_or_else(|| Error::config("adaptive model needs tau"))?;
            let acfg = cfg.adaptive_config(tau);
            let init = match cfg.init {
                InitKind::Zero => None,
                InitKind::Lasso => {
                    let strength = hyper
                        .init_strength
                        .ok_or_else(|| Error::config("lasso initialization needs a strength"))?;
                    let last = train.window(train.timesteps, train.timesteps)?.data;
                    Some(if last.is_empty() {
                        CoefficientSheet::zeros(train.num_features, train.classes(), 1)
                    } else {
                        fit_lasso(&last, strength, &LassoSolver::default())?
                    })
                }
            };
            let fit = adaptive::fit(&train, &acfg, init.as_ref())?;
            let summary = AdaptiveSummary::from_fit(&fit, acfg.truncation);
            let theta = train.theta.as_ref().map(|th| th[th.len() - 1].clone());
            (fit.beta, theta, Some(summary))
        }
    };
    Ok(TrainedModel {
        model,
        task: train.task,
        hyper: *hyper,
        beta,
        theta,
        adaptive,
        feature_names: train.feature_names.clone(),
        words: train.words.clone(),
    })
}

/// Trains on timesteps `1..target` and scores timestep `target`, checking
/// that no scored instance was used for training.
fn fit_and_score(data: &TimedDataset, cfg: &RunConfig, model: Model, hyper: &Hyper, target: usize) -> Result<Step> {
    let window = data.window(1, target - 1)?;
    let test_ids: BTreeSet<usize> =
        data.instances.iter().enumerate().filter(|(_, i)| i.t == target).map(|(k, _)| k).collect();
    if window.source_ids.iter().any(|k| test_ids.contains(k)) {
        return Err(Error::config(format!("training window overlaps test timestep {target}")));
    }
    let fitted = train(&window.data, cfg, model, hyper)?;
    let (total, count) = fitted.score(data.instances_at(target))?;
    Ok(Step { total, count, train_instances: window.source_ids.len(), fitted })
}

struct Step {
    total: f64,
    count: usize,
    train_instances: usize,
    fitted: TrainedModel,
}

fn metric_of(task: Task, total: f64, count: usize) -> f64 {
    match task {
        Task::Gaussian => total / count.max(1) as f64,
        Task::Sage => total,
    }
}

/// Picks the grid point with the best development score; ties go to the
/// earliest point.
fn tune(data: &TimedDataset, cfg: &RunConfig, model: Model, grid: &[Hyper]) -> Result<(Hyper, f64)> {
    let scores: Vec<Result<f64>> = grid
        .par_iter()
        .map(|h| {
            let s = fit_and_score(data, cfg, model, h, cfg.dev_timestep)?;
            Ok(metric_of(data.task, s.total, s.count))
        })
        .collect();
    let mut best: Option<(Hyper, f64)> = None;
    for (h, s) in grid.iter().zip(scores) {
        let s = s?;
        let s = if s.is_nan() { f64::INFINITY } else { s };
        if best.as_ref().is_none_or(|(_, b)| s < *b) {
            best = Some((*h, s));
        }
    }
    best.ok_or_else(|| Error::config("empty hyperparameter grid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub timestep: usize,
    pub train_instances: usize,
    pub test_instances: usize,
    pub metric: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: Model,
    pub task: Task,
    /// "mse" (mean squared error per instance) or "nll" (summed token
    /// negative log-likelihood).
    pub metric: String,
    /// How per-timestep metrics combine into `overall`.
    pub aggregation: String,
    pub selected: Hyper,
    pub dev_metric: f64,
    pub steps: Vec<StepReport>,
    pub overall: f64,
    /// Per-feature E[α] of the fit for the last test timestep (adaptive only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_alpha: Option<Vec<f64>>,
    /// Sparsity of the fit for the last test timestep.
    pub sparsity: SparsityReport,
    /// Every scored instance was outside its training window.
    pub provenance_checked: bool,
    pub seed: u64,
}

/// The full rolling-origin evaluation, returning the report and the model
/// fitted for the last test timestep.
pub fn rolling_eval_with_model(data: &TimedDataset, cfg: &RunConfig) -> Result<(FitReport, TrainedModel)> {
    cfg.validate(data)?;
    let init_strength = match (cfg.model, cfg.init) {
        (Model::Adaptive, InitKind::Lasso) => match cfg.init_strength {
            Some(s) => Some(s),
            None => Some(tune(data, cfg, Model::LassoOne, &candidates(Model::LassoOne, &cfg.grids, None))?.0.strength.unwrap_or(1.0)),
        },
        _ => None,
    };
    let grid = candidates(cfg.model, &cfg.grids, init_strength);
    let (selected, dev_metric) = tune(data, cfg, cfg.model, &grid)?;

    let steps: Vec<Result<Step>> =
        cfg.test_timesteps.par_iter().map(|&t| fit_and_score(data, cfg, cfg.model, &selected, t)).collect();
    let steps: Vec<Step> = steps.into_iter().collect::<Result<_>>()?;

    let (mut total, mut count) = (0.0, 0);
    let mut reports = Vec::with_capacity(steps.len());
    for (s, &t) in steps.iter().zip(&cfg.test_timesteps) {
        total += s.total;
        count += s.count;
        reports.push(StepReport {
            timestep: t,
            train_instances: s.train_instances,
            test_instances: s.count,
            metric: metric_of(data.task, s.total, s.count),
            trace: s.fitted.adaptive.as_ref().map(|a| a.trace.clone()),
        });
    }
    let last = steps.into_iter().last().expect("at least one test timestep").fitted;
    let report = FitReport {
        model: cfg.model,
        task: data.task,
        metric: match data.task {
            Task::Gaussian => "mse",
            Task::Sage => "nll",
        }
        .into(),
        aggregation: match data.task {
            Task::Gaussian => "instance-weighted mean",
            Task::Sage => "sum over test timesteps",
        }
        .into(),
        selected,
        dev_metric,
        steps: reports,
        overall: metric_of(data.task, total, count),
        feature_alpha: last.adaptive.as_ref().map(|a| a.feature_alpha.clone()),
        sparsity: sparsity_report(&last.beta, cfg.epsilon)?,
        provenance_checked: true,
        seed: cfg.seed,
    };
    Ok((report, last))
}

pub fn rolling_eval(data: &TimedDataset, cfg: &RunConfig) -> Result<FitReport> {
    Ok(rolling_eval_with_model(data, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;

    fn constant_data() -> TimedDataset {
        let mut d = TimedDataset::new(Task::Gaussian, 4, 2, 0).unwrap();
        for t in 1..=4 {
            for k in 0..10 {
                d.push(Instance {
                    t,
                    features: vec![(0, 1.0), (1, ((k + t) as f64).sin())],
                    response: Response::Real(3.0),
                })
                .unwrap();
            }
        }
        d
    }

    #[test]
    fn config_checks() {
        let d = constant_data();
        assert!(RunConfig::new(Model::RidgeOne, 1, vec![2]).validate(&d).is_err());
        assert!(RunConfig::new(Model::RidgeOne, 3, vec![3]).validate(&d).is_err());
        assert!(RunConfig::new(Model::RidgeOne, 2, vec![5]).validate(&d).is_err());
        assert!(RunConfig::new(Model::RidgeOne, 2, vec![4, 3]).validate(&d).is_err());
        assert!(RunConfig::new(Model::RidgeOne, 3, vec![4]).validate(&d).is_ok());
    }

    #[test]
    fn training_window_precedes_test() {
        let d = constant_data();
        let cfg = RunConfig::new(Model::RidgeAll, 3, vec![4]);
        let rep = rolling_eval(&d, &cfg).unwrap();
        assert_eq!(rep.steps[0].train_instances, 30);
        assert_eq!(rep.steps[0].test_instances, 10);
        assert!(rep.provenance_checked);
    }

    #[test]
    fn constant_response_with_bias_feature() {
        // test-fold variance is zero; every model should reach it up to its shrinkage of the bias
        let d = constant_data();
        for model in Model::ALL {
            let mut cfg = RunConfig::new(model, 3, vec![4]);
            cfg.grids.strength = vec![1e-6, 1e-3];
            cfg.grids.ts_lambda = vec![1e3];
            cfg.grids.tau = vec![1.0];
            let rep = rolling_eval(&d, &cfg).unwrap();
            assert!(rep.overall < 1e-3, "{}: {}", model.name(), rep.overall);
        }
    }

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.name().parse::<Model>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("ridge".parse::<Model>().is_err());
    }

    #[test]
    fn reports_are_reproducible() {
        let (d, _) = crate::synth::generate(&crate::synth::GenSpec::default_text(4)).unwrap();
        let mut cfg = RunConfig::new(Model::Adaptive, 3, vec![4, 5]);
        cfg.grids.tau = vec![0.1, 1.0];
        cfg.grids.strength = vec![1.0, 10.0];
        let a = serde_json::to_string(&rolling_eval(&d, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&rolling_eval(&d, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
