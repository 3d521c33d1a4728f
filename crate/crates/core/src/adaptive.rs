//! The adaptive time-series model: the relaxed variational bound as a
//! function of one flat parameter vector, and its maximization.
//!
//! The vector is laid out as `[β | u | v]`. β follows the coefficient sheet's
//! layout; `u` and `v` hold one entry per group with a = 1 + ε_a + eᵘ and
//! κ = eᵛ. The Gamma scale b is never a free variable: it is recomputed in
//! closed form from (a, κ, β) at every evaluation, so the gradient seen by the
//! optimizer is that of the profiled bound.

use serde::{Deserialize, Serialize};

use crate::data::{CoefficientSheet, TimedDataset};
use crate::error::{check_len, Error, Result};
use crate::likelihood::Likelihood;
use crate::optimize::{maximize, ConvergenceTrace, OptimizerConfig, Termination, TraceEntry};
use crate::varprior::{
    group_terms, solve_b, trunc_exp_mean, GroupStats, GroupVariational, PriorConfig, DEFAULT_TRUNCATION,
};

/// How coefficients of the multinomial task are grouped under one (λ, α).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sharing {
    /// One group per feature, covering that feature's trajectories for every word.
    Shared,
    /// One group per (feature, word) trajectory.
    PerWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Schedule {
    /// All parameters in one quasi-Newton run.
    Joint,
    /// Alternate between the β block and the (u, v) block.
    BlockCoordinate { rounds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub tau: f64,
    /// Truncation C of the autocorrelation prior.
    pub truncation: f64,
    pub sharing: Sharing,
    pub schedule: Schedule,
    pub optimizer: OptimizerConfig,
    /// Keep groups that start exactly at zero fixed there.
    pub freeze_zero_groups: bool,
    pub b_min: f64,
    pub eps_a: f64,
}

impl AdaptiveConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            truncation: DEFAULT_TRUNCATION,
            sharing: Sharing::Shared,
            schedule: Schedule::Joint,
            optimizer: OptimizerConfig::default(),
            freeze_zero_groups: false,
            b_min: 1e-8,
            eps_a: 1e-3,
        }
    }
}

/// Initial Gamma shape of every group.
pub const INIT_SHAPE: f64 = 2.0;
/// Initial truncated-exponential rate of every group.
pub const INIT_RATE: f64 = 1.0;

/// The profiled bound as a function of `[β | u | v]`.
#[derive(Debug, Clone)]
pub struct AdaptiveObjective {
    likelihood: Likelihood,
    prior: PriorConfig,
    features: usize,
    classes: usize,
    timesteps: usize,
    groups: usize,
}

impl AdaptiveObjective {
    pub fn new(data: &TimedDataset, cfg: &AdaptiveConfig) -> Result<Self> {
        let classes = data.classes();
        let trajectories = match cfg.sharing {
            Sharing::Shared => classes,
            Sharing::PerWord => 1,
        };
        let prior = PriorConfig {
            tau: cfg.tau,
            c: cfg.truncation,
            timesteps: data.timesteps,
            trajectories,
            b_min: cfg.b_min,
            eps_a: cfg.eps_a,
        };
        prior.validate()?;
        cfg.optimizer.validate()?;
        Ok(Self {
            likelihood: Likelihood::new(data)?,
            prior,
            features: data.num_features,
            classes,
            timesteps: data.timesteps,
            groups: data.num_features * classes / trajectories,
        })
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn num_groups(&self) -> usize {
        self.groups
    }

    pub fn num_coefficients(&self) -> usize {
        self.features * self.classes * self.timesteps
    }

    pub fn dim(&self) -> usize {
        self.num_coefficients() + 2 * self.groups
    }

    /// Length of one group's slice of β.
    pub fn group_len(&self) -> usize {
        self.prior.group_dim()
    }

    pub fn shape_of(&self, u: f64) -> f64 {
        1.0 + self.prior.eps_a + u.exp()
    }

    pub fn unshape(&self, a: f64) -> Result<f64> {
        let excess = a - 1.0 - self.prior.eps_a;
        if !(excess > 0.0) {
            return Err(Error::domain(format!(
                "Gamma shape must exceed {}, got {a}",
                1.0 + self.prior.eps_a
            )));
        }
        Ok(excess.ln())
    }

    /// Packs a sheet and per-group (a, κ) into a parameter vector.
    pub fn pack(&self, beta: &CoefficientSheet, shapes: &[f64], rates: &[f64]) -> Result<Vec<f64>> {
        check_len(self.num_coefficients(), beta.values.len())?;
        check_len(self.groups, shapes.len())?;
        check_len(self.groups, rates.len())?;
        let mut x = beta.values.clone();
        for &a in shapes {
            x.push(self.unshape(a)?);
        }
        for &k in rates {
            if !(k > 0.0) {
                return Err(Error::domain(format!("rate must be positive, got {k}")));
            }
            x.push(k.ln());
        }
        Ok(x)
    }

    /// Starting point: the given coefficients with a = 2, κ = 1 everywhere.
    pub fn initial_point(&self, beta: &CoefficientSheet) -> Result<Vec<f64>> {
        self.pack(beta, &vec![INIT_SHAPE; self.groups], &vec![INIT_RATE; self.groups])
    }

    pub fn sheet(&self, x: &[f64]) -> CoefficientSheet {
        CoefficientSheet {
            features: self.features,
            classes: self.classes,
            timesteps: self.timesteps,
            values: x[..self.num_coefficients()].to_vec(),
        }
    }

    /// Per-group variational parameters at `x`, with b at its closed form.
    pub fn variational(&self, x: &[f64]) -> Result<Vec<GroupVariational>> {
        check_len(self.dim(), x.len())?;
        let nb = self.num_coefficients();
        let len = self.group_len();
        (0..self.groups)
            .map(|k| {
                let a = self.shape_of(x[nb + k]);
                let kappa = x[nb + self.groups + k].exp();
                let stats = GroupStats::from_stacked(&x[k * len..(k + 1) * len], self.timesteps)?;
                let b = solve_b(a, stats.qbar(trunc_exp_mean(kappa, self.prior.c)), &self.prior);
                Ok(GroupVariational { a, b, kappa })
            })
            .collect()
    }

    /// Bound value at `x`; the gradient is written into `grad`.
    pub fn eval(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        check_len(self.dim(), grad.len())?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let nb = self.num_coefficients();
        let (beta, params) = x.split_at(nb);
        let (g_beta, g_params) = grad.split_at_mut(nb);
        let mut value = self.likelihood.eval(beta, g_beta);
        let len = self.group_len();
        let (g_u, g_v) = g_params.split_at_mut(self.groups);
        for k in 0..self.groups {
            let group = &beta[k * len..(k + 1) * len];
            let u = params[k];
            let kappa = params[self.groups + k].exp();
            let a = self.shape_of(u);
            let stats = GroupStats::from_stacked(group, self.timesteps)?;
            let b = solve_b(a, stats.qbar(trunc_exp_mean(kappa, self.prior.c)), &self.prior);
            let terms = group_terms(&stats, &GroupVariational { a, b, kappa }, &self.prior)?;
            value += terms.value;
            crate::varprior::accumulate_prior_gradient(
                group,
                self.timesteps,
                terms.e_alpha,
                terms.e_inv_lambda,
                &mut g_beta[k * len..(k + 1) * len],
            );
            g_u[k] = terms.d_a * u.exp();
            g_v[k] = terms.d_kappa * kappa;
        }
        Ok(value)
    }

    /// Like [`eval`](Self::eval) but maps any domain failure to NaN, as the
    /// line search expects.
    fn eval_or_nan(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, grad).unwrap_or(f64::NAN)
    }
}

/// A fitted adaptive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveFit {
    pub beta: CoefficientSheet,
    pub groups: Vec<GroupVariational>,
    /// E[α] of every group, in group order.
    pub expected_alpha: Vec<f64>,
    pub bound: f64,
    pub sharing: Sharing,
    pub trace: ConvergenceTrace,
}

impl AdaptiveFit {
    /// E[α] per base feature, averaging over words under per-word sharing.
    pub fn feature_alphas(&self) -> Vec<f64> {
        let per = self.expected_alpha.len() / self.beta.features;
        self.expected_alpha
            .chunks(per)
            .map(|c| c.iter().sum::<f64>() / per as f64)
            .collect()
    }
}

fn finish(obj: &AdaptiveObjective, x: &[f64], bound: f64, sharing: Sharing, trace: ConvergenceTrace) -> Result<AdaptiveFit> {
    let groups = obj.variational(x)?;
    let expected_alpha = groups.iter().map(|g| g.expected_alpha(obj.prior.c)).collect();
    Ok(AdaptiveFit {
        beta: obj.sheet(x),
        groups,
        expected_alpha,
        bound,
        sharing,
        trace,
    })
}

/// Resolves a starting sheet for `data`: zeros when absent, a single-timestep
/// sheet copied to every timestep.
pub fn starting_sheet(data: &TimedDataset, init: Option<&CoefficientSheet>) -> Result<CoefficientSheet> {
    let Some(init) = init else {
        return Ok(CoefficientSheet::for_dataset(data));
    };
    let sheet = if init.timesteps == 1 && data.timesteps != 1 {
        init.replicate(data.timesteps)?
    } else {
        init.clone()
    };
    check_len(data.num_features, sheet.features)?;
    check_len(data.classes(), sheet.classes)?;
    check_len(data.timesteps, sheet.timesteps)?;
    Ok(sheet)
}

/// The model state before any optimization: `init` (or zeros) with a = 2, κ = 1.
pub fn initial_fit(data: &TimedDataset, cfg: &AdaptiveConfig, init: Option<&CoefficientSheet>) -> Result<AdaptiveFit> {
    let obj = AdaptiveObjective::new(data, cfg)?;
    let x = obj.initial_point(&starting_sheet(data, init)?)?;
    let mut grad = vec![0.0; obj.dim()];
    let value = obj.eval(&x, &mut grad)?;
    let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let trace = ConvergenceTrace {
        entries: vec![TraceEntry { value, grad_norm, step: 0.0 }],
        termination: Termination::MaxIterations,
        evaluations: 1,
    };
    finish(&obj, &x, value, cfg.sharing, trace)
}

/// Maximizes over the coordinates in `free`, holding the rest of `x` fixed.
fn maximize_subset(
    obj: &AdaptiveObjective,
    x: &mut [f64],
    free: &[usize],
    cfg: &OptimizerConfig,
) -> Result<(f64, ConvergenceTrace)> {
    let mut full = x.to_vec();
    let mut full_grad = vec![0.0; x.len()];
    let start: Vec<f64> = free.iter().map(|&k| x[k]).collect();
    let result = maximize(
        |sub: &[f64], g: &mut [f64]| {
            for (&k, &v) in free.iter().zip(sub) {
                full[k] = v;
            }
            let value = obj.eval_or_nan(&full, &mut full_grad);
            for (gk, &k) in g.iter_mut().zip(free) {
                *gk = full_grad[k];
            }
            value
        },
        &start,
        cfg,
    )?;
    for (&k, &v) in free.iter().zip(&result.x) {
        x[k] = v;
    }
    Ok((result.value, result.trace))
}

/// Fits the adaptive model to `data`, starting from `init` (zeros when absent;
/// a single-timestep sheet is copied to every timestep).
pub fn fit(data: &TimedDataset, cfg: &AdaptiveConfig, init: Option<&CoefficientSheet>) -> Result<AdaptiveFit> {
    let obj = AdaptiveObjective::new(data, cfg)?;
    let start = starting_sheet(data, init)?;
    let mut x = obj.initial_point(&start)?;
    let nb = obj.num_coefficients();
    let len = obj.group_len();

    let beta_free: Vec<usize> = (0..obj.groups)
        .filter(|&k| !(cfg.freeze_zero_groups && x[k * len..(k + 1) * len].iter().all(|&b| b == 0.0)))
        .flat_map(|k| k * len..(k + 1) * len)
        .collect();
    let var_free: Vec<usize> = (nb..obj.dim()).collect();

    let (bound, trace) = match cfg.schedule {
        Schedule::Joint => {
            let free: Vec<usize> = beta_free.iter().chain(&var_free).copied().collect();
            maximize_subset(&obj, &mut x, &free, &cfg.optimizer)?
        }
        Schedule::BlockCoordinate { rounds } => {
            if rounds == 0 {
                return Err(Error::config("block-coordinate schedule needs at least one round"));
            }
            let mut merged: Option<ConvergenceTrace> = None;
            let mut bound = f64::NAN;
            'rounds: for _ in 0..rounds {
                for block in [&beta_free, &var_free] {
                    let (value, trace) = maximize_subset(&obj, &mut x, block, &cfg.optimizer)?;
                    let improved = merged.as_ref().is_none_or(|m| value > m.final_value());
                    bound = value;
                    merged = Some(match merged {
                        None => trace,
                        Some(mut m) => {
                            m.entries.extend(trace.entries.into_iter().skip(1));
                            m.termination = trace.termination;
                            m.evaluations += trace.evaluations;
                            m
                        }
                    });
                    if !improved && block == &var_free {
                        break 'rounds;
                    }
                }
            }
            (bound, merged.expect("at least one block ran"))
        }
    };
    finish(&obj, &x, bound, cfg.sharing, trace)
}
