//! Task log-likelihoods L(β), their gradients, and prediction with the
//! last timestep's coefficients.
//!
//! Each instance at timestep t is scored against the coefficient copy β^{(t)}
//! only, so its gradient lands in the timestep-t slice of the sheet.

use std::collections::BTreeMap;

use crate::data::{CoefficientSheet, Response, Task, TimedDataset};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone)]
struct Row {
    t0: usize,
    features: Vec<(usize, f64)>,
    y: f64,
}

/// L(β) = −Σ (y − β^{(t)}·f(x))².
#[derive(Debug, Clone)]
pub struct GaussianLikelihood {
    features: usize,
    timesteps: usize,
    rows: Vec<Row>,
}

impl GaussianLikelihood {
    pub fn new(data: &TimedDataset) -> Result<Self> {
        if data.task != Task::Gaussian {
            return Err(Error::Type("squared-error likelihood needs real responses".into()));
        }
        let mut rows = Vec::with_capacity(data.len());
        for inst in &data.instances {
            let y = match inst.response {
                Response::Real(y) => y,
                Response::Tokens(_) => {
                    return Err(Error::Type("squared-error likelihood needs real responses".into()))
                }
            };
            rows.push(Row {
                t0: inst.t - 1,
                features: inst.features.clone(),
                y,
            });
        }
        Ok(Self {
            features: data.num_features,
            timesteps: data.timesteps,
            rows,
        })
    }

    pub fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let t_len = self.timesteps;
        let mut value = 0.0;
        for row in &self.rows {
            let pred: f64 = row
                .features
                .iter()
                .map(|&(i, f)| beta[i * t_len + row.t0] * f)
                .sum();
            let r = row.y - pred;
            value -= r * r;
            for &(i, f) in &row.features {
                grad[i * t_len + row.t0] += 2.0 * r * f;
            }
        }
        value
    }
}

#[derive(Debug, Clone)]
struct Context {
    t0: usize,
    features: Vec<(usize, f64)>,
    counts: Vec<(usize, f64)>,
    total: f64,
}

/// Multinomial log-linear likelihood: each token is drawn from
/// softmax(θ^{(t)} + Σ_i β_{i,·}^{(t)} f_i(x)).
///
/// Documents sharing a timestep and an identical feature vector share one
/// log-normalizer, so they are merged into a single context up front.
#[derive(Debug, Clone)]
pub struct SageLikelihood {
    features: usize,
    vocab: usize,
    timesteps: usize,
    theta: Vec<Vec<f64>>,
    contexts: Vec<Context>,
}

type ContextKey = (usize, Vec<(usize, u64)>);

impl SageLikelihood {
    pub fn new(data: &TimedDataset) -> Result<Self> {
        if data.task != Task::Sage {
            return Err(Error::Type("multinomial likelihood needs token responses".into()));
        }
        let theta = data
            .theta
            .clone()
            .ok_or_else(|| Error::config("background log-frequencies are missing"))?;
        check_len(data.timesteps, theta.len())?;
        for row in &theta {
            check_len(data.vocab, row.len())?;
        }
        let mut index: BTreeMap<ContextKey, usize> = BTreeMap::new();
        let mut contexts: Vec<Context> = Vec::new();
        let mut dense_counts: Vec<Vec<f64>> = Vec::new();
        for inst in &data.instances {
            let toks = match &inst.response {
                Response::Tokens(toks) => toks,
                Response::Real(_) => {
                    return Err(Error::Type("multinomial likelihood needs token responses".into()))
                }
            };
            let key = (
                inst.t,
                inst.features.iter().map(|&(i, v)| (i, v.to_bits())).collect(),
            );
            let k = *index.entry(key).or_insert_with(|| {
                contexts.push(Context {
                    t0: inst.t - 1,
                    features: inst.features.clone(),
                    counts: Vec::new(),
                    total: 0.0,
                });
                dense_counts.push(vec![0.0; data.vocab]);
                contexts.len() - 1
            });
            for &w in toks {
                dense_counts[k][w as usize] += 1.0;
            }
        }
        for (ctx, dense) in contexts.iter_mut().zip(dense_counts) {
            ctx.counts = dense
                .into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0.0)
                .collect();
            ctx.total = ctx.counts.iter().map(|(_, c)| c).sum();
        }
        contexts.retain(|c| c.total > 0.0);
        Ok(Self {
            features: data.num_features,
            vocab: data.vocab,
            timesteps: data.timesteps,
            theta,
            contexts,
        })
    }

    pub fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let (v_len, t_len) = (self.vocab, self.timesteps);
        let mut eta = vec![0.0; v_len];
        let mut value = 0.0;
        for ctx in &self.contexts {
            eta.copy_from_slice(&self.theta[ctx.t0]);
            for &(i, f) in &ctx.features {
                let base = i * v_len * t_len + ctx.t0;
                for (w, e) in eta.iter_mut().enumerate() {
                    *e += f * beta[base + w * t_len];
                }
            }
            let lse = log_sum_exp(&eta);
            value += ctx.counts.iter().map(|&(w, c)| c * eta[w]).sum::<f64>() - ctx.total * lse;
            // eta becomes the residual c_w − n·p_w
            for e in eta.iter_mut() {
                *e = -ctx.total * (*e - lse).exp();
            }
            for &(w, c) in &ctx.counts {
                eta[w] += c;
            }
            for &(i, f) in &ctx.features {
                let base = i * v_len * t_len + ctx.t0;
                for (w, r) in eta.iter().enumerate() {
                    grad[base + w * t_len] += f * r;
                }
            }
        }
        value
    }
}

/// Either task likelihood behind one interface.
#[derive(Debug, Clone)]
pub enum Likelihood {
    Gaussian(GaussianLikelihood),
    Sage(SageLikelihood),
}

impl Likelihood {
    pub fn new(data: &TimedDataset) -> Result<Self> {
        Ok(match data.task {
            Task::Gaussian => Likelihood::Gaussian(GaussianLikelihood::new(data)?),
            Task::Sage => Likelihood::Sage(SageLikelihood::new(data)?),
        })
    }

    /// Number of coefficients (I·V·T).
    pub fn dim(&self) -> usize {
        match self {
            Likelihood::Gaussian(g) => g.features * g.timesteps,
            Likelihood::Sage(s) => s.features * s.vocab * s.timesteps,
        }
    }

    /// Returns L(β) and adds ∇L(β) into `grad`.
    pub fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Likelihood::Gaussian(g) => g.eval(beta, grad),
            Likelihood::Sage(s) => s.eval(beta, grad),
        }
    }
}

fn sheet_loglik(beta: &CoefficientSheet, data: &TimedDataset, lik: Likelihood) -> Result<(f64, CoefficientSheet)> {
    check_len(data.num_features, beta.features)?;
    check_len(data.classes(), beta.classes)?;
    check_len(data.timesteps, beta.timesteps)?;
    let mut grad = CoefficientSheet::zeros(beta.features, beta.classes, beta.timesteps);
    let value = lik.eval(&beta.values, &mut grad.values);
    Ok((value, grad))
}

/// Squared-error log-likelihood and its gradient sheet.
pub fn gaussian_loglik(beta: &CoefficientSheet, data: &TimedDataset) -> Result<(f64, CoefficientSheet)> {
    sheet_loglik(beta, data, Likelihood::Gaussian(GaussianLikelihood::new(data)?))
}

/// Multinomial log-linear log-likelihood and its gradient sheet.
pub fn sage_loglik(beta: &CoefficientSheet, data: &TimedDataset) -> Result<(f64, CoefficientSheet)> {
    sheet_loglik(beta, data, Likelihood::Sage(SageLikelihood::new(data)?))
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Real(f64),
    Distribution(Vec<f64>),
}

/// Predicts from the sheet's last timestep: β^{(T)}·f(x) for regression, or
/// softmax(θ + β^{(T)}ᵀ f(x)) for text.
pub fn predict(
    beta: &CoefficientSheet,
    features: &[(usize, f64)],
    task: Task,
    theta: Option<&[f64]>,
) -> Result<Prediction> {
    let t = beta.timesteps - 1;
    for &(i, _) in features {
        if i >= beta.features {
            return Err(Error::Dimension {
                expected: beta.features,
                found: i + 1,
            });
        }
    }
    match task {
        Task::Gaussian => Ok(Prediction::Real(
            features.iter().map(|&(i, f)| beta.get(i, 0, t) * f).sum(),
        )),
        Task::Sage => {
            let theta = theta.ok_or_else(|| Error::config("text prediction needs background log-frequencies"))?;
            check_len(beta.classes, theta.len())?;
            let mut eta = theta.to_vec();
            for &(i, f) in features {
                for (w, e) in eta.iter_mut().enumerate() {
                    *e += f * beta.get(i, w, t);
                }
            }
            let lse = log_sum_exp(&eta);
            Ok(Prediction::Distribution(eta.iter().map(|e| (e - lse).exp()).collect()))
        }
    }
}

/// Sum of −ln p(w) over a document's tokens under a log-probability vector.
pub fn token_nll(log_probs: &[f64], tokens: &[u32]) -> f64 {
    tokens
        .iter()
        .filter(|&&w| (w as usize) < log_probs.len())
        .map(|&w| -log_probs[w as usize])
        .sum()
}
