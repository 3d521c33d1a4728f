//! Synthetic datasets drawn from the model's own generative story.
//!
//! Every active feature gets a coefficient trajectory β_i ~ N(0, λ_i A(α_i)⁻¹)
//! (one per word for text); inactive features stay at zero. Instances then
//! draw each feature independently with probability `density`, with a
//! standard-normal value when present.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CoefficientSheet, Instance, Response, Task, TimedDataset};
use crate::error::{Error, Result};
use crate::likelihood::log_sum_exp;
use crate::tridiag::UniformTridiagonal;
use crate::varprior::DEFAULT_TRUNCATION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Inactive,
    Static,
    Drifting,
}

/// Ground truth for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTruth {
    pub role: Role,
    pub alpha: f64,
    pub lambda: f64,
}

impl FeatureTruth {
    pub fn inactive() -> Self {
        Self { role: Role::Inactive, alpha: 0.0, lambda: 0.0 }
    }

    pub fn active(role: Role, alpha: f64, lambda: f64) -> Self {
        Self { role, alpha, lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub task: Task,
    pub timesteps: usize,
    /// Instances per timestep.
    pub per_timestep: usize,
    pub features: Vec<FeatureTruth>,
    /// Response noise (regression only).
    pub noise_sd: f64,
    /// Probability that a feature is present in an instance.
    pub density: f64,
    /// Vocabulary size (text only).
    pub vocab: usize,
    /// Tokens per document (text only).
    pub doc_length: usize,
    pub seed: u64,
}

/// Autocorrelation of the drifting features in the default spec.
pub const DRIFTING_ALPHA: f64 = -0.45;
/// Prior scale of the drifting features in the default spec.
pub const DRIFTING_LAMBDA: f64 = 1.0;
/// Prior scale of the static features in the default spec.
pub const STATIC_LAMBDA: f64 = 0.2;

impl GenSpec {
    /// 30 features: 10 inactive, 10 static (α = 0) and 10 drifting
    /// (α = −0.45); 10 timesteps of 200 instances, noise sd 0.5.
    pub fn default_regression(seed: u64) -> Self {
        let mut features = Vec::with_capacity(30);
        features.extend((0..10).map(|_| FeatureTruth::inactive()));
        features.extend((0..10).map(|_| FeatureTruth::active(Role::Static, 0.0, STATIC_LAMBDA)));
        features.extend((0..10).map(|_| FeatureTruth::active(Role::Drifting, DRIFTING_ALPHA, DRIFTING_LAMBDA)));
        Self {
            task: Task::Gaussian,
            timesteps: 10,
            per_timestep: 200,
            features,
            noise_sd: 0.5,
            density: 0.2,
            vocab: 0,
            doc_length: 0,
            seed,
        }
    }

    /// A small text counterpart: 6 features (2 of each role), 5 timesteps of
    /// 100 documents of 20 tokens over 12 words.
    pub fn default_text(seed: u64) -> Self {
        let mut features = Vec::with_capacity(6);
        features.extend((0..2).map(|_| FeatureTruth::inactive()));
        features.extend((0..2).map(|_| FeatureTruth::active(Role::Static, 0.0, STATIC_LAMBDA)));
        features.extend((0..2).map(|_| FeatureTruth::active(Role::Drifting, DRIFTING_ALPHA, 0.5)));
        Self {
            task: Task::Sage,
            timesteps: 5,
            per_timestep: 100,
            features,
            noise_sd: 0.0,
            density: 0.3,
            vocab: 12,
            doc_length: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 || self.per_timestep == 0 || self.features.is_empty() {
            return Err(Error::input("timesteps, instances per timestep and features must be positive"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::input(format!("density must lie in (0, 1], got {}", self.density)));
        }
        match self.task {
            Task::Gaussian => {
                if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
                    return Err(Error::input(format!("noise_sd must be positive, got {}", self.noise_sd)));
                }
                if self.vocab != 0 {
                    return Err(Error::input("regression spec takes no vocabulary"));
                }
            }
            Task::Sage => {
                if self.vocab == 0 || self.doc_length == 0 {
                    return Err(Error::input("text spec needs a vocabulary and a document length"));
                }
            }
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.role == Role::Inactive {
                continue;
            }
            if !(f.alpha > -DEFAULT_TRUNCATION && f.alpha <= 0.0) {
                return Err(Error::input(format!("feature {i}: alpha {} outside (-C, 0]", f.alpha)));
            }
            if !(f.lambda > 0.0 && f.lambda.is_finite()) {
                return Err(Error::input(format!("feature {i}: lambda {} must be positive", f.lambda)));
            }
        }
        Ok(())
    }

    pub fn roles(&self) -> Vec<Role> {
        self.features.iter().map(|f| f.role).collect()
    }
}

/// Draws a dataset and its true coefficient sheet. Identical specs give
/// bit-identical output.
pub fn generate(spec: &GenSpec) -> Result<(TimedDataset, CoefficientSheet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_feat = spec.features.len();
    let mut data = TimedDataset::new(spec.task, spec.timesteps, n_feat, spec.vocab)?;
    let classes = data.classes();
    let mut truth = CoefficientSheet::zeros(n_feat, classes, spec.timesteps);

    for (i, f) in spec.features.iter().enumerate() {
        if f.role == Role::Inactive {
            continue;
        }
        let a = UniformTridiagonal::new(f.alpha, spec.timesteps)?;
        for w in 0..classes {
            let traj = a.sample(f.lambda, &mut rng)?;
            for (t, b) in traj.into_iter().enumerate() {
                truth.set(i, w, t, b);
            }
        }
    }

    let theta = match spec.task {
        Task::Sage => {
            let gamma: Gamma<f64> = Gamma::new(2.0, 1.0).map_err(|e| Error::input(e.to_string()))?;
            let th: Vec<Vec<f64>> = (0..spec.timesteps)
                .map(|_| {
                    let raw: Vec<f64> = (0..spec.vocab).map(|_| gamma.sample(&mut rng).ln()).collect();
                    let lse = log_sum_exp(&raw);
                    raw.into_iter().map(|x| x - lse).collect()
                })
                .collect();
            Some(th)
        }
        Task::Gaussian => None,
    };

    let noise = match spec.task {
        Task::Gaussian => Some(Normal::new(0.0, spec.noise_sd).map_err(|e| Error::input(e.to_string()))?),
        Task::Sage => None,
    };
    let mut eta = vec![0.0; spec.vocab];
    let mut cdf = vec![0.0; spec.vocab];
    for t in 1..=spec.timesteps {
        for _ in 0..spec.per_timestep {
            let mut features = Vec::new();
            for i in 0..n_feat {
                if rng.random::<f64>() < spec.density {
                    features.push((i, rng.sample::<f64, _>(StandardNormal)));
                }
            }
            let response = match spec.task {
                Task::Gaussian => {
                    let mean: f64 = features.iter().map(|&(i, v)| truth.get(i, 0, t - 1) * v).sum();
                    Response::Real(mean + noise.as_ref().expect("regression noise").sample(&mut rng))
                }
                Task::Sage => {
                    let th = &theta.as_ref().expect("text background")[t - 1];
                    eta.copy_from_slice(th);
                    for &(i, v) in &features {
                        for (w, e) in eta.iter_mut().enumerate() {
                            *e += v * truth.get(i, w, t - 1);
                        }
                    }
                    let lse = log_sum_exp(&eta);
                    let mut acc = 0.0;
                    for (c, e) in cdf.iter_mut().zip(&eta) {
                        acc += (e - lse).exp();
                        *c = acc;
                    }
                    let tokens = (0..spec.doc_length)
                        .map(|_| {
                            let u = rng.random::<f64>() * acc;
                            cdf.partition_point(|&c| c <= u).min(spec.vocab - 1) as u32
                        })
                        .collect();
                    Response::Tokens(tokens)
                }
            };
            data.push(Instance { t, features, response })?;
        }
    }
    data.theta = theta;
    data.feature_names = Some(
        spec.features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let tag = match f.role {
                    Role::Inactive => "inactive",
                    Role::Static => "static",
                    Role::Drifting => "drifting",
                };
                format!("{tag}_{i}")
            })
            .collect(),
    );
    if spec.task == Task::Sage {
        data.words = Some((0..spec.vocab).map(|w| format!("w{w}")).collect());
    }
    Ok((data, truth))
}
