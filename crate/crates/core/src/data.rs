//! Timestamped datasets and coefficient sheets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Real-valued response, squared-error likelihood.
    Gaussian,
    /// Token-sequence response, multinomial log-linear likelihood over a
    /// background log-frequency vector.
    Sage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Real(f64),
    Tokens(Vec<u32>),
}

/// One observation: a 1-based timestep, a sparse feature vector and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub t: usize,
    pub features: Vec<(usize, f64)>,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedDataset {
    pub task: Task,
    pub timesteps: usize,
    pub num_features: usize,
    /// Vocabulary size; 0 for the Gaussian task.
    pub vocab: usize,
    pub instances: Vec<Instance>,
    pub feature_names: Option<Vec<String>>,
    pub words: Option<Vec<String>>,
    /// Background log-frequencies θ^{(t)}, one length-`vocab` vector per timestep.
    pub theta: Option<Vec<Vec<f64>>>,
}

/// A contiguous range of timesteps cut out of a larger dataset, renumbered
/// from 1, with the original index of every instance kept alongside.
#[derive(Debug, Clone)]
pub struct Window {
    pub data: TimedDataset,
    pub source_ids: Vec<usize>,
}

impl TimedDataset {
    pub fn new(task: Task, timesteps: usize, num_features: usize, vocab: usize) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::input("dataset needs at least one timestep"));
        }
        if num_features == 0 {
            return Err(Error::input("dataset needs at least one feature"));
        }
        match task {
            Task::Sage if vocab == 0 => return Err(Error::input("text task needs a vocabulary")),
            Task::Gaussian if vocab != 0 => {
                return Err(Error::input("regression task takes no vocabulary"))
            }
            _ => {}
        }
        Ok(Self {
            task,
            timesteps,
            num_features,
            vocab,
            instances: Vec::new(),
            feature_names: None,
            words: None,
            theta: None,
        })
    }

    /// Number of response classes: the vocabulary size, or 1 for regression.
    pub fn classes(&self) -> usize {
        match self.task {
            Task::Gaussian => 1,
            Task::Sage => self.vocab,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Checks an instance against the dataset's ranges; returns a message on failure.
    pub fn check_instance(&self, inst: &Instance) -> std::result::Result<(), String> {
        if inst.t == 0 || inst.t > self.timesteps {
            return Err(format!("timestep {} outside 1..={}", inst.t, self.timesteps));
        }
        for &(i, v) in &inst.features {
            if i >= self.num_features {
                return Err(format!("feature index {i} outside 0..{}", self.num_features));
            }
            if !v.is_finite() {
                return Err(format!("feature {i} has non-finite value"));
            }
        }
        match (&inst.response, self.task) {
            (Response::Real(y), Task::Gaussian) => {
                if !y.is_finite() {
                    return Err("response is not finite".into());
                }
            }
            (Response::Tokens(toks), Task::Sage) => {
                if let Some(&w) = toks.iter().find(|&&w| w as usize >= self.vocab) {
                    return Err(format!("token index {w} outside 0..{}", self.vocab));
                }
            }
            (Response::Real(_), Task::Sage) => return Err("text task needs token responses".into()),
            (Response::Tokens(_), Task::Gaussian) => {
                return Err("regression task needs real responses".into())
            }
        }
        Ok(())
    }

    pub fn push(&mut self, inst: Instance) -> Result<()> {
        self.check_instance(&inst).map_err(Error::Input)?;
        self.instances.push(inst);
        Ok(())
    }

    /// Instances with timestep in `first..=last`, renumbered so `first` becomes 1.
    pub fn window(&self, first: usize, last: usize) -> Result<Window> {
        if first == 0 || first > last || last > self.timesteps {
            return Err(Error::config(format!(
                "window {first}..={last} outside 1..={}",
                self.timesteps
            )));
        }
        self.cut(first, last, false)
    }

    /// Like [`window`](Self::window) but every instance is moved to a single timestep.
    pub fn pooled(&self, first: usize, last: usize) -> Result<Window> {
        if first == 0 || first > last || last > self.timesteps {
            return Err(Error::config(format!(
                "window {first}..={last} outside 1..={}",
                self.timesteps
            )));
        }
        self.cut(first, last, true)
    }

    fn cut(&self, first: usize, last: usize, collapse: bool) -> Result<Window> {
        let timesteps = if collapse { 1 } else { last - first + 1 };
        let mut data = TimedDataset {
            task: self.task,
            timesteps,
            num_features: self.num_features,
            vocab: self.vocab,
            instances: Vec::new(),
            feature_names: self.feature_names.clone(),
            words: self.words.clone(),
            theta: None,
        };
        let mut source_ids = Vec::new();
        for (id, inst) in self.instances.iter().enumerate() {
            if inst.t >= first && inst.t <= last {
                let mut moved = inst.clone();
                moved.t = if collapse { 1 } else { inst.t - first + 1 };
                data.instances.push(moved);
                source_ids.push(id);
            }
        }
        if data.task == Task::Sage {
            data.estimate_background();
        }
        Ok(Window { data, source_ids })
    }

    /// Sets θ^{(t)}_w = ln((n_{t,w} + 1) / (n_t + V)) from the dataset's own tokens.
    pub fn estimate_background(&mut self) {
        let v = self.vocab;
        let mut counts = vec![vec![0.0f64; v]; self.timesteps];
        for inst in &self.instances {
            if let Response::Tokens(toks) = &inst.response {
                for &w in toks {
                    counts[inst.t - 1][w as usize] += 1.0;
                }
            }
        }
        let theta = counts
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().sum::<f64>() + v as f64;
                row.into_iter().map(|n| ((n + 1.0) / total).ln()).collect()
            })
            .collect();
        self.theta = Some(theta);
    }

    pub fn instances_at(&self, t: usize) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |inst| inst.t == t)
    }
}

/// Coefficients indexed by (feature i, class w, timestep t).
///
/// Storage is feature-major, then class, then time, so one class trajectory
/// and one feature's whole group are both contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSheet {
    pub features: usize,
    pub classes: usize,
    pub timesteps: usize,
    pub values: Vec<f64>,
}

impl CoefficientSheet {
    pub fn zeros(features: usize, classes: usize, timesteps: usize) -> Self {
        Self {
            features,
            classes,
            timesteps,
            values: vec![0.0; features * classes * timesteps],
        }
    }

    pub fn for_dataset(data: &TimedDataset) -> Self {
        Self::zeros(data.num_features, data.classes(), data.timesteps)
    }

    pub fn from_values(features: usize, classes: usize, timesteps: usize, values: Vec<f64>) -> Result<Self> {
        crate::error::check_len(features * classes * timesteps, values.len())?;
        Ok(Self {
            features,
            classes,
            timesteps,
            values,
        })
    }

    #[inline]
    pub fn index(&self, i: usize, w: usize, t: usize) -> usize {
        (i * self.classes + w) * self.timesteps + t
    }

    /// Value at feature `i`, class `w`, 0-based timestep `t`.
    #[inline]
    pub fn get(&self, i: usize, w: usize, t: usize) -> f64 {
        self.values[self.index(i, w, t)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, w: usize, t: usize, v: f64) {
        let k = self.index(i, w, t);
        self.values[k] = v;
    }

    pub fn trajectory(&self, i: usize, w: usize) -> &[f64] {
        let start = self.index(i, w, 0);
        &self.values[start..start + self.timesteps]
    }

    /// All trajectories of feature `i`, back to back.
    pub fn group(&self, i: usize) -> &[f64] {
        let len = self.classes * self.timesteps;
        &self.values[i * len..(i + 1) * len]
    }

    /// The sheet restricted to one 0-based timestep.
    pub fn slice_at(&self, t: usize) -> CoefficientSheet {
        let mut out = CoefficientSheet::zeros(self.features, self.classes, 1);
        for i in 0..self.features {
            for w in 0..self.classes {
                out.set(i, w, 0, self.get(i, w, t));
            }
        }
        out
    }

    pub fn last_slice(&self) -> CoefficientSheet {
        self.slice_at(self.timesteps - 1)
    }

    /// Copies a single-timestep sheet to every one of `timesteps` steps.
    pub fn replicate(&self, timesteps: usize) -> Result<CoefficientSheet> {
        if self.timesteps != 1 {
            return Err(Error::Dimension {
                expected: 1,
                found: self.timesteps,
            });
        }
        let mut out = CoefficientSheet::zeros(self.features, self.classes, timesteps);
        for i in 0..self.features {
            for w in 0..self.classes {
                let v = self.get(i, w, 0);
                for t in 0..timesteps {
                    out.set(i, w, t, v);
                }
            }
        }
        Ok(out)
    }

    /// max over classes and time of |β|, per feature.
    pub fn group_max_abs(&self) -> Vec<f64> {
        (0..self.features)
            .map(|i| self.group(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TimedDataset {
        let mut d = TimedDataset::new(Task::Gaussian, 4, 2, 0).unwrap();
        for t in 1..=4 {
            d.push(Instance {
                t,
                features: vec![(0, 1.0)],
                response: Response::Real(t as f64),
            })
            .unwrap();
        }
        d
    }

    #[test]
    fn window_renumbers_and_tracks_sources() {
        let d = tiny();
        let w = d.window(2, 3).unwrap();
        assert_eq!(w.data.timesteps, 2);
        assert_eq!(w.source_ids, vec![1, 2]);
        assert_eq!(w.data.instances[0].t, 1);
        assert_eq!(w.data.instances[1].response, Response::Real(3.0));
        let p = d.pooled(1, 3).unwrap();
        assert_eq!(p.data.timesteps, 1);
        assert!(p.data.instances.iter().all(|i| i.t == 1));
        assert!(d.window(0, 2).is_err());
        assert!(d.window(3, 5).is_err());
    }

    #[test]
    fn push_validates() {
        let mut d = tiny();
        let bad_t = Instance {
            t: 0,
            features: vec![],
            response: Response::Real(0.0),
        };
        assert!(d.push(bad_t).is_err());
        let bad_f = Instance {
            t: 1,
            features: vec![(2, 1.0)],
            response: Response::Real(0.0),
        };
        assert!(d.push(bad_f).is_err());
        let bad_r = Instance {
            t: 1,
            features: vec![],
            response: Response::Tokens(vec![0]),
        };
        assert!(d.push(bad_r).is_err());
    }

    #[test]
    fn background_is_add_one_smoothed() {
        let mut d = TimedDataset::new(Task::Sage, 2, 1, 3).unwrap();
        d.push(Instance {
            t: 1,
            features: vec![],
            response: Response::Tokens(vec![0, 0, 1]),
        })
        .unwrap();
        d.estimate_background();
        let theta = d.theta.as_ref().unwrap();
        let e1: Vec<f64> = theta[0].iter().map(|x| x.exp()).collect();
        assert!((e1[0] - 3.0 / 6.0).abs() < 1e-15);
        assert!((e1[1] - 2.0 / 6.0).abs() < 1e-15);
        assert!((e1[2] - 1.0 / 6.0).abs() < 1e-15);
        // empty timestep falls back to uniform
        assert!(theta[1].iter().all(|x| (x.exp() - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn sheet_layout() {
        let mut s = CoefficientSheet::zeros(2, 3, 4);
        s.set(1, 2, 3, 5.0);
        assert_eq!(s.trajectory(1, 2), &[0.0, 0.0, 0.0, 5.0]);
        assert_eq!(s.group(1).len(), 12);
        assert_eq!(s.group(1)[11], 5.0);
        assert_eq!(s.last_slice().get(1, 2, 0), 5.0);
        let r = s.slice_at(3).replicate(2).unwrap();
        assert_eq!(r.trajectory(1, 2), &[5.0, 5.0]);
        assert_eq!(s.group_max_abs(), vec![0.0, 5.0]);
        assert!(s.replicate(2).is_err());
    }
}
