//! Comparison models: ridge and lasso on a fixed window, and ridge with a
//! fixed tridiagonal penalty across time.
//!
//! Penalties are added to the negated log-likelihood exactly as written, with
//! no ½ and no intercept exemption: ridge minimizes −L(β) + s‖β‖², lasso
//! −L(β) + s‖β‖₁.

use serde::{Deserialize, Serialize};

use crate::data::{CoefficientSheet, Response, Task, TimedDataset};
use crate::error::{Error, Result};
use crate::likelihood::Likelihood;
use crate::optimize::{maximize, OptimizerConfig};
use crate::tridiag::UniformTridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    RidgeOne,
    RidgeAll,
    RidgeTs,
    LassoOne,
    LassoAll,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::RidgeOne,
        BaselineKind::RidgeAll,
        BaselineKind::RidgeTs,
        BaselineKind::LassoOne,
        BaselineKind::LassoAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::RidgeOne => "ridge-one",
            BaselineKind::RidgeAll => "ridge-all",
            BaselineKind::RidgeTs => "ridge-ts",
            BaselineKind::LassoOne => "lasso-one",
            BaselineKind::LassoAll => "lasso-all",
        }
    }

    /// Whether training pools every past timestep into one.
    pub fn pools(self) -> bool {
        matches!(self, BaselineKind::RidgeAll | BaselineKind::LassoAll)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    /// ℓ₂ or ℓ₁ weight; unused by ridge-ts.
    pub strength: f64,
    pub ts_alpha: Option<f64>,
    pub ts_lambda: Option<f64>,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, strength: f64) -> Self {
        Self { kind, strength, ts_alpha: None, ts_lambda: None }
    }

    pub fn ridge_ts(alpha: f64, lambda: f64) -> Self {
        Self { kind: BaselineKind::RidgeTs, strength: 0.0, ts_alpha: Some(alpha), ts_lambda: Some(lambda) }
    }

    pub fn validate(&self) -> Result<()> {
        let ts = self.kind == BaselineKind::RidgeTs;
        let (has_alpha, has_lambda) = (self.ts_alpha.is_some(), self.ts_lambda.is_some());
        if (ts && !(has_alpha && has_lambda)) || (!ts && (has_alpha || has_lambda)) {
            return Err(Error::config("ts_alpha and ts_lambda are required by ridge-ts and only by it"));
        }
        if !ts && !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::config(format!("strength must be finite and non-negative, got {}", self.strength)));
        }
        if let (Some(a), Some(l)) = (self.ts_alpha, self.ts_lambda) {
            if !(a > -0.5 && a <= 0.0) {
                return Err(Error::config(format!("ts_alpha must lie in (-0.5, 0], got {a}")));
            }
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config(format!("ts_lambda must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

/// Tuning knobs of the lasso solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoSolver {
    pub max_iter: usize,
    /// Stop once the KKT violation falls to this.
    pub kkt_tol: f64,
}

impl Default for LassoSolver {
    fn default() -> Self {
        Self { max_iter: 20_000, kkt_tol: 1e-7 }
    }
}

/// A fitted baseline together with the data window it was trained on.
#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub beta: CoefficientSheet,
    /// Background log-frequencies to pair with the last slice at prediction
    /// time (text task only).
    pub theta: Option<Vec<f64>>,
}

fn require_nonempty(data: &TimedDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("training window has no instances"));
    }
    Ok(())
}

/// Fits one baseline on everything in `train`, choosing the window by kind:
/// the last timestep for `-one`, all timesteps pooled for `-all`, the full
/// timeline for ridge-ts.
pub fn fit_baseline(train: &TimedDataset, cfg: &BaselineConfig, opt: &OptimizerConfig) -> Result<BaselineFit> {
    cfg.validate()?;
    let last = train.timesteps;
    let window = match cfg.kind {
        BaselineKind::RidgeOne | BaselineKind::LassoOne => train.window(last, last)?.data,
        BaselineKind::RidgeAll | BaselineKind::LassoAll => train.pooled(1, last)?.data,
        BaselineKind::RidgeTs => {
            let mut full = train.clone();
            if full.task == Task::Sage && full.theta.is_none() {
                full.estimate_background();
            }
            full
        }
    };
    let beta = match cfg.kind {
        BaselineKind::RidgeOne | BaselineKind::RidgeAll => fit_ridge(&window, cfg.strength, opt)?,
        BaselineKind::LassoOne | BaselineKind::LassoAll => fit_lasso(&window, cfg.strength, &LassoSolver::default())?,
        BaselineKind::RidgeTs => fit_ridge_ts(&window, cfg.ts_alpha.unwrap_or(0.0), cfg.ts_lambda.unwrap_or(1.0), opt)?,
    };
    let theta = window.theta.as_ref().map(|th| th[th.len() - 1].clone());
    Ok(BaselineFit { beta, theta })
}

/// Ridge regression: minimizes −L(β) + strength·‖β‖² separately at every
/// timestep of `data`. Gaussian problems with at most 50 features and a
/// positive strength use the normal equations.
pub fn fit_ridge(data: &TimedDataset, strength: f64, opt: &OptimizerConfig) -> Result<CoefficientSheet> {
    require_nonempty(data)?;
    if !(strength >= 0.0) {
        return Err(Error::config(format!("strength must be non-negative, got {strength}")));
    }
    if data.task == Task::Gaussian && data.num_features <= 50 {
        if let Some(sheet) = ridge_normal_equations(data, strength) {
            return Ok(sheet);
        }
    }
    let lik = Likelihood::new(data)?;
    let x0 = vec![0.0; lik.dim()];
    let m = maximize(
        |beta: &[f64], g: &mut [f64]| {
            let mut v = lik.eval(beta, g);
            for (gk, &b) in g.iter_mut().zip(beta) {
                v -= strength * b * b;
                *gk -= 2.0 * strength * b;
            }
            v
        },
        &x0,
        opt,
    )?;
    CoefficientSheet::from_values(data.num_features, data.classes(), data.timesteps, m.x)
}

/// Per-timestep solution of (XᵀX + sI)β = Xᵀy; `None` when a system is singular.
pub fn ridge_normal_equations(data: &TimedDataset, strength: f64) -> Option<CoefficientSheet> {
    let n = data.num_features;
    let mut sheet = CoefficientSheet::for_dataset(data);
    for t in 1..=data.timesteps {
        let mut gram = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for inst in data.instances_at(t) {
            let Response::Real(y) = inst.response else { return None };
            for &(i, fi) in &inst.features {
                rhs[i] += fi * y;
                for &(j, fj) in &inst.features {
                    gram[i * n + j] += fi * fj;
                }
            }
        }
        for i in 0..n {
            gram[i * n + i] += strength;
        }
        let beta = cholesky_solve(&mut gram, &rhs, n)?;
        for (i, b) in beta.into_iter().enumerate() {
            sheet.set(i, 0, t - 1, b);
        }
    }
    Some(sheet)
}

/// Solves Mx = b for symmetric positive-definite M (row-major, overwritten).
fn cholesky_solve(m: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| m[i * n + i].abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        if !(d > 1e-13 * scale) {
            return None;
        }
        let d = d.sqrt();
        m[j * n + j] = d;
        for i in j + 1..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= m[i * n + k] * y[k];
        }
        y[i] /= m[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= m[k * n + i] * y[k];
        }
        y[i] /= m[i * n + i];
    }
    Some(y)
}

fn soft_threshold(x: f64, k: f64) -> f64 {
    if x > k {
        x - k
    } else if x < -k {
        x + k
    } else {
        0.0
    }
}

/// Largest violation of the lasso optimality conditions at `beta`, given the
/// gradient of the smooth loss −L there.
fn kkt_violation_from_grad(beta: &[f64], grad: &[f64], strength: f64) -> f64 {
    beta.iter()
        .zip(grad)
        .map(|(&b, &g)| {
            if b == 0.0 {
                (g.abs() - strength).max(0.0)
            } else {
                (g + strength * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the lasso KKT conditions for −L(β) + strength·‖β‖₁.
pub fn lasso_kkt_violation(data: &TimedDataset, beta: &CoefficientSheet, strength: f64) -> Result<f64> {
    let lik = Likelihood::new(data)?;
    crate::error::check_len(lik.dim(), beta.values.len())?;
    let mut g = vec![0.0; lik.dim()];
    lik.eval(&beta.values, &mut g);
    g.iter_mut().for_each(|v| *v = -*v);
    Ok(kkt_violation_from_grad(&beta.values, &g, strength))
}

/// Lasso: minimizes −L(β) + strength·‖β‖₁ by accelerated proximal gradient
/// with backtracking and function-value restarts.
pub fn fit_lasso(data: &TimedDataset, strength: f64, solver: &LassoSolver) -> Result<CoefficientSheet> {
    require_nonempty(data)?;
    if !(strength >= 0.0) {
        return Err(Error::config(format!("strength must be non-negative, got {strength}")));
    }
    let lik = Likelihood::new(data)?;
    let n = lik.dim();
    // smooth loss h = −L and its gradient
    let smooth = |beta: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let v = -lik.eval(beta, g);
        g.iter_mut().for_each(|v| *v = -*v);
        v
    };
    let l1 = |beta: &[f64]| strength * beta.iter().map(|b| b.abs()).sum::<f64>();

    let mut lip = match data.task {
        Task::Gaussian => gaussian_lipschitz(&smooth, n),
        Task::Sage => 1.0,
    }
    .max(1e-12);

    let mut x = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut fx = smooth(&x, &mut gx) + l1(&x);
    if kkt_violation_from_grad(&x, &gx, strength) <= solver.kkt_tol {
        return CoefficientSheet::from_values(data.num_features, data.classes(), data.timesteps, x);
    }
    let mut y = x.clone();
    let mut gy = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut gz = vec![0.0; n];
    let mut momentum = 1.0f64;
    for _ in 0..solver.max_iter {
        let hy = smooth(&y, &mut gy);
        let hz = loop {
            for k in 0..n {
                z[k] = soft_threshold(y[k] - gy[k] / lip, strength / lip);
            }
            let hz = smooth(&z, &mut gz);
            let mut model = hy;
            for k in 0..n {
                let d = z[k] - y[k];
                model += gy[k] * d + 0.5 * lip * d * d;
            }
            if hz <= model + 1e-12 * hy.abs().max(1.0) {
                break hz;
            }
            lip *= 2.0;
        };
        let fz = hz + l1(&z);
        if fz > fx {
            // restart from x without momentum
            if momentum == 1.0 {
                break;
            }
            momentum = 1.0;
            y.copy_from_slice(&x);
            continue;
        }
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let w = (momentum - 1.0) / next;
        for k in 0..n {
            y[k] = z[k] + w * (z[k] - x[k]);
        }
        momentum = next;
        x.copy_from_slice(&z);
        gx.copy_from_slice(&gz);
        fx = fz;
        if kkt_violation_from_grad(&x, &gx, strength) <= solver.kkt_tol {
            break;
        }
    }
    CoefficientSheet::from_values(data.num_features, data.classes(), data.timesteps, x)
}

/// Largest eigenvalue of the (constant) Hessian of a quadratic loss by power
/// iteration on gradient differences, padded slightly; backtracking covers
/// any underestimate.
fn gaussian_lipschitz(smooth: &impl Fn(&[f64], &mut [f64]) -> f64, n: usize) -> f64 {
    let zero = vec![0.0; n];
    let mut g0 = vec![0.0; n];
    smooth(&zero, &mut g0);
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + (k as f64 * 0.618).fract()).collect();
    let mut hv = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..100 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        smooth(&v, &mut hv);
        for k in 0..n {
            hv[k] -= g0[k];
        }
        let next = v.iter().zip(&hv).map(|(a, b)| a * b).sum::<f64>();
        v.copy_from_slice(&hv);
        if (next - est).abs() <= 1e-6 * next.abs() {
            est = next;
            break;
        }
        est = next;
    }
    1.01 * est
}

/// Adds −(1/λ₀)·A(α₀)β to `out`, one trajectory of length `timesteps` at a time.
fn accumulate_ts_penalty_gradient(beta: &[f64], a: &UniformTridiagonal, lambda: f64, out: &mut [f64]) {
    let mut av = vec![0.0; a.dim()];
    for (traj, g) in beta.chunks_exact(a.dim()).zip(out.chunks_exact_mut(a.dim())) {
        a.mul_vec(traj, &mut av).expect("trajectory length matches");
        for (gk, v) in g.iter_mut().zip(&av) {
            *gk -= v / lambda;
        }
    }
}

/// MAP estimate under a fixed tridiagonal penalty shared by every trajectory:
/// maximizes L(β) − (1/(2λ₀)) Σ βᵀA(α₀)β.
pub fn fit_ridge_ts(data: &TimedDataset, alpha: f64, lambda: f64, opt: &OptimizerConfig) -> Result<CoefficientSheet> {
    require_nonempty(data)?;
    if !(lambda > 0.0) {
        return Err(Error::config(format!("ts_lambda must be positive, got {lambda}")));
    }
    let a = UniformTridiagonal::new(alpha, data.timesteps)?;
    if !a.is_pd() {
        return Err(Error::config(format!(
            "ts_alpha {alpha} does not give a positive-definite precision for {} timesteps",
            data.timesteps
        )));
    }
    let lik = Likelihood::new(data)?;
    let x0 = vec![0.0; lik.dim()];
    let m = maximize(
        |beta: &[f64], g: &mut [f64]| {
            let mut v = lik.eval(beta, g);
            for traj in beta.chunks_exact(a.dim()) {
                v -= a.quadratic_form(traj).expect("trajectory length matches") / (2.0 * lambda);
            }
            accumulate_ts_penalty_gradient(beta, &a, lambda, g);
            v
        },
        &x0,
        opt,
    )?;
    CoefficientSheet::from_values(data.num_features, data.classes(), data.timesteps, m.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;

    fn one_point(f: f64, y: f64) -> TimedDataset {
        let mut d = TimedDataset::new(Task::Gaussian, 1, 1, 0).unwrap();
        d.push(Instance { t: 1, features: vec![(0, f)], response: Response::Real(y) }).unwrap();
        d
    }

    fn tight() -> OptimizerConfig {
        OptimizerConfig { grad_tol: 1e-10, max_iter: 2000, ..Default::default() }
    }

    #[test]
    fn ridge_scalar_examples() {
        let d = one_point(1.0, 1.0);
        assert!((fit_ridge(&d, 1.0, &tight()).unwrap().values[0] - 0.5).abs() < 1e-12);
        assert!(fit_ridge(&d, 1e12, &tight()).unwrap().values[0].abs() < 1e-11);
    }

    #[test]
    fn ridge_unpenalized_square_design() {
        let mut d = TimedDataset::new(Task::Gaussian, 1, 2, 0).unwrap();
        d.push(Instance { t: 1, features: vec![(0, 2.0), (1, 1.0)], response: Response::Real(5.0) }).unwrap();
        d.push(Instance { t: 1, features: vec![(0, 1.0), (1, -1.0)], response: Response::Real(1.0) }).unwrap();
        let b = fit_ridge(&d, 0.0, &tight()).unwrap();
        assert!((b.values[0] - 2.0).abs() < 1e-12 && (b.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_quasi_newton_path_agrees() {
        let mut d = TimedDataset::new(Task::Gaussian, 2, 3, 0).unwrap();
        for k in 0..20usize {
            let f = vec![(0, 1.0), (1, (k as f64).sin()), (2, (k as f64 * 0.3).cos())];
            d.push(Instance { t: k % 2 + 1, features: f, response: Response::Real(k as f64 * 0.1) }).unwrap();
        }
        let closed = ridge_normal_equations(&d, 0.7).unwrap();
        let lik = Likelihood::new(&d).unwrap();
        let m = maximize(
            |b: &[f64], g: &mut [f64]| {
                let mut v = lik.eval(b, g);
                for (gk, &bk) in g.iter_mut().zip(b) {
                    v -= 0.7 * bk * bk;
                    *gk -= 1.4 * bk;
                }
                v
            },
            &[0.0; 6],
            &tight(),
        )
        .unwrap();
        for (a, b) in closed.values.iter().zip(&m.x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn lasso_scalar_examples() {
        let d = one_point(1.0, 1.0);
        let s = LassoSolver::default();
        let b = fit_lasso(&d, 1.0, &s).unwrap().values[0];
        assert!((b - 0.5).abs() < 1e-7, "{b}");
        assert_eq!(fit_lasso(&d, 2.0, &s).unwrap().values[0], 0.0);
        assert_eq!(fit_lasso(&d, 3.5, &s).unwrap().values[0], 0.0);
        assert!((fit_lasso(&d, 0.0, &s).unwrap().values[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lasso_satisfies_kkt_on_text() {
        let mut d = TimedDataset::new(Task::Sage, 1, 2, 3).unwrap();
        for k in 0..12usize {
            let toks = (0..4).map(|j| ((k * 3 + j) % 3) as u32).collect();
            d.push(Instance {
                t: 1,
                features: vec![(0, 1.0), (1, (k as f64).sin())],
                response: Response::Tokens(toks),
            })
            .unwrap();
        }
        d.estimate_background();
        let b = fit_lasso(&d, 0.5, &LassoSolver::default()).unwrap();
        assert!(lasso_kkt_violation(&d, &b, 0.5).unwrap() < 1e-4);
    }

    #[test]
    fn empty_window_is_input_error() {
        let d = TimedDataset::new(Task::Gaussian, 1, 1, 0).unwrap();
        assert!(matches!(fit_ridge(&d, 1.0, &tight()), Err(Error::Input(_))));
        assert!(matches!(fit_lasso(&d, 1.0, &LassoSolver::default()), Err(Error::Input(_))));
    }

    #[test]
    fn ridge_ts_rejects_non_pd_and_bad_config() {
        let mut d = TimedDataset::new(Task::Gaussian, 3, 1, 0).unwrap();
        d.push(Instance { t: 1, features: vec![(0, 1.0)], response: Response::Real(1.0) }).unwrap();
        assert!(matches!(fit_ridge_ts(&d, -0.8, 1.0, &tight()), Err(Error::Config(_))));
        assert!(BaselineConfig::new(BaselineKind::RidgeTs, 1.0).validate().is_err());
        let mut c = BaselineConfig::new(BaselineKind::LassoOne, 1.0);
        c.ts_alpha = Some(-0.1);
        assert!(c.validate().is_err());
        assert!(BaselineConfig::ridge_ts(-0.6, 1.0).validate().is_err());
    }

    #[test]
    fn ridge_ts_penalty_gradient_matches_prior_gradient() {
        // with E[α] = α₀ and E[1/λ] = 1/λ₀ the adaptive prior gradient is the same kernel
        let beta: Vec<f64> = (0..12).map(|k| (k as f64 * 0.9).sin()).collect();
        let a = UniformTridiagonal::new(-0.3, 4).unwrap();
        let mut ours = vec![0.0; 12];
        accumulate_ts_penalty_gradient(&beta, &a, 2.5, &mut ours);
        let mut theirs = vec![0.0; 12];
        crate::varprior::accumulate_prior_gradient(&beta, 4, -0.3, 1.0 / 2.5, &mut theirs);
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn ridge_ts_prior_only_optimum_is_zero() {
        let mut d = TimedDataset::new(Task::Gaussian, 4, 2, 0).unwrap();
        d.push(Instance { t: 1, features: vec![], response: Response::Real(0.0) }).unwrap();
        let b = fit_ridge_ts(&d, -0.49, 1.0, &tight()).unwrap();
        assert!(b.values.iter().all(|v| v.abs() < 1e-12));
    }
}
