//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved with sequential minimal optimization over the usual
//! doubled variable set `(α, α*)`, selecting the maximal violating pair at
//! each step. Features are z-scored with training statistics before the
//! kernel is applied; constant features are dropped and recorded in a mask.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    /// Box constraint.
    pub c: f64,
    /// RBF width in `exp(-gamma |u - v|²)`.
    pub gamma: f64,
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    /// Stopping tolerance on the maximal KKT violation.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    10_000_000
}

impl SvrParams {
    pub fn new(c: f64, gamma: f64, epsilon: f64) -> Self {
        Self {
            c,
            gamma,
            epsilon,
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.gamma > 0.0 && self.epsilon >= 0.0 && self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("invalid SVR hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub params: SvrParams,
    /// Standardized support vectors (kept features only).
    pub support: Vec<Vec<f64>>,
    /// `α_i - α_i*` for each support vector.
    pub dual: Vec<f64>,
    pub bias: f64,
    /// Per-feature training mean and standard deviation (all features).
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `true` for features kept by standardization.
    pub keep: Vec<bool>,
    /// Final maximal KKT violation.
    pub kkt_violation: f64,
    pub iterations: usize,
}

impl SvrModel {
    pub fn n_features(&self) -> usize {
        self.keep.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        standardize_row(x, &self.mean, &self.std, &self.keep)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_features(), "feature length mismatch");
        let z = self.standardize(x);
        self.support
            .iter()
            .zip(&self.dual)
            .map(|(s, d)| d * rbf(s, &z, self.params.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

#[inline]
fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

fn standardize_row(x: &[f64], mean: &[f64], std: &[f64], keep: &[bool]) -> Vec<f64> {
    x.iter()
        .zip(mean.iter().zip(std))
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|((v, (m, s)), _)| (v - m) / s)
        .collect()
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("SVR needs at least one row".into()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("ragged feature matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite SVR input".into()));
    }
    Ok(d)
}

pub fn svr_train(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    params.validate()?;
    let d = check_inputs(x, y)?;
    let n = x.len();

    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for j in 0..d {
        mean[j] = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        std[j] = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt();
    }
    let keep: Vec<bool> = (0..d)
        .map(|j| std[j] > 1e-12 * mean[j].abs().max(1.0))
        .collect();
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardize_row(r, &mean, &std, &keep)).collect();

    let kernel: Vec<f64> = (0..n * n)
        .map(|k| rbf(&z[k / n], &z[k % n], params.gamma))
        .collect();
    let sol = solve_dual(&kernel, y, params)?;

    let mut support = Vec::new();
    let mut dual = Vec::new();
    for i in 0..n {
        let coef = sol.beta[i] - sol.beta[i + n];
        if coef != 0.0 {
            support.push(z[i].clone());
            dual.push(coef);
        }
    }
    Ok(SvrModel {
        params: *params,
        support,
        dual,
        bias: -sol.rho,
        mean,
        std,
        keep,
        kkt_violation: sol.violation,
        iterations: sol.iterations,
    })
}

struct DualSolution {
    beta: Vec<f64>,
    rho: f64,
    violation: f64,
    iterations: usize,
}

/// SMO on `min ½ βᵀQβ + pᵀβ` subject to `sᵀβ = 0`, `0 ≤ β ≤ C`, where
/// the first `n` variables carry sign +1 and the second `n` sign -1.
fn solve_dual(kernel: &[f64], y: &[f64], params: &SvrParams) -> Result<DualSolution> {
    let n = y.len();
    let l = 2 * n;
    let c = params.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let k = |a: usize, b: usize| kernel[(a % n) * n + b % n];
    let q = |a: usize, b: usize| sign(a) * sign(b) * k(a, b);

    let mut beta = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                params.epsilon - y[t]
            } else {
                params.epsilon + y[t - n]
            }
        })
        .collect();

    let in_up = |t: usize, b: f64| if t < n { b < c } else { b > 0.0 };
    let in_low = |t: usize, b: f64| if t < n { b > 0.0 } else { b < c };

    let mut iterations = 0;
    let violation = loop {
        // maximal violating pair; strict comparisons keep the lowest index
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..l {
            let v = -sign(t) * grad[t];
            if in_up(t, beta[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(t, beta[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < params.tol {
            break gap.max(0.0);
        }
        if iterations >= params.max_iter {
            return Err(Error::NotConverged {
                iterations,
                violation: gap,
            });
        }
        iterations += 1;

        let (old_i, old_j) = (beta[i], beta[j]);
        if sign(i) != sign(j) {
            let quad = (k(i, i) + k(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = (k(i, i) + k(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for t in 0..l {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    };

    // offset from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = sign(t) * grad[t];
        let s = sign(t);
        if beta[t] >= c {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[t] <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(DualSolution {
        beta,
        rho,
        violation,
        iterations,
    })
}

/// Hyperparameter grid; every combination is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Default for SvrGrid {
    fn default() -> Self {
        Self {
            c: vec![1.0, 10.0, 100.0, 1000.0],
            gamma: (-6..=2).map(|e| 2f64.powi(e)).collect(),
            epsilon: vec![0.1, 0.5, 1.0],
        }
    }
}

impl SvrGrid {
    pub fn single(p: SvrParams) -> Self {
        Self {
            c: vec![p.c],
            gamma: vec![p.gamma],
            epsilon: vec![p.epsilon],
        }
    }

    /// Distinct grid points in (C, gamma, epsilon) nesting order.
    pub fn points(&self) -> Vec<SvrParams> {
        let mut out: Vec<SvrParams> = Vec::new();
        for &c in &self.c {
            for &g in &self.gamma {
                for &e in &self.epsilon {
                    let p = SvrParams::new(c, g, e);
                    if !out.iter().any(|q| q.c == c && q.gamma == g && q.epsilon == e) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.is_empty() || self.gamma.is_empty() || self.epsilon.is_empty() {
            return Err(Error::Config("SVR grid axes must be non-empty".into()));
        }
        for p in self.points() {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: SvrParams,
    pub best_rmse: f64,
    /// Cross-validated RMSE of every distinct grid point.
    pub table: Vec<(SvrParams, f64)>,
}

/// Pooled k-fold cross-validated RMSE of one parameter setting.
pub fn cv_rmse(x: &[Vec<f64>], y: &[f64], params: &SvrParams, folds: usize, seed: u64) -> Result<f64> {
    check_inputs(x, y)?;
    let n = x.len();
    let folds = folds.clamp(2, n.max(2));
    if n < 2 {
        return Err(Error::InvalidInput("cross-validation needs at least 2 rows".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut sq = 0.0;
    for f in 0..folds {
        let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
        for (pos, &i) in order.iter().enumerate() {
            if pos % folds == f {
                vx.push(x[i].clone());
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        if vx.is_empty() || tx.is_empty() {
            continue;
        }
        let model = svr_train(&tx, &ty, params)?;
        sq += vx
            .iter()
            .zip(&vy)
            .map(|(v, t)| (model.predict(v) - t).powi(2))
            .sum::<f64>();
    }
    Ok((sq / n as f64).sqrt())
}

/// Exhaustive k-fold search. Ties go to smaller C, then larger epsilon,
/// then smaller gamma.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[f64],
    grid: &SvrGrid,
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    let mut table = Vec::new();
    for p in grid.points() {
        table.push((p, cv_rmse(x, y, &p, folds, seed)?));
    }
    let (best, best_rmse) = *table
        .iter()
        .min_by(|(a, ra), (b, rb)| {
            ra.total_cmp(rb)
                .then(a.c.total_cmp(&b.c))
                .then(b.epsilon.total_cmp(&a.epsilon))
                .then(a.gamma.total_cmp(&b.gamma))
        })
        .expect("grid is non-empty");
    Ok(GridResult {
        best,
        best_rmse,
        table,
    })
}
