//! Correlation and error statistics, and the repeated random-split
//! protocol used to report final performance.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::svr::{grid_search, svr_train, SvrGrid};
use crate::{rng, Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("need at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    Ok(())
}

/// Pearson linear correlation coefficient.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("degenerate input: zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation coefficient.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    plcc(&average_ranks(x), &average_ranks(y))
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidInput("rmse needs equal, non-empty inputs".into()));
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / x.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub trials: usize,
    pub train_fraction: f64,
    pub folds: usize,
    pub grid: SvrGrid,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            train_fraction: 0.8,
            folds: 5,
            grid: SvrGrid::default(),
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("eval.trials must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("eval.train_fraction must lie in (0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("eval.folds must be at least 2".into()));
        }
        self.grid.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub plcc: f64,
    pub srocc: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub trials: Vec<TrialMetrics>,
    pub mean: TrialMetrics,
    pub median: TrialMetrics,
    pub trial_count: usize,
    pub seed: u64,
}

impl EvalSummary {
    pub fn from_trials(trials: Vec<TrialMetrics>, seed: u64) -> Self {
        let agg = |f: fn(&TrialMetrics) -> f64| {
            let mut v: Vec<f64> = trials.iter().map(f).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            let median = if v.len() % 2 == 1 {
                v[mid]
            } else {
                0.5 * (v[mid - 1] + v[mid])
            };
            (mean, median)
        };
        let (p, s, r) = (agg(|t| t.plcc), agg(|t| t.srocc), agg(|t| t.rmse));
        Self {
            trial_count: trials.len(),
            trials,
            mean: TrialMetrics {
                plcc: p.0,
                srocc: s.0,
                rmse: r.0,
            },
            median: TrialMetrics {
                plcc: p.1,
                srocc: s.1,
                rmse: r.1,
            },
            seed,
        }
    }

    pub fn table(&self) -> String {
        format!(
            "trials: {}  seed: {}\n{:<8}{:>10}{:>10}{:>10}\n{:<8}{:>10.4}{:>10.4}{:>10.4}\n{:<8}{:>10.4}{:>10.4}{:>10.4}\n",
            self.trial_count,
            self.seed,
            "",
            "PLCC",
            "SROCC",
            "RMSE",
            "mean",
            self.mean.plcc,
            self.mean.srocc,
            self.mean.rmse,
            "median",
            self.median.plcc,
            self.median.srocc,
            self.median.rmse,
        )
    }
}

/// Seeded random train/test partition with `round(fraction * n)` training
/// rows.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let test = idx.split_off(n_train);
    (idx, test)
}

pub fn split_protocol(features: &[Vec<f64>], mos: &[f64], cfg: &SplitConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    if features.len() != mos.len() {
        return Err(Error::InvalidInput("feature rows and MOS values differ in count".into()));
    }
    if features.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "split protocol needs at least 10 rows, got {}",
            features.len()
        )));
    }
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let run = || -> Result<TrialMetrics> {
            let seed = rng::child_seed(cfg.seed, t as u64);
            let (train, test) = split_indices(features.len(), cfg.train_fraction, seed);
            let pick = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
                (ix.iter().map(|&i| features[i].clone()).collect(), ix.iter().map(|&i| mos[i]).collect())
            };
            let (tx, ty) = pick(&train);
            let (vx, vy) = pick(&test);
            let best = grid_search(&tx, &ty, &cfg.grid, cfg.folds, seed)?.best;
            let model = svr_train(&tx, &ty, &best)?;
            let pred = model.predict_many(&vx);
            Ok(TrialMetrics {
                plcc: plcc(&pred, &vy)?,
                srocc: srocc(&pred, &vy)?,
                rmse: rmse(&pred, &vy)?,
            })
        };
        trials.push(run().map_err(|e| Error::Trial {
            trial: t,
            source: Box::new(e),
        })?);
    }
    Ok(EvalSummary::from_trials(trials, cfg.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plcc_examples() {
        let x = [1.0, 2.0, 3.0, 4.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((plcc(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((plcc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let expect = 1.0 / (2f64.sqrt() * (2.0f64 / 3.0).sqrt());
        assert!((plcc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.8660).abs() < 1e-4);
    }

    #[test]
    fn plcc_degenerate() {
        assert!(matches!(plcc(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(plcc(&[1.0], &[1.0]).is_err());
        assert!(plcc(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn srocc_examples() {
        assert!((srocc(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((srocc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[1.0, 5.0], &[2.0, 0.5]).unwrap(), rmse(&[2.0, 0.5], &[1.0, 5.0]).unwrap());
    }

    #[test]
    fn split_arithmetic() {
        let (train, test) = split_indices(10, 0.8, 3);
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(25, 0.8, 1).0.len(), 20);
        assert_eq!(split_indices(13, 0.8, 1).0.len(), 10);
    }

    #[test]
    fn summary_statistics() {
        let t = |v: f64| TrialMetrics { plcc: v, srocc: v, rmse: v };
        let s = EvalSummary::from_trials(vec![t(0.1), t(0.9), t(0.2)], 4);
        assert!((s.mean.plcc - 0.4).abs() < 1e-12);
        assert_eq!(s.median.srocc, 0.2);
        assert_eq!(s.trial_count, 3);
        assert!(s.table().contains("median"));
    }

    #[test]
    fn protocol_rejects_small_sets() {
        let x = vec![vec![1.0]; 9];
        let y = vec![1.0; 9];
        assert!(split_protocol(&x, &y, &SplitConfig::default()).is_err());
    }
}
