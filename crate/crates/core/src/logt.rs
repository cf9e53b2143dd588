//! Relative transition paths and the log-t convergence regression.
//!
//! For a panel `y_it`, the relative transition parameter is
//! `h_it = y_it / mean_j(y_jt)` and the cross-sectional variance is
//! `H_t = mean_i (h_it - 1)^2`. The log-t test regresses
//! `log(H_1 / H_t) - 2 log(log t)` on `log t` over `t = [rT], ..., T`
//! and runs a one-sided t-test of `b >= 0` with a Newey-West standard error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{smooth, Panel, SmoothingConfig, UnitId};

/// Relative transition paths `h` (one row per unit) and their
/// cross-sectional variance series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPaths {
    pub units: Vec<UnitId>,
    pub periods: Vec<i32>,
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub variance: Vec<f64>,
}

impl TransitionPaths {
    /// Mean path of the given rows at every period.
    pub fn mean_path(&self, rows: &[usize]) -> Vec<f64> {
        let k = rows.len() as f64;
        (0..self.periods.len())
            .map(|t| rows.iter().map(|&i| self.h[i][t]).sum::<f64>() / k)
            .collect()
    }
}

pub fn relative_transitions(panel: &Panel) -> TransitionPaths {
    let n = panel.n_units();
    let t = panel.n_periods();
    let means: Vec<f64> = (0..t)
        .map(|j| panel.column(j).sum::<f64>() / n as f64)
        .collect();
    let h: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            panel
                .series(i)
                .iter()
                .zip(&means)
                .map(|(y, m)| y / m)
                .collect()
        })
        .collect();
    let variance = (0..t)
        .map(|j| h.iter().map(|row| (row[j] - 1.0).powi(2)).sum::<f64>() / n as f64)
        .collect();
    TransitionPaths {
        units: panel.units().to_vec(),
        periods: panel.periods().to_vec(),
        h,
        variance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Bartlett,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `floor(4 (S/100)^(2/9))` for a regression sample of size S.
    #[default]
    Automatic,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HacConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
}

impl HacConfig {
    pub fn fixed(bandwidth: usize) -> Self {
        HacConfig {
            kernel: Kernel::Bartlett,
            bandwidth: Bandwidth::Fixed(bandwidth),
        }
    }

    pub fn resolve(&self, sample: usize) -> usize {
        match self.bandwidth {
            Bandwidth::Automatic => auto_bandwidth(sample),
            Bandwidth::Fixed(l) => l,
        }
    }
}

pub fn auto_bandwidth(sample: usize) -> usize {
    (4.0 * (sample as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    ConvergenceNotRejected,
    Rejected,
}

impl Decision {
    pub fn not_rejected(self) -> bool {
        self == Decision::ConvergenceNotRejected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergenceClass {
    /// `b >= 2`: convergence in levels.
    Absolute,
    /// `0 <= b < 2`: growth rates converge.
    Conditional,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSample {
    /// 1-based period index of the first regression observation.
    pub first: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogTResult {
    pub a_hat: f64,
    pub b_hat: f64,
    pub se_hac: f64,
    #[serde(with = "crate::float_repr")]
    pub t_stat: f64,
    pub alpha_hat: f64,
    pub r: f64,
    pub sample: RegressionSample,
    pub bandwidth: usize,
    pub critical_value: f64,
    pub decision: Decision,
    pub class: ConvergenceClass,
    /// Set when the tested units share bitwise-identical series: no
    /// regression is run and the group counts as trivially convergent.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub identical: bool,
}

impl LogTResult {
    fn from_estimates(
        a_hat: f64,
        b_hat: f64,
        se_hac: f64,
        r: f64,
        sample: RegressionSample,
        bandwidth: usize,
        critical_value: f64,
    ) -> Self {
        let t_stat = if se_hac > 0.0 {
            b_hat / se_hac
        } else if b_hat > 0.0 {
            f64::INFINITY
        } else if b_hat < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        let decision = if t_stat < critical_value {
            Decision::Rejected
        } else {
            Decision::ConvergenceNotRejected
        };
        let class = match decision {
            Decision::Rejected => ConvergenceClass::NotApplicable,
            _ if b_hat >= 2.0 => ConvergenceClass::Absolute,
            _ if b_hat >= 0.0 => ConvergenceClass::Conditional,
            _ => ConvergenceClass::NotApplicable,
        };
        LogTResult {
            a_hat,
            b_hat,
            se_hac,
            t_stat,
            alpha_hat: b_hat / 2.0,
            r,
            sample,
            bandwidth,
            critical_value,
            decision,
            class,
            identical: false,
        }
    }

    /// Result recorded for a group of identical series.
    pub fn identical_series(r: f64, critical_value: f64) -> Self {
        let mut res = Self::from_estimates(
            0.0,
            0.0,
            0.0,
            r,
            RegressionSample { first: 0, count: 0 },
            0,
            critical_value,
        );
        res.identical = true;
        res
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogtConfig {
    pub r: f64,
    pub hac: HacConfig,
    pub critical_value: f64,
    pub smoothing: SmoothingConfig,
}

impl Default for LogtConfig {
    fn default() -> Self {
        LogtConfig {
            r: 0.3,
            hac: HacConfig::default(),
            critical_value: -1.65,
            smoothing: SmoothingConfig::None,
        }
    }
}

impl LogtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::InvalidConfig(format!("trimming fraction {} not in (0,1)", self.r)));
        }
        if !self.critical_value.is_finite() {
            return Err(Error::InvalidConfig("critical value must be finite".into()));
        }
        self.smoothing.validate()
    }
}

/// First 1-based period index of the regression sample: `[rT]`, but never
/// before t = 2 where `log(log t)` is defined.
pub fn regression_start(periods: usize, r: f64) -> usize {
    ((r * periods as f64).floor() as usize).max(2)
}

/// Bartlett-kernel long-run variance of a score series:
/// `sum_{|l| <= L} (1 - |l|/(L+1)) gamma(l)` with `gamma(l) = (1/n) sum u_t u_{t-l}`.
pub fn bartlett_lrv(scores: &[f64], bandwidth: usize) -> f64 {
    let n = scores.len() as f64;
    let gamma = |lag: usize| -> f64 {
        scores[lag..]
            .iter()
            .zip(scores)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n
    };
    let mut lrv = gamma(0);
    for lag in 1..=bandwidth.min(scores.len().saturating_sub(1)) {
        let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
        lrv += 2.0 * w * gamma(lag);
    }
    lrv.max(0.0)
}

/// Newey-West long-run variance of the OLS slope score
/// `u_t = e_t (x_t - mean(x))`.
pub fn newey_west_lrv(residuals: &[f64], regressor: &[f64], bandwidth: usize) -> Result<f64> {
    let n = residuals.len();
    if regressor.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: regressor.len(),
        });
    }
    if n < 2 {
        return Err(Error::SampleTooSmall(n));
    }
    if bandwidth >= n {
        return Err(Error::BandwidthTooLarge { bandwidth, len: n });
    }
    let xbar = regressor.iter().sum::<f64>() / n as f64;
    let scores: Vec<f64> = residuals
        .iter()
        .zip(regressor)
        .map(|(e, x)| e * (x - xbar))
        .collect();
    Ok(bartlett_lrv(&scores, bandwidth))
}

pub fn logt_regress(
    paths: &TransitionPaths,
    r: f64,
    hac: &HacConfig,
    critical_value: f64,
) -> Result<LogTResult> {
    logt_from_variance(&paths.variance, r, hac, critical_value)
}

/// Log-t regression on a cross-sectional variance series `H_1..H_T`.
pub fn logt_from_variance(
    variance: &[f64],
    r: f64,
    hac: &HacConfig,
    critical_value: f64,
) -> Result<LogTResult> {
    let t_len = variance.len();
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidConfig(format!("trimming fraction {r} not in (0,1)")));
    }
    let first = regression_start(t_len, r);
    let count = (t_len + 1).saturating_sub(first);
    if count < 3 {
        return Err(Error::SampleTooSmall(count));
    }
    if variance[0] <= 0.0 {
        return Err(Error::DegenerateVariance(1));
    }
    if let Some(k) = (first..=t_len).find(|&t| variance[t - 1] <= 0.0) {
        return Err(Error::DegenerateVariance(k));
    }
    let h1 = variance[0];
    let x: Vec<f64> = (first..=t_len).map(|t| (t as f64).ln()).collect();
    let y: Vec<f64> = (first..=t_len)
        .zip(&x)
        .map(|(t, lt)| (h1 / variance[t - 1]).ln() - 2.0 * lt.ln())
        .collect();

    let s = count as f64;
    let xbar = x.iter().sum::<f64>() / s;
    let ybar = y.iter().sum::<f64>() / s;
    let sxx: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xbar) * (b - ybar)).sum();
    let b_hat = sxy / sxx;
    let a_hat = ybar - b_hat * xbar;
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - a_hat - b_hat * a).collect();

    let bandwidth = hac.resolve(count);
    let lrv = newey_west_lrv(&residuals, &x, bandwidth)?;
    let se_hac = (s * lrv).sqrt() / sxx;
    Ok(LogTResult::from_estimates(
        a_hat,
        b_hat,
        se_hac,
        r,
        RegressionSample { first, count },
        bandwidth,
        critical_value,
    ))
}

/// Smoothing, relative transitions and the log-t regression in one call.
pub fn convergence_test(panel: &Panel, cfg: &LogtConfig) -> Result<LogTResult> {
    cfg.validate()?;
    let smoothed;
    let panel = match cfg.smoothing {
        SmoothingConfig::None => panel,
        _ => {
            smoothed = smooth(panel, &cfg.smoothing)?;
            &smoothed
        }
    };
    let paths = relative_transitions(panel);
    logt_regress(&paths, cfg.r, &cfg.hac, cfg.critical_value)
}
