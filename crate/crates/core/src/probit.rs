//! Binary probit by maximum likelihood.
//!
//! Newton-Raphson on the analytic score and Hessian, with columns rescaled
//! internally to unit max-abs so covariates of very different magnitude
//! (income and its square, say) stay well conditioned. Standard errors come
//! from the QML sandwich `H^-1 (sum g_i g_i') H^-1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Below this the normal tail is evaluated by its asymptotic expansion.
const TAIL_CUTOFF: f64 = -30.0;

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8`, the Mills-ratio series for z << 0.
fn tail_series(z: f64) -> f64 {
    let u = 1.0 / (z * z);
    1.0 - u * (1.0 - 3.0 * u * (1.0 - 5.0 * u * (1.0 - 7.0 * u)))
}

pub fn ln_norm_cdf(z: f64) -> f64 {
    if z >= TAIL_CUTOFF {
        norm_cdf(z).ln()
    } else {
        -0.5 * z * z - LN_SQRT_2PI - (-z).ln() + tail_series(z).ln()
    }
}

/// Inverse Mills ratio `phi(z) / Phi(z)`.
pub fn inv_mills(z: f64) -> f64 {
    if z >= TAIL_CUTOFF {
        norm_pdf(z) / norm_cdf(z)
    } else {
        -z / tail_series(z)
    }
}

/// Covariates with a leading constant and a binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, x: DMatrix<f64>, y: Vec<u8>) -> Result<Self> {
        let (n, p) = x.shape();
        if names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: names.len(),
            });
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if n <= p {
            return Err(Error::InvalidDesign(format!(
                "{n} observations for {p} coefficients"
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::InvalidDesign("outcome must be 0 or 1".into()));
        }
        let ones = y.iter().filter(|&&v| v == 1).count();
        if ones == 0 || ones == n {
            return Err(Error::InvalidDesign("outcome needs both classes".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("non-finite covariate".into()));
        }
        let design = DesignMatrix {
            names,
            x,
            y: y.into_iter().map(f64::from).collect(),
        };
        let (xs, _) = design.scaled();
        let sv = xs.singular_values();
        let max = sv.max();
        if sv.min().is_nan() || sv.min() <= 1e-10 * max {
            return Err(Error::Singular);
        }
        Ok(design)
    }

    /// Builds from row vectors; `rows[i]` must include the constant.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], y: Vec<u8>) -> Result<Self> {
        let p = names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: r.len(),
            });
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(names, x, y)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    /// Outcomes replaced by `1 - y`.
    pub fn flipped(&self) -> Self {
        DesignMatrix {
            names: self.names.clone(),
            x: self.x.clone(),
            y: self.y.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Covariate `col` multiplied by `k`.
    pub fn rescaled(&self, col: usize, k: f64) -> Result<Self> {
        let mut x = self.x.clone();
        x.column_mut(col).scale_mut(k);
        let y = self.y.iter().map(|&v| v as u8).collect();
        Self::new(self.names.clone(), x, y)
    }

    /// Column max-abs scaling: returns `X / s` and `s`.
    fn scaled(&self) -> (DMatrix<f64>, Vec<f64>) {
        let s: Vec<f64> = self
            .x
            .column_iter()
            .map(|c| {
                let m = c.amax();
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            })
            .collect();
        let xs = DMatrix::from_fn(self.x.nrows(), self.x.ncols(), |i, j| self.x[(i, j)] / s[j]);
        (xs, s)
    }
}

/// Log-likelihood at `beta`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let z = x * beta;
    z.iter()
        .zip(y)
        .map(|(&z, &y)| if y > 0.5 { ln_norm_cdf(z) } else { ln_norm_cdf(-z) })
        .sum()
}

/// Per-observation scores `g_i = q_i lambda(q_i z_i) x_i`, one row each.
fn scores(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> DMatrix<f64> {
    let z = x * beta;
    let mut g = x.clone();
    for i in 0..x.nrows() {
        let q = 2.0 * y[i] - 1.0;
        let w = q * inv_mills(q * z[i]);
        g.row_mut(i).scale_mut(w);
    }
    g
}

pub fn gradient(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> DVector<f64> {
    scores(x, y, beta).row_sum().transpose()
}

pub fn hessian(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> DMatrix<f64> {
    let z = x * beta;
    let p = x.ncols();
    let mut h = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let q = 2.0 * y[i] - 1.0;
        let w = q * z[i];
        let lam = inv_mills(w);
        let weight = lam * (lam + w);
        let xi = x.row(i);
        h -= xi.transpose() * xi * weight;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartValues {
    #[default]
    Zero,
    /// Intercept at the probit transform of the sample mean, slopes zero.
    /// Assumes the first column is the constant.
    SampleMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub start: StartValues,
    /// Multiply the sandwich by n/(n-p).
    pub small_sample_correction: bool,
}

impl Default for ProbitOptions {
    fn default() -> Self {
        ProbitOptions {
            max_iter: 100,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            start: StartValues::Zero,
            small_sample_correction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub cov_robust: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p_value: Vec<f64>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub mcfadden_r2: f64,
    pub lr_stat: f64,
    pub lr_df: usize,
    pub lr_p_value: f64,
    pub n: usize,
    pub n_correct: usize,
    pub mean_y: f64,
    pub sd_y: f64,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
}

/// Likelihood-based summary statistics shared by every fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStatistics {
    pub mcfadden_r2: f64,
    pub lr_stat: f64,
    pub lr_df: usize,
    pub lr_p_value: f64,
    pub aic: f64,
    pub bic: f64,
}

pub fn fit_statistics(loglik: f64, loglik_null: f64, n: usize, p: usize) -> FitStatistics {
    let lr_stat = (2.0 * (loglik - loglik_null)).max(0.0);
    let lr_df = p.saturating_sub(1);
    let lr_p_value = if lr_df == 0 {
        1.0
    } else {
        let chi = ChiSquared::new(lr_df as f64).expect("positive df");
        chi.sf(lr_stat)
    };
    FitStatistics {
        mcfadden_r2: 1.0 - loglik / loglik_null,
        lr_stat,
        lr_df,
        lr_p_value,
        aic: -2.0 * loglik + 2.0 * p as f64,
        bic: -2.0 * loglik + p as f64 * (n as f64).ln(),
    }
}

/// Intercept-only log-likelihood: `n [ybar ln ybar + (1 - ybar) ln(1 - ybar)]`.
pub fn null_log_likelihood(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    n * (m * m.ln() + (1.0 - m) * (1.0 - m).ln())
}

fn two_sided_p(z: f64) -> f64 {
    2.0 * norm_cdf(-z.abs())
}

impl ProbitFit {
    /// Diagnostics at an arbitrary coefficient vector.
    pub fn evaluate(design: &DesignMatrix, beta: &[f64], opts: &ProbitOptions) -> Result<Self> {
        let p = design.n_coef();
        if beta.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: beta.len(),
            });
        }
        let (xs, s) = design.scaled();
        let bs = DVector::from_fn(p, |j, _| beta[j] * s[j]);
        let cov_s = sandwich(&xs, &design.y, &bs)?;
        let n = design.n_obs();
        let factor = if opts.small_sample_correction {
            n as f64 / (n - p) as f64
        } else {
            1.0
        };
        let cov = DMatrix::from_fn(p, p, |j, k| factor * cov_s[(j, k)] / (s[j] * s[k]));
        let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
        let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
        let p_value = z.iter().map(|&z| two_sided_p(z)).collect();
        let loglik = log_likelihood(&xs, &design.y, &bs);
        let loglik_null = null_log_likelihood(&design.y);
        let stats = fit_statistics(loglik, loglik_null, n, p);
        let eta = &xs * &bs;
        let n_correct = eta
            .iter()
            .zip(&design.y)
            .filter(|(&e, &y)| (norm_cdf(e) > 0.5) == (y > 0.5))
            .count();
        let mean_y = design.y.iter().sum::<f64>() / n as f64;
        let sd_y = (design.y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        Ok(ProbitFit {
            names: design.names.clone(),
            beta: beta.to_vec(),
            cov_robust: (0..p).map(|j| (0..p).map(|k| cov[(j, k)]).collect()).collect(),
            se,
            z,
            p_value,
            loglik,
            loglik_null,
            mcfadden_r2: stats.mcfadden_r2,
            lr_stat: stats.lr_stat,
            lr_df: stats.lr_df,
            lr_p_value: stats.lr_p_value,
            n,
            n_correct,
            mean_y,
            sd_y,
            aic: stats.aic,
            bic: stats.bic,
            iterations: 0,
        })
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }
}

fn sandwich(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = hessian(x, y, beta);
    let h_inv = h.try_inverse().ok_or(Error::Singular)?;
    let g = scores(x, y, beta);
    let meat = g.transpose() * &g;
    let cov = &h_inv * meat * &h_inv;
    Ok((&cov + cov.transpose()) * 0.5)
}

pub fn fit_probit(design: &DesignMatrix) -> Result<ProbitFit> {
    fit_probit_with(design, &ProbitOptions::default())
}

pub fn fit_probit_with(design: &DesignMatrix, opts: &ProbitOptions) -> Result<ProbitFit> {
    let (xs, s) = design.scaled();
    let y = &design.y;
    let p = design.n_coef();
    let mut beta = DVector::zeros(p);
    if opts.start == StartValues::SampleMean {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let normal = statrs::distribution::Normal::standard();
        beta[0] = normal.inverse_cdf(m) * s[0];
    }
    let separation = |beta: &DVector<f64>| -> Error {
        let orig: Vec<f64> = (0..p).map(|j| beta[j] / s[j]).collect();
        let norm = orig.iter().map(|v| v * v).sum::<f64>().sqrt();
        Error::Separation {
            direction: orig.iter().map(|v| v / norm).collect(),
        }
    };
    let mut ll = log_likelihood(&xs, y, &beta);
    let mut norms = Vec::with_capacity(opts.max_iter);
    for iter in 1..=opts.max_iter {
        let g = gradient(&xs, y, &beta);
        let neg_h = -hessian(&xs, y, &beta);
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            // the curvature vanishes along a separating direction
            None if perfectly_fitted(&xs, y, &beta) => return Err(separation(&beta)),
            None => neg_h.lu().solve(&g).ok_or(Error::Singular)?,
        };
        let converged = g.amax() < opts.grad_tol && step.norm() < opts.step_tol;
        // step halving keeps the likelihood non-decreasing
        let mut t = 1.0;
        let mut next = &beta + &step;
        let mut ll_next = log_likelihood(&xs, y, &next);
        while (ll_next.is_nan() || ll_next < ll - 1e-12 * ll.abs()) && t > 1e-10 {
            t *= 0.5;
            next = &beta + &step * t;
            ll_next = log_likelihood(&xs, y, &next);
        }
        beta = next;
        ll = ll_next;
        norms.push(beta.norm());

        let eta = &xs * &beta;
        let fit_side: Vec<f64> = eta.iter().zip(y).map(|(&e, &y)| (2.0 * y - 1.0) * e).collect();
        // beta itself separates the classes: the likelihood has no maximum
        if !converged && fit_side.iter().all(|&w| w > 0.0) {
            return Err(separation(&beta));
        }
        if converged {
            let orig: Vec<f64> = (0..p).map(|j| beta[j] / s[j]).collect();
            let mut fit = ProbitFit::evaluate(design, &orig, opts)?;
            fit.iterations = iter;
            return Ok(fit);
        }
    }
    // quasi-complete separation: some observations fitted perfectly while
    // the coefficient norm keeps growing
    let k = norms.len();
    let growing = k >= 10 && norms[k - 10..].windows(2).all(|w| w[1] > w[0]);
    if growing && perfectly_fitted(&xs, y, &beta) {
        return Err(separation(&beta));
    }
    Err(Error::NoConvergence(opts.max_iter))
}

/// Some observation sits more than 8 standard deviations on its correct
/// side, i.e. its fitted probability is numerically 0 or 1.
fn perfectly_fitted(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> bool {
    (x * beta)
        .iter()
        .zip(y)
        .any(|(&e, &y)| (2.0 * y - 1.0) * e > 8.0)
}

/// Fitted probability `Phi(x'beta)`.
pub fn predict_prob(fit: &ProbitFit, x: &[f64]) -> Result<f64> {
    Ok(norm_cdf(fit.linear_predictor(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
}

/// Predicted positive when the fitted probability exceeds `threshold`.
pub fn classification_table(fit: &ProbitFit, design: &DesignMatrix, threshold: f64) -> Result<Classification> {
    let mut c = Classification {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
        accuracy: 0.0,
    };
    for (i, &y) in design.y.iter().enumerate() {
        let row: Vec<f64> = design.x.row(i).iter().copied().collect();
        let positive = predict_prob(fit, &row)? > threshold;
        match (positive, y > 0.5) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c.accuracy = (c.tp + c.tn) as f64 / design.n_obs() as f64;
    Ok(c)
}
