//! Independent reference implementations shared by the oracle tests.
#![allow(dead_code)]

use clubconv_core::panel::{Panel, UnitId};
use clubconv_core::probit::{fit_probit, DesignMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn panel(rows: Vec<Vec<f64>>) -> Panel {
    let units = (0..rows.len()).map(|i| UnitId::new(format!("U{i:02}"))).collect();
    Panel::new(units, 1990, rows).unwrap()
}

pub fn random_panel(rng: &mut ChaCha8Rng) -> Panel {
    let n = rng.random_range(3..16);
    let t = rng.random_range(10..61);
    let rows = (0..n)
        .map(|_| {
            let level: f64 = rng.random_range(0.5..3.0);
            (1..=t)
                .map(|s| {
                    let z: f64 = rng.sample(StandardNormal);
                    level * (1.0 + 0.3 * z / (s as f64).sqrt()).abs().max(0.01)
                })
                .collect()
        })
        .collect();
    panel(rows)
}

/// OLS and HAC variance from the textbook matrix formulas:
/// `beta = (X'X)^-1 X'y` and `V = (X'X)^-1 (sum_ts w_ts x_t e_t e_s x_s') (X'X)^-1`.
pub fn matrix_oracle(variance: &[f64], r: f64, bandwidth: usize) -> (f64, f64, f64) {
    let t_len = variance.len();
    let first = (r * t_len as f64).floor().max(2.0) as usize;
    let ts: Vec<usize> = (first..=t_len).collect();
    let s = ts.len();
    let x = DMatrix::from_fn(s, 2, |i, j| if j == 0 { 1.0 } else { (ts[i] as f64).ln() });
    let y = DVector::from_iterator(
        s,
        ts.iter()
            .map(|&t| (variance[0] / variance[t - 1]).ln() - 2.0 * (t as f64).ln().ln()),
    );
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * &y;
    let e = &y - &x * &beta;
    let mut meat = DMatrix::zeros(2, 2);
    for i in 0..s {
        for j in 0..s {
            let lag = i.abs_diff(j);
            if lag > bandwidth {
                continue;
            }
            let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
            meat += w * e[i] * e[j] * x.row(i).transpose() * x.row(j);
        }
    }
    let v = &xtx_inv * meat * &xtx_inv;
    (beta[0], beta[1], v[(1, 1)].sqrt())
}

/// Design with an intercept and `k` standard-normal covariates, responses
/// drawn from the probit model at `beta`.
pub fn simulate(rng: &mut ChaCha8Rng, n: usize, beta: &[f64]) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        row.extend((1..beta.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let e: f64 = rng.sample(StandardNormal);
        y.push(u8::from(eta + e > 0.0));
        rows.push(row);
    }
    (rows, y)
}

pub fn names(p: usize) -> Vec<String> {
    std::iter::once("const".to_string())
        .chain((1..p).map(|j| format!("x{j}")))
        .collect()
}

/// Random design that the fitter accepts (not separated, both classes).
pub fn random_design(seed: u64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p = rng.random_range(2..4);
        let n = rng.random_range(30..90);
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (rows, y) = simulate(&mut rng, n, &beta);
        if let Ok(d) = DesignMatrix::from_rows(names(p), &rows, y) {
            if fit_probit(&d).is_ok() {
                return d;
            }
        }
    }
}

pub fn oracle_loglik(x: &DMatrix<f64>, y: &[f64], b: &[f64]) -> f64 {
    let nd = Normal::standard();
    (0..x.nrows())
        .map(|i| {
            let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * b[j]).sum();
            let q = 2.0 * y[i] - 1.0;
            nd.cdf(q * eta).ln()
        })
        .sum()
}

/// Derivative-free maximiser: Nelder-Mead with restarts from the best vertex.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64]) -> Vec<f64> {
    let p = start.len();
    let mut best = start.to_vec();
    for _ in 0..6 {
        let mut simplex: Vec<Vec<f64>> = vec![best.clone()];
        for j in 0..p {
            let mut v = best.clone();
            v[j] += 0.5;
            simplex.push(v);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
        for _ in 0..20_000 {
            let mut order: Vec<usize> = (0..=p).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();
            if (vals[p] - vals[0]).abs() < 1e-15 {
                break;
            }
            let centroid: Vec<f64> = (0..p).map(|j| simplex[..p].iter().map(|v| v[j]).sum::<f64>() / p as f64).collect();
            let along = |c: f64| -> Vec<f64> { (0..p).map(|j| centroid[j] + c * (simplex[p][j] - centroid[j])).collect() };
            let r = along(-1.0);
            let fr = f(&r);
            if fr < vals[0] {
                let e = along(-2.0);
                let fe = f(&e);
                if fe < fr {
                    simplex[p] = e;
                    vals[p] = fe;
                } else {
                    simplex[p] = r;
                    vals[p] = fr;
                }
            } else if fr < vals[p - 1] {
                simplex[p] = r;
                vals[p] = fr;
            } else {
                let c = if fr < vals[p] { along(-0.5) } else { along(0.5) };
                let fc = f(&c);
                if fc < vals[p].min(fr) {
                    simplex[p] = c;
                    vals[p] = fc;
                } else {
                    for i in 1..=p {
                        simplex[i] = (0..p).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let i = (0..=p).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        best = simplex[i].clone();
    }
    best
}
