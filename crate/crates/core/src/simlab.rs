//! Synthetic panels from the single-factor model `y_it = delta_it * mu_t`
//! with known club structure, and a Monte-Carlo harness over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{identify_clubs, merge_clubs, ClubPartition, ClusterConfig};
use crate::error::{Error, Result};
use crate::logt::{convergence_test, Decision};
use crate::panel::{Panel, UnitId};

const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClubSpec {
    pub n_units: usize,
    pub delta_limit: f64,
    pub alpha: f64,
    pub noise_sd: f64,
}

/// `mu_t = initial * (1 + growth)^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonTrend {
    pub growth: f64,
    pub initial: f64,
}

impl Default for CommonTrend {
    fn default() -> Self {
        CommonTrend {
            growth: 0.02,
            initial: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub clubs: Vec<ClubSpec>,
    pub periods: usize,
    pub mu: CommonTrend,
    pub seed: u64,
    /// Divide the decay term by `L(t) = log(t + 1)`.
    #[serde(default)]
    pub slowly_varying: bool,
    #[serde(default = "default_first_year")]
    pub first_year: i32,
}

fn default_first_year() -> i32 {
    2001
}

impl DgpConfig {
    pub fn new(clubs: Vec<ClubSpec>, periods: usize, seed: u64) -> Self {
        DgpConfig {
            clubs,
            periods,
            mu: CommonTrend::default(),
            seed,
            slowly_varying: false,
            first_year: default_first_year(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.periods < 10 {
            return bad(format!("need at least 10 periods, got {}", self.periods));
        }
        if !(self.mu.growth >= 0.0 && self.mu.growth.is_finite()) {
            return bad("growth rate must be non-negative".into());
        }
        if !(self.mu.initial > 0.0 && self.mu.initial.is_finite()) {
            return bad("initial level must be positive".into());
        }
        if self.clubs.iter().map(|c| c.n_units).sum::<usize>() < 2 {
            return bad("need at least two units".into());
        }
        for c in &self.clubs {
            if c.n_units == 0 {
                return bad("club without units".into());
            }
            if !(c.delta_limit > 0.0 && c.delta_limit.is_finite()) {
                return bad(format!("delta limit {} must be positive", c.delta_limit));
            }
            if !(c.alpha >= 0.0 && c.alpha.is_finite()) || !(c.noise_sd >= 0.0 && c.noise_sd.is_finite()) {
                return bad("alpha and noise sd must be non-negative".into());
            }
        }
        Ok(())
    }

    pub fn total_units(&self) -> usize {
        self.clubs.iter().map(|c| c.n_units).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPanel {
    pub panel: Panel,
    /// 0-based true club of every unit.
    pub membership: Vec<usize>,
}

impl SimPanel {
    pub fn true_clubs(&self) -> Vec<std::collections::BTreeSet<String>> {
        let k = self.membership.iter().max().map_or(0, |m| m + 1);
        (0..k)
            .map(|c| {
                self.membership
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m == c)
                    .map(|(i, _)| self.panel.units()[i].code.clone())
                    .collect()
            })
            .collect()
    }
}

pub fn generate_panel(cfg: &DgpConfig) -> Result<SimPanel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mu: Vec<f64> = (1..=cfg.periods)
        .map(|t| cfg.mu.initial * (1.0 + cfg.mu.growth).powi(t as i32))
        .collect();
    let mut units = Vec::new();
    let mut rows = Vec::new();
    let mut membership = Vec::new();
    for (c, spec) in cfg.clubs.iter().enumerate() {
        for k in 0..spec.n_units {
            let mut row = Vec::with_capacity(cfg.periods);
            for (t, m) in (1..=cfg.periods).zip(&mu) {
                let tf = t as f64;
                let mut decay = tf.powf(-spec.alpha);
                if cfg.slowly_varying {
                    decay /= (tf + 1.0).ln();
                }
                let scale = spec.noise_sd * decay;
                let mut delta = None;
                for _ in 0..MAX_REDRAWS {
                    let xi: f64 = rng.sample(StandardNormal);
                    let d = spec.delta_limit + scale * xi;
                    if d > 0.0 {
                        delta = Some(d);
                        break;
                    }
                }
                let delta = delta.ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "no positive draw in {MAX_REDRAWS} attempts (club {}, t = {t})",
                        c + 1
                    ))
                })?;
                row.push(delta * m);
            }
            units.push(UnitId::new(format!("C{}U{:03}", c + 1, k + 1)));
            rows.push(row);
            membership.push(c);
        }
    }
    Ok(SimPanel {
        panel: Panel::new(units, cfg.first_year, rows)?,
        membership,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Logt,
    Clustering,
}

/// One Monte-Carlo grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub replications: usize,
    /// Replications whose overall log-t regression could not be run.
    pub failed: usize,
    #[serde(with = "crate::float_repr")]
    pub rejection_rate: f64,
    #[serde(with = "crate::float_repr")]
    pub mean_b_hat: f64,
    #[serde(with = "crate::float_repr")]
    pub sd_b_hat: f64,
    pub recovery_rate: Option<f64>,
    pub mean_ari: Option<f64>,
    pub mean_clubs: Option<f64>,
}

struct Replication {
    b_hat: Option<f64>,
    rejected: bool,
    recovered: Option<bool>,
    ari: Option<f64>,
    clubs: Option<usize>,
}

/// Labels per unit: club index, divergent units as singletons.
pub fn partition_labels(partition: &ClubPartition, codes: &[String]) -> Vec<usize> {
    let k = partition.clubs.len();
    let mut next = k;
    codes
        .iter()
        .map(|c| {
            partition.club_of(c).unwrap_or_else(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

/// Exact recovery: same club sets as the truth and no divergent units.
pub fn exactly_recovered(sim: &SimPanel, partition: &ClubPartition) -> bool {
    if !partition.divergent.is_empty() {
        return false;
    }
    let mut got = partition.member_sets();
    let mut want = sim.true_clubs();
    got.sort();
    want.sort();
    got == want
}

fn replicate(cfg: &DgpConfig, analysis: Analysis, cluster: &ClusterConfig, merge: bool) -> Result<Replication> {
    let sim = generate_panel(cfg)?;
    let overall = convergence_test(&sim.panel, &cluster.logt).ok();
    let mut rep = Replication {
        b_hat: overall.map(|r| r.b_hat),
        rejected: overall.is_some_and(|r| r.decision == Decision::Rejected),
        recovered: None,
        ari: None,
        clubs: None,
    };
    if analysis == Analysis::Clustering {
        let part = match identify_clubs(&sim.panel, cluster) {
            Ok(p) if merge => merge_clubs(&sim.panel, &p, cluster).ok(),
            Ok(p) => Some(p),
            Err(_) => None,
        };
        if let Some(part) = part {
            let codes = sim.panel.codes();
            rep.recovered = Some(exactly_recovered(&sim, &part));
            rep.ari = Some(adjusted_rand_index(&partition_labels(&part, &codes), &sim.membership));
            rep.clubs = Some(part.clubs.len());
        } else {
            rep.recovered = Some(false);
        }
    }
    Ok(rep)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Runs `replications` draws of every grid cell with seeds `seed, seed+1, ...`
/// and summarises each cell. Replications run in parallel; the summary does
/// not depend on scheduling.
pub fn monte_carlo(
    grid: &[DgpConfig],
    analysis: Analysis,
    replications: usize,
    cluster: &ClusterConfig,
    merge: bool,
) -> Result<Vec<SummaryRow>> {
    if replications == 0 {
        return Err(Error::InvalidConfig("replications must be at least 1".into()));
    }
    cluster.validate()?;
    grid.iter()
        .enumerate()
        .map(|(cell, base)| {
            base.validate()?;
            let reps: Vec<Replication> = (0..replications as u64)
                .into_par_iter()
                .map(|k| {
                    let mut cfg = base.clone();
                    cfg.seed = base.seed.wrapping_add(k);
                    replicate(&cfg, analysis, cluster, merge)
                })
                .collect::<Result<_>>()?;
            let b: Vec<f64> = reps.iter().filter_map(|r| r.b_hat).collect();
            let ok = b.len();
            let mb = mean(&b);
            let sd = if ok > 1 {
                (b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (ok - 1) as f64).sqrt()
            } else {
                0.0
            };
            let rejected = reps.iter().filter(|r| r.rejected).count();
            let frac = |f: &dyn Fn(&Replication) -> Option<f64>| -> Option<f64> {
                let v: Vec<f64> = reps.iter().filter_map(f).collect();
                (analysis == Analysis::Clustering)
                    .then(|| mean(&v))
                    .filter(|m| !m.is_nan())
            };
            Ok(SummaryRow {
                cell,
                replications,
                failed: replications - ok,
                rejection_rate: if ok > 0 { rejected as f64 / ok as f64 } else { f64::NAN },
                mean_b_hat: mb,
                sd_b_hat: sd,
                recovery_rate: frac(&|r| r.recovered.map(|x| f64::from(u8::from(x)))),
                mean_ari: frac(&|r| r.ari),
                mean_clubs: frac(&|r| r.clubs.map(|c| c as f64)),
            })
        })
        .collect()
}
