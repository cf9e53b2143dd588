//! JSON report layout.

use std::collections::BTreeMap;

use clubconv_core::clustering::{Club, ClubPartition, MergeTest, TransitionTest};
use clubconv_core::logt::{ConvergenceClass, Decision, LogTResult};
use clubconv_core::probit::{Classification, DesignMatrix, ProbitFit};
use clubconv_core::simlab::{ClubSpec, DgpConfig, SummaryRow};
use clubconv_core::float_repr;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub recipe: String,
    pub config: BTreeMap<String, String>,
    /// SHA-256 over every input file.
    pub data_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClubRow {
    pub members: Vec<String>,
    pub b_hat: f64,
    #[serde(with = "float_repr")]
    pub t_stat: f64,
    pub alpha_hat: f64,
    pub se_hac: f64,
    pub decision: Decision,
    pub class: ConvergenceClass,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub identical: bool,
}

impl From<&Club> for ClubRow {
    fn from(c: &Club) -> Self {
        ClubRow {
            members: c.members.clone(),
            b_hat: c.test.b_hat,
            t_stat: c.test.t_stat,
            alpha_hat: c.test.alpha_hat,
            se_hac: c.test.se_hac,
            decision: c.test.decision,
            class: c.test.class,
            identical: c.test.identical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    /// Name given in the config; absent for heuristic subsets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub test: TransitionTest,
}

/// Overall test, clubs before and after merging, and transition tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClubAnalysis {
    pub logt: Option<LogTResult>,
    pub initial_clubs: Vec<ClubRow>,
    pub clubs: Vec<ClubRow>,
    pub divergent: Vec<String>,
    pub merges: Vec<MergeTest>,
    pub transitions: Vec<TransitionRow>,
}

impl ClubAnalysis {
    pub fn new(
        logt: LogTResult,
        initial: &ClubPartition,
        merged: &ClubPartition,
        labels: &[Option<String>],
    ) -> Self {
        ClubAnalysis {
            logt: Some(logt),
            initial_clubs: initial.clubs.iter().map(ClubRow::from).collect(),
            clubs: merged.clubs.iter().map(ClubRow::from).collect(),
            divergent: merged.divergent.clone(),
            merges: merged.merge_tests.clone(),
            transitions: merged
                .transition_tests
                .iter()
                .zip(labels.iter().cloned().chain(std::iter::repeat(None)))
                .map(|(t, label)| TransitionRow { label, test: t.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub name: String,
    #[serde(flatten)]
    pub analysis: ClubAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub beta: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub stat: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classified {
    pub correct: usize,
    pub total: usize,
    pub threshold: f64,
    #[serde(flatten)]
    pub table: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitted {
    pub unit: String,
    pub y: u8,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitReport {
    pub coef: Vec<CoefRow>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub mcfadden_r2: f64,
    pub lr: LrTest,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    pub mean_y: f64,
    pub sd_y: f64,
    pub iterations: usize,
    pub classified: Classified,
    pub fitted: Vec<Fitted>,
}

impl ProbitReport {
    pub fn new(fit: &ProbitFit, design: &DesignMatrix, units: &[String], table: Classification, threshold: f64) -> Self {
        let fitted = units
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let row: Vec<f64> = design.x().row(i).iter().copied().collect();
                Fitted {
                    unit: u.clone(),
                    y: u8::from(design.y()[i] > 0.5),
                    p: clubconv_core::probit::predict_prob(fit, &row).expect("row matches the fit"),
                }
            })
            .collect();
        ProbitReport {
            coef: (0..fit.beta.len())
                .map(|j| CoefRow {
                    name: fit.names[j].clone(),
                    beta: fit.beta[j],
                    se: fit.se[j],
                    z: fit.z[j],
                    p: fit.p_value[j],
                })
                .collect(),
            loglik: fit.loglik,
            loglik_null: fit.loglik_null,
            mcfadden_r2: fit.mcfadden_r2,
            lr: LrTest {
                stat: fit.lr_stat,
                df: fit.lr_df,
                p: fit.lr_p_value,
            },
            aic: fit.aic,
            bic: fit.bic,
            n: fit.n,
            mean_y: fit.mean_y,
            sd_y: fit.sd_y,
            iterations: fit.iterations,
            classified: Classified {
                correct: table.tp + table.tn,
                total: fit.n,
                threshold,
                table,
            },
            fitted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRow {
    pub periods: usize,
    pub clubs: Vec<ClubSpec>,
    pub slowly_varying: bool,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: SummaryRow,
}

impl MonteCarloRow {
    pub fn new(cell: &DgpConfig, summary: SummaryRow) -> Self {
        MonteCarloRow {
            periods: cell.periods,
            clubs: cell.clubs.clone(),
            slowly_varying: cell.slowly_varying,
            seed: cell.seed,
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    #[serde(flatten)]
    pub analysis: ClubAnalysis,
    pub probit: Option<ProbitReport>,
    pub sectors: Vec<SectorReport>,
    pub montecarlo: Vec<MonteCarloRow>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
