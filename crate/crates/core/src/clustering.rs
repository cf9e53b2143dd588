//! Endogenous convergence-club detection.
//!
//! Units are ordered by a terminal statistic, a core group is grown from the
//! top of the ordering while the log-t statistic stays above the core
//! threshold, remaining units are sieved one at a time against the core,
//! and the procedure recurses on whatever is left. Adjacent clubs can then be
//! merged and cross-boundary subsets tested for transitions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logt::{logt_from_variance, LogTResult, LogtConfig};
use crate::panel::{smooth, Panel, SmoothingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fraction", rename_all = "snake_case")]
pub enum Ordering {
    #[default]
    FinalPeriod,
    /// Mean over the last `f` share of the periods, `0 < f <= 1`.
    MeanLastFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub ordering: Ordering,
    pub sieve_threshold: f64,
    pub core_threshold: f64,
    /// Increment applied to the sieve threshold when a sieved club fails
    /// its own log-t test.
    pub sieve_step: f64,
    pub logt: LogtConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            ordering: Ordering::FinalPeriod,
            sieve_threshold: 0.0,
            core_threshold: -1.65,
            sieve_step: 0.05,
            logt: LogtConfig::default(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if let Ordering::MeanLastFraction(f) = self.ordering {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!("ordering fraction {f} not in (0,1]")));
            }
        }
        if !self.sieve_threshold.is_finite() || !self.core_threshold.is_finite() {
            return Err(Error::InvalidConfig("thresholds must be finite".into()));
        }
        if !(self.sieve_step > 0.0 && self.sieve_step.is_finite()) {
            return Err(Error::InvalidConfig("sieve step must be positive".into()));
        }
        self.logt.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Club {
    pub members: Vec<String>,
    pub test: LogTResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTest {
    /// 1-based indices of the adjacent clubs at the time of the test.
    pub clubs: (usize, usize),
    pub members: Vec<String>,
    pub test: LogTResult,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTest {
    /// 1-based indices of the two adjacent clubs the subset is drawn from.
    pub clubs: (usize, usize),
    pub members: Vec<String>,
    pub test: LogTResult,
    /// True when the subset came from the default half/half rule rather
    /// than an explicit subset from the config.
    #[serde(default)]
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClubPartition {
    pub clubs: Vec<Club>,
    pub divergent: Vec<String>,
    #[serde(default)]
    pub merge_tests: Vec<MergeTest>,
    #[serde(default)]
    pub transition_tests: Vec<TransitionTest>,
}

impl ClubPartition {
    /// 0-based club index of a unit, if it belongs to a club.
    pub fn club_of(&self, code: &str) -> Option<usize> {
        self.clubs
            .iter()
            .position(|c| c.members.iter().any(|m| m == code))
    }

    pub fn member_sets(&self) -> Vec<BTreeSet<String>> {
        self.clubs
            .iter()
            .map(|c| c.members.iter().cloned().collect())
            .collect()
    }

    /// Checks that clubs and divergent units partition `codes` exactly and
    /// that every club has at least two members and passes its test.
    pub fn check_invariants(&self, codes: &[String]) -> std::result::Result<(), String> {
        let mut seen = BTreeSet::new();
        for m in self.clubs.iter().flat_map(|c| &c.members).chain(&self.divergent) {
            if !seen.insert(m.as_str()) {
                return Err(format!("unit {m} appears twice"));
            }
        }
        let all: BTreeSet<&str> = codes.iter().map(String::as_str).collect();
        if seen != all {
            return Err("clubs and divergent set do not cover the panel".into());
        }
        for (k, c) in self.clubs.iter().enumerate() {
            if c.members.len() < 2 {
                return Err(format!("club {} has fewer than two members", k + 1));
            }
            if !c.test.decision.not_rejected() {
                return Err(format!("club {} fails its log-t test", k + 1));
            }
        }
        for m in &self.merge_tests {
            if m.clubs.1 != m.clubs.0 + 1 {
                return Err("merge test between non-adjacent clubs".into());
            }
        }
        Ok(())
    }
}

/// Smoothed panel plus the regression settings, evaluated on unit subsets.
struct Engine<'a> {
    panel: std::borrow::Cow<'a, Panel>,
    cfg: &'a ClusterConfig,
}

impl<'a> Engine<'a> {
    fn new(panel: &'a Panel, cfg: &'a ClusterConfig) -> Result<Self> {
        cfg.validate()?;
        let panel = match cfg.logt.smoothing {
            SmoothingConfig::None => std::borrow::Cow::Borrowed(panel),
            s => std::borrow::Cow::Owned(smooth(panel, &s)?),
        };
        Ok(Engine { panel, cfg })
    }

    fn variance(&self, idx: &[usize]) -> Vec<f64> {
        let n = idx.len() as f64;
        (0..self.panel.n_periods())
            .map(|t| {
                let mean = idx.iter().map(|&i| self.panel.value(i, t)).sum::<f64>() / n;
                if mean <= 0.0 {
                    return 0.0;
                }
                idx.iter()
                    .map(|&i| (self.panel.value(i, t) / mean - 1.0).powi(2))
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    fn test(&self, idx: &[usize]) -> Result<LogTResult> {
        let l = &self.cfg.logt;
        logt_from_variance(&self.variance(idx), l.r, &l.hac, l.critical_value)
    }

    /// t-statistic of a subset; subsets with a degenerate variance series
    /// count as non-convergent.
    fn stat(&self, idx: &[usize]) -> f64 {
        self.test(idx).map_or(f64::NEG_INFINITY, |r| r.t_stat)
    }

    fn converges(&self, idx: &[usize]) -> bool {
        self.test(idx).is_ok_and(|r| r.decision.not_rejected())
    }

    fn identical(&self, a: usize, b: usize) -> bool {
        self.panel.series(a) == self.panel.series(b)
    }
}

/// Unit indices sorted by decreasing ordering statistic; ties keep the
/// original order.
pub fn order_units(panel: &Panel, ordering: Ordering) -> Vec<usize> {
    let t = panel.n_periods();
    let from = match ordering {
        Ordering::FinalPeriod => t - 1,
        Ordering::MeanLastFraction(f) => t - ((f * t as f64).ceil() as usize).clamp(1, t),
    };
    let stat: Vec<f64> = (0..panel.n_units())
        .map(|i| {
            let tail = &panel.series(i)[from..];
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect();
    let mut idx: Vec<usize> = (0..panel.n_units()).collect();
    idx.sort_by(|&a, &b| stat[b].total_cmp(&stat[a]));
    idx
}

fn core_group(engine: &Engine, sorted: &[usize]) -> Vec<usize> {
    let thr = engine.cfg.core_threshold;
    for s in 0..sorted.len().saturating_sub(1) {
        if engine.stat(&sorted[s..s + 2]) <= thr {
            continue;
        }
        let mut best = (2, f64::NEG_INFINITY);
        for k in 2..=sorted.len() - s {
            let tk = engine.stat(&sorted[s..s + k]);
            if tk > thr && tk > best.1 {
                best = (k, tk);
            }
        }
        return sorted[s..s + best.0].to_vec();
    }
    Vec::new()
}

fn sieve(engine: &Engine, core: &[usize], candidates: &[usize]) -> Vec<usize> {
    let trial: Vec<f64> = candidates
        .iter()
        .map(|&j| {
            if core.iter().any(|&c| engine.identical(c, j)) {
                return f64::INFINITY;
            }
            let mut g = core.to_vec();
            g.push(j);
            engine.stat(&g)
        })
        .collect();
    let mut c = engine.cfg.sieve_threshold;
    loop {
        let accepted: Vec<usize> = candidates
            .iter()
            .zip(&trial)
            .filter(|(_, &t)| t > c)
            .map(|(&j, _)| j)
            .collect();
        let mut club = core.to_vec();
        club.extend(&accepted);
        if accepted.is_empty() || engine.converges(&club) {
            return club;
        }
        c += engine.cfg.sieve_step;
    }
}

/// Core group of an ordered unit list (indices into `panel`). Empty when no
/// pair anywhere in the ordering passes the core threshold.
pub fn form_core_group(panel: &Panel, sorted: &[usize], cfg: &ClusterConfig) -> Result<Vec<usize>> {
    let engine = Engine::new(panel, cfg)?;
    Ok(core_group(&engine, sorted))
}

/// Core plus every candidate whose trial log-t statistic with the core
/// exceeds the sieve threshold, raised until the whole club converges.
pub fn sieve_membership(
    panel: &Panel,
    core: &[usize],
    candidates: &[usize],
    cfg: &ClusterConfig,
) -> Result<Vec<usize>> {
    if core.is_empty() {
        return Err(Error::InvalidSubset("sieve needs a non-empty core".into()));
    }
    let engine = Engine::new(panel, cfg)?;
    Ok(sieve(&engine, core, candidates))
}

fn codes(panel: &Panel, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| panel.units()[i].code.clone()).collect()
}

pub fn identify_clubs(panel: &Panel, cfg: &ClusterConfig) -> Result<ClubPartition> {
    let engine = Engine::new(panel, cfg)?;
    let sorted = order_units(&engine.panel, cfg.ordering);

    // fuse bitwise-identical series onto their highest-ranked representative
    let mut reps: Vec<usize> = Vec::new();
    let mut dups: Vec<Vec<usize>> = Vec::new();
    for &i in &sorted {
        match reps.iter().position(|&r| engine.identical(r, i)) {
            Some(k) => dups[k].push(i),
            None => {
                reps.push(i);
                dups.push(vec![i]);
            }
        }
    }
    let expand = |group: &[usize]| -> Vec<usize> {
        group
            .iter()
            .flat_map(|r| dups[reps.iter().position(|x| x == r).expect("rep")].clone())
            .collect()
    };
    let lt = &cfg.logt;
    if reps.len() == 1 {
        return Ok(ClubPartition {
            clubs: vec![Club {
                members: codes(panel, &sorted),
                test: LogTResult::identical_series(lt.r, lt.critical_value),
            }],
            ..Default::default()
        });
    }

    let mut groups: Vec<(Vec<usize>, LogTResult)> = Vec::new();
    let mut divergent: Vec<usize> = Vec::new();
    let mut remaining = reps.clone();
    let mut first = true;
    while !remaining.is_empty() {
        if remaining.len() == 1 {
            divergent.push(remaining[0]);
            break;
        }
        let whole = engine.test(&remaining);
        let whole = if first { Some(whole?) } else { whole.ok() };
        first = false;
        if let Some(res) = whole.filter(|r| r.decision.not_rejected()) {
            groups.push((std::mem::take(&mut remaining), res));
            break;
        }
        let core = core_group(&engine, &remaining);
        if core.is_empty() {
            divergent.append(&mut remaining);
            break;
        }
        let candidates: Vec<usize> = remaining.iter().copied().filter(|i| !core.contains(i)).collect();
        let club = sieve(&engine, &core, &candidates);
        let res = engine.test(&club)?;
        remaining.retain(|i| !club.contains(i));
        // keep club members in ranking order
        let mut club = club;
        club.sort_by_key(|i| sorted.iter().position(|s| s == i));
        groups.push((club, res));
    }

    let mut clubs: Vec<Club> = groups
        .into_iter()
        .map(|(g, test)| Club {
            members: codes(panel, &expand(&g)),
            test,
        })
        .collect();
    let mut divergent_codes = Vec::new();
    for d in divergent {
        let members = expand(&[d]);
        if members.len() > 1 {
            clubs.push(Club {
                members: codes(panel, &members),
                test: LogTResult::identical_series(lt.r, lt.critical_value),
            });
        } else {
            divergent_codes.extend(codes(panel, &members));
        }
    }
    Ok(ClubPartition {
        clubs,
        divergent: divergent_codes,
        merge_tests: Vec::new(),
        transition_tests: Vec::new(),
    })
}

fn indices(panel: &Panel, members: &[String]) -> Result<Vec<usize>> {
    members
        .iter()
        .map(|m| panel.index_of(m).ok_or_else(|| Error::UnknownUnit(m.clone())))
        .collect()
}

fn test_members(engine: &Engine, panel: &Panel, members: &[String]) -> Result<LogTResult> {
    let idx = indices(panel, members)?;
    if idx.windows(2).all(|w| engine.identical(w[0], w[1])) {
        let lt = &engine.cfg.logt;
        return Ok(LogTResult::identical_series(lt.r, lt.critical_value));
    }
    engine.test(&idx)
}

/// Repeatedly merges the first adjacent pair of clubs whose union passes the
/// log-t test, rescanning from club 1 after every merge.
pub fn merge_clubs(panel: &Panel, partition: &ClubPartition, cfg: &ClusterConfig) -> Result<ClubPartition> {
    let engine = Engine::new(panel, cfg)?;
    let mut out = partition.clone();
    'scan: loop {
        for k in 0..out.clubs.len().saturating_sub(1) {
            let mut union = out.clubs[k].members.clone();
            union.extend(out.clubs[k + 1].members.iter().cloned());
            let test = match test_members(&engine, panel, &union) {
                Ok(t) => t,
                Err(Error::DegenerateVariance(_)) => continue,
                Err(e) => return Err(e),
            };
            let merged = test.decision.not_rejected();
            out.merge_tests.push(MergeTest {
                clubs: (k + 1, k + 2),
                members: union.clone(),
                test,
                merged,
            });
            if merged {
                out.clubs[k] = Club { members: union, test };
                out.clubs.remove(k + 1);
                continue 'scan;
            }
        }
        return Ok(out);
    }
}

/// Log-t test on a subset drawn from two adjacent clubs; the result is
/// appended to the partition's transition records.
pub fn transition_test(
    panel: &Panel,
    partition: &mut ClubPartition,
    subset: &[String],
    cfg: &ClusterConfig,
) -> Result<LogTResult> {
    record_transition(panel, partition, subset, cfg, false)
}

fn record_transition(
    panel: &Panel,
    partition: &mut ClubPartition,
    subset: &[String],
    cfg: &ClusterConfig,
    heuristic: bool,
) -> Result<LogTResult> {
    if subset.len() < 2 {
        return Err(Error::InvalidSubset("need at least two units".into()));
    }
    let mut clubs = BTreeSet::new();
    for m in subset {
        panel.index_of(m).ok_or_else(|| Error::UnknownUnit(m.clone()))?;
        let k = partition
            .club_of(m)
            .ok_or_else(|| Error::InvalidSubset(format!("{m} is not in a club")))?;
        clubs.insert(k);
    }
    let pair: Vec<usize> = clubs.into_iter().collect();
    if pair.len() != 2 || pair[1] != pair[0] + 1 {
        return Err(Error::InvalidSubset(
            "units must come from exactly two adjacent clubs".into(),
        ));
    }
    let engine = Engine::new(panel, cfg)?;
    let test = test_members(&engine, panel, subset)?;
    partition.transition_tests.push(TransitionTest {
        clubs: (pair[0] + 1, pair[1] + 1),
        members: subset.to_vec(),
        test,
        heuristic,
    });
    Ok(test)
}

/// Default cross-boundary subsets: the bottom half (rounded up) of club k
/// together with the top half (rounded up) of club k+1, for every adjacent
/// pair. This is a heuristic, not a published selection rule.
pub fn default_transition_subsets(partition: &ClubPartition) -> Vec<Vec<String>> {
    partition
        .clubs
        .windows(2)
        .map(|w| {
            let upper = &w[0].members;
            let lower = &w[1].members;
            let mut s: Vec<String> = upper[upper.len() - upper.len().div_ceil(2)..].to_vec();
            s.extend(lower[..lower.len().div_ceil(2)].iter().cloned());
            s
        })
        .collect()
}

/// Runs the heuristic transition subsets; subsets whose log-t regression is
/// degenerate are skipped.
pub fn heuristic_transitions(panel: &Panel, partition: &mut ClubPartition, cfg: &ClusterConfig) -> Result<()> {
    for subset in default_transition_subsets(partition) {
        match record_transition(panel, partition, &subset, cfg, true) {
            Ok(_) | Err(Error::DegenerateVariance(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
