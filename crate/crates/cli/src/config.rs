//! Flat `key = value` configuration with command-line overrides.
//!
//! ```text
//! # overall RES analysis
//! recipe = overall
//! panel = data/res.csv
//! smoothing = hp
//! transition.boundary = MT,DK,RO,AT,NL
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clubconv_core::clustering::{ClusterConfig, Ordering};
use clubconv_core::logt::{Bandwidth, HacConfig};
use clubconv_core::panel::{Layout, LoadOptions, MissingPolicy, SmoothingConfig, ValueDomain};
use clubconv_core::probit::{ProbitOptions, StartValues};
use clubconv_core::simlab::{Analysis, ClubSpec, CommonTrend, DgpConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const KEYS: &[&str] = &[
    "recipe",
    "panel",
    "layout",
    "missing",
    "allow_zero",
    "targets",
    "partition",
    "out",
    "smoothing",
    "hp_lambda",
    "r",
    "crit",
    "bandwidth",
    "ordering",
    "ordering_fraction",
    "sieve_threshold",
    "core_threshold",
    "sieve_step",
    "merge",
    "transitions",
    "covariates",
    "probit.max_iter",
    "probit.start",
    "probit.small_sample",
    "probit.threshold",
    "mc.reps",
    "mc.analysis",
    "mc.periods",
    "mc.clubs",
    "mc.growth",
    "mc.initial",
    "mc.slowly_varying",
    "mc.merge",
    "seed",
];

const PREFIXES: &[&str] = &["sector.", "covariate.", "window.", "transition."];

/// Ordered key-value pairs as written, before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<(String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if raw.get(k).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            raw.set(k, v)?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    /// Inserts or replaces a key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let known = KEYS.contains(&key) || PREFIXES.iter().any(|p| key.len() > p.len() && key.starts_with(p));
        if !known {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn prefixed<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|name| (name, v.as_str())))
    }

    /// Sorted copy, echoed into reports.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    Overall,
    TargetRatio,
    Sector,
    Probit,
    Montecarlo,
}

impl FromStr for Recipe {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "overall" => Recipe::Overall,
            "target_ratio" => Recipe::TargetRatio,
            "sector" => Recipe::Sector,
            "probit" => Recipe::Probit,
            "montecarlo" => Recipe::Montecarlo,
            _ => return Err(CliError::Config(format!("unknown recipe `{s}`"))),
        })
    }
}

/// One probit regressor: the mean of a covariate file over a year window,
/// optionally squared after averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpec {
    pub name: String,
    pub source: String,
    pub window: (i32, i32),
    pub square: bool,
}

/// Default averaging windows per covariate.
pub const DEFAULT_WINDOWS: &[(&str, (i32, i32))] = &[
    ("GDPCAP", (2010, 2018)),
    ("ENVEXPGDP", (2014, 2016)),
    ("ENIMPDEP", (2009, 2018)),
    ("NUCLENCAP", (2010, 2018)),
];

pub const DEFAULT_COVARIATES: &str = "GDPCAP,SQ_GDPCAP,ENVEXPGDP,ENIMPDEP,NUCLENCAP";

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub grid: Vec<DgpConfig>,
    pub replications: usize,
    pub analysis: Analysis,
    pub merge: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub recipe: Recipe,
    pub panel: Option<PathBuf>,
    pub load: LoadOptions,
    pub targets: Option<PathBuf>,
    pub sectors: Vec<(String, PathBuf)>,
    pub partition: Option<PathBuf>,
    pub covariate_files: BTreeMap<String, PathBuf>,
    pub covariates: Vec<CovariateSpec>,
    pub out: PathBuf,
    pub cluster: ClusterConfig,
    pub merge: bool,
    pub heuristic_transitions: bool,
    pub transitions: Vec<(String, Vec<String>)>,
    pub probit: ProbitOptions,
    pub threshold: f64,
    pub montecarlo: MonteCarloConfig,
    pub seed: u64,
    /// The effective key-value pairs.
    pub echo: BTreeMap<String, String>,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn parse_window(key: &str, v: &str) -> Result<(i32, i32)> {
    let (a, b) = v
        .split_once('-')
        .ok_or_else(|| CliError::Config(format!("`{key}`: expected `first-last`, got `{v}`")))?;
    let w = (parse(key, a.trim())?, parse(key, b.trim())?);
    if w.0 > w.1 {
        return Err(CliError::Config(format!("`{key}`: empty window `{v}`")));
    }
    Ok(w)
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// `n:delta:alpha:sd` entries separated by commas.
fn parse_clubs(key: &str, v: &str) -> Result<Vec<ClubSpec>> {
    list(v)
        .iter()
        .map(|c| {
            let f: Vec<&str> = c.split(':').map(str::trim).collect();
            if f.len() != 4 {
                return Err(CliError::Config(format!("`{key}`: expected n:delta:alpha:sd, got `{c}`")));
            }
            Ok(ClubSpec {
                n_units: parse(key, f[0])?,
                delta_limit: parse(key, f[1])?,
                alpha: parse(key, f[2])?,
                noise_sd: parse(key, f[3])?,
            })
        })
        .collect()
}

impl AnalysisConfig {
    pub fn from_raw(raw: &RawConfig, base_dir: &Path) -> Result<Self> {
        let get = |k: &str| raw.get(k);
        let path = |v: &str| base_dir.join(v);
        let num = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |v| parse(k, v)) };
        let flag = |k: &str, default: bool| -> Result<bool> { get(k).map_or(Ok(default), |v| parse_bool(k, v)) };

        let recipe: Recipe = get("recipe")
            .ok_or_else(|| CliError::Config("missing `recipe`".into()))?
            .parse()?;

        let load = LoadOptions {
            layout: match get("layout").unwrap_or("wide") {
                "wide" => Layout::Wide,
                "long" => Layout::Long,
                v => return Err(CliError::Config(format!("`layout`: unknown `{v}`"))),
            },
            missing: match get("missing").unwrap_or("strict") {
                "strict" => MissingPolicy::Strict,
                "lenient" => MissingPolicy::Lenient,
                v => return Err(CliError::Config(format!("`missing`: unknown `{v}`"))),
            },
            domain: if flag("allow_zero", false)? {
                ValueDomain::NonNegative
            } else {
                ValueDomain::Positive
            },
        };

        let smoothing = match get("smoothing").unwrap_or("none") {
            "none" => SmoothingConfig::None,
            "hp" => SmoothingConfig::HpFilter {
                lambda: num("hp_lambda", SmoothingConfig::ANNUAL_HP_LAMBDA)?,
            },
            v => return Err(CliError::Config(format!("`smoothing`: expected none or hp, got `{v}`"))),
        };
        let mut cluster = ClusterConfig::default();
        cluster.logt.smoothing = smoothing;
        cluster.logt.r = num("r", cluster.logt.r)?;
        cluster.logt.critical_value = num("crit", cluster.logt.critical_value)?;
        cluster.logt.hac = match get("bandwidth") {
            None | Some("auto") => HacConfig::default(),
            Some(v) => HacConfig {
                bandwidth: Bandwidth::Fixed(parse("bandwidth", v)?),
                ..Default::default()
            },
        };
        cluster.ordering = match get("ordering").unwrap_or("final") {
            "final" => Ordering::FinalPeriod,
            "mean_last" => Ordering::MeanLastFraction(num("ordering_fraction", 1.0 / 3.0)?),
            v => return Err(CliError::Config(format!("`ordering`: expected final or mean_last, got `{v}`"))),
        };
        cluster.sieve_threshold = num("sieve_threshold", cluster.sieve_threshold)?;
        cluster.core_threshold = num("core_threshold", cluster.core_threshold)?;
        cluster.sieve_step = num("sieve_step", cluster.sieve_step)?;
        cluster.validate()?;

        let heuristic_transitions = match get("transitions").unwrap_or("heuristic") {
            "heuristic" => true,
            "none" => false,
            v => return Err(CliError::Config(format!("`transitions`: expected heuristic or none, got `{v}`"))),
        };
        let transitions = raw
            .prefixed("transition.")
            .map(|(label, v)| (label.to_string(), list(v)))
            .collect();

        let covariate_files: BTreeMap<String, PathBuf> = raw
            .prefixed("covariate.")
            .map(|(name, v)| (name.to_string(), path(v)))
            .collect();
        let windows: BTreeMap<&str, &str> = raw.prefixed("window.").collect();
        let window_of = |name: &str| -> Result<(i32, i32)> {
            if let Some(v) = windows.get(name) {
                return parse_window(&format!("window.{name}"), v);
            }
            DEFAULT_WINDOWS
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, w)| *w)
                .ok_or_else(|| CliError::Config(format!("no averaging window for covariate `{name}`")))
        };
        let covariates = list(get("covariates").unwrap_or(DEFAULT_COVARIATES))
            .into_iter()
            .map(|name| {
                let (source, square) = match name.strip_prefix("SQ_") {
                    Some(base) if !covariate_files.contains_key(&name) => (base.to_string(), true),
                    _ => (name.clone(), false),
                };
                let window = match windows.contains_key(name.as_str()) {
                    true => window_of(&name)?,
                    false => window_of(&source)?,
                };
                Ok(CovariateSpec {
                    name,
                    source,
                    window,
                    square,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let probit = ProbitOptions {
            max_iter: get("probit.max_iter").map_or(Ok(100), |v| parse("probit.max_iter", v))?,
            start: match get("probit.start").unwrap_or("zero") {
                "zero" => StartValues::Zero,
                "mean" => StartValues::SampleMean,
                v => return Err(CliError::Config(format!("`probit.start`: expected zero or mean, got `{v}`"))),
            },
            small_sample_correction: flag("probit.small_sample", false)?,
            ..Default::default()
        };
        let threshold = num("probit.threshold", 0.5)?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(CliError::Config("`probit.threshold` must lie in (0, 1)".into()));
        }

        let seed: u64 = get("seed").map_or(Ok(1), |v| parse("seed", v))?;
        let montecarlo = {
            let periods: Vec<usize> = list(get("mc.periods").unwrap_or("40"))
                .iter()
                .map(|p| parse("mc.periods", p))
                .collect::<Result<_>>()?;
            let cells: Vec<Vec<ClubSpec>> = get("mc.clubs")
                .unwrap_or("10:1.0:0.5:0.1,10:2.0:0.5:0.1")
                .split(';')
                .map(|c| parse_clubs("mc.clubs", c))
                .collect::<Result<_>>()?;
            let mu = CommonTrend {
                growth: num("mc.growth", CommonTrend::default().growth)?,
                initial: num("mc.initial", CommonTrend::default().initial)?,
            };
            let slowly_varying = flag("mc.slowly_varying", false)?;
            let mut grid = Vec::new();
            for clubs in &cells {
                for &t in &periods {
                    let mut cfg = DgpConfig::new(clubs.clone(), t, seed);
                    cfg.mu = mu;
                    cfg.slowly_varying = slowly_varying;
                    grid.push(cfg);
                }
            }
            MonteCarloConfig {
                grid,
                replications: get("mc.reps").map_or(Ok(500), |v| parse("mc.reps", v))?,
                analysis: match get("mc.analysis").unwrap_or("clustering") {
                    "logt" => Analysis::Logt,
                    "clustering" => Analysis::Clustering,
                    v => return Err(CliError::Config(format!("`mc.analysis`: expected logt or clustering, got `{v}`"))),
                },
                merge: flag("mc.merge", true)?,
            }
        };

        let cfg = AnalysisConfig {
            recipe,
            panel: get("panel").map(path),
            load,
            targets: get("targets").map(path),
            sectors: raw.prefixed("sector.").map(|(n, v)| (n.to_string(), path(v))).collect(),
            partition: get("partition").map(path),
            covariate_files,
            covariates,
            out: path(get("out").unwrap_or("out")),
            cluster,
            merge: flag("merge", true)?,
            heuristic_transitions,
            transitions,
            probit,
            threshold,
            montecarlo,
            seed,
            echo: raw.to_map(),
        };
        cfg.check_inputs()?;
        Ok(cfg)
    }

    /// Recipe-required inputs are present.
    fn check_inputs(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(format!("recipe {:?} needs {what}", self.recipe)))
            }
        };
        match self.recipe {
            Recipe::Overall => need(self.panel.is_some(), "`panel`"),
            Recipe::TargetRatio => {
                need(self.panel.is_some(), "`panel`")?;
                need(self.targets.is_some(), "`targets`")
            }
            Recipe::Sector => need(!self.sectors.is_empty(), "at least one `sector.<name>`"),
            Recipe::Probit => {
                need(self.partition.is_some(), "`partition`")?;
                for c in &self.covariates {
                    need(self.covariate_files.contains_key(&c.source), &format!("`covariate.{}`", c.source))?;
                }
                need(!self.covariates.is_empty(), "covariates")
            }
            Recipe::Montecarlo => {
                need(self.montecarlo.replications > 0, "`mc.reps` >= 1")?;
                for g in &self.montecarlo.grid {
                    g.validate()?;
                }
                Ok(())
            }
        }
    }
}
