use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clubconv_core::clustering::{heuristic_transitions, identify_clubs, merge_clubs, transition_test, ClubPartition};
use clubconv_core::logt::{convergence_test, relative_transitions, TransitionPaths};
use clubconv_core::panel::{load_panel, load_targets, rescale_to_targets, smooth, Panel};
use clubconv_core::probit::{classification_table, fit_probit_with};
use clubconv_core::simlab::monte_carlo;
use sha2::{Digest, Sha256};

use crate::config::{AnalysisConfig, Recipe};
use crate::covariates::{build_design, load_covariate, load_partition, write_partition};
use crate::error::{CliError, Result};
use crate::paths::emit_paths;
use crate::report::{ClubAnalysis, Meta, MonteCarloRow, ProbitReport, Report, SectorReport};

/// Paths and partition of one analysed panel, written under `subdir`.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub subdir: Option<String>,
    pub paths: TransitionPaths,
    pub partition: Option<ClubPartition>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub path_sets: Vec<PathSet>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(CliError::io(path))
}

/// Input files keyed by their config key.
fn inputs(cfg: &AnalysisConfig) -> BTreeMap<String, PathBuf> {
    let mut m = BTreeMap::new();
    let mut add = |k: String, p: &Option<PathBuf>| {
        if let Some(p) = p {
            m.insert(k, p.clone());
        }
    };
    match cfg.recipe {
        Recipe::Overall => add("panel".into(), &cfg.panel),
        Recipe::TargetRatio => {
            add("panel".into(), &cfg.panel);
            add("targets".into(), &cfg.targets);
        }
        Recipe::Sector => {
            for (name, p) in &cfg.sectors {
                add(format!("sector.{name}"), &Some(p.clone()));
            }
        }
        Recipe::Probit => {
            add("partition".into(), &cfg.partition);
            for c in &cfg.covariates {
                add(format!("covariate.{}", c.source), &cfg.covariate_files.get(&c.source).cloned());
            }
        }
        Recipe::Montecarlo => {}
    }
    m
}

/// SHA-256 over `key NUL length content` for every input, in key order.
pub fn data_hash(cfg: &AnalysisConfig) -> Result<String> {
    let mut h = Sha256::new();
    for (k, p) in inputs(cfg) {
        let bytes = read(&p)?;
        h.update(k.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn panel_from(path: &Path, cfg: &AnalysisConfig, warnings: &mut Vec<String>) -> Result<Panel> {
    let bytes = read(path)?;
    let loaded = load_panel(bytes.as_slice(), &cfg.load).map_err(CliError::data(path))?;
    warnings.extend(loaded.warnings.into_iter().map(|w| format!("{}: {w}", path.display())));
    Ok(loaded.panel)
}

/// Overall test, clustering, merging and transition tests on one panel.
pub fn club_pipeline(panel: &Panel, cfg: &AnalysisConfig) -> Result<(ClubAnalysis, TransitionPaths, ClubPartition)> {
    let cl = &cfg.cluster;
    let overall = convergence_test(panel, &cl.logt)?;
    let initial = identify_clubs(panel, cl)?;
    let mut merged = if cfg.merge {
        merge_clubs(panel, &initial, cl)?
    } else {
        initial.clone()
    };
    let mut labels = Vec::new();
    for (label, subset) in &cfg.transitions {
        transition_test(panel, &mut merged, subset, cl)?;
        labels.push(Some(label.clone()));
    }
    if cfg.heuristic_transitions {
        heuristic_transitions(panel, &mut merged, cl)?;
    }
    let analysed = smooth(panel, &cl.logt.smoothing)?;
    let paths = relative_transitions(&analysed);
    Ok((ClubAnalysis::new(overall, &initial, &merged, &labels), paths, merged))
}

pub fn run(cfg: &AnalysisConfig) -> Result<RunOutput> {
    let mut warnings = Vec::new();
    let mut analysis = ClubAnalysis::default();
    let mut probit = None;
    let mut sectors = Vec::new();
    let mut montecarlo = Vec::new();
    let mut path_sets = Vec::new();
    let required = |p: &Option<PathBuf>| p.clone().expect("checked when the config was built");

    match cfg.recipe {
        Recipe::Overall | Recipe::TargetRatio => {
            let mut panel = panel_from(&required(&cfg.panel), cfg, &mut warnings)?;
            if cfg.recipe == Recipe::TargetRatio {
                let tpath = required(&cfg.targets);
                let targets = load_targets(read(&tpath)?.as_slice()).map_err(CliError::data(&tpath))?;
                panel = rescale_to_targets(&panel, &targets)?;
            }
            let (a, paths, partition) = club_pipeline(&panel, cfg)?;
            analysis = a;
            path_sets.push(PathSet {
                subdir: None,
                paths,
                partition: Some(partition),
            });
        }
        Recipe::Sector => {
            for (name, p) in &cfg.sectors {
                let panel = panel_from(p, cfg, &mut warnings)?;
                let (a, paths, partition) = club_pipeline(&panel, cfg)?;
                sectors.push(SectorReport {
                    name: name.clone(),
                    analysis: a,
                });
                path_sets.push(PathSet {
                    subdir: Some(name.clone()),
                    paths,
                    partition: Some(partition),
                });
            }
        }
        Recipe::Probit => {
            let partition = load_partition(&required(&cfg.partition))?;
            let mut sources = BTreeMap::new();
            for c in &cfg.covariates {
                if !sources.contains_key(&c.source) {
                    let p = &cfg.covariate_files[&c.source];
                    sources.insert(c.source.clone(), load_covariate(p)?);
                }
            }
            let design = build_design(&partition, &cfg.covariates, &sources)?;
            let fit = fit_probit_with(&design, &cfg.probit)?;
            let table = classification_table(&fit, &design, cfg.threshold)?;
            let units: Vec<String> = partition.into_iter().map(|(u, _)| u).collect();
            probit = Some(ProbitReport::new(&fit, &design, &units, table, cfg.threshold));
        }
        Recipe::Montecarlo => {
            let mc = &cfg.montecarlo;
            let rows = monte_carlo(&mc.grid, mc.analysis, mc.replications, &cfg.cluster, mc.merge)?;
            montecarlo = mc
                .grid
                .iter()
                .zip(rows)
                .map(|(cell, row)| MonteCarloRow::new(cell, row))
                .collect();
        }
    }

    let report = Report {
        meta: Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            recipe: cfg.echo.get("recipe").cloned().unwrap_or_default(),
            config: cfg.echo.clone(),
            data_hash: data_hash(cfg)?,
        },
        analysis,
        probit,
        sectors,
        montecarlo,
        warnings,
    };
    Ok(RunOutput { report, path_sets })
}

/// Writes `report.json`, path CSVs, partitions and Monte-Carlo summaries.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    let mkdir = |d: &Path| std::fs::create_dir_all(d).map_err(CliError::io(d));
    mkdir(dir)?;
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, out.report.to_json()?).map_err(CliError::io(&report_path))?;
    for set in &out.path_sets {
        let sub = match &set.subdir {
            Some(s) => dir.join(s),
            None => dir.to_path_buf(),
        };
        emit_paths(&set.paths, set.partition.as_ref(), &sub).map_err(CliError::io(&sub))?;
        if let Some(p) = &set.partition {
            let path = sub.join("partition.csv");
            let f = std::fs::File::create(&path).map_err(CliError::io(&path))?;
            write_partition(p, f).map_err(CliError::io(&path))?;
        }
    }
    if !out.report.montecarlo.is_empty() {
        let path = dir.join("montecarlo.csv");
        write_montecarlo(&out.report.montecarlo, &path).map_err(CliError::io(&path))?;
    }
    Ok(())
}

fn write_montecarlo(rows: &[MonteCarloRow], path: &Path) -> std::io::Result<()> {
    use crate::fmt::g12;
    let opt = |v: Option<f64>| v.map(g12).unwrap_or_default();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "cell",
        "periods",
        "clubs",
        "replications",
        "failed",
        "rejection_rate",
        "mean_b_hat",
        "sd_b_hat",
        "recovery_rate",
        "mean_ari",
        "mean_clubs",
    ])?;
    for r in rows {
        let clubs = r
            .clubs
            .iter()
            .map(|c| format!("{}:{}:{}:{}", c.n_units, c.delta_limit, c.alpha, c.noise_sd))
            .collect::<Vec<_>>()
            .join(" ");
        let s = &r.summary;
        w.write_record([
            s.cell.to_string(),
            r.periods.to_string(),
            clubs,
            s.replications.to_string(),
            s.failed.to_string(),
            g12(s.rejection_rate),
            g12(s.mean_b_hat),
            g12(s.sd_b_hat),
            opt(s.recovery_rate),
            opt(s.mean_ari),
            opt(s.mean_clubs),
        ])?;
    }
    w.flush()
}

/// `run` followed by `write_outputs` into the configured directory.
pub fn execute(cfg: &AnalysisConfig) -> Result<Report> {
    let out = run(cfg)?;
    write_outputs(&out, &cfg.out)?;
    Ok(out.report)
}
