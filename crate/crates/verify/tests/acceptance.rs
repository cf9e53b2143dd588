//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Data-driven criteria read Eurostat snapshot files from `$CLUBCONV_DATA_DIR`
//! (default `<workspace>/data/eurostat`):
//!
//! | file            | layout | content                                  |
//! |-----------------|--------|------------------------------------------|
//! | `res.csv`       | wide   | RES share, EU-28, 2004-2018              |
//! | `res_t.csv`     | wide   | RES-T share                              |
//! | `res_hc.csv`    | wide   | RES-H&C share                            |
//! | `res_e.csv`     | wide   | RES-E share                              |
//! | `gdpcap.csv`    | long   | real GDP per capita                      |
//! | `envexpgdp.csv` | long   | environmental protection expenditure/GDP |
//! | `enimpdep.csv`  | long   | energy import dependency                 |
//! | `nuclencap.csv` | long   | nuclear enrichment capacity              |

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clubconv::config::CovariateSpec;
use clubconv::covariates::{build_design, load_covariate};
use clubconv::run::club_pipeline;
use clubconv::{AnalysisConfig, RawConfig};
use clubconv_core::clustering::{identify_clubs, merge_clubs, ClubPartition, ClusterConfig};
use clubconv_core::logt::{convergence_test, logt_from_variance, relative_transitions, HacConfig, LogtConfig};
use clubconv_core::panel::{load_panel, load_targets, rescale_to_targets, LoadOptions, Panel, ValueDomain};
use clubconv_core::probit::{classification_table, fit_probit, gradient, log_likelihood};
use clubconv_core::simlab::{monte_carlo, Analysis, ClubSpec, DgpConfig};
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    NotRun(String),
}

use Verdict::{Fail, NotRun, Pass};

fn workspace() -> PathBuf {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    crate_dir.ancestors().nth(2).unwrap_or(crate_dir).to_path_buf()
}

fn data_dir() -> PathBuf {
    std::env::var_os("CLUBCONV_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace().join("data/eurostat"))
}

fn data_file(name: &str) -> Result<PathBuf, String> {
    let p = data_dir().join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!(
            "data file {} not found (Eurostat snapshot required; set CLUBCONV_DATA_DIR)",
            p.display()
        ))
    }
}

fn load_indicator(name: &str, first: i32, last: i32, allow_zero: bool) -> Result<Panel, String> {
    let path = data_file(name)?;
    let opts = LoadOptions {
        domain: if allow_zero { ValueDomain::NonNegative } else { ValueDomain::Positive },
        ..Default::default()
    };
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let panel = load_panel(bytes.as_slice(), &opts)
        .map_err(|e| format!("{}: {e}", path.display()))?
        .panel
        .restrict_periods(first, last)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if panel.n_units() != 28 {
        return Err(format!("{} has {} units, expected 28", path.display(), panel.n_units()));
    }
    Ok(panel)
}

fn cfg(smoothing: &str) -> AnalysisConfig {
    let text = format!("recipe = overall\npanel = unused.csv\nsmoothing = {smoothing}\ntransitions = none\n");
    AnalysisConfig::from_raw(&RawConfig::parse(&text).unwrap(), Path::new(".")).unwrap()
}

fn set(codes: &[&str]) -> BTreeSet<String> {
    codes.iter().map(|c| c.to_string()).collect()
}

fn describe(p: &ClubPartition) -> String {
    let mut s: Vec<String> = p
        .clubs
        .iter()
        .enumerate()
        .map(|(k, c)| format!("club {}: {{{}}}", k + 1, c.members.join(",")))
        .collect();
    if !p.divergent.is_empty() {
        s.push(format!("divergent: {{{}}}", p.divergent.join(",")));
    }
    s.join("; ")
}

fn clubs_of(panel: &Panel, smoothing: &str) -> Result<ClubPartition, String> {
    club_pipeline(panel, &cfg(smoothing))
        .map(|(_, _, p)| p)
        .map_err(|e| format!("{}: {e}", e.name()))
}

const RES_CLUB1: &[&str] = &["SE", "FI", "LV", "DK", "AT", "PT"];

fn criterion_1() -> Verdict {
    let panel = match load_indicator("res.csv", 2004, 2018, false) {
        Ok(p) => p,
        Err(e) => return Fail(e),
    };
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut matched = Vec::new();
    for smoothing in ["none", "hp"] {
        match clubs_of(&panel, smoothing) {
            Ok(p) => {
                let ok = p.clubs.len() == 2 && p.divergent.is_empty() && p.member_sets()[0] == set(RES_CLUB1);
                if ok {
                    matched.push(smoothing);
                }
                notes.push(format!("[{smoothing}] {}", describe(&p)));
            }
            Err(e) => notes.push(format!("[{smoothing}] {e}")),
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{} ({:.2?})", notes.join(" "), elapsed);
    if matched.is_empty() {
        Fail(format!("no smoothing reproduces the two clubs: {detail}"))
    } else if elapsed > Duration::from_secs(5) {
        Fail(format!("runtime over 5 s: {detail}"))
    } else {
        Pass(format!("matched with smoothing {}: {detail}", matched.join(" and ")))
    }
}

/// Club-by-club symmetric differences, or None when the club count differs.
fn mismatches(got: &ClubPartition, want: &[BTreeSet<String>]) -> Option<Vec<usize>> {
    if got.clubs.len() != want.len() || !got.divergent.is_empty() {
        return None;
    }
    Some(
        got.member_sets()
            .iter()
            .zip(want)
            .map(|(g, w)| g.symmetric_difference(w).count())
            .collect(),
    )
}

fn sector_check(file: &str, want: &[BTreeSet<String>], extra: impl Fn(&ClubPartition) -> Result<(), String>) -> Result<String, String> {
    let panel = load_indicator(file, 2004, 2018, true)?;
    let mut notes = Vec::new();
    for smoothing in ["none", "hp"] {
        let p = clubs_of(&panel, smoothing)?;
        match mismatches(&p, want) {
            Some(m) if m.iter().all(|&d| d <= 1) => match extra(&p) {
                Ok(()) => {
                    let warn = if m.contains(&1) {
                        format!(" (data-vintage warning: per-club differences {m:?})")
                    } else {
                        String::new()
                    };
                    return Ok(format!("{file} [{smoothing}]{warn}"));
                }
                Err(e) => notes.push(format!("[{smoothing}] {e}")),
            },
            _ => notes.push(format!("[{smoothing}] {}", describe(&p))),
        }
    }
    Err(format!("{file}: {}", notes.join(" ")))
}

fn complement(codes: &[BTreeSet<String>]) -> BTreeSet<String> {
    let all = set(&[
        "BE", "BG", "CZ", "DK", "DE", "EE", "IE", "EL", "ES", "FR", "HR", "IT", "CY", "LV", "LT", "LU", "HU", "MT",
        "NL", "AT", "PL", "PT", "RO", "SI", "SK", "FI", "SE", "UK",
    ]);
    let used: BTreeSet<String> = codes.iter().flatten().cloned().collect();
    all.difference(&used).cloned().collect()
}

fn criterion_2() -> Verdict {
    let t1 = set(&["SE", "FI", "BG", "MT", "DK", "RO"]);
    let res_t = vec![t1.clone(), complement(&[t1])];
    let res_hc = vec![
        set(&["SE", "LV", "FI", "EE", "DK", "LT", "CY", "MT"]),
        set(&["PT", "HR", "AT", "BG", "SI", "EL", "RO", "FR", "CZ"]),
        set(&["IT", "HU", "ES", "PL", "DE", "SK", "LU", "BE", "UK", "IE", "NL"]),
    ];
    let res_e = vec![complement(&[])];
    let rates = |p: &ClubPartition| {
        let t = &p.clubs[0].test;
        if (t.b_hat - 0.055).abs() <= 0.10 && (t.alpha_hat - 0.027).abs() <= 0.05 {
            Ok(())
        } else {
            Err(format!("b = {:.4}, alpha = {:.4}", t.b_hat, t.alpha_hat))
        }
    };
    let results = [
        sector_check("res_t.csv", &res_t, |_| Ok(())),
        sector_check("res_hc.csv", &res_hc, |_| Ok(())),
        sector_check("res_e.csv", &res_e, rates),
    ];
    let (ok, bad): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    let ok: Vec<String> = ok.into_iter().map(Result::unwrap).collect();
    let bad: Vec<String> = bad.into_iter().map(|r| r.unwrap_err()).collect();
    if bad.is_empty() {
        Pass(ok.join("; "))
    } else {
        Fail(bad.join("; "))
    }
}

fn criterion_3() -> Verdict {
    let panel = match load_indicator("res.csv", 2004, 2018, false) {
        Ok(p) => p,
        Err(e) => return Fail(e),
    };
    let tpath = workspace().join("data/red1_targets_2020.csv");
    let targets = match std::fs::read(&tpath).map_err(|e| e.to_string()).and_then(|b| load_targets(b.as_slice()).map_err(|e| e.to_string())) {
        Ok(t) => t,
        Err(e) => return Fail(format!("{}: {e}", tpath.display())),
    };
    let start = Instant::now();
    let res = rescale_to_targets(&panel, &targets).and_then(|p| convergence_test(&p, &LogtConfig::default()));
    let elapsed = start.elapsed();
    match res {
        Ok(r) if r.decision.not_rejected() && elapsed < Duration::from_secs(1) => Pass(format!(
            "not rejected: b = {:.4}, t = {:.3} ({elapsed:.2?})",
            r.b_hat, r.t_stat
        )),
        Ok(r) => Fail(format!("{:?}: b = {:.4}, t = {:.3} ({elapsed:.2?})", r.decision, r.b_hat, r.t_stat)),
        Err(e) => Fail(format!("{}: {e}", e.name())),
    }
}

/// Published probit estimates: (name, coefficient).
const PUBLISHED_PROBIT: [(&str, f64); 6] = [
    ("const", 1.49391),
    ("GDPCAP", -0.000110787),
    ("SQ_GDPCAP", 9.68343e-10),
    ("ENVEXPGDP", -0.0963451),
    ("ENIMPDEP", 0.0303434),
    ("NUCLENCAP", 0.00430606),
];

fn sig3(a: f64, b: f64) -> bool {
    let r = |v: f64| {
        let e = v.abs().log10().floor() as i32 - 2;
        (v / 10f64.powi(e)).round()
    };
    r(a) == r(b)
}

fn criterion_4() -> Verdict {
    let run = || -> Result<Verdict, String> {
        let panel = load_indicator("res.csv", 2004, 2018, false)?;
        let partition = ["none", "hp"]
            .iter()
            .filter_map(|s| clubs_of(&panel, s).ok())
            .find(|p| p.clubs.len() == 2 && p.member_sets()[0] == set(RES_CLUB1))
            .ok_or("criterion 1 partition not reproduced")?;
        let rows: Vec<(String, u32)> = partition
            .clubs
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.members.iter().map(move |m| (m.clone(), k as u32 + 1)))
            .collect();
        let raw = RawConfig::parse(
            "recipe = probit\npartition = p.csv\ncovariate.GDPCAP = gdpcap.csv\ncovariate.ENVEXPGDP = envexpgdp.csv\n\
             covariate.ENIMPDEP = enimpdep.csv\ncovariate.NUCLENCAP = nuclencap.csv\n",
        )
        .unwrap();
        let cfg = AnalysisConfig::from_raw(&raw, &data_dir()).unwrap();
        let mut sources = BTreeMap::new();
        for c in &cfg.covariates {
            let file = format!("{}.csv", c.source.to_lowercase());
            let path = data_file(&file)?;
            sources.insert(c.source.clone(), load_covariate(&path).map_err(|e| e.to_string())?);
        }
        let specs: Vec<CovariateSpec> = cfg.covariates.clone();
        let design = build_design(&rows, &specs, &sources).map_err(|e| e.to_string())?;
        let fit = fit_probit(&design).map_err(|e| format!("{}: {e}", e.name()))?;
        let table = classification_table(&fit, &design, 0.5).map_err(|e| e.to_string())?;
        let signs_ok = fit.beta.iter().zip(&PUBLISHED_PROBIT).all(|(b, (_, want))| b.signum() == want.signum());
        let sig_ok = fit.p_value[1..].iter().all(|&p| p < 0.05);
        let correct = table.tp + table.tn;
        let exact: Vec<&str> = fit
            .beta
            .iter()
            .zip(&PUBLISHED_PROBIT)
            .filter(|(b, (_, want))| sig3(**b, *want))
            .map(|(_, (n, _))| *n)
            .collect();
        let detail = format!(
            "beta = {:?}, p = {:?}, correct {correct}/{}, 3-significant-figure matches: {exact:?}",
            fit.beta, fit.p_value, fit.n
        );
        Ok(if signs_ok && sig_ok && correct == 26 {
            Pass(detail)
        } else {
            Fail(format!("signs {signs_ok}, significance {sig_ok}: {detail}"))
        })
    };
    run().unwrap_or_else(Fail)
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_logt = 0.0f64;
    for _ in 0..200 {
        let p = oracles::random_panel(&mut rng);
        let r = match convergence_test(&p, &LogtConfig::default()) {
            Ok(r) => r,
            Err(e) => return Fail(format!("log-t failed on a random panel: {e}")),
        };
        let (a, b, _) = oracles::matrix_oracle(&relative_transitions(&p).variance, 0.3, r.bandwidth);
        worst_logt = worst_logt.max((r.a_hat - a).abs()).max((r.b_hat - b).abs());
    }
    let mut worst_probit = 0.0f64;
    for seed in 0..20 {
        let d = oracles::random_design(seed);
        let fit = fit_probit(&d).unwrap();
        let b = oracles::nelder_mead(|b| -oracles::oracle_loglik(d.x(), d.y(), b), &vec![0.0; d.n_coef()]);
        for (g, w) in fit.beta.iter().zip(&b) {
            worst_probit = worst_probit.max((g - w).abs());
        }
    }
    let detail = format!("max |log-t - OLS oracle| = {worst_logt:.2e}, max |probit - Nelder-Mead| = {worst_probit:.2e}");
    if worst_logt < 1e-8 && worst_probit < 1e-5 {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn two_club_cell(seed: u64, slowly_varying: bool) -> DgpConfig {
    let spec = |delta| ClubSpec {
        n_units: 10,
        delta_limit: delta,
        alpha: 0.5,
        noise_sd: 0.1,
    };
    let mut cfg = DgpConfig::new(vec![spec(1.0), spec(2.0)], 40, seed);
    cfg.slowly_varying = slowly_varying;
    cfg
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let cl = ClusterConfig::default();
    let null = DgpConfig::new(
        vec![ClubSpec {
            n_units: 20,
            delta_limit: 1.0,
            alpha: 0.5,
            noise_sd: 0.1,
        }],
        40,
        60_000,
    );
    let rec = monte_carlo(&[two_club_cell(50_000, false)], Analysis::Clustering, 500, &cl, true);
    let size = monte_carlo(&[null], Analysis::Logt, 500, &cl, false);
    let elapsed = start.elapsed();
    let (rec, size) = match (rec, size) {
        (Ok(r), Ok(s)) => (r[0].clone(), s[0].clone()),
        (Err(e), _) | (_, Err(e)) => return Fail(e.to_string()),
    };
    let recovery = rec.recovery_rate.unwrap_or(0.0);
    let not_rejected = 1.0 - size.rejection_rate;
    // reference point only: the same cell with the slowly varying decay factor
    let sv = monte_carlo(&[two_club_cell(50_000, true)], Analysis::Clustering, 500, &cl, true)
        .ok()
        .and_then(|r| r[0].recovery_rate);
    let detail = format!(
        "exact recovery {recovery:.3} (mean ARI {:.4}), null not rejected {not_rejected:.3}, {elapsed:.2?}; \
         with log(t+1) decay factor recovery would be {}",
        rec.mean_ari.unwrap_or(f64::NAN),
        sv.map_or("n/a".to_string(), |v| format!("{v:.3}"))
    );
    if recovery >= 0.95 && not_rejected >= 0.90 && elapsed < Duration::from_secs(60) {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..10, 10usize..30).prop_flat_map(|(n, t)| {
        prop::collection::vec(
            (0.5f64..5.0, prop::collection::vec(0.7f64..1.3, t))
                .prop_map(|(level, wobble)| wobble.into_iter().map(|w| level * w).collect()),
            n,
        )
    })
}

const CASES: u32 = 128;

fn property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn criterion_7() -> Verdict {
    let cl = ClusterConfig::default();
    let lc = LogtConfig::default();
    let results = [
        property("scale invariance", (rows_strategy(), prop::sample::select(vec![0.05, 20.0])), |(rows, k)| {
            let p = oracles::panel(rows);
            let q = p.scaled(k).unwrap();
            let (Ok(a), Ok(b)) = (convergence_test(&p, &lc), convergence_test(&q, &lc)) else {
                return Ok(());
            };
            prop_assert!((a.b_hat - b.b_hat).abs() < 1e-9);
            prop_assert_eq!(a.decision, b.decision);
            let pa = merge_clubs(&p, &identify_clubs(&p, &cl).unwrap(), &cl).unwrap();
            let pb = merge_clubs(&q, &identify_clubs(&q, &cl).unwrap(), &cl).unwrap();
            prop_assert_eq!(pa.member_sets(), pb.member_sets());
            prop_assert_eq!(pa.divergent, pb.divergent);
            Ok(())
        }),
        property("h mean", rows_strategy(), |rows| {
            let paths = relative_transitions(&oracles::panel(rows));
            for t in 0..paths.periods.len() {
                let m = paths.h.iter().map(|r| r[t]).sum::<f64>() / paths.h.len() as f64;
                prop_assert!((m - 1.0).abs() < 1e-12);
            }
            Ok(())
        }),
        property("b = 2 alpha", (0.0f64..2.0, 0.01f64..5.0, 10usize..80), |(alpha, h1, t_len)| {
            let h: Vec<f64> = (1..=t_len)
                .map(|t| {
                    let tf = t as f64;
                    if t == 1 {
                        h1
                    } else {
                        h1 * tf.powf(-2.0 * alpha) / tf.ln().powi(2)
                    }
                })
                .collect();
            let r = logt_from_variance(&h, 0.3, &HacConfig::default(), -1.65).unwrap();
            prop_assert!((r.b_hat - 2.0 * alpha).abs() < 1e-9);
            prop_assert!((r.b_hat - 2.0 * r.alpha_hat).abs() < 1e-15);
            Ok(())
        }),
        property("partition", rows_strategy(), |rows| {
            let p = oracles::panel(rows);
            let Ok(part) = identify_clubs(&p, &cl) else {
                return Ok(());
            };
            prop_assert!(part.check_invariants(&p.codes()).is_ok());
            let merged = merge_clubs(&p, &part, &cl).unwrap();
            prop_assert!(merged.check_invariants(&p.codes()).is_ok());
            Ok(())
        }),
        property("probit gradient", (0u64..10_000, prop::collection::vec(-1.0f64..1.0, 3)), |(seed, shift)| {
            let d = oracles::random_design(seed);
            let beta = DVector::from_iterator(d.n_coef(), shift.into_iter().take(d.n_coef()));
            let g = gradient(d.x(), d.y(), &beta);
            for j in 0..d.n_coef() {
                let (mut up, mut dn) = (beta.clone(), beta.clone());
                up[j] += 1e-6;
                dn[j] -= 1e-6;
                let fd = (log_likelihood(d.x(), d.y(), &up) - log_likelihood(d.x(), d.y(), &dn)) / 2e-6;
                prop_assert!((g[j] - fd).abs() < 1e-5 * fd.abs().max(1.0));
            }
            Ok(())
        }),
        property("label flip", 0u64..10_000, |seed| {
            let d = oracles::random_design(seed);
            let a = fit_probit(&d).unwrap();
            let b = fit_probit(&d.flipped()).unwrap();
            for j in 0..d.n_coef() {
                prop_assert!((a.beta[j] + b.beta[j]).abs() < 1e-7);
            }
            Ok(())
        }),
    ];
    let failed: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    if failed.is_empty() {
        Pass(format!("6 properties x {CASES} cases"))
    } else {
        Fail(failed.join("; "))
    }
}

fn criterion_8() -> Verdict {
    let panel = match load_indicator("res.csv", 2004, 2016, false) {
        Ok(p) => p,
        Err(e) => return NotRun(e),
    };
    let mut notes = Vec::new();
    for smoothing in ["none", "hp"] {
        match clubs_of(&panel, smoothing) {
            Ok(p) if p.clubs.len() == 3 && p.divergent == ["SE"] => {
                return Pass(format!("[{smoothing}] {}", describe(&p)));
            }
            Ok(p) => notes.push(format!("[{smoothing}] {}", describe(&p))),
            Err(e) => notes.push(format!("[{smoothing}] {e}")),
        }
    }
    Fail(notes.join(" "))
}

type Criterion = (u8, &'static str, fn() -> Verdict, bool);

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "club reproduction, overall RES", criterion_1, true),
        (2, "sector reproduction", criterion_2, true),
        (3, "target-ratio test", criterion_3, true),
        (4, "probit reproduction", criterion_4, true),
        (5, "oracle equivalence", criterion_5, true),
        (6, "simulation recovery", criterion_6, true),
        (7, "invariant suite", criterion_7, true),
        (8, "robustness reproduction (informative)", criterion_8, false),
    ];
    let mut failed = 0;
    for (n, name, run, blocking) in criteria {
        let line = match run() {
            Pass(d) => format!("PASS  {d}"),
            Fail(d) if blocking => {
                failed += 1;
                format!("FAIL  {d}")
            }
            Fail(d) => format!("FAIL (non-blocking)  {d}"),
            NotRun(d) => format!("NOT RUN  {d}"),
        };
        println!("criterion {n} [{name}]: {line}");
    }
    println!("acceptance: {} of 7 blocking criteria passed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
