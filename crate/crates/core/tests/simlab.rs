use clubconv_core::clustering::ClusterConfig;
use clubconv_core::logt::{convergence_test, Decision, LogtConfig};
use clubconv_core::simlab::{generate_panel, monte_carlo, Analysis, ClubSpec, DgpConfig};

fn spec(n: usize, delta: f64, alpha: f64) -> ClubSpec {
    ClubSpec {
        n_units: n,
        delta_limit: delta,
        alpha,
        noise_sd: 0.1,
    }
}

fn rate(cfg: &DgpConfig, reps: u64, decision: Decision) -> f64 {
    let hits = (0..reps)
        .filter(|k| {
            let mut c = cfg.clone();
            c.seed += k;
            let p = generate_panel(&c).unwrap().panel;
            convergence_test(&p, &LogtConfig::default()).unwrap().decision == decision
        })
        .count();
    hits as f64 / reps as f64
}

#[test]
fn single_club_is_not_rejected() {
    let cfg = DgpConfig::new(vec![spec(20, 1.0, 0.5)], 40, 100);
    let r = rate(&cfg, 500, Decision::ConvergenceNotRejected);
    assert!(r >= 0.90, "{r}");
}

#[test]
fn two_clubs_are_rejected() {
    let cfg = DgpConfig::new(vec![spec(10, 1.0, 0.5), spec(10, 2.0, 0.5)], 40, 200);
    let r = rate(&cfg, 500, Decision::Rejected);
    assert!(r >= 0.95, "{r}");
}

#[test]
fn slowly_varying_dgp_matches_twice_alpha() {
    for alpha in [0.25, 0.5, 1.0] {
        let mut cfg = DgpConfig::new(vec![spec(20, 1.0, alpha)], 40, 300);
        cfg.slowly_varying = true;
        let rows = monte_carlo(&[cfg], Analysis::Logt, 200, &ClusterConfig::default(), false).unwrap();
        let b = rows[0].mean_b_hat;
        assert!((b - 2.0 * alpha).abs() < 0.15, "alpha {alpha}: mean b {b}");
    }
}

#[test]
fn harness_agrees_with_direct_runs() {
    let cfg = DgpConfig::new(vec![spec(20, 1.0, 0.5)], 40, 100);
    let rows = monte_carlo(std::slice::from_ref(&cfg), Analysis::Logt, 100, &ClusterConfig::default(), false).unwrap();
    let direct = rate(&cfg, 100, Decision::Rejected);
    assert_eq!(rows[0].rejection_rate, direct);
    assert_eq!(rows[0].failed, 0);
}

#[test]
fn null_rejection_rate_band() {
    // informative only: small-T size distortion is expected
    let cfg = DgpConfig::new(vec![spec(20, 1.0, 0.5)], 40, 400);
    let rows = monte_carlo(&[cfg], Analysis::Logt, 500, &ClusterConfig::default(), false).unwrap();
    let r = rows[0].rejection_rate;
    let verdict = if (0.01..=0.12).contains(&r) { "inside" } else { "outside" };
    println!("null rejection rate {r:.3} ({verdict} [0.01, 0.12])");
}
