use lsi_core::density::AnalyticSpec;
use lsi_core::estimators::{confidence_interval, variance_hat};
use lsi_core::montecarlo::{
    fit_error_curve, rate_report, reference_value, run_replicate, run_study, study_csv,
    summary_csv, write_study, HRule, McConfig, ReplicateRecord,
};
use lsi_core::seeds::mix_seed;
use lsi_core::{
    estimate, make_kernel, Analytic, EstimatorKind, GridSpec, Integrand, Kde, NamedPhi, PhiExpr,
};

/// Drops the wall-clock field, which is the only nondeterministic one.
fn timeless(r: &ReplicateRecord) -> ReplicateRecord {
    ReplicateRecord {
        runtime_s: 0.0,
        ..r.clone()
    }
}

fn config(n_list: Vec<usize>, replicates: usize) -> McConfig {
    McConfig {
        truth: AnalyticSpec::Isotropic {
            dim: 2,
            sigma: 1.0,
            mean: None,
        },
        level: 0.05,
        integrand: PhiExpr::named(NamedPhi::Unity),
        estimators: vec![EstimatorKind::Plugin, EstimatorKind::Tube { eps: 0.2 }],
        n_list,
        h_rule: HRule::Power {
            scale: 3.0,
            exponent: 1.0 / 6.0,
        },
        replicates,
        base_seed: 99,
        grid: Some(GridSpec::cube(&[(-3.5, 3.5), (-3.5, 3.5)], 64).unwrap()),
        alpha: 0.1,
        tau: Some(0.0),
        intervals: true,
        kernel_order: 2,
        kernel_smoothness: 5,
        truth_factor: Some(2),
    }
}

#[test]
fn single_replicate_matches_direct_run() {
    let cfg = config(vec![600], 1);
    let res = run_study(&cfg).unwrap();
    let seed = mix_seed(cfg.base_seed, 0);
    let h = cfg.h_rule.bandwidth(600);
    let k = make_kernel(2, 2, 5).unwrap();
    let kde = Kde::new(
        Analytic::standard_gaussian(2).sample(600, seed),
        h,
        k.clone(),
    )
    .unwrap();
    let grid = cfg.grid.clone().unwrap();
    let one = Integrand::constant(1.0);
    let rep = estimate(&kde, &one, 0.05, EstimatorKind::Plugin, &grid).unwrap();
    let s2 = variance_hat(&kde, &one, 0.05, 0.0, &grid, &k).unwrap();
    let ci = confidence_interval(&rep, s2, 0.1, h).unwrap().ci.unwrap();
    let rec = &res.records[0];
    assert_eq!(rec.seed, seed);
    assert_eq!(rec.value, Some(rep.value));
    assert_eq!(rec.sigma2, Some(s2));
    assert_eq!((rec.ci_lo, rec.ci_hi), (Some(ci.0), Some(ci.1)));
    assert_eq!(res.rows[0].mean, rep.value);
    assert_eq!(res.rows[0].variance, 0.0);
    assert_eq!(
        timeless(&run_replicate(&cfg, 600, 0).unwrap()[0]),
        timeless(rec)
    );
}

#[test]
fn identical_configs_give_identical_csv() {
    let cfg = config(vec![300, 600, 1200], 4);
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    assert_eq!(study_csv(&a).unwrap(), study_csv(&b).unwrap());
    assert_eq!(summary_csv(&a).unwrap(), summary_csv(&b).unwrap());
    assert_eq!(a.records.len(), 3 * 4 * 2);
    for row in &a.rows {
        assert_eq!(row.replicates, 4);
        assert!(row.variance >= 0.0);
        let c = row.coverage.unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
    let report = rate_report(&a).unwrap();
    assert!(report.starts_with("estimator,fitted_slope"));
    assert_eq!(report.lines().count(), 3);
    assert!((a.rate_fits[0].theory_slope + 5.0 / 12.0).abs() < 1e-12);
    assert_eq!(a.theory.len(), 3);
}

#[test]
fn replicate_order_does_not_matter() {
    let cfg = config(vec![400], 3);
    let all = run_study(&cfg).unwrap();
    for r in (0..3).rev() {
        let one = run_replicate(&cfg, 400, r).unwrap();
        assert_eq!(timeless(&one[0]), timeless(&all.records[2 * r]));
        assert_eq!(timeless(&one[1]), timeless(&all.records[2 * r + 1]));
    }
}

#[test]
fn self_comparison_has_zero_slope() {
    let ns = [500, 1000, 2000, 4000];
    assert_eq!(fit_error_curve(&ns, &[0.0; 4]).0, 0.0);
    assert!(fit_error_curve(&ns, &[0.3; 4]).0.abs() < 1e-12);
}

#[test]
fn rate_report_needs_three_sizes() {
    let res = run_study(&config(vec![300, 600], 1)).unwrap();
    assert!(res.rate_fits.is_empty());
    assert!(rate_report(&res).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = config(vec![600, 300], 2);
    assert!(run_study(&c).is_err());
    c.n_list = vec![300];
    c.replicates = 0;
    assert!(run_study(&c).is_err());
    c.replicates = 1;
    c.alpha = 1.0;
    assert!(run_study(&c).is_err());
    c.alpha = 0.1;
    c.estimators = vec![EstimatorKind::Band { eps: 0.0 }];
    assert!(run_study(&c).is_err());
}

#[test]
fn reference_value_reports_richardson_error() {
    let t = reference_value(&config(vec![300], 1)).unwrap();
    let truth =
        2.0 * std::f64::consts::PI * (-2.0 * (0.05 * 2.0 * std::f64::consts::PI).ln()).sqrt();
    assert_eq!(t.res, 128);
    assert!((t.value - truth).abs() / truth < 1e-3);
    assert!(t.richardson_error < 1e-2);
}

#[test]
fn config_round_trips_through_json_with_defaults() {
    let json = r#"{
        "truth": {"type": "isotropic", "dim": 2},
        "level": 0.05,
        "estimators": [{"estimator": "plugin"}, {"estimator": "band", "eps": 0.01}],
        "n_list": [500, 1000],
        "h_rule": {"rule": "fixed", "h": 0.9},
        "replicates": 10
    }"#;
    let cfg: McConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg.alpha, 0.1);
    assert_eq!(cfg.integrand, PhiExpr::named(NamedPhi::Unity));
    assert!(cfg.intervals);
    let back: McConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn study_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let res = run_study(&config(vec![300, 600, 1200], 2)).unwrap();
    let files = write_study(&res, dir.path(), true).unwrap();
    for name in ["study.csv", "summary.csv", "timing.csv", "rates.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let svgs = files
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .count();
    assert_eq!(svgs, res.rows.len());
    let study = std::fs::read_to_string(dir.path().join("study.csv")).unwrap();
    assert!(study
        .lines()
        .next()
        .unwrap()
        .starts_with("n,estimator,replicate,seed,h,value"));
    assert!(!study.contains("runtime"));
}
