use super::*;
use crate::linalg::DiffOrder;

fn zero(n: usize) -> Signal {
    Signal::zeros(n).unwrap()
}

#[test]
fn identity_risk_is_sigma_squared() {
    let (n, reps, sigma) = (50, 400, 2.0);
    let est = monte_carlo_risk(&zero(n), &Fitter::Identity, sigma, reps, 3).unwrap();
    let var = sigma * sigma;
    let se = var * (2.0 / (n * reps) as f64).sqrt();
    assert!((est.risk - var).abs() < 4.0 * se, "{est:?}");
    assert!((est.stderr / se - 1.0).abs() < 0.2);
    assert_eq!((est.reps, est.failures), (reps, 0));
}

#[test]
fn zero_budget_projects_onto_constants() {
    let (n, reps) = (40, 2000);
    let fitter = Fitter::Constrained { r: DiffOrder::new(1).unwrap(), v: 0.0 };
    let est = monte_carlo_risk(&zero(n), &fitter, 1.0, reps, 4).unwrap();
    // mean(Y)^2 has mean 1/n and standard deviation sqrt(2)/n
    let se = 2f64.sqrt() / n as f64 / (reps as f64).sqrt();
    assert!((est.risk - 1.0 / n as f64).abs() < 4.0 * se, "{est:?}");
}

#[test]
fn slopes() {
    let grid = log_spaced(100, 3000, 10);
    let pts: Vec<(usize, f64)> = grid.iter().map(|&n| (n, 3.0 / n as f64)).collect();
    let (b, r2) = loglog_slope(&pts).unwrap();
    assert!((b + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    let pts: Vec<(usize, f64)> = grid
        .iter()
        .map(|&n| (n, (std::f64::consts::E * n as f64).ln() / n as f64))
        .collect();
    let (b, r2) = loglog_slope(&pts).unwrap();
    // slope of log log(en) - log n against log n is -1 + 1/log(en) on average
    let x: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let mean_x = x.iter().sum::<f64>() / x.len() as f64;
    let y: Vec<f64> = x.iter().map(|v| (1.0 + v).ln() - v).collect();
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let direct = x.iter().zip(&y).map(|(a, c)| (a - mean_x) * (c - mean_y)).sum::<f64>()
        / x.iter().map(|a| (a - mean_x).powi(2)).sum::<f64>();
    assert!((b - direct).abs() < 1e-12);
    assert!(b > -1.0 && b < -0.8 && r2 > 0.99);
    assert!(loglog_slope(&[(10, 1.0), (20, 0.0), (30, 1.0)]).is_err());
    assert!(loglog_slope(&[(10, 1.0), (20, 0.5)]).is_err());
}

#[test]
fn grid_helper() {
    let expected: Vec<usize> = (0..8).map(|i| (1000.0 * 5f64.powf(i as f64 / 7.0)).round() as usize).collect();
    assert_eq!(log_spaced(1000, 5000, 8), expected);
    assert_eq!(expected[1], 1258);
    assert_eq!(log_spaced(5, 5, 3), vec![5]);
}

/// Upper tail of chi-square with `2k` degrees of freedom.
fn chi2_even_tail(k: usize, t: f64) -> f64 {
    let h = t / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..k {
        term *= h / i as f64;
        sum += term;
    }
    (-h).exp() * sum
}

#[test]
fn exceedance_rates() {
    let (n, reps) = (20, 4000);
    let rate = loss_quantiles(&zero(n), &Fitter::Identity, 1.0, reps, 5, 1.0).unwrap();
    let p = chi2_even_tail(n / 2, n as f64 + 4.0);
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    assert!((rate - p).abs() < 4.0 * se + 0.01, "{rate} vs {p}");
    let none = loss_quantiles(&zero(n), &Fitter::Identity, 1.0, 200, 5, 1e6).unwrap();
    assert_eq!(none, 0.0);
    assert!(loss_quantiles(&zero(n), &Fitter::Identity, 1.0, 200, 5, 0.0).is_err());
}

fn small(name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::builtin(name).unwrap();
    cfg.n_grid = cfg.n_grid.iter().map(|n| n / 10).filter(|&n| n >= 2 * cfg.order + 1).collect();
    cfg.n_grid.dedup();
    cfg.reps = 30;
    for e in &mut cfg.estimators {
        if let EstimatorSpec::Penalized { lambda: Penalty::LambdaStar { reps } } = &mut e.spec {
            *reps = 20;
        }
    }
    cfg
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let mut cfg = small("f3-risk");
    cfg.n_grid = vec![60, 90, 130];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    let csv = a.csv_string().unwrap();
    assert_eq!(csv, b.csv_string().unwrap());
    assert!(csv.starts_with("n,estimator,risk,stderr,reps\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 6);
    assert_eq!(a, b);
    let cv = a.levels.iter().find(|l| l.estimator == "cv-1se").unwrap();
    assert!(cv.q1.unwrap() <= cv.value && cv.value <= cv.q3.unwrap());
    assert!(a.levels.iter().any(|l| l.estimator == "lambda-star" && l.stderr.is_some()));

    let dir = tempfile::tempdir().unwrap();
    let (csv_path, json_path) = a.write(dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(csv_path).unwrap(), csv);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
    assert_eq!(summary["config"]["name"], "f3-risk");
    assert!(summary["curves"][0]["slope"].is_number());
}

#[test]
fn oracle_budget_beats_identity() {
    for name in ["vio1-rate", "vio2-rate", "f1-risk", "f2-risk", "simpo"] {
        let mut cfg = small(name);
        cfg.estimators = vec![
            EstimatorConfig::new(EstimatorSpec::Constrained { v: Budget::Oracle }),
            EstimatorConfig::new(EstimatorSpec::Identity),
        ];
        cfg.n_grid.truncate(3);
        let report = run_experiment(&cfg).unwrap();
        for n in &cfg.n_grid {
            let get = |id: &str| report.records.iter().find(|r| r.estimator == id && r.n == *n).unwrap();
            let (o, i) = (get("constrained-oracle"), get("identity"));
            assert!(o.risk <= i.risk + 3.0 * (o.stderr.powi(2) + i.stderr.powi(2)).sqrt(), "{name} n={n}");
        }
    }
}

#[test]
fn config_validation() {
    let good = ExperimentConfig::builtin("f1-risk").unwrap();
    good.validate().unwrap();
    let mut c = good.clone();
    c.estimators.clear();
    assert!(matches!(run_experiment(&c), Err(Error::InvalidConfig(_))));
    let mut c = good.clone();
    c.reps = 1;
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.n_grid = vec![200, 100];
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.estimators.push(c.estimators[0].clone());
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.order = 2;
    assert!(c.validate().is_err(), "lach is a first-order rule");
    let mut c = good;
    c.sigma = 0.0;
    assert!(c.validate().is_err());
    assert!(ExperimentConfig::builtin("nope").is_err());
}

#[test]
fn config_json() {
    for name in BUILTIN_CONFIGS {
        let cfg = ExperimentConfig::builtin(name).unwrap();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
    let text = r#"{
        "name": "demo",
        "signal": {"kind": "builtin", "name": "vio1"},
        "order": 1,
        "sigma": 1.0,
        "n_grid": [20, 40, 80],
        "estimators": [
            {"kind": "constrained", "v": "oracle"},
            {"kind": "constrained", "v": {"fixed": 2.5}},
            {"kind": "penalized", "lambda": {"rule": {"rule": "cdal", "gamma": 0.5}}},
            {"kind": "penalized", "lambda": {"lambda-star": {}}},
            {"kind": "penalized", "lambda": {"cv": {"one_se": true}}, "label": "cv2"},
            {"kind": "identity"}
        ],
        "reps": 10,
        "seed": 7
    }"#;
    let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
    cfg.validate().unwrap();
    let ids: Vec<String> = cfg.estimators.iter().map(EstimatorConfig::id).collect();
    assert_eq!(ids, ["constrained-oracle", "constrained-2.5", "rule-cdal-0.5", "lambda-star", "cv2", "identity"]);
    assert_eq!(cfg.output, OutputPaths::default());
    assert!(serde_json::from_str::<ExperimentConfig>(&text.replace("\"seed\"", "\"sead\"")).is_err());
}

#[test]
fn too_many_failures_abort() {
    assert!(summarize([Some(1.0), None, Some(2.0)].into_iter(), 3).is_err());
    let mut many = vec![Some(1.0); 199];
    many.push(None);
    let est = summarize(many.into_iter(), 200).unwrap();
    assert_eq!((est.reps, est.failures), (199, 1));
}
