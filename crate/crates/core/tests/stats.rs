use std::path::PathBuf;
use std::time::Instant;

use cornerrag_core::eval::{ln_gamma, paired_t_test, relative_improvement, two_tailed_p, Metric, Table2Fixture};

fn fixture() -> Table2Fixture {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/table2.json");
    Table2Fixture::load(&path).unwrap()
}

/// Two-tailed p by composite Simpson integration of the t density over [0, |t|].
fn simpson_p(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let f = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 20_000;
    let h = t.abs() / f64::from(n);
    let mut sum = f(0.0) + f(t.abs());
    for k in 1..n {
        sum += f(f64::from(k) * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * sum * h / 3.0
}

#[test]
fn p_values_agree_with_numerical_integration() {
    for df in [1.0, 2.0, 5.0, 10.0, 30.0] {
        for t in [0.1, 0.8, 1.5, 2.228, 3.0, 5.0] {
            let got = two_tailed_p(t, df);
            let want = simpson_p(t, df);
            assert!((got - want).abs() < 1e-9, "df={df} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn t_table_pins() {
    assert!((two_tailed_p(2.228, 10.0) - 0.050).abs() < 5e-4);
    assert!((two_tailed_p(2.764, 10.0) - 0.020).abs() < 5e-4);
    assert!((two_tailed_p(-2.228, 10.0) - two_tailed_p(2.228, 10.0)).abs() == 0.0);
}

#[test]
fn reproduces_published_t_tests() {
    let start = Instant::now();
    let f = fixture();
    assert_eq!(f.models.len(), 11);
    let expected = [
        (Metric::Cosine, 2.4937, 0.0318),
        (Metric::F1, 5.0753, 0.0005),
        (Metric::Precision, 4.5177, 0.0011),
        (Metric::Recall, 7.0715, 3.4097e-5),
    ];
    for (metric, t, p) in expected {
        let r = paired_t_test(&f.samples(metric).unwrap()).unwrap();
        assert_eq!(r.n, 11);
        assert!((r.t - t).abs() < 1e-3, "{metric:?}: t={}", r.t);
        assert!(((r.p - p) / p).abs() < 0.05, "{metric:?}: p={}", r.p);
        assert!((r.p - simpson_p(r.t, 10.0)).abs() < 1e-9);
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn headline_percentages() {
    let f = fixture();
    let row = f.model("LLaVA-1.6-34B").unwrap();
    let expected = [
        (Metric::Cosine, 5.22),
        (Metric::F1, 39.91),
        (Metric::Precision, 55.80),
        (Metric::Recall, 13.74),
    ];
    for (metric, pct) in expected {
        let got = relative_improvement(row.with_rag.get(metric), row.without_rag.get(metric)).unwrap();
        assert!((got - pct).abs() < 0.02, "{metric:?}: {got}");
    }
}

#[test]
fn ablation_fixture_agrees_with_the_model_grid() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/table4.json");
    let t4: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let f = fixture();
    let row = f.model(t4["model"].as_str().unwrap()).unwrap();
    let rows = t4["rows"].as_array().unwrap();
    let full = rows.iter().find(|r| r["projection"] == true && r["concatenation"] == true).unwrap();
    for metric in [Metric::Cosine, Metric::F1, Metric::Precision, Metric::Recall] {
        let name = metric.name();
        assert_eq!(full[name].as_f64().unwrap(), row.with_rag.get(metric), "{name}");
        assert_eq!(t4["no_retrieval"][name].as_f64().unwrap(), row.without_rag.get(metric), "{name}");
    }
    // Dropping either component costs cosine, F1 and precision.
    for ablated in rows.iter().filter(|r| r != &full) {
        for name in ["cosine", "f1", "precision"] {
            assert!(ablated[name].as_f64().unwrap() < full[name].as_f64().unwrap(), "{ablated}");
        }
    }
}
