use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recondet_core::stats::{self, special, ContingencyTable, Variance};
use serde_json::Value;

fn oracle() -> Value {
    serde_json::from_str(include_str!("fixtures/stats_oracle.json")).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(f).collect()
}

fn close(got: f64, want: f64, tol: f64, what: &str) {
    let scale = want.abs().max(1.0);
    assert!((got - want).abs() <= tol * scale, "{what}: got {got}, want {want}");
}

#[test]
fn special_functions_on_pinned_grid() {
    let o = oracle();
    let s = &o["special"];
    for row in s["ln_gamma"].as_array().unwrap() {
        let r = floats(row);
        close(special::ln_gamma(r[0]), r[1], 1e-10, "ln_gamma");
    }
    for row in s["inc_beta"].as_array().unwrap() {
        let r = floats(row);
        let got = special::inc_beta(r[0], r[1], r[2]).unwrap();
        assert!((got - r[3]).abs() <= 1e-10, "I_{}({}, {}) = {got}, want {}", r[2], r[0], r[1], r[3]);
    }
    for row in s["inc_gamma"].as_array().unwrap() {
        let r = floats(row);
        assert!((special::inc_gamma_p(r[0], r[1]).unwrap() - r[2]).abs() <= 1e-10, "P{r:?}");
        assert!((special::inc_gamma_q(r[0], r[1]).unwrap() - r[3]).abs() <= 1e-10, "Q{r:?}");
    }
    for row in s["t_two_sided"].as_array().unwrap() {
        let r = floats(row);
        assert!((special::t_two_sided(r[0], r[1]).unwrap() - r[2]).abs() <= 1e-10, "t{r:?}");
    }
    for row in s["f_sf"].as_array().unwrap() {
        let r = floats(row);
        assert!((special::f_sf(r[0], r[1], r[2]).unwrap() - r[3]).abs() <= 1e-10, "F{r:?}");
    }
    for row in s["chi2_sf"].as_array().unwrap() {
        let r = floats(row);
        assert!((special::chi2_sf(r[0], r[1]).unwrap() - r[2]).abs() <= 1e-10, "chi2{r:?}");
    }
}

#[test]
fn t_survival_example() {
    let p = special::t_two_sided(2.885, 12.0).unwrap();
    assert!((p - 0.0137).abs() < 5e-4, "{p}");
}

#[test]
fn spearman_matches_reference() {
    for case in oracle()["spearman"].as_array().unwrap() {
        let r = stats::spearman(&floats(&case["x"]), &floats(&case["y"])).unwrap();
        close(r.r, f(&case["r"]), 1e-9, "spearman r");
        assert!((r.p_value - f(&case["p"])).abs() <= 1e-8, "p {} vs {}", r.p_value, case["p"]);
    }
}

#[test]
fn anova_matches_reference() {
    for case in oracle()["anova"].as_array().unwrap() {
        let groups: Vec<Vec<f64>> = case["groups"].as_array().unwrap().iter().map(floats).collect();
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        let r = stats::one_way_anova(&refs).unwrap();
        close(r.f, f(&case["f"]), 1e-9, "anova F");
        assert!((r.p_value - f(&case["p"])).abs() <= 1e-8);
    }
}

#[test]
fn t_tests_match_reference() {
    for case in oracle()["ttest"].as_array().unwrap() {
        let (a, b) = (floats(&case["a"]), floats(&case["b"]));
        let p = stats::t_test_two_sample(&a, &b, Variance::Pooled).unwrap();
        close(p.t, f(&case["pooled_t"]), 1e-9, "pooled t");
        assert!((p.p_value - f(&case["pooled_p"])).abs() <= 1e-8);
        let w = stats::t_test_two_sample(&a, &b, Variance::Welch).unwrap();
        close(w.t, f(&case["welch_t"]), 1e-9, "welch t");
        close(w.df, f(&case["welch_df"]), 1e-9, "welch df");
        assert!((w.p_value - f(&case["welch_p"])).abs() <= 1e-8);
    }
}

#[test]
fn chi2_matches_reference() {
    for case in oracle()["chi2"].as_array().unwrap() {
        let counts: Vec<Vec<u64>> = case["table"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect())
            .collect();
        let t = ContingencyTable::new(counts).unwrap();
        let r = stats::chi2_contingency(&t, case["yates"].as_bool().unwrap()).unwrap();
        close(r.chi2, f(&case["chi2"]), 1e-9, "chi2");
        assert!((r.p_value - f(&case["p"])).abs() <= 1e-8);
        assert_eq!(r.dof as u64, case["dof"].as_u64().unwrap());
    }
}

#[test]
fn kappa_matches_reference() {
    for case in oracle()["kappa"].as_array().unwrap() {
        let ints = |v: &Value| -> Vec<i64> { v.as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).collect() };
        let (a, b) = (ints(&case["a"]), ints(&case["b"]));
        close(stats::cohens_kappa(&a, &b).unwrap(), f(&case["kappa"]), 1e-9, "kappa");
        close(stats::cohens_kappa(&b, &a).unwrap(), f(&case["kappa"]), 1e-9, "kappa swapped");
    }
}

#[test]
fn anova_equals_squared_pooled_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let na = rng.random_range(2..12);
        let nb = rng.random_range(2..12);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-3.0..7.0)).collect();
        let fr = stats::one_way_anova(&[&a, &b]).unwrap();
        let t = stats::t_test_two_sample(&a, &b, Variance::Pooled).unwrap();
        close(fr.f, t.t * t.t, 1e-9, "F vs t^2");
        close(fr.p_value, t.p_value, 1e-9, "F p vs t p");
    }
}

#[test]
fn chi2_p_falls_with_imbalance() {
    let mut prev = 1.0;
    for k in 0..10u64 {
        let t = ContingencyTable::new(vec![vec![10 + k, 10 - k], vec![10 - k, 10 + k]]).unwrap();
        let p = stats::chi2_contingency(&t, true).unwrap().p_value;
        assert!(p <= prev);
        prev = p;
    }
}

#[test]
fn spearman_invariant_under_monotone_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let x: Vec<f64> = (0..15).map(|_| rng.random_range(0.1..10.0)).collect();
        let y: Vec<f64> = (0..15).map(|_| rng.random_range(0.1..10.0)).collect();
        let base = stats::spearman(&x, &y).unwrap();
        let xt: Vec<f64> = x.iter().map(|v| v.ln() * 3.0 - 1.0).collect();
        let yt: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
        let moved = stats::spearman(&xt, &yt).unwrap();
        close(moved.r, base.r, 1e-12, "monotone");
        assert_eq!(stats::spearman(&x, &x).unwrap().r, 1.0);
    }
}
