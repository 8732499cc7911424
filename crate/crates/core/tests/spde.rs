use ofl_core::chain::run_ensemble;
use ofl_core::rng::stream;
use ofl_core::spde::*;
use ofl_core::stats::mean;
use ofl_core::test_function::TestFunction;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Two-sided 1% family-wise threshold over 32 modes.
const Z_MODES: f64 = 3.42;

fn assert_flat(rows: &[SpectrumRow], target: f64, what: &str) {
    for r in rows {
        let z = (r.variance - target) / r.stderr;
        assert!(z.abs() < Z_MODES, "{what}: mode {} variance {} ± {} vs {target}", r.k, r.variance, r.stderr);
    }
    let pooled = mean(&rows.iter().map(|r| r.variance).collect::<Vec<_>>());
    let se = rows.iter().map(|r| r.stderr * r.stderr).sum::<f64>().sqrt() / rows.len() as f64;
    assert!((pooled - target).abs() < 3.0 * se, "{what}: pooled {pooled} ± {se} vs {target}");
}

#[test]
fn config_validation() {
    assert!(SpdeConfig::ou(32, 1.0 / 2048.0).validate().is_ok());
    assert!(SpdeConfig::ou(32, 1.0 / 1024.0).validate().is_err());
    assert!(SpdeConfig::ou(31, 1e-5).validate().is_err());
    assert!(SpdeConfig::new(32, 0.5, 1.0, -1.0, 1e-5).validate().is_err());
    let ok: SpdeConfig = toml::from_str("m = 16\nnu = 0.5\nLambda = 1.0\nD = 1.0\ndt = 0.0005").unwrap();
    assert_eq!(ok.sigma, (1.0, std::f64::consts::FRAC_1_SQRT_2));
    assert!(toml::from_str::<SpdeConfig>("m = 16\nnu = 0.5\nLambda = 1.0\nD = 1.0\ndt = 0.0005\nextra = 1").is_err());
    let mut rng = stream(1, 0);
    assert!(simulate_sbe(&SpdeConfig::ou(16, 1e-3), 0.0105, 1, &mut rng).is_err());
}

#[test]
fn noiseless_modes_decay_at_the_heat_rate() {
    let (m, dt, t) = (32, 1.0 / 2048.0, 0.25);
    let cfg = SpdeConfig::ou(m, dt);
    for k in [1usize, 3, 7] {
        let u0: Vec<f64> = (0..m).map(|j| 2.0 * (2.0 * PI * (k * j) as f64 / m as f64).cos() + 0.3).collect();
        let p = simulate_field(&cfg, 0.0, 0.0, Some(u0.clone()), t, 512, &mut stream(2, 0)).unwrap();
        let decay = (-0.5 * (2.0 * PI * k as f64).powi(2) * t).exp();
        let last = p.fields.last().unwrap();
        for j in 0..m {
            let want = 0.3 + (u0[j] - 0.3) * decay;
            assert!((last[j] - want).abs() < 1e-12, "k={k} j={j}: {} vs {want}", last[j]);
        }
    }
}

#[test]
fn exact_mode_update_keeps_the_stationary_variance() {
    let (r, h, v) = (0.5 * (2.0 * PI * 3.0f64).powi(2), 1e-4, 1.7);
    let (e, s) = ou_mode_coefficients(r, h, v);
    // Variance recursion from zero over 10⁵ steps.
    let mut var = 0.0;
    for _ in 0..100_000 {
        var = e * e * var + s * s;
    }
    assert!((var / v - 1.0).abs() < 1e-3, "{var} vs {v}");
}

#[test]
fn ou_components_are_white_and_uncorrelated() {
    let cfg = SpdeConfig::ou(64, 1.0 / 16384.0);
    let runs = run_ensemble(200, 3, |_, rng| simulate_ou(&cfg, 0.25, 512, rng)).unwrap();
    let (a, b): (Vec<SpdePath>, Vec<SpdePath>) = runs.into_iter().map(|[x, y]| (x, y)).unzip();
    assert_flat(&spectrum(&a, 0.0), 1.0, "sigma1");
    assert_flat(&spectrum(&b, 0.0), 0.5, "sigma2");
    for r in cross_spectrum(&a, &b, 0.0) {
        assert!(r.variance.abs() < Z_MODES * r.stderr, "cross mode {}: {} ± {}", r.k, r.variance, r.stderr);
    }
}

#[test]
fn burgers_without_nonlinearity_is_ou() {
    let cfg = SpdeConfig::new(32, 0.8, 0.0, 0.4, 1.0 / 4096.0);
    let paths = run_ensemble(200, 4, |_, rng| simulate_sbe(&cfg, 0.5, 256, rng)).unwrap();
    assert_flat(&spectrum(&paths, 0.0), 0.25, "linear");
}

#[test]
fn burgers_preserves_white_noise_and_the_mean() {
    let cfg = SpdeConfig::new(32, 0.5, 1.5, 1.0, 1.0 / 2048.0);
    let paths = run_ensemble(200, 5, |_, rng| simulate_sbe(&cfg, 1.0, 256, rng)).unwrap();
    assert_flat(&spectrum(&paths, 0.0), 1.0, "burgers");
    for p in &paths {
        let m0 = modes(&p.fields[0])[0].re;
        for u in &p.fields {
            assert!((modes(u)[0].re - m0).abs() < 1e-12 * (1.0 + m0.abs()));
        }
    }
}

#[test]
fn halving_the_step_moves_the_spectrum_less_than_its_noise() {
    let cfg = SpdeConfig::new(32, 0.5, 1.5, 1.0, 1.0 / 2048.0);
    let pairs = run_ensemble(200, 6, |_, rng| simulate_sbe_coupled(&cfg, 1.0, 256, rng)).unwrap();
    let (c, f): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let (sc, sf) = (spectrum(&c, 0.0), spectrum(&f, 0.0));
    for (a, b) in sc.iter().zip(&sf) {
        assert!((a.variance - b.variance).abs() < a.stderr, "mode {}: {} vs {} (σ={})", a.k, a.variance, b.variance, a.stderr);
    }
}

#[test]
fn blow_up_is_reported() {
    let mut cfg = SpdeConfig::new(16, 0.5, 400.0, 1.0, 1.0 / 1024.0);
    cfg.blowup = 6.0;
    let r = simulate_sbe(&cfg, 1.0, 1, &mut stream(7, 0));
    assert!(matches!(r, Err(ofl_core::OflError::BlowUp(_))), "{r:?}");
}

#[test]
fn energy_probe() {
    let cfg = SpdeConfig::ou(64, 1.0 / 8192.0);
    let paths = run_ensemble(200, 8, |_, rng| simulate_field(&cfg, 1.0, 0.0, None, 0.125, 1, rng)).unwrap();
    let eps = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let zero = energy_estimate_probe(&paths, &TestFunction::zero(), &eps, 0.0, 0.125).unwrap();
    assert!(zero.iter().all(|r| r.ratio == 0.0));
    assert!(energy_estimate_probe(&paths, &TestFunction::zero(), &[0.25, 0.5], 0.0, 0.125).is_err());
    let rows = energy_estimate_probe(&paths, &TestFunction::gaussian(0.1), &eps, 0.0, 0.125).unwrap();
    // Fit oracle: one constant in log space; every ratio within a factor 2 of it.
    let c = mean(&rows.iter().map(|r| r.ratio.ln()).collect::<Vec<_>>()).exp();
    for r in &rows {
        assert!(r.ratio > 0.0 && r.ratio < 2.0 * c && r.ratio > 0.5 * c, "{rows:?}");
    }
}

proptest! {
    #[test]
    fn mode_update_is_stationary(r in 0.0f64..1e4, h in 1e-6f64..1e-1, v in 0.01f64..10.0) {
        let (e, s) = ou_mode_coefficients(r, h, v);
        prop_assert!(e <= 1.0 && e >= 0.0);
        prop_assert!((e * e * v + s * s - v).abs() < 1e-12 * v);
    }
}
