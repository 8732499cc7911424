//! Experiment drivers. Each returns its output files in memory; nothing is
//! written until the whole run has succeeded.

pub mod config;

use config::{levy_form, test_function, Config, Length};
use ofl_core::chain::{run_ensemble, sample_stationary, simulate, simulate_path, SimOptions};
use ofl_core::correlation::{compare_kernel, correlation_s, harmonic_correlation};
use ofl_core::fields::{bg2_bound, bg2_diagnostic, fit_bound_constant, qv_limit, Bg2Observer, DynkinObserver, FieldPair};
use ofl_core::gibbs::{GibbsMeasure, GibbsParams, GibbsSampler};
use ofl_core::nlfh::{mode_coupling, thermo_map};
use ofl_core::poisson::norm_scaling_report;
use ofl_core::potential::validate_assumptions;
use ofl_core::rng::stream;
use ofl_core::spde::{cross_spectrum, energy_estimate_probe, simulate_ou, simulate_sbe, spectrum, SpectrumRow};
use ofl_core::spectral::{auto_grid, kernel_p_form, SpectralGrid};
use ofl_core::stats::{mean, stderr};
use ofl_core::Result;
use serde_json::{json, Value};

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text += &cells.join(",");
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub exchanges: u64,
    pub ode_steps: u64,
    pub results: Value,
}

impl Outcome {
    fn file(&mut self, name: &str, csv: Csv) {
        self.files.push((name.to_string(), csv.into_string()));
    }
}

pub fn run(command: &str, cfg: &Config, seed: u64) -> Result<Outcome> {
    match command {
        "sample" => sample(cfg, seed),
        "simulate" => simulate_cmd(cfg, seed),
        "qv" => qv(cfg, seed),
        "correlate" => correlate(cfg, seed),
        "kernel" => kernel(cfg),
        "poisson" => poisson(cfg),
        "nlfh" => nlfh(cfg),
        "spde" => spde(cfg, seed),
        "bg2" => bg2(cfg, seed),
        "validate-potential" => validate(cfg),
        other => Err(ofl_core::OflError::Config(format!("unknown experiment '{other}'"))),
    }
}

fn sample(cfg: &Config, seed: u64) -> Result<Outcome> {
    let spec = cfg.potential.spec()?;
    let g = &cfg.gibbs;
    let p = GibbsParams::new(g.resolved_beta(), g.b, g.lambda);
    let sampler = GibbsSampler::new(p, &spec)?;
    let measure = GibbsMeasure::new(p, &spec)?;
    let xs = sampler.sample_vec(&mut stream(seed, 0), g.samples);
    let mut out = Outcome::default();
    let mut s = Csv::new(&["i", "eta"]);
    for (i, x) in xs.iter().enumerate() {
        s.row(&[i.to_string(), num(*x)]);
    }
    out.file("samples.csv", s);
    let mut m = Csv::new(&["k", "sample_mean", "stderr", "quadrature"]);
    for k in 1..=4 {
        let pk: Vec<f64> = xs.iter().map(|x| x.powi(k)).collect();
        m.row(&[k.to_string(), num(mean(&pk)), num(stderr(&pk)), num(measure.moment(k))]);
    }
    out.file("moments.csv", m);
    out.results = json!({ "beta": g.resolved_beta(), "expected_acceptance": sampler.expected_acceptance() });
    Ok(out)
}

fn simulate_cmd(cfg: &Config, seed: u64) -> Result<Outcome> {
    let spec = cfg.potential.spec()?;
    let (n, p) = (cfg.chain.n, cfg.chain.params()?);
    let mut opts = SimOptions::new(cfg.run.ode_tol);
    opts.record_times = cfg.run.record_times();
    let beta = p.beta(n);
    let runs = run_ensemble(cfg.run.ensemble, seed, |i, rng| {
        let mut s = sample_stationary(n, &spec, &p, rng)?;
        let (v0, e0) = (s.volume(), s.energy(&spec, beta));
        let tr = simulate(&mut s, &spec, &p, cfg.run.t, &opts, rng)?;
        let drift = ((s.volume() - v0).abs(), (s.energy(&spec, beta) - e0).abs() / e0.abs().max(1e-300));
        let keep = i < cfg.run.snapshots;
        Ok((if keep { Some(tr.times.clone()) } else { None }, if keep { Some(tr.states.clone()) } else { None }, tr.exchanges, tr.ode_steps, drift))
    })?;
    let mut out = Outcome::default();
    let mut summary = Csv::new(&["member", "exchanges", "ode_steps", "volume_drift", "energy_drift_relative"]);
    for (i, (times, states, ex, steps, (dv, de))) in runs.into_iter().enumerate() {
        out.exchanges += ex;
        out.ode_steps += steps;
        summary.row(&[i.to_string(), ex.to_string(), steps.to_string(), num(dv), num(de)]);
        if let (Some(times), Some(states)) = (times, states) {
            let mut c = Csv::new(&["t", "j", "eta"]);
            for (t, st) in times.iter().zip(&states) {
                for (j, x) in st.iter().enumerate() {
                    c.row(&[num(*t), j.to_string(), num(*x)]);
                }
            }
            out.file(&format!("trajectory_{i:04}.csv"), c);
        }
    }
    out.file("summary.csv", summary);
    out.results = json!({ "theta": p.theta(n), "alpha": p.alpha(n), "beta": beta });
    Ok(out)
}

fn qv(cfg: &Config, seed: u64) -> Result<Outcome> {
    let spec = cfg.potential.spec()?;
    let (n, p) = (cfg.chain.n, cfg.chain.params()?);
    let pair = FieldPair { phi1: test_function(&cfg.field.phi)?, phi2: test_function(&cfg.field.phi2)?, f1: cfg.field.f1, f2: cfg.field.f2 };
    let times = cfg.run.record_times();
    let mut opts = SimOptions::new(cfg.run.ode_tol);
    opts.record_times = times.clone();
    let runs = run_ensemble(cfg.run.ensemble, seed, |_, rng| {
        let mut s = sample_stationary(n, &spec, &p, rng)?;
        let mut obs = DynkinObserver::new(&s.eta, 0.0, &spec, &p, pair.clone())?;
        let z0 = obs.z();
        let tr = simulate_path(&mut s, &spec, &p, cfg.run.t, &opts, rng, &mut obs)?;
        let rows: Vec<(f64, f64)> = obs.samples.iter().map(|d| (d.qv, d.martingale(z0).powi(2))).collect();
        Ok((rows, tr.exchanges, tr.ode_steps))
    })?;
    let mut out = Outcome::default();
    let mut c = Csv::new(&["t", "qv", "stderr", "martingale_sq", "martingale_sq_stderr", "limit"]);
    for (k, &t) in times.iter().enumerate() {
        let q: Vec<f64> = runs.iter().map(|r| r.0[k].0).collect();
        let m: Vec<f64> = runs.iter().map(|r| r.0[k].1).collect();
        c.row(&[num(t), num(mean(&q)), num(se(&q)), num(mean(&m)), num(se(&m)), num(qv_limit(&pair, p.lambda, t))]);
    }
    for r in &runs {
        out.exchanges += r.1;
        out.ode_steps += r.2;
    }
    out.file("qv.csv", c);
    Ok(out)
}

fn se(x: &[f64]) -> f64 {
    if x.len() > 1 {
        stderr(x)
    } else {
        0.0
    }
}

fn correlate(cfg: &Config, seed: u64) -> Result<Outcome> {
    let spec = cfg.potential.spec()?;
    let (n, p) = (cfg.chain.n, cfg.chain.params()?);
    let cc = &cfg.correlate;
    let times = cc.times.clone();
    let mut out = Outcome::default();
    let (rows, errs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = if cc.method == "exact" {
        let s = harmonic_correlation(n, &p, &times)?;
        let z = vec![vec![0.0; n]; times.len()];
        (s, z)
    } else {
        let mut opts = SimOptions::new(cfg.run.ode_tol);
        opts.record_times = times.clone();
        let t_end = *times.last().unwrap();
        let runs = run_ensemble(cfg.run.ensemble, seed, |_, rng| {
            let mut s = sample_stationary(n, &spec, &p, rng)?;
            let init = s.eta.clone();
            let tr = simulate(&mut s, &spec, &p, t_end, &opts, rng)?;
            Ok((init, tr.states, tr.exchanges, tr.ode_steps))
        })?;
        let init: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
        let members: Vec<Vec<Vec<f64>>> = runs.iter().map(|r| r.1.clone()).collect();
        for r in &runs {
            out.exchanges += r.2;
            out.ode_steps += r.3;
        }
        let offsets: Vec<i64> = (0..n as i64).collect();
        let est = correlation_s(&init, &members, &spec, &p, &offsets, &times)?;
        (est.s, est.stderr)
    };
    let mut c = Csv::new(&["t", "j", "S", "stderr"]);
    let mut k = Csv::new(&["t", "L1_error", "Linf_error"]);
    let form = levy_form(&cc.form)?;
    let mut skew = vec![];
    for (q, &t) in times.iter().enumerate() {
        for jj in -(n as i64) / 2..(n as i64) / 2 {
            let idx = jj.rem_euclid(n as i64) as usize;
            c.row(&[num(t), jj.to_string(), num(rows[q][idx]), num(errs[q][idx])]);
        }
        let cmp = compare_kernel(&rows[q], t, p.gamma, p.kappa, form, cc.mirror)?;
        k.row(&[num(t), num(cmp.l1), num(cmp.linf)]);
        skew.push(json!({ "t": t, "mass": cmp.mass, "skew_data": cmp.skew_data, "skew_kernel": cmp.skew_kernel }));
    }
    out.file("correlation.csv", c);
    out.file("kernel_comparison.csv", k);
    out.results = json!({ "kernel_form": form.name(), "mirror": cc.mirror, "per_time": skew });
    Ok(out)
}

fn kernel(cfg: &Config) -> Result<Outcome> {
    let kc = &cfg.kernel;
    let form = levy_form(&kc.form)?;
    let (t_min, t_max) = kc.times.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    let grid = match kc.l {
        Length::Value(l) => SpectralGrid::new(kc.m, l)?,
        Length::Auto(_) => auto_grid(kc.gamma, kc.kappa, t_min, t_max, 1e-7)?,
    };
    let mut out = Outcome::default();
    let mut masses = vec![];
    for (i, &t) in kc.times.iter().enumerate() {
        let pt = kernel_p_form(kc.gamma, kc.kappa, t, &grid, form)?;
        let mut c = Csv::new(&["x", "P_t(x)"]);
        let x_max = kc.x_max.unwrap_or(f64::INFINITY);
        for (x, v) in grid.xs().iter().zip(&pt).filter(|(x, _)| x.abs() <= x_max) {
            c.row(&[num(*x), num(*v)]);
        }
        masses.push(grid.integral(&pt));
        out.file(&format!("kernel_{i:02}.csv"), c);
    }
    out.results = json!({ "m": grid.m, "L": grid.l, "times": kc.times, "mass": masses, "form": form.name() });
    Ok(out)
}

fn poisson(cfg: &Config) -> Result<Outcome> {
    let pc = &cfg.poisson;
    let phi = test_function(&pc.phi)?;
    let rows = norm_scaling_report(&phi, &pc.ns, pc.gamma, pc.kappa, pc.width)?;
    let mut c = Csv::new(&["n", "norm_name", "value"]);
    for r in &rows {
        for (name, v) in r.entries() {
            c.row(&[r.n.to_string(), name.to_string(), num(v)]);
        }
    }
    let mut out = Outcome::default();
    out.file("norms.csv", c);
    Ok(out)
}

fn nlfh(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.potential.spec()?;
    let nc = &cfg.nlfh;
    let mut c = Csv::new(&["v", "e", "tau", "b", "v_plus", "g1_11", "g1_22", "g2_11", "g2_22", "mode1", "mode2", "table"]);
    let mut out = Outcome::default();
    for &(v, e) in &nc.points {
        let pt = thermo_map(v, e, &spec, nc.beta)?;
        let r = mode_coupling(&pt, &spec, nc.beta, nc.theta_alpha)?;
        let (m1, m2, tb) = match r.class_pair {
            Some(cl) => (cl.mode1.name().to_string(), cl.mode2.name().to_string(), format!("{:?}", cl.table)),
            None => ("".into(), "".into(), "".into()),
        };
        c.row(&[num(v), num(e), num(pt.tau), num(pt.b), num(r.v_plus), num(r.g1[0][0]), num(r.g1[1][1]), num(r.g2[0][0]), num(r.g2[1][1]), m1, m2, tb]);
    }
    out.file("classification.csv", c);
    Ok(out)
}

fn spectrum_csv(rows: &[SpectrumRow]) -> Csv {
    let mut c = Csv::new(&["k", "variance", "stderr"]);
    for r in rows {
        c.row(&[r.k.to_string(), num(r.variance), num(r.stderr)]);
    }
    c
}

fn spde(cfg: &Config, seed: u64) -> Result<Outcome> {
    let sc = &cfg.spde;
    let c = sc.config()?;
    let mut out = Outcome::default();
    let paths = if sc.mode == "ou" {
        let runs = run_ensemble(sc.ensemble, seed, |_, rng| simulate_ou(&c, sc.t, sc.record_every, rng))?;
        let (a, b): (Vec<_>, Vec<_>) = runs.into_iter().map(|[x, y]| (x, y)).unzip();
        out.file("spectrum_1.csv", spectrum_csv(&spectrum(&a, 0.0)));
        out.file("spectrum_2.csv", spectrum_csv(&spectrum(&b, 0.0)));
        out.file("cross_spectrum.csv", spectrum_csv(&cross_spectrum(&a, &b, 0.0)));
        out.results = json!({ "targets": [c.sigma.0.powi(2) / (2.0 * c.nu), c.sigma.1.powi(2) / (2.0 * c.nu)] });
        a
    } else {
        let a = run_ensemble(sc.ensemble, seed, |_, rng| simulate_sbe(&c, sc.t, sc.record_every, rng))?;
        out.file("spectrum.csv", spectrum_csv(&spectrum(&a, 0.0)));
        out.results = json!({ "target": c.stationary_variance() });
        a
    };
    if !sc.eps.is_empty() {
        let rows = energy_estimate_probe(&paths, &test_function(&sc.phi)?, &sc.eps, 0.0, sc.t)?;
        let mut e = Csv::new(&["eps", "delta", "ratio", "stderr"]);
        for r in rows {
            e.row(&[num(r.eps), num(r.delta), num(r.ratio), num(r.stderr)]);
        }
        out.file("energy_estimate.csv", e);
    }
    Ok(out)
}

fn bg2(cfg: &Config, seed: u64) -> Result<Outcome> {
    let spec = cfg.potential.spec()?;
    let (n, p) = (cfg.chain.n, cfg.chain.params()?);
    let phi = test_function(&cfg.field.phi)?;
    let ells = cfg.bg2.ells.clone();
    let t = cfg.run.t;
    ofl_core::fields::window_guard(n, cfg.bg2.velocity, t)?;
    let opts = SimOptions::new(cfg.run.ode_tol);
    let runs = run_ensemble(cfg.run.ensemble, seed, |_, rng| {
        let mut s = sample_stationary(n, &spec, &p, rng)?;
        let mut obs = Bg2Observer::new(&s.eta, 0.0, &spec, &p, phi.clone(), cfg.bg2.velocity, &ells)?;
        let tr = simulate_path(&mut s, &spec, &p, t, &opts, rng, &mut obs)?;
        Ok((obs.integral, tr.exchanges, tr.ode_steps))
    })?;
    let mut out = Outcome::default();
    for r in &runs {
        out.exchanges += r.1;
        out.ode_steps += r.2;
    }
    let integrals: Vec<Vec<f64>> = runs.into_iter().map(|r| r.0).collect();
    let diag = bg2_diagnostic(&integrals);
    let g = phi.norm2_sq(1);
    let bounds: Vec<f64> = ells.iter().map(|&l| bg2_bound(t, l, n, g)).collect();
    let c_fit = fit_bound_constant(&diag.iter().map(|d| d.0).collect::<Vec<_>>(), &bounds);
    let mut c = Csv::new(&["ell", "diagnostic", "stderr", "bound"]);
    for (q, &l) in ells.iter().enumerate() {
        c.row(&[l.to_string(), num(diag[q].0), num(diag[q].1), num(bounds[q])]);
    }
    out.file("bg2.csv", c);
    out.results = json!({ "fitted_constant": c_fit, "grad_norm_sq": g });
    Ok(out)
}

fn validate(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.potential.spec()?;
    let rep = validate_assumptions(&spec, cfg.validate.range, cfg.validate.samples);
    let mut c = Csv::new(&["check", "passed", "severity", "witness", "worst"]);
    for e in &rep.entries {
        c.row(&[e.name.clone(), e.passed.to_string(), format!("{:?}", e.severity), num(e.witness), num(e.worst)]);
    }
    let mut out = Outcome::default();
    out.file("validation.csv", c);
    out.results = json!({ "passed": rep.passed() });
    Ok(out)
}

/// Seed precedence: `--seed`, then `run.seed`, then the top-level `seed`.
pub fn resolve_seed(cli: Option<u64>, cfg: &Config) -> u64 {
    cli.or(cfg.run.seed).or(cfg.seed).unwrap_or(0)
}
