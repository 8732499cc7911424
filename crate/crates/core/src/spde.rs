//! Lattice simulators for the limit equations on the unit torus: the
//! Ornstein–Uhlenbeck system and the stochastic Burgers equation
//! `∂u = ν∂²u + Λ∂u² + √D ∂Ẇ`, with stationarity and energy-estimate probes.
//!
//! Fields are densities on `m` sites: `u(φ) ≈ m⁻¹Σ_j u_j φ(j/m)`, so white
//! noise of variance `v` has independent `N(0, v·m)` site values. The linear
//! part is integrated exactly per Fourier mode; the quadratic term uses the
//! flux `G_j = (u_j² + u_ju_{j+1} + u_{j+1}²)/3`, for which both the mean and
//! `Σu_j²` are conserved, and is advanced by Heun's method (Lie splitting).

use crate::error::{OflError, Result};
use crate::rng::Stream;
use crate::stats::{mean, stderr};
use crate::test_function::TestFunction;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeConfig {
    pub m: usize,
    pub nu: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub dt: f64,
    /// Noise strengths of the two Ornstein–Uhlenbeck components.
    #[serde(default = "default_sigma")]
    pub sigma: (f64, f64),
    /// Abort once `max|u|` exceeds this many stationary site deviations.
    #[serde(default = "default_blowup")]
    pub blowup: f64,
}

fn default_sigma() -> (f64, f64) {
    (1.0, std::f64::consts::FRAC_1_SQRT_2)
}

fn default_blowup() -> f64 {
    60.0
}

impl SpdeConfig {
    pub fn new(m: usize, nu: f64, lambda: f64, d: f64, dt: f64) -> Self {
        SpdeConfig { m, nu, lambda, d, dt, sigma: default_sigma(), blowup: default_blowup() }
    }

    /// `ν = ½` with the default `σ` pair.
    pub fn ou(m: usize, dt: f64) -> Self {
        Self::new(m, 0.5, 0.0, 1.0, dt)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OflError::param("spde", msg));
        if self.m < 4 || self.m % 2 != 0 {
            return bad(format!("m must be even and at least 4, got {}", self.m));
        }
        if !(self.nu > 0.0 && self.d > 0.0 && self.dt > 0.0 && self.lambda.is_finite()) {
            return bad("nu, D and dt must be positive".into());
        }
        if !(self.sigma.0 >= 0.0 && self.sigma.1 >= 0.0 && self.blowup > 0.0) {
            return bad("sigma must be non-negative and blowup positive".into());
        }
        let cfl = self.nu * self.dt * (self.m * self.m) as f64;
        if cfl > 0.25 {
            return bad(format!("nu*dt*m^2 = {cfl} exceeds 0.25"));
        }
        Ok(())
    }

    /// Stationary white-noise variance `D/(2ν)`.
    pub fn stationary_variance(&self) -> f64 {
        self.d / (2.0 * self.nu)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SpdePath {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
}

/// One exact step of `da = −r a dt + noise` with stationary variance `v`:
/// `(e^{−rh}, √(v(1 − e^{−2rh})))`.
pub fn ou_mode_coefficients(r: f64, h: f64, v: f64) -> (f64, f64) {
    let e = (-r * h).exp();
    (e, (v * -(-2.0 * r * h).exp_m1()).sqrt())
}

struct Linear {
    decay: Vec<f64>,
    sd: Vec<f64>,
}

impl Linear {
    /// Modes `0..=m/2`; `d` is the noise intensity.
    fn new(m: usize, nu: f64, d: f64, h: f64) -> Self {
        let v = d / (2.0 * nu) * (m * m) as f64;
        let (mut decay, mut sd) = (vec![1.0; m / 2 + 1], vec![0.0; m / 2 + 1]);
        for k in 1..=m / 2 {
            let r = nu * (2.0 * PI * k as f64).powi(2);
            // Complex modes split the variance between real and imaginary parts.
            let vk = if k == m / 2 { v } else { 0.5 * v };
            let (e, s) = ou_mode_coefficients(r, h, vk);
            decay[k] = e;
            sd[k] = s;
        }
        Linear { decay, sd }
    }

    fn apply(&self, uh: &mut [Complex64], rng: &mut Stream) {
        let m = uh.len();
        for k in 1..=m / 2 {
            let (e, s) = (self.decay[k], self.sd[k]);
            if k == m / 2 {
                let z: f64 = StandardNormal.sample(rng);
                uh[k] = Complex64::new(e * uh[k].re + s * z, 0.0);
            } else {
                let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
                uh[k] = e * uh[k] + Complex64::new(s * a, s * b);
                uh[m - k] = uh[k].conj();
            }
        }
    }
}

struct Engine {
    m: usize,
    lambda: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Engine {
    fn new(m: usize, lambda: f64) -> Self {
        let mut pl = FftPlanner::new();
        Engine { m, lambda, fwd: pl.plan_fft_forward(m), inv: pl.plan_fft_inverse(m) }
    }

    fn to_real(&self, uh: &[Complex64]) -> Vec<f64> {
        let mut b = uh.to_vec();
        self.inv.process(&mut b);
        b.iter().map(|c| c.re / self.m as f64).collect()
    }

    fn to_modes(&self, u: &[f64]) -> Vec<Complex64> {
        let mut b: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut b);
        b
    }

    fn flux(&self, u: &[f64]) -> Vec<f64> {
        let m = self.m;
        let g: Vec<f64> = (0..m)
            .map(|j| {
                let (a, b) = (u[j], u[(j + 1) % m]);
                (a * a + a * b + b * b) / 3.0
            })
            .collect();
        (0..m).map(|j| self.lambda * m as f64 * (g[j] - g[(j + m - 1) % m])).collect()
    }

    /// Heun step of the quadratic term. The zero mode is left untouched.
    fn nonlinear(&self, uh: &mut [Complex64], h: f64) {
        if self.lambda == 0.0 {
            return;
        }
        let u = self.to_real(uh);
        let f1 = self.flux(&u);
        let mid: Vec<f64> = u.iter().zip(&f1).map(|(x, f)| x + h * f).collect();
        let f2 = self.flux(&mid);
        let new: Vec<f64> = u.iter().zip(f1.iter().zip(&f2)).map(|(x, (a, b))| x + 0.5 * h * (a + b)).collect();
        let mut nh = self.to_modes(&new);
        nh[0] = uh[0];
        // Restore exact Hermitian symmetry.
        let m = self.m;
        for k in 1..m / 2 {
            nh[m - k] = nh[k].conj();
        }
        nh[m / 2].im = 0.0;
        uh.copy_from_slice(&nh);
    }
}

/// White noise of variance `v` on `m` sites.
pub fn white_noise(m: usize, v: f64, rng: &mut Stream) -> Vec<f64> {
    (0..m).map(|_| (v * m as f64).sqrt() * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// `(d, Λ)`-driven lattice path from `u0` (white noise of variance
/// `D/(2ν)` when `None`), recording every `record_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_field(
    cfg: &SpdeConfig,
    d: f64,
    lambda: f64,
    u0: Option<Vec<f64>>,
    t_end: f64,
    record_every: usize,
    rng: &mut Stream,
) -> Result<SpdePath> {
    cfg.validate()?;
    let stat_sd = (d.max(cfg.d) / (2.0 * cfg.nu) * cfg.m as f64).sqrt();
    let mut run = Runner::new(cfg, lambda, u0.unwrap_or_else(|| white_noise(cfg.m, d / (2.0 * cfg.nu), rng)), cfg.blowup * stat_sd);
    let lin = Linear::new(cfg.m, cfg.nu, d, cfg.dt);
    let steps = step_count(t_end, cfg.dt)?;
    run.record(0.0);
    for s in 1..=steps {
        run.eng.nonlinear(&mut run.uh, cfg.dt);
        lin.apply(&mut run.uh, rng);
        run.check()?;
        if s % record_every.max(1) == 0 || s == steps {
            run.record(s as f64 * cfg.dt);
        }
    }
    Ok(run.path)
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    let s = (t_end / dt).round();
    if !(t_end >= 0.0) || (s * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(OflError::param("spde", format!("T={t_end} is not a multiple of dt={dt}")));
    }
    Ok(s as usize)
}

struct Runner {
    eng: Engine,
    uh: Vec<Complex64>,
    limit: f64,
    path: SpdePath,
}

impl Runner {
    fn new(cfg: &SpdeConfig, lambda: f64, u0: Vec<f64>, limit: f64) -> Self {
        let eng = Engine::new(cfg.m, lambda);
        let uh = eng.to_modes(&u0);
        Runner { eng, uh, limit, path: SpdePath::default() }
    }

    fn record(&mut self, t: f64) {
        self.path.times.push(t);
        self.path.fields.push(self.eng.to_real(&self.uh));
    }

    fn check(&self) -> Result<()> {
        let mx = self.eng.to_real(&self.uh).iter().fold(0.0f64, |a, x| if x.is_nan() { f64::INFINITY } else { a.max(x.abs()) });
        if mx > self.limit {
            return Err(OflError::BlowUp(mx));
        }
        Ok(())
    }
}

/// The two uncorrelated Ornstein–Uhlenbeck components with noise `σ¹`, `σ²`.
pub fn simulate_ou(cfg: &SpdeConfig, t_end: f64, record_every: usize, rng: &mut Stream) -> Result<[SpdePath; 2]> {
    let a = simulate_field(cfg, cfg.sigma.0.powi(2), 0.0, None, t_end, record_every, rng)?;
    let b = simulate_field(cfg, cfg.sigma.1.powi(2), 0.0, None, t_end, record_every, rng)?;
    Ok([a, b])
}

/// Stationary stochastic Burgers path started from white noise.
pub fn simulate_sbe(cfg: &SpdeConfig, t_end: f64, record_every: usize, rng: &mut Stream) -> Result<SpdePath> {
    simulate_field(cfg, cfg.d, cfg.lambda, None, t_end, record_every, rng)
}

/// The same stochastic Burgers path at steps `dt` and `dt/2`, driven by one
/// noise realisation: a coarse step composes the two exact half-step
/// Ornstein–Uhlenbeck updates of the fine path.
pub fn simulate_sbe_coupled(cfg: &SpdeConfig, t_end: f64, record_every: usize, rng: &mut Stream) -> Result<(SpdePath, SpdePath)> {
    cfg.validate()?;
    let u0 = white_noise(cfg.m, cfg.stationary_variance(), rng);
    let limit = cfg.blowup * (cfg.stationary_variance() * cfg.m as f64).sqrt();
    let mut coarse = Runner::new(cfg, cfg.lambda, u0.clone(), limit);
    let mut fine = Runner::new(cfg, cfg.lambda, u0, limit);
    let h = 0.5 * cfg.dt;
    let lin = Linear::new(cfg.m, cfg.nu, cfg.d, h);
    let steps = step_count(t_end, cfg.dt)?;
    coarse.record(0.0);
    fine.record(0.0);
    for s in 1..=steps {
        coarse.eng.nonlinear(&mut coarse.uh, cfg.dt);
        for _ in 0..2 {
            // Identical draws: clone the generator for the coarse path.
            let mut r2 = rng.clone();
            lin.apply(&mut coarse.uh, &mut r2);
            fine.eng.nonlinear(&mut fine.uh, h);
            lin.apply(&mut fine.uh, rng);
        }
        coarse.check()?;
        fine.check()?;
        if s % record_every.max(1) == 0 || s == steps {
            coarse.record(s as f64 * cfg.dt);
            fine.record(s as f64 * cfg.dt);
        }
    }
    Ok((coarse.path, fine.path))
}

/// Normalised Fourier coefficients `û_k/m` of a lattice field.
pub fn modes(u: &[f64]) -> Vec<Complex64> {
    let m = u.len();
    let mut b: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut b);
    b.iter().map(|c| c / m as f64).collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpectrumRow {
    pub k: usize,
    pub variance: f64,
    pub stderr: f64,
}

/// `E[|û_k|²]/m²` for `k = 1..=m/2`, time-averaged per member over the
/// snapshots with `t ≥ t_min`; errors are across members.
pub fn spectrum(paths: &[SpdePath], t_min: f64) -> Vec<SpectrumRow> {
    cross_spectrum(paths, paths, t_min)
}

/// `E[Re(û^a_k conj û^b_k)]/m²`.
pub fn cross_spectrum(a: &[SpdePath], b: &[SpdePath], t_min: f64) -> Vec<SpectrumRow> {
    let m = a[0].fields[0].len();
    let per: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(pa, pb)| {
            let mut acc = vec![0.0; m / 2];
            let mut count = 0;
            for ((t, ua), ub) in pa.times.iter().zip(&pa.fields).zip(&pb.fields) {
                if *t < t_min {
                    continue;
                }
                let (ha, hb) = (modes(ua), modes(ub));
                for k in 1..=m / 2 {
                    acc[k - 1] += (ha[k] * hb[k].conj()).re;
                }
                count += 1;
            }
            acc.iter().map(|v| v / count.max(1) as f64).collect()
        })
        .collect();
    (1..=m / 2)
        .map(|k| {
            let col: Vec<f64> = per.iter().map(|r| r[k - 1]).collect();
            SpectrumRow { k, variance: mean(&col), stderr: if col.len() > 1 { stderr(&col) } else { 0.0 } }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyRow {
    pub eps: f64,
    pub delta: f64,
    pub ratio: f64,
    pub stderr: f64,
}

/// `𝒜^ε_{s,t}(φ)` of one path: box averages `ε⁻¹∫_x^{x+ε}u` squared against
/// `∂φ`, in time by the trapezoid rule over snapshots in `[s, t]`.
pub fn quadratic_area(path: &SpdePath, phi: &TestFunction, eps: f64, s: f64, t: f64) -> Result<f64> {
    let m = path.fields[0].len();
    let k = box_width(eps, m)?;
    let w: Vec<f64> = (0..m)
        .map(|j| {
            let x = j as f64 / m as f64;
            phi.eval(x - (x + 0.5).floor(), 1)
        })
        .collect();
    let val = |u: &[f64]| {
        let mut sum: f64 = u[..k].iter().sum();
        let mut acc = 0.0;
        for j in 0..m {
            let a = sum / k as f64;
            acc += a * a * w[j];
            sum += u[(j + k) % m] - u[j];
        }
        acc / m as f64
    };
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (&ti, u) in path.times.iter().zip(&path.fields) {
        if ti < s - 1e-12 || ti > t + 1e-12 {
            continue;
        }
        let v = val(u);
        if let Some((tp, vp)) = prev {
            area += 0.5 * (v + vp) * (ti - tp);
        }
        prev = Some((ti, v));
    }
    Ok(area)
}

fn box_width(eps: f64, m: usize) -> Result<usize> {
    let k = (eps * m as f64).round();
    if k < 1.0 || (k - eps * m as f64).abs() > 1e-9 || k as usize > m {
        return Err(OflError::param("spde", format!("eps={eps} is not a multiple of 1/{m}")));
    }
    Ok(k as usize)
}

/// `E[|𝒜^ε − 𝒜^δ|²]/(ε(t−s)‖∂φ‖²)` for consecutive pairs of a decreasing list.
pub fn energy_estimate_probe(paths: &[SpdePath], phi: &TestFunction, eps: &[f64], s: f64, t: f64) -> Result<Vec<EnergyRow>> {
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(OflError::param("spde", "eps list must be strictly decreasing"));
    }
    let norm = phi.norm2_sq(1);
    let areas: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| eps.iter().map(|&e| quadratic_area(p, phi, e, s, t)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    Ok(eps
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let scale = w[0] * (t - s) * norm;
            let sq: Vec<f64> = areas.iter().map(|a| (a[i] - a[i + 1]).powi(2)).collect();
            let (r, se) = if scale > 0.0 { (mean(&sq) / scale, stderr(&sq) / scale) } else { (0.0, 0.0) };
            EnergyRow { eps: w[0], delta: w[1], ratio: r, stderr: se }
        })
        .collect())
}
