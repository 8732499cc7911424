//! The product invariant measure with one-site density proportional to
//! `exp(-b V_β(x) + λ x)`: quadrature of its moments and an exact
//! rejection sampler.

use crate::error::{OflError, Result};
use crate::potential::{scaled, PotentialSpec};
use crate::quad::integrate;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erf;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsParams {
    pub beta: f64,
    pub b: f64,
    pub lambda: f64,
}

impl GibbsParams {
    pub fn new(beta: f64, b: f64, lambda: f64) -> Self {
        GibbsParams { beta, b, lambda }
    }
}

pub fn log_density(p: &GibbsParams, spec: &PotentialSpec, x: f64) -> f64 {
    -p.b * scaled(spec, p.beta, 0, x) + p.lambda * x
}

fn dlog_density(p: &GibbsParams, spec: &PotentialSpec, x: f64) -> f64 {
    -p.b * scaled(spec, p.beta, 1, x) + p.lambda
}

/// Log-scale drop below the maximum at which the integration window ends.
const DEPTH: f64 = 60.0;
const GRID: usize = 4001;
const MAX_RADIUS: f64 = 1e7;

#[derive(Clone, Copy, Debug)]
struct Window {
    lo: f64,
    hi: f64,
    fmax: f64,
    argmax: f64,
    tail: f64,
}

/// Finds an interval outside of which `exp(F - max F)` has mass below
/// `1e-14` of the peak scale, assuming `F` is concave beyond the edges.
fn find_window<F, D>(f: F, df: D) -> Result<Window>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut r = 1.0;
    let mut center = 0.0;
    loop {
        let h = 2.0 * r / (GRID - 1) as f64;
        let xs: Vec<f64> = (0..GRID).map(|i| center - r + h * i as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let (imax, fmax) = fs
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        if !fmax.is_finite() {
            return Err(OflError::Divergence("log density not finite on the search grid".into()));
        }
        let tail_at = |x: f64, outward: f64| -> f64 {
            let slope = df(x) * outward;
            let drop = f(x) - fmax;
            if slope < 0.0 && drop < -DEPTH / 2.0 {
                drop.exp() / -slope
            } else if f(x) == f64::NEG_INFINITY {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let scale = h.max(1e-300);
        let tl = tail_at(xs[0], -1.0);
        let tr = tail_at(xs[GRID - 1], 1.0);
        if tl < 1e-14 * scale && tr < 1e-14 * scale && imax > 0 && imax < GRID - 1 {
            let first = fs.iter().position(|&v| v > fmax - DEPTH).unwrap_or(0).saturating_sub(1);
            let last = (fs.iter().rposition(|&v| v > fmax - DEPTH).unwrap_or(GRID - 1) + 1).min(GRID - 1);
            let (mut lo, mut hi) = (xs[first], xs[last]);
            let mut tl2 = tail_at(lo, -1.0);
            let mut tr2 = tail_at(hi, 1.0);
            if !(tl2 < 1e-14 * scale) {
                lo = xs[0];
                tl2 = tl;
            }
            if !(tr2 < 1e-14 * scale) {
                hi = xs[GRID - 1];
                tr2 = tr;
            }
            return Ok(Window { lo, hi, fmax, argmax: xs[imax], tail: tl2 + tr2 });
        }
        if imax == 0 || imax == GRID - 1 {
            center = xs[imax];
        }
        r *= 2.0;
        if r > MAX_RADIUS || center.abs() > MAX_RADIUS {
            return Err(OflError::Divergence(format!(
                "no integrable window within radius {MAX_RADIUS:e} (tails exp-slope do not turn negative)"
            )));
        }
    }
}

/// Quadrature view of the one-site measure with a cached normalisation.
#[derive(Clone, Debug)]
pub struct GibbsMeasure {
    pub params: GibbsParams,
    pub spec: PotentialSpec,
    lo: f64,
    hi: f64,
    fmax: f64,
    mode_guess: f64,
    mass: f64,
}

impl GibbsMeasure {
    pub fn new(p: GibbsParams, spec: &PotentialSpec) -> Result<Self> {
        if !(p.beta > 0.0 && p.b > 0.0) {
            return Err(OflError::param("gibbs", "beta and b must be positive"));
        }
        let w = find_window(|x| log_density(&p, spec, x), |x| dlog_density(&p, spec, x))?;
        let r = integrate(|x| (log_density(&p, spec, x) - w.fmax).exp(), w.lo, w.hi, 1e-300, 1e-13);
        if !r.converged || !(r.value > 0.0) {
            return Err(OflError::Divergence(format!("quadrature did not converge (error {:e})", r.error)));
        }
        if w.tail > 1e-12 * r.value {
            return Err(OflError::Divergence(format!("tail mass bound {:e} too large", w.tail)));
        }
        Ok(GibbsMeasure { params: p, spec: spec.clone(), lo: w.lo, hi: w.hi, fmax: w.fmax, mode_guess: w.argmax, mass: r.value })
    }

    pub fn window(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        log_density(&self.params, &self.spec, x)
    }

    pub fn partition_function(&self) -> f64 {
        self.mass * self.fmax.exp()
    }

    pub fn log_partition_function(&self) -> f64 {
        self.mass.ln() + self.fmax
    }

    /// Normalised density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        (self.log_density(x) - self.fmax).exp() / self.mass
    }

    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let r = integrate(|x| g(x) * (self.log_density(x) - self.fmax).exp(), self.lo, self.hi, 1e-15 * self.mass, 1e-12);
        r.value / self.mass
    }

    pub fn moment(&self, k: i32) -> f64 {
        self.expect(|x| x.powi(k))
    }

    pub fn mean_eta(&self) -> f64 {
        self.moment(1)
    }

    pub fn mean_zeta(&self) -> f64 {
        let (s, b) = (&self.spec, self.params.beta);
        self.expect(|x| scaled(s, b, 0, x))
    }

    pub fn mean_xi(&self) -> f64 {
        let (s, b) = (&self.spec, self.params.beta);
        self.expect(|x| scaled(s, b, 1, x))
    }

    /// Cumulative distribution function by quadrature.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let r = integrate(|y| (self.log_density(y) - self.fmax).exp(), self.lo, x, 1e-15 * self.mass, 1e-11);
        (r.value / self.mass).clamp(0.0, 1.0)
    }
}

pub fn partition_function(p: &GibbsParams, spec: &PotentialSpec) -> Result<f64> {
    Ok(GibbsMeasure::new(*p, spec)?.partition_function())
}

/// `E[e^{γ|η|}]`.
pub fn exp_moment(p: &GibbsParams, spec: &PotentialSpec, gamma: f64) -> Result<f64> {
    let m = GibbsMeasure::new(*p, spec)?;
    if gamma == 0.0 {
        return Ok(1.0);
    }
    let lf = |x: f64| log_density(p, spec, x) + gamma * x.abs();
    let w = find_window(lf, |x: f64| dlog_density(p, spec, x) + gamma * x.signum())?;
    let r = integrate(|x| (lf(x) - w.fmax).exp(), w.lo, w.hi, 1e-300, 1e-12);
    if !r.converged || w.tail > 1e-12 * r.value {
        return Err(OflError::Divergence("exponential moment tails".into()));
    }
    Ok((r.value.ln() + w.fmax - m.log_partition_function()).exp())
}

/// Exact sampler: rejection against an envelope that is a Gaussian with
/// drift on a window around the mode, and exponential (tangent-line) tails
/// outside it.
#[derive(Debug)]
pub struct GibbsSampler {
    pub measure: GibbsMeasure,
    mode: f64,
    fmode: f64,
    lo: f64,
    hi: f64,
    c: f64,
    drift: f64,
    mu: f64,
    slope_lo: f64,
    slope_hi: f64,
    f_lo: f64,
    f_hi: f64,
    cum: [f64; 3],
    proposals: AtomicU64,
    accepted: AtomicU64,
}

impl Clone for GibbsSampler {
    fn clone(&self) -> Self {
        GibbsSampler {
            measure: self.measure.clone(),
            proposals: AtomicU64::new(0),
            accepted: AtomicU64::new(0),
            ..*self
        }
    }
}

impl GibbsSampler {
    pub fn new(p: GibbsParams, spec: &PotentialSpec) -> Result<Self> {
        let measure = GibbsMeasure::new(p, spec)?;
        let f = |x: f64| log_density(&p, spec, x);
        let df = |x: f64| dlog_density(&p, spec, x);
        let d2 = |x: f64| -p.b * scaled(spec, p.beta, 2, x);
        let d3 = |x: f64| -p.b * scaled(spec, p.beta, 3, x);

        let (wlo, whi) = measure.window();
        let samples = 4001;
        let hgrid = (whi - wlo) / (samples - 1) as f64;
        for i in 0..samples {
            let x = wlo + hgrid * i as f64;
            if d2(x) > 1e-12 {
                return Err(OflError::EnvelopeFailure(format!("log density not concave at x={x}")));
            }
        }

        let mut mode = measure.mode_guess;
        for _ in 0..100 {
            let g = df(mode);
            let h = d2(mode);
            if h >= 0.0 {
                break;
            }
            let step = g / h;
            mode -= step;
            if step.abs() < 1e-14 * (1.0 + mode.abs()) {
                break;
            }
        }
        let curv = -d2(mode);
        if !(curv > 0.0) || !mode.is_finite() {
            return Err(OflError::EnvelopeFailure(format!("no curvature at the mode x={mode}")));
        }
        // Tangent tails bound a concave density from any window, so the window
        // shrinks until the curvature bound on it is positive.
        let mut width = 2.0 / curv.sqrt();
        let mut c = f64::NAN;
        for _ in 0..40 {
            let (lo, hi) = (mode - width, mode + width);
            let m = 201;
            let h = (hi - lo) / (m - 1) as f64;
            let mut cmin = f64::INFINITY;
            let mut d3max: f64 = 0.0;
            for i in 0..m {
                let x = lo + h * i as f64;
                cmin = cmin.min(-d2(x));
                d3max = d3max.max(d3(x).abs());
            }
            c = cmin - 0.6 * h * d3max;
            if c > 0.0 {
                break;
            }
            width *= 0.5;
        }
        if !(c > 0.0) {
            return Err(OflError::EnvelopeFailure(format!("quadratic lower bound constant is {c}")));
        }
        let (lo, hi) = (mode - width, mode + width);
        let slope_lo = df(lo);
        let slope_hi = df(hi);
        if !(slope_lo > 0.0 && slope_hi < 0.0) {
            return Err(OflError::EnvelopeFailure("tangent tails do not decay".into()));
        }
        let fmode = f(mode);
        let drift = df(mode);
        let mu = mode + drift / c;
        let sd = 1.0 / c.sqrt();
        let phi = |z: f64| 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
        let mass_mid = (drift * drift / (2.0 * c)).exp()
            * (2.0 * std::f64::consts::PI).sqrt()
            * sd
            * (phi((hi - mu) / sd) - phi((lo - mu) / sd));
        let f_lo = f(lo);
        let f_hi = f(hi);
        let mass_lo = (f_lo - fmode).exp() / slope_lo;
        let mass_hi = (f_hi - fmode).exp() / -slope_hi;
        let total = mass_lo + mass_mid + mass_hi;
        let cum = [mass_lo / total, (mass_lo + mass_mid) / total, 1.0];
        Ok(GibbsSampler {
            measure,
            mode,
            fmode,
            lo,
            hi,
            c,
            drift,
            mu,
            slope_lo,
            slope_hi,
            f_lo,
            f_hi,
            cum,
            proposals: AtomicU64::new(0),
            accepted: AtomicU64::new(0),
        })
    }

    fn envelope(&self, x: f64) -> f64 {
        if x < self.lo {
            self.f_lo + self.slope_lo * (x - self.lo)
        } else if x > self.hi {
            self.f_hi + self.slope_hi * (x - self.hi)
        } else {
            let d = x - self.mode;
            self.fmode + self.drift * d - 0.5 * self.c * d * d
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sd = 1.0 / self.c.sqrt();
        let mut props = 0;
        let x = loop {
            props += 1;
            let u: f64 = rng.random();
            let x = if u < self.cum[0] {
                let e: f64 = -(1.0 - rng.random::<f64>()).ln();
                self.lo - e / self.slope_lo
            } else if u < self.cum[1] {
                loop {
                    let z: f64 = StandardNormal.sample(rng);
                    let x = self.mu + sd * z;
                    if x >= self.lo && x <= self.hi {
                        break x;
                    }
                }
            } else {
                let e: f64 = -(1.0 - rng.random::<f64>()).ln();
                self.hi + e / -self.slope_hi
            };
            let logu = (1.0 - rng.random::<f64>()).ln();
            if logu <= self.measure.log_density(x) - self.envelope(x) {
                break x;
            }
        };
        self.proposals.fetch_add(props, Ordering::Relaxed);
        self.accepted.fetch_add(1, Ordering::Relaxed);
        x
    }

    pub fn sample_vec<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Observed acceptance fraction so far.
    pub fn acceptance_rate(&self) -> f64 {
        let p = self.proposals.load(Ordering::Relaxed);
        if p == 0 {
            self.expected_acceptance()
        } else {
            self.accepted.load(Ordering::Relaxed) as f64 / p as f64
        }
    }

    /// Ratio of target mass to envelope mass.
    pub fn expected_acceptance(&self) -> f64 {
        let sd = 1.0 / self.c.sqrt();
        let phi = |z: f64| 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
        let mass_mid = (self.drift * self.drift / (2.0 * self.c)).exp()
            * (2.0 * std::f64::consts::PI).sqrt()
            * sd
            * (phi((self.hi - self.mu) / sd) - phi((self.lo - self.mu) / sd));
        let total = (self.f_lo - self.fmode).exp() / self.slope_lo + mass_mid + (self.f_hi - self.fmode).exp() / -self.slope_hi;
        self.measure.partition_function() / (total * self.fmode.exp())
    }
}

/// Draws one site from the measure; builds the envelope on every call, so
/// prefer [`GibbsSampler`] for repeated draws.
pub fn sample<R: Rng + ?Sized>(p: &GibbsParams, spec: &PotentialSpec, rng: &mut R) -> Result<f64> {
    Ok(GibbsSampler::new(*p, spec)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::f64::consts::PI;

    #[test]
    fn log_density_examples() {
        let h = PotentialSpec::harmonic();
        assert_eq!(log_density(&GibbsParams::new(0.7, 1.0, 0.0), &h, 0.0), 0.0);
        assert!(log_density(&GibbsParams::new(0.1, 1.0, 0.5), &h, 1.0).abs() < 1e-15);
        let t = PotentialSpec::toda();
        let (beta, x) = (0.2f64, 2.0f64);
        let direct = -((-beta * x).exp() - 1.0 + beta * x) / (beta * beta) + x;
        assert!((log_density(&GibbsParams::new(beta, 1.0, 1.0), &t, x) - direct).abs() < 1e-13);
    }

    #[test]
    fn partition_function_small_beta_limits() {
        for spec in [PotentialSpec::harmonic(), PotentialSpec::toda(), PotentialSpec::fpu_alpha(0.3)] {
            let z = partition_function(&GibbsParams::new(1e-4, 1.0, 0.0), &spec).unwrap();
            assert!((z - (2.0 * PI).sqrt()).abs() < 1e-3, "{z}");
        }
        let z = partition_function(&GibbsParams::new(1e-4, 1.0, 1.0), &PotentialSpec::harmonic()).unwrap();
        assert!((z - (2.0 * PI).sqrt() * 0.5f64.exp()).abs() < 1e-3);
    }

    #[test]
    fn toda_diverges_outside_validity() {
        let r = partition_function(&GibbsParams::new(2.0, 1.0, 1.0), &PotentialSpec::toda());
        assert!(matches!(r, Err(OflError::Divergence(_))));
    }

    #[test]
    fn exp_moment_examples() {
        let p = GibbsParams::new(0.3, 1.0, 0.0);
        assert_eq!(exp_moment(&p, &PotentialSpec::toda(), 0.0).unwrap(), 1.0);
        let v = exp_moment(&GibbsParams::new(1e-3, 1.0, 0.0), &PotentialSpec::harmonic(), 1.0).unwrap();
        let oracle = 0.5f64.exp() * (1.0 + erf(1.0 / 2f64.sqrt()));
        assert!((v - oracle).abs() < 1e-6, "{v} {oracle}");
    }

    #[test]
    fn sampler_handles_strongly_varying_curvature() {
        // Toda at β = 1: curvature e^{-x} changes by orders of magnitude across the mode window.
        let p = GibbsParams::new(1.0, 1.0, 0.2);
        let s = GibbsSampler::new(p, &PotentialSpec::toda()).unwrap();
        let xs = s.sample_vec(&mut stream(12, 0), 50_000);
        let m = &s.measure;
        let se = ((m.moment(2) - m.mean_eta().powi(2)) / xs.len() as f64).sqrt();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - m.mean_eta()).abs() < 4.0 * se, "{mean} vs {}", m.mean_eta());
    }

    #[test]
    fn sampler_gaussian_limit() {
        let s = GibbsSampler::new(GibbsParams::new(1e-3, 1.0, 0.0), &PotentialSpec::harmonic()).unwrap();
        let mut rng = stream(11, 0);
        let xs = s.sample_vec(&mut rng, 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
        assert!(s.acceptance_rate() > 0.5);
    }
}
