//! Periodic Fourier grids, fractional symbols, and the fundamental solution
//! of `∂_t P = 𝕃 P` for the diffusive / skewed 3/2-stable generator.
//!
//! Convention: `f̂(k) = ∫ f(x) e^{+2πikx} dx`, synthesis with `e^{-2πikx}`.
//! Then `∂_x ↦ -2πik` and `(-Δ)^s ↦ |2πk|^{2s}`.

use crate::error::{OflError, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralGrid {
    pub m: usize,
    pub l: f64,
}

impl SpectralGrid {
    pub fn new(m: usize, l: f64) -> Result<Self> {
        if !m.is_power_of_two() || m < 2 {
            return Err(OflError::param("spectral", format!("m must be a power of two, got {m}")));
        }
        if !(l > 0.0) {
            return Err(OflError::param("spectral", "period must be positive"));
        }
        Ok(SpectralGrid { m, l })
    }

    pub fn dx(&self) -> f64 {
        self.l / self.m as f64
    }

    /// Grid points `x_j = -L/2 + j dx`.
    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.l + self.dx() * j as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.x(j)).collect()
    }

    /// Frequency of DFT slot `q`; slots map to `p ∈ {-m/2..m/2-1}`.
    pub fn k(&self, q: usize) -> f64 {
        let p = if q < self.m / 2 { q as i64 } else { q as i64 - self.m as i64 };
        p as f64 / self.l
    }

    fn signed(&self, q: usize) -> i64 {
        if q < self.m / 2 {
            q as i64
        } else {
            q as i64 - self.m as i64
        }
    }

    /// `f̂(k_q)` for all slots.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_inverse(self.m).process(&mut buf);
        let dx = self.dx();
        for (q, c) in buf.iter_mut().enumerate() {
            let sign = if self.signed(q).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            *c *= dx * sign;
        }
        buf
    }

    /// Synthesis from slot coefficients; returns the complex samples.
    pub fn inverse_complex(&self, fhat: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = fhat
            .iter()
            .enumerate()
            .map(|(q, &c)| {
                let sign = if self.signed(q).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                c * (sign / self.l)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(self.m).process(&mut buf);
        buf
    }

    pub fn inverse(&self, fhat: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(fhat).into_iter().map(|c| c.re).collect()
    }

    /// Applies the Fourier multiplier `sym(k)` to grid samples.
    pub fn apply_multiplier<S: Fn(f64) -> Complex64>(&self, f: &[f64], sym: S) -> Vec<f64> {
        let mut fh = self.forward(f);
        for (q, c) in fh.iter_mut().enumerate() {
            *c *= sym(self.k(q));
        }
        self.nyquist_real(&mut fh);
        self.inverse(&fh)
    }

    fn nyquist_real(&self, fh: &mut [Complex64]) {
        let q = self.m / 2;
        fh[q] = Complex64::new(fh[q].re, 0.0);
    }

    /// Trapezoid integral over one period.
    pub fn integral(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx()
    }
}

#[derive(Clone, Debug)]
pub struct LevySymbol {
    pub gamma: f64,
    pub kappa: f64,
    pub values: Vec<Complex64>,
}

const THIRD: f64 = 1.0 / 3.0;

fn diffusive(kappa: f64) -> bool {
    kappa >= THIRD - 1e-12
}

fn levy(kappa: f64) -> bool {
    kappa <= THIRD + 1e-12
}

/// Normalisation of the non-local part.
///
/// `Printed` is `−γ^{3/2}(1/√2)[(−Δ)^{3/4} − ∇(−Δ)^{1/4}]`. `Lattice` is the
/// limit of the lattice operator `½n^{a−2}Δⁿ − 2γn^{a−κ−3/2}𝒟ₙhₙ`, which
/// works out to `−γ^{3/2}[(−Δ)^{3/4} + ∇(−Δ)^{1/4}]`: unit coefficient and
/// the mirror-image skew.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LevyForm {
    #[default]
    Printed,
    Lattice,
}

impl LevyForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(LevyForm::Printed),
            "lattice" => Ok(LevyForm::Lattice),
            _ => Err(OflError::Config(format!("unknown levy form '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LevyForm::Printed => "printed",
            LevyForm::Lattice => "lattice",
        }
    }
}

/// Symbol of `𝕃_{γ,κ}` at frequency `k`.
pub fn symbol(gamma: f64, kappa: f64, k: f64) -> Complex64 {
    symbol_form(gamma, kappa, k, LevyForm::Printed)
}

pub fn symbol_form(gamma: f64, kappa: f64, k: f64, form: LevyForm) -> Complex64 {
    let q = 2.0 * PI * k;
    let mut s = Complex64::new(0.0, 0.0);
    if diffusive(kappa) {
        s -= 0.5 * q * q;
    }
    if levy(kappa) {
        let a = q.abs();
        // (−Δ)^{3/4} ↦ |q|^{3/2}, ∇(−Δ)^{1/4} ↦ −iq|q|^{1/2}
        let grad = Complex64::new(0.0, -q) * a.sqrt();
        let g = gamma.powf(1.5);
        s -= match form {
            LevyForm::Printed => g / std::f64::consts::SQRT_2 * (a.powf(1.5) - grad),
            LevyForm::Lattice => g * (a.powf(1.5) + grad),
        };
    }
    s
}

pub fn levy_symbol(gamma: f64, kappa: f64, grid: &SpectralGrid) -> LevySymbol {
    let values = (0..grid.m).map(|q| symbol(gamma, kappa, grid.k(q))).collect();
    LevySymbol { gamma, kappa, values }
}

fn kernel_raw(gamma: f64, kappa: f64, t: f64, grid: &SpectralGrid, form: LevyForm) -> (Vec<f64>, f64) {
    let mut fh: Vec<Complex64> = (0..grid.m).map(|q| (t * symbol_form(gamma, kappa, grid.k(q), form)).exp()).collect();
    grid.nyquist_real(&mut fh);
    let c = grid.inverse_complex(&fh);
    let max = c.iter().fold(0.0f64, |a, z| a.max(z.re.abs()));
    let imag = c.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    (c.into_iter().map(|z| z.re).collect(), imag / max.max(1e-300))
}

/// Mass of the line kernel inside `[-L/2, L/2]`, estimated from the kernel
/// periodised over `2L`.
pub fn mass_inside(gamma: f64, kappa: f64, t: f64, grid: &SpectralGrid) -> f64 {
    mass_inside_form(gamma, kappa, t, grid, LevyForm::Printed)
}

pub fn mass_inside_form(gamma: f64, kappa: f64, t: f64, grid: &SpectralGrid, form: LevyForm) -> f64 {
    let g2 = SpectralGrid { m: 2 * grid.m, l: 2.0 * grid.l };
    let (p, _) = kernel_raw(gamma, kappa, t, &g2, form);
    let q = grid.m / 2;
    p[q..q + grid.m].iter().sum::<f64>() * g2.dx()
}

/// Periodised fundamental solution sampled on the grid.
pub fn kernel_p(gamma: f64, kappa: f64, t: f64, grid: &SpectralGrid) -> Result<Vec<f64>> {
    kernel_p_form(gamma, kappa, t, grid, LevyForm::Printed)
}

pub fn kernel_p_form(gamma: f64, kappa: f64, t: f64, grid: &SpectralGrid, form: LevyForm) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(OflError::param("spectral", "t must be positive"));
    }
    let (p, imag) = kernel_raw(gamma, kappa, t, grid, form);
    if imag > 1e-10 {
        return Err(OflError::param("spectral", format!("kernel has imaginary residue {imag:e}")));
    }
    let inside = mass_inside_form(gamma, kappa, t, grid, form);
    if inside < 1.0 - 1e-6 {
        return Err(OflError::Aliasing { mass: inside });
    }
    Ok(p)
}

/// Kernel on the unit torus (period 1, `m` sites), with no aliasing check:
/// the periodised kernel is the right object for ring comparisons.
pub fn kernel_torus(gamma: f64, kappa: f64, t: f64, m: usize) -> Result<Vec<f64>> {
    kernel_torus_form(gamma, kappa, t, m, LevyForm::Printed)
}

pub fn kernel_torus_form(gamma: f64, kappa: f64, t: f64, m: usize, form: LevyForm) -> Result<Vec<f64>> {
    let grid = SpectralGrid::new(m, 1.0)?;
    Ok(kernel_raw(gamma, kappa, t, &grid, form).0)
}

/// Chooses a grid whose frequency cut-off resolves `t_min` and whose period
/// keeps the mass outside it below `mass_target` at `t_max`.
pub fn auto_grid(gamma: f64, kappa: f64, t_min: f64, t_max: f64, mass_target: f64) -> Result<SpectralGrid> {
    let mut kmax = 1.0;
    while (t_min * symbol(gamma, kappa, kmax).re) > -40.0 {
        kmax *= 1.25;
    }
    let scale = if levy(kappa) { gamma * t_max.powf(2.0 / 3.0) } else { t_max.sqrt() };
    let mut l = 16.0 * scale.max(1e-6);
    loop {
        let m = ((2.0 * kmax * l).ceil() as usize).next_power_of_two().max(64);
        let g = SpectralGrid::new(m, l)?;
        if 1.0 - mass_inside(gamma, kappa, t_max, &g) < mass_target {
            return Ok(g);
        }
        if m > 1 << 23 {
            return Err(OflError::Aliasing { mass: mass_inside(gamma, kappa, t_max, &g) });
        }
        l *= 2.0;
    }
}

/// Inverse transform of `|2πk|^{2s} f̂(k)`.
pub fn fractional_apply(s: f64, f: &[f64], grid: &SpectralGrid) -> Result<Vec<f64>> {
    if f.len() != grid.m {
        return Err(OflError::Shape { module: "spectral", msg: format!("{} samples for m={}", f.len(), grid.m) });
    }
    Ok(grid.apply_multiplier(f, |k| Complex64::new((2.0 * PI * k).abs().powf(2.0 * s), 0.0)))
}

/// Applies `𝕃_{γ,κ}` to grid samples.
pub fn levy_apply(gamma: f64, kappa: f64, f: &[f64], grid: &SpectralGrid) -> Vec<f64> {
    levy_apply_form(gamma, kappa, f, grid, LevyForm::Printed)
}

pub fn levy_apply_form(gamma: f64, kappa: f64, f: &[f64], grid: &SpectralGrid, form: LevyForm) -> Vec<f64> {
    grid.apply_multiplier(f, |k| symbol_form(gamma, kappa, k, form))
}

/// Circular convolution on the grid (`∫ f(y) g(x-y) dy`).
pub fn convolve(f: &[f64], g: &[f64], grid: &SpectralGrid) -> Vec<f64> {
    let n = grid.m;
    let mut a: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut b: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    fwd.process(&mut a);
    fwd.process(&mut b);
    let mut c: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    planner.plan_fft_inverse(n).process(&mut c);
    // x_j = -L/2 + j dx, so index sums are offset by m/2.
    let dx = grid.dx();
    (0..n).map(|j| c[(j + n / 2) % n].re * dx / n as f64).collect()
}

pub fn l1_distance(f: &[f64], g: &[f64], grid: &SpectralGrid) -> f64 {
    f.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>() * grid.dx()
}

/// Median minus mean of a density sampled on the grid.
pub fn median_minus_mean(p: &[f64], grid: &SpectralGrid) -> f64 {
    let dx = grid.dx();
    let total: f64 = p.iter().sum::<f64>() * dx;
    let mean = p.iter().enumerate().map(|(j, v)| grid.x(j) * v).sum::<f64>() * dx / total;
    let mut acc = 0.0;
    let mut median = grid.x(grid.m - 1);
    for (j, v) in p.iter().enumerate() {
        let next = acc + v * dx;
        if next >= 0.5 * total {
            let frac = (0.5 * total - acc) / (v * dx).max(1e-300);
            median = grid.x(j) - 0.5 * dx + frac * dx;
            break;
        }
        acc = next;
    }
    median - mean
}
