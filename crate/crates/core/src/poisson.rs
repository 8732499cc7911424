//! Two-dimensional lattice operators, the discrete Poisson equation
//! `½Δⁿh − nα𝒜h = 2n^{1/2}α(∇^{n,1}φ ⊗ δ)` and its exact Fourier solution.
//!
//! The lattice is an `M × M` periodic window of spacing `1/n`; site `j`
//! sits at `x_j = (j − M/2)/n`. The unnormalised transform used below is
//! `ĥ(p,p′) = Σ h(j,j′) e^{iθ_p j + iθ_{p′} j′}`, `θ_p = 2πp/M`, for which
//!
//! * `Δⁿ ↦ −n²Λ`, `Λ = 4[sin²(θ_p/2) + sin²(θ_{p′}/2)]`,
//! * `𝒜 ↦ inΩ`, `Ω = 2[sin θ_p + sin θ_{p′}]`,
//! * right side `↦ −i n^{5/2} α Ω φ̂(p+p′)`,
//!
//! so `ĥ = i n^{1/2} Ω φ̂(p+p′) / (½α⁻¹Λ + iΩ)`, with `ĥ(0,0) = 0`.

use crate::error::{OflError, Result};
use crate::spectral::{levy_apply_form, LevyForm, SpectralGrid};
use crate::test_function::TestFunction;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeKernel2D {
    pub n: usize,
    pub m: usize,
    pub values: Vec<f64>,
}

impl LatticeKernel2D {
    pub fn zeros(n: usize, m: usize) -> Self {
        LatticeKernel2D { n, m, values: vec![0.0; m * m] }
    }

    pub fn from_fn<F: Fn(usize, usize) -> f64>(n: usize, m: usize, f: F) -> Self {
        let mut values = Vec::with_capacity(m * m);
        for j in 0..m {
            for jp in 0..m {
                values.push(f(j, jp));
            }
        }
        LatticeKernel2D { n, m, values }
    }

    #[inline]
    pub fn at(&self, j: i64, jp: i64) -> f64 {
        let m = self.m as i64;
        self.values[(j.rem_euclid(m) * m + jp.rem_euclid(m)) as usize]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.m;
        let mut worst: f64 = 0.0;
        for j in 0..m {
            for jp in j + 1..m {
                worst = worst.max((self.values[j * m + jp] - self.values[jp * m + j]).abs());
            }
        }
        worst
    }

    /// `‖h‖²_{2,n} = n⁻² Σ h²`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / (self.n * self.n) as f64
    }

    pub fn sub(&self, other: &LatticeKernel2D) -> LatticeKernel2D {
        LatticeKernel2D {
            n: self.n,
            m: self.m,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> LatticeKernel2D {
        LatticeKernel2D { n: self.n, m: self.m, values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Values `h(j, j+s)` along an off-diagonal.
    pub fn diagonal(&self, s: i64) -> Vec<f64> {
        (0..self.m as i64).map(|j| self.at(j, j + s)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op2D {
    Lap2D,
    A,
    D,
    Dtilde { alpha: f64 },
    E,
    Etilde,
    Ftilde,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpOutput {
    Kernel(LatticeKernel2D),
    Line(Vec<f64>),
}

impl OpOutput {
    pub fn kernel(self) -> LatticeKernel2D {
        match self {
            OpOutput::Kernel(k) => k,
            OpOutput::Line(_) => panic!("operator returns a line"),
        }
    }

    pub fn line(self) -> Vec<f64> {
        match self {
            OpOutput::Line(v) => v,
            OpOutput::Kernel(_) => panic!("operator returns a kernel"),
        }
    }
}

fn etilde(h: &LatticeKernel2D, j: i64) -> f64 {
    0.5 * (h.at(j, j + 1) + h.at(j + 1, j) - 2.0 * h.at(j, j))
}

fn ftilde(h: &LatticeKernel2D, j: i64) -> f64 {
    h.at(j + 1, j + 1) - h.at(j, j)
}

pub fn apply_op(op: Op2D, h: &LatticeKernel2D) -> OpOutput {
    let n = h.n as f64;
    let m = h.m;
    let line = |f: &dyn Fn(i64) -> f64| OpOutput::Line((0..m as i64).map(f).collect());
    match op {
        Op2D::Lap2D => OpOutput::Kernel(LatticeKernel2D::from_fn(h.n, m, |j, jp| {
            let (j, jp) = (j as i64, jp as i64);
            n * n * (h.at(j + 1, jp) + h.at(j - 1, jp) + h.at(j, jp + 1) + h.at(j, jp - 1) - 4.0 * h.at(j, jp))
        })),
        Op2D::A => OpOutput::Kernel(LatticeKernel2D::from_fn(h.n, m, |j, jp| {
            let (j, jp) = (j as i64, jp as i64);
            n * (h.at(j, jp - 1) + h.at(j - 1, jp) - h.at(j, jp + 1) - h.at(j + 1, jp))
        })),
        Op2D::E => OpOutput::Kernel(LatticeKernel2D::from_fn(h.n, m, |j, jp| {
            let (j, jp) = (j as i64, jp as i64);
            h.at(j + 1, jp) - h.at(j, jp)
        })),
        Op2D::D => line(&|j| 0.5 * n * (h.at(j + 1, j) + h.at(j, j + 1) - h.at(j - 1, j) - h.at(j, j - 1))),
        Op2D::Etilde => line(&|j| etilde(h, j)),
        Op2D::Ftilde => line(&|j| ftilde(h, j)),
        Op2D::Dtilde { alpha } => {
            let c = |j: i64| n * n * (0.5 * etilde(h, j) - 0.5 * (1.0 + 2.0 * alpha) * ftilde(h, j));
            let mut out = LatticeKernel2D::zeros(h.n, m);
            let mi = m as i64;
            for j in 0..mi {
                let up = (j + 1).rem_euclid(mi);
                let down = (j - 1).rem_euclid(mi);
                out.values[(j * mi + up) as usize] += c(j);
                out.values[(j * mi + down) as usize] += c(down);
            }
            OpOutput::Kernel(out)
        }
    }
}

/// Lattice sample positions of the `M`-site window.
pub fn positions(n: usize, m: usize) -> Vec<f64> {
    (0..m).map(|j| (j as f64 - (m / 2) as f64) / n as f64).collect()
}

/// 1-D discrete gradient `n(φ_{j+1} − φ_j)` of periodic samples.
fn grad1(phi: &[f64], n: f64) -> Vec<f64> {
    let m = phi.len();
    (0..m).map(|j| n * (phi[(j + 1) % m] - phi[j])).collect()
}

/// The right side `2n^{1/2}α(∇^{n,1}φ ⊗ δ)` on the window.
pub fn poisson_rhs(phi: &TestFunction, n: usize, m: usize, alpha: f64) -> LatticeKernel2D {
    let xs = positions(n, m);
    let samples: Vec<f64> = xs.iter().map(|&x| phi.eval(x, 0)).collect();
    let g = grad1(&samples, n as f64);
    let c = 2.0 * (n as f64).sqrt() * alpha * 0.5 * n as f64;
    let mut r = LatticeKernel2D::zeros(n, m);
    for j in 0..m {
        r.values[j * m + (j + 1) % m] += c * g[j];
        r.values[j * m + (j + m - 1) % m] += c * g[(j + m - 1) % m];
    }
    r
}

/// `(∇^{n,1}f ⊗ δ)` as a lattice kernel (no prefactor).
pub fn grad_delta_kernel(f: &TestFunction, n: usize, m: usize) -> LatticeKernel2D {
    poisson_rhs(f, n, m, 1.0).scale(1.0 / (2.0 * (n as f64).sqrt()))
}

/// `½Δⁿh − nα𝒜h − RHS`.
pub fn poisson_residual(h: &LatticeKernel2D, phi: &TestFunction, alpha: f64) -> LatticeKernel2D {
    let lap = apply_op(Op2D::Lap2D, h).kernel();
    let a = apply_op(Op2D::A, h).kernel();
    let rhs = poisson_rhs(phi, h.n, h.m, alpha);
    let n = h.n as f64;
    LatticeKernel2D {
        n: h.n,
        m: h.m,
        values: (0..h.m * h.m).map(|i| 0.5 * lap.values[i] - n * alpha * a.values[i] - rhs.values[i]).collect(),
    }
}

/// Spectral representation of the solution; never stores the `M × M`
/// lattice unless asked to.
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    phihat: Vec<Complex64>,
    sin_half_sq: Vec<f64>,
    sin_full: Vec<f64>,
    cis: Vec<Complex64>,
}

impl PoissonSolution {
    /// Solves on a window of `m` sites (macroscopic width `m/n`).
    pub fn new(phi: &TestFunction, n: usize, m: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(OflError::param("poisson", "alpha_n must be positive"));
        }
        if m < 4 {
            return Err(OflError::param("poisson", "window needs at least 4 sites"));
        }
        let xs = positions(n, m);
        let mut buf: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(phi.eval(x, 0), 0.0)).collect();
        FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
        let th = |p: usize| 2.0 * PI * p as f64 / m as f64;
        Ok(PoissonSolution {
            n,
            m,
            alpha,
            phihat: buf,
            sin_half_sq: (0..m).map(|p| (0.5 * th(p)).sin().powi(2)).collect(),
            sin_full: (0..m).map(|p| th(p).sin()).collect(),
            cis: (0..m).map(|p| Complex64::from_polar(1.0, th(p))).collect(),
        })
    }

    #[inline]
    pub fn coeff(&self, p: usize, pp: usize) -> Complex64 {
        if p == 0 && pp == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let lam = 4.0 * (self.sin_half_sq[p] + self.sin_half_sq[pp]);
        let om = 2.0 * (self.sin_full[p] + self.sin_full[pp]);
        let q = (p + pp) % self.m;
        let num = Complex64::new(0.0, (self.n as f64).sqrt() * om) * self.phihat[q];
        num / Complex64::new(0.5 * lam / self.alpha, om)
    }

    pub fn to_dense(&self) -> LatticeKernel2D {
        let m = self.m;
        let mut data: Vec<Complex64> = (0..m * m).map(|i| self.coeff(i / m, i % m)).collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        for row in data.chunks_mut(m) {
            fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for c in 0..m {
            for r in 0..m {
                col[r] = data[r * m + c];
            }
            fft.process(&mut col);
            for r in 0..m {
                data[r * m + c] = col[r];
            }
        }
        let s = 1.0 / (m * m) as f64;
        LatticeKernel2D { n: self.n, m, values: data.into_iter().map(|z| z.re * s).collect() }
    }

    /// Transform of the off-diagonal `d_s(j) = h(j, j+s)`.
    fn diag_hat(&self, s: i64) -> Vec<Complex64> {
        let m = self.m;
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        for (q, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..m {
                let pp = (q + m - p) % m;
                let ph = self.cis[((pp as i64 * s).rem_euclid(m as i64)) as usize].conj();
                acc += self.coeff(p, pp) * ph;
            }
            *o = acc / m as f64;
        }
        out
    }

    pub fn diagonal(&self, s: i64) -> Vec<f64> {
        let mut d = self.diag_hat(s);
        FftPlanner::new().plan_fft_forward(self.m).process(&mut d);
        d.into_iter().map(|z| z.re / self.m as f64).collect()
    }

    /// `𝒟ₙh(j) = n[h(j, j+1) − h(j−1, j)]` for the symmetric solution.
    pub fn d_op(&self) -> Vec<f64> {
        let d = self.diagonal(1);
        let m = self.m;
        (0..m).map(|j| self.n as f64 * (d[j] - d[(j + m - 1) % m])).collect()
    }

    /// `(‖h‖², ‖ℰh‖², ‖𝒜h‖²)` in the `‖·‖_{2,n}` norm, by Parseval.
    pub fn norms(&self) -> (f64, f64, f64) {
        let m = self.m;
        let n = self.n as f64;
        let (mut sh, mut se, mut sa) = (0.0, 0.0, 0.0);
        for p in 0..m {
            let e = 4.0 * self.sin_half_sq[p];
            for pp in 0..m {
                let c = self.coeff(p, pp).norm_sqr();
                let om = 2.0 * (self.sin_full[p] + self.sin_full[pp]);
                sh += c;
                se += e * c;
                sa += n * n * om * om * c;
            }
        }
        let s = 1.0 / ((m * m) as f64 * n * n);
        (sh * s, se * s, sa * s)
    }

    /// `(1/n) Σⱼ h(j, j+1)²`.
    pub fn diag_sq(&self) -> f64 {
        let d = self.diag_hat(1);
        d.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.m as f64 / self.n as f64
    }
}

/// Dense lattice solution on a window of `n` sites (macroscopic width 1).
pub fn solve_poisson_fourier(phi: &TestFunction, n: usize, alpha_n: f64) -> Result<LatticeKernel2D> {
    Ok(PoissonSolution::new(phi, n, n, alpha_n)?.to_dense())
}

/// Dense LU solve of the same equation with the constant mode pinned to
/// zero mean. Only for small windows (`(M²)³` cost).
pub fn solve_poisson_dense(phi: &TestFunction, n: usize, m: usize, alpha: f64) -> Result<LatticeKernel2D> {
    if m > 48 {
        return Err(OflError::param("poisson", format!("dense solve limited to m <= 48 (got {m})")));
    }
    let size = m * m;
    let nf = n as f64;
    let idx = |j: i64, jp: i64| -> usize {
        let mi = m as i64;
        (j.rem_euclid(mi) * mi + jp.rem_euclid(mi)) as usize
    };
    let mut a = DMatrix::<f64>::from_element(size, size, 1.0);
    for j in 0..m as i64 {
        for jp in 0..m as i64 {
            let row = idx(j, jp);
            let lap = 0.5 * nf * nf;
            for (dj, djp) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                a[(row, idx(j + dj, jp + djp))] += lap;
            }
            a[(row, row)] -= 4.0 * lap;
            let c = nf * alpha * nf;
            a[(row, idx(j, jp - 1))] -= c;
            a[(row, idx(j - 1, jp))] -= c;
            a[(row, idx(j, jp + 1))] += c;
            a[(row, idx(j + 1, jp))] += c;
        }
    }
    let rhs = poisson_rhs(phi, n, m, alpha);
    let b = DVector::from_vec(rhs.values);
    let x = a.lu().solve(&b).ok_or_else(|| OflError::param("poisson", "singular dense system"))?;
    Ok(LatticeKernel2D { n, m, values: x.iter().cloned().collect() })
}

#[derive(Clone, Debug)]
pub struct NormRow {
    pub n: usize,
    pub h_scaled: f64,
    pub e: f64,
    pub a_scaled: f64,
    pub diag: f64,
}

impl NormRow {
    pub fn entries(&self) -> [(&'static str, f64); 4] {
        [
            ("sqrt_n_h_norm_sq", self.h_scaled),
            ("e_norm_sq", self.e),
            ("sqrt_n_a_norm_sq", self.a_scaled),
            ("diag_sum", self.diag),
        ]
    }
}

/// `n^{1/2}‖h‖²`, `‖ℰh‖²`, `n^{1/2}‖𝒜h‖²` and `(1/n)Σ h(j,j+1)²` over an
/// n-sweep, with `α_n = γ n^{-κ}` and a window of macroscopic width `width`.
pub fn norm_scaling_report(phi: &TestFunction, ns: &[usize], gamma: f64, kappa: f64, width: f64) -> Result<Vec<NormRow>> {
    ns.iter()
        .map(|&n| {
            let m = ((n as f64 * width).round() as usize).max(4);
            let s = PoissonSolution::new(phi, n, m, gamma * (n as f64).powf(-kappa))?;
            let (h, e, a) = s.norms();
            let r = (n as f64).sqrt();
            Ok(NormRow { n, h_scaled: r * h, e, a_scaled: r * a, diag: s.diag_sq() })
        })
        .collect()
}

pub fn time_exponent(kappa: f64) -> f64 {
    (1.5 + 1.5 * kappa).min(2.0)
}

/// Discrete L² distance between `½n^{a−2}Δⁿφ − 2γn^{a−κ−3/2}𝒟ₙhₙ` and
/// `𝕃_{γ,κ}φ` on the lattice, for each `n`.
pub fn levy_convergence_check(
    phi: &TestFunction,
    gamma: f64,
    kappa: f64,
    ns: &[usize],
    width: f64,
    form: LevyForm,
) -> Result<Vec<(usize, f64)>> {
    if !(kappa > 0.0) {
        return Err(OflError::param("poisson", "kappa must be positive"));
    }
    let a = time_exponent(kappa);
    ns.iter()
        .map(|&n| {
            let nf = n as f64;
            let m = (nf * width).round() as usize;
            let alpha = gamma * nf.powf(-kappa);
            let sol = PoissonSolution::new(phi, n, m, alpha)?;
            let d = sol.d_op();
            let xs = positions(n, m);
            let f: Vec<f64> = xs.iter().map(|&x| phi.eval(x, 0)).collect();
            let grid = SpectralGrid::new(m, width)?;
            let target = levy_apply_form(gamma, kappa, &f, &grid, form);
            let c1 = 0.5 * nf.powf(a - 2.0);
            let c2 = 2.0 * gamma * nf.powf(a - kappa - 1.5);
            let err = (0..m)
                .map(|j| {
                    let lap = nf * nf * (f[(j + 1) % m] + f[(j + m - 1) % m] - 2.0 * f[j]);
                    (c1 * lap - c2 * d[j] - target[j]).powi(2)
                })
                .sum::<f64>()
                / nf;
            Ok((n, err))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ResidueReport {
    pub y: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub max_v_tilde: f64,
    pub residue_zero: Vec<Complex64>,
    pub residue_sum: Vec<Complex64>,
    pub residue_sum_closed_form: Complex64,
}

fn g_w(z: Complex64, w: Complex64) -> Complex64 {
    let i2 = Complex64::new(0.0, 2.0);
    (z * z - w * w) / (z * ((1.0 - i2) * z * z - (1.0 + i2) * w * w))
}

/// `(1/2πi)∮ f` over a circle by the trapezoid rule.
pub fn contour_integral<F: Fn(Complex64) -> Complex64>(f: F, center: Complex64, radius: f64, points: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..points {
        let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / points as f64);
        // dz = i r e dθ; the 1/(2πi) cancels i and 2π/points.
        acc += f(center + radius * e) * radius * e;
    }
    acc / points as f64
}

fn lam_om(a: f64, b: f64) -> (f64, f64) {
    (
        4.0 * ((PI * a).sin().powi(2) + (PI * b).sin().powi(2)),
        2.0 * ((2.0 * PI * a).sin() + (2.0 * PI * b).sin()),
    )
}

/// `Ṽ(y) = ∫_{-1/2}^{1/2} sin²(π(y−x)) / (Λ(y−x,x)² + Ω(y−x,x)²) dx`.
pub fn v_tilde(y: f64) -> f64 {
    let f = |x: f64| {
        let (l, o) = lam_om(y - x, x);
        (PI * (y - x)).sin().powi(2) / (l * l + o * o)
    };
    let mut pts = vec![-0.5, 0.0, 0.5 * y, y, 0.5];
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .filter(|w| w[0] >= -0.5 && w[1] <= 0.5 && w[1] > w[0])
        .map(|w| crate::quad::integrate(f, w[0], w[1], 1e-14, 1e-11).value)
        .sum()
}

pub fn residue_boundedness_check(ys: &[f64], ws: &[Complex64]) -> ResidueReport {
    let v: Vec<f64> = ys.iter().map(|&y| v_tilde(y)).collect();
    let a2 = Complex64::new(1.0, 2.0) / Complex64::new(1.0, -2.0);
    let a = a2.sqrt();
    let mut r0 = vec![];
    let mut rs = vec![];
    for &w in ws {
        let zero = contour_integral(|z| g_w(z, w), Complex64::new(0.0, 0.0), 0.1, 256);
        let p1 = contour_integral(|z| g_w(z, w), a * w, 0.1, 256);
        let p2 = contour_integral(|z| g_w(z, w), -a * w, 0.1, 256);
        r0.push(zero);
        rs.push(zero + p1 + p2);
    }
    let closed = Complex64::new(1.0, 0.0) / Complex64::new(1.0, 2.0) + (a2 - 1.0) / (a2 * Complex64::new(1.0, -2.0));
    ResidueReport {
        y: ys.to_vec(),
        max_v_tilde: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        v_tilde: v,
        residue_zero: r0,
        residue_sum: rs,
        residue_sum_closed_form: closed,
    }
}
