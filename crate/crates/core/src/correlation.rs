//! Two-point functions of the energy-type observable `ζ̄ − λη̄`: ensemble
//! estimator with translation averaging, smeared two-point function,
//! quadratic field and comparison with limit kernels. For the harmonic
//! chain the exact correlation also follows from a closed linear equation
//! for the second moments of a single propagated pulse.

use crate::chain::ScalingParams;
use crate::error::{OflError, Result};
use crate::gibbs::{GibbsMeasure, GibbsParams};
use crate::potential::{scaled, PotentialSpec};
use crate::spectral::{kernel_torus_form, LevyForm};
use crate::stats::{mean, stderr};
use crate::test_function::TestFunction;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationEstimate {
    pub times: Vec<f64>,
    pub offsets: Vec<i64>,
    /// `s[time][offset]`.
    pub s: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub ensemble_size: usize,
}

impl CorrelationEstimate {
    /// `Σ_j S_j(t)` per time, meaningful when `offsets` covers the ring.
    pub fn mass(&self) -> Vec<f64> {
        self.s.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Centering constants `(E[η], E[ζ])` under `ν_n`.
pub fn centering(spec: &PotentialSpec, beta: f64, lambda: f64) -> Result<(f64, f64)> {
    let m = GibbsMeasure::new(GibbsParams::new(beta, 1.0, lambda), spec)?;
    Ok((m.mean_eta(), m.mean_zeta()))
}

/// Per-site observable `ζ̄_j − λη̄_j`.
pub fn observable(eta: &[f64], spec: &PotentialSpec, beta: f64, lambda: f64, centers: (f64, f64)) -> Vec<f64> {
    eta.iter()
        .map(|&x| (scaled(spec, beta, 0, x) - centers.1) - lambda * (x - centers.0))
        .collect()
}

/// `½` times the quadrature variance of `ζ − λη`: the exact `S_0(0)`.
pub fn s0_quadrature(spec: &PotentialSpec, beta: f64, lambda: f64) -> Result<f64> {
    let m = GibbsMeasure::new(GibbsParams::new(beta, 1.0, lambda), spec)?;
    let (ce, cz) = (m.mean_eta(), m.mean_zeta());
    Ok(0.5 * m.expect(|x| ((scaled(spec, beta, 0, x) - cz) - lambda * (x - ce)).powi(2)))
}

fn wrap(o: i64, n: usize) -> usize {
    o.rem_euclid(n as i64) as usize
}

/// Translation average `(1/n)Σ_x w0_x wt_{x+o}`.
fn cross(w0: &[f64], wt: &[f64], o: i64) -> f64 {
    let n = w0.len();
    let s = wrap(o, n);
    let mut acc = 0.0;
    for x in 0..n {
        acc += w0[x] * wt[(x + s) % n];
    }
    acc / n as f64
}

/// Ensemble estimate of `S_j(t) = ½E[(ζ̄₀(0) − λη̄₀(0))(ζ̄_j(t) − λη̄_j(t))]`.
/// `members[i][k]` is the configuration of member `i` at `times[k]`, and
/// `initial[i]` its configuration at time 0 (drawn from `ν_n`).
pub fn correlation_s(
    initial: &[Vec<f64>],
    members: &[Vec<Vec<f64>>],
    spec: &PotentialSpec,
    p: &ScalingParams,
    offsets: &[i64],
    times: &[f64],
) -> Result<CorrelationEstimate> {
    if initial.len() != members.len() || initial.is_empty() {
        return Err(OflError::Shape { module: "correlation", msg: "need one initial state per member".into() });
    }
    let n = initial[0].len();
    if members.iter().any(|m| m.len() != times.len() || m.iter().any(|s| s.len() != n)) || initial.iter().any(|s| s.len() != n) {
        return Err(OflError::Shape { module: "correlation", msg: "snapshots must match times and lattice size".into() });
    }
    let beta = p.beta(n);
    let c = centering(spec, beta, p.lambda)?;
    let m = initial.len();
    let mut per = vec![vec![vec![0.0; m]; offsets.len()]; times.len()];
    for i in 0..m {
        let w0 = observable(&initial[i], spec, beta, p.lambda, c);
        for (k, snap) in members[i].iter().enumerate() {
            let wt = observable(snap, spec, beta, p.lambda, c);
            for (q, &o) in offsets.iter().enumerate() {
                per[k][q][i] = 0.5 * cross(&w0, &wt, o);
            }
        }
    }
    let s = per.iter().map(|r| r.iter().map(|v| mean(v)).collect()).collect();
    let se = per.iter().map(|r| r.iter().map(|v| if m > 1 { stderr(v) } else { 0.0 }).collect()).collect();
    Ok(CorrelationEstimate { times: times.to_vec(), offsets: offsets.to_vec(), s, stderr: se, ensemble_size: m })
}

/// Lattice point `j/n` placed in `[-1/2, 1/2)`.
pub fn ring_position(j: usize, n: usize) -> f64 {
    let x = j as f64 / n as f64;
    if x >= 0.5 {
        x - 1.0
    } else {
        x
    }
}

fn smear(w: &[f64], f: &TestFunction, shift: usize) -> f64 {
    let n = w.len();
    let mut acc = 0.0;
    for j in 0..n {
        acc += w[(j + shift) % n] * f.eval(ring_position(j, n), 0);
    }
    acc / (n as f64).sqrt()
}

/// `½E[𝒳₀(g)𝒳_t(f)]` with `𝒳` the field of `ζ̄ − λη̄`, averaged over
/// lattice translations of both test functions like [`correlation_s`].
/// `pairs[i] = (η(0), η(t))` per ensemble member.
pub fn smeared_two_point(
    pairs: &[(Vec<f64>, Vec<f64>)],
    spec: &PotentialSpec,
    p: &ScalingParams,
    f: &TestFunction,
    g: &TestFunction,
) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(OflError::Shape { module: "correlation", msg: "empty ensemble".into() });
    }
    let n = pairs[0].0.len();
    let beta = p.beta(n);
    let c = centering(spec, beta, p.lambda)?;
    let vals: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| {
            let (w0, wt) = (observable(a, spec, beta, p.lambda, c), observable(b, spec, beta, p.lambda, c));
            (0..n).map(|s| 0.5 * smear(&w0, g, s) * smear(&wt, f, s)).sum::<f64>() / n as f64
        })
        .collect();
    Ok((mean(&vals), if vals.len() > 1 { stderr(&vals) } else { 0.0 }))
}

/// `(1/n)Σ_{j,j'} S_{j'−j} g(j/n) f(j'/n)` from a full-ring estimate.
pub fn smear_correlation(s_row: &[f64], f: &TestFunction, g: &TestFunction) -> f64 {
    let n = s_row.len();
    let fv: Vec<f64> = (0..n).map(|j| f.eval(ring_position(j, n), 0)).collect();
    let gv: Vec<f64> = (0..n).map(|j| g.eval(ring_position(j, n), 0)).collect();
    let mut acc = 0.0;
    for j in 0..n {
        for jp in 0..n {
            acc += s_row[(jp + n - j) % n] * gv[j] * fv[jp];
        }
    }
    acc / n as f64
}

/// `(1/n)Σ_{j≠j'} ξ̄_j ξ̄_{j'} h[j][j']`; `h` must be symmetric.
pub fn quadratic_field(eta: &[f64], spec: &PotentialSpec, p: &ScalingParams, h: &[Vec<f64>]) -> Result<f64> {
    let n = eta.len();
    if h.len() != n || h.iter().any(|r| r.len() != n) {
        return Err(OflError::Shape { module: "correlation", msg: format!("kernel must be {n}x{n}") });
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (h[i][j], h[j][i]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(OflError::AsymmetricKernel { i, j });
            }
        }
    }
    let beta = p.beta(n);
    // E[ξ] = λ under ν_n with b = 1.
    let xi: Vec<f64> = eta.iter().map(|&x| scaled(spec, beta, 1, x) - p.lambda).collect();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += xi[i] * xi[j] * h[i][j];
            }
        }
    }
    Ok(acc / n as f64)
}

/// Rescaled correlation `n S_j / Σ S` on the ring against `P_t(j/n)` on the
/// unit torus: binned `L¹` and `L∞` errors, and the median-minus-mean
/// skew of both.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelComparison {
    pub t: f64,
    pub l1: f64,
    pub linf: f64,
    pub mass: f64,
    pub skew_data: f64,
    pub skew_kernel: f64,
}

/// Median minus mean of a density sampled at `j/n` on the ring.
pub fn ring_skew(density: &[f64]) -> f64 {
    let n = density.len();
    let order: Vec<usize> = (0..n).map(|i| (i + n / 2) % n).collect();
    let dx = 1.0 / n as f64;
    let total: f64 = density.iter().sum::<f64>() * dx;
    let mean = order.iter().map(|&j| ring_position(j, n) * density[j]).sum::<f64>() * dx / total;
    let mut acc = 0.0;
    for &j in &order {
        let next = acc + density[j] * dx;
        if next >= 0.5 * total {
            let frac = (0.5 * total - acc) / (density[j] * dx).max(1e-300);
            return ring_position(j, n) - 0.5 * dx + frac * dx - mean;
        }
        acc = next;
    }
    0.5 - mean
}

/// `s_row[j]` indexed by offset `j ∈ [0, n)` (periodic). With `mirror` the
/// reference is `P_t(−x)`: the transition density of the process whose
/// generator is the operator, as opposed to the fundamental solution of
/// `∂_t P = 𝕃P`; the two differ by the odd part of the symbol.
pub fn compare_kernel(s_row: &[f64], t: f64, gamma: f64, kappa: f64, form: LevyForm, mirror: bool) -> Result<KernelComparison> {
    let n = s_row.len();
    let kern = kernel_torus_form(gamma, kappa, t, n, form)?;
    let mass: f64 = s_row.iter().sum();
    let dens: Vec<f64> = s_row.iter().map(|v| n as f64 * v / mass).collect();
    // Torus grid index of offset j is j + n/2 (mod n); the mirror maps j to n - j.
    let pk: Vec<f64> = (0..n).map(|j| kern[(if mirror { n - j } else { j } + n / 2) % n]).collect();
    let diff: Vec<f64> = dens.iter().zip(&pk).map(|(a, b)| (a - b).abs()).collect();
    Ok(KernelComparison {
        t,
        l1: diff.iter().sum::<f64>() / n as f64,
        linf: diff.iter().cloned().fold(0.0, f64::max),
        mass,
        skew_data: ring_skew(&dens),
        skew_kernel: ring_skew(&pk),
    })
}

/// Second moments `G(x,y) = E[u_x u_y]` of the harmonic chain started from
/// the unit pulse at site 0. Away from the diagonal the two coordinates
/// move as independent walkers under exchange; on adjacent sites the shared
/// bond acts trivially and on the diagonal they move together. For the
/// harmonic potential `S_j(t) = ¼ G(j,j,t)` for every `λ`.
pub struct HarmonicPulse {
    pub n: usize,
    /// `θ/2`.
    ce: f64,
    /// `θα`.
    cf: f64,
    pub g: Vec<f64>,
    pub t: f64,
    acc: Vec<f64>,
    tmp: Vec<f64>,
    k: Vec<f64>,
}

impl HarmonicPulse {
    pub fn new(n: usize, p: &ScalingParams) -> Result<Self> {
        if n < 8 {
            return Err(OflError::param("correlation", "pulse solver needs n >= 8"));
        }
        p.validate(n)?;
        Ok(Self::with_rates(n, 0.5 * p.theta(n), p.theta(n) * p.alpha(n)))
    }

    /// Per-bond exchange rate `ce` and flow speed `cf` set directly.
    pub fn with_rates(n: usize, ce: f64, cf: f64) -> Self {
        let mut g = vec![0.0; n * n];
        g[0] = 1.0;
        HarmonicPulse {
            n,
            ce,
            cf,
            g,
            t: 0.0,
            acc: vec![0.0; n * n],
            tmp: vec![0.0; n * n],
            k: vec![0.0; n * n],
        }
    }

    /// Stable explicit step: exchange eigenvalues lie in `[-4θ, 0]`, flow
    /// eigenvalues in `±4iθα`.
    pub fn stable_dt(&self) -> f64 {
        0.65 / (2.0 * self.ce + self.cf)
    }

    fn rhs(&self, g: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (ce, cf) = (self.ce, self.cf);
        for x in 0..n {
            let xm = (x + n - 1) % n;
            let xp = (x + 1) % n;
            let (r, rm, rp) = (&g[x * n..(x + 1) * n], &g[xm * n..(xm + 1) * n], &g[xp * n..(xp + 1) * n]);
            let o = &mut out[x * n..(x + 1) * n];
            let bulk = |y: usize, ym: usize, yp: usize| {
                let (a, b, c, d) = (rm[y], rp[y], r[ym], r[yp]);
                cf * (a - b + c - d) + ce * (a + b + c + d - 4.0 * r[y])
            };
            o[0] = bulk(0, n - 1, 1);
            for y in 1..n - 1 {
                o[y] = bulk(y, y - 1, y + 1);
            }
            o[n - 1] = bulk(n - 1, n - 2, 0);
            // Coincident walkers.
            let fl = |y: usize| {
                let (ym, yp) = ((y + n - 1) % n, (y + 1) % n);
                cf * (rm[y] - rp[y] + r[ym] - r[yp])
            };
            o[x] = fl(x) + ce * (g[xm * n + xm] + g[xp * n + xp] - 2.0 * r[x]);
            // y = x + 1: bond x swaps the pair.
            let y = xp;
            o[y] = fl(y) + ce * (rm[y] + r[(y + 1) % n] - 2.0 * r[y]);
            // y = x - 1: bond y swaps the pair.
            let y = xm;
            o[y] = fl(y) + ce * (r[(y + n - 1) % n] + rp[y] - 2.0 * r[y]);
        }
    }

    fn rk4(&mut self, dt: f64) {
        let mut acc = std::mem::take(&mut self.acc);
        let mut tmp = std::mem::take(&mut self.tmp);
        let mut k = std::mem::take(&mut self.k);
        acc.copy_from_slice(&self.g);
        self.rhs(&self.g, &mut k);
        for i in 0..k.len() {
            acc[i] += dt / 6.0 * k[i];
            tmp[i] = self.g[i] + 0.5 * dt * k[i];
        }
        self.rhs(&tmp, &mut k);
        for i in 0..k.len() {
            acc[i] += dt / 3.0 * k[i];
            tmp[i] = self.g[i] + 0.5 * dt * k[i];
        }
        self.rhs(&tmp, &mut k);
        for i in 0..k.len() {
            acc[i] += dt / 3.0 * k[i];
            tmp[i] = self.g[i] + dt * k[i];
        }
        self.rhs(&tmp, &mut k);
        for i in 0..k.len() {
            acc[i] += dt / 6.0 * k[i];
        }
        std::mem::swap(&mut self.g, &mut acc);
        self.acc = acc;
        self.tmp = tmp;
        self.k = k;
    }

    /// Integrates to time `t` with steps no larger than `dt_max`.
    pub fn advance_to(&mut self, t: f64, dt_max: f64) {
        let span = t - self.t;
        if span <= 0.0 {
            return;
        }
        let steps = (span / dt_max).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for _ in 0..steps {
            self.rk4(dt);
        }
        self.t = t;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.g[j * self.n + j]).collect()
    }

    /// `S_j(t) = ¼ G(j,j)`.
    pub fn correlation(&self) -> Vec<f64> {
        self.diagonal().iter().map(|v| 0.25 * v).collect()
    }
}

/// Exact harmonic `S_j(t)` for offsets `0..n` at each requested time.
pub fn harmonic_correlation(n: usize, p: &ScalingParams, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(OflError::param("correlation", "times must be increasing and non-negative"));
    }
    let mut solver = HarmonicPulse::new(n, p)?;
    let dt = solver.stable_dt();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        solver.advance_to(t, dt);
        out.push(solver.correlation());
    }
    Ok(out)
}
