//! Discrete derivatives, fluctuation fields in moving frames, the Dynkin
//! martingale and its quadratic variation, local averages and the
//! second-order Boltzmann–Gibbs diagnostic.

use crate::chain::{PathObserver, ScalingParams};
use crate::correlation::centering;
use crate::error::{OflError, Result};
use crate::potential::{scaled, PotentialSpec};
use crate::stats::{mean, stderr};
use crate::test_function::TestFunction;
use serde::Serialize;

/// `(∇^{1,n}φ_j, ∇^{2,n}φ_j, Δⁿφ_j)` at `x = j/n`.
pub fn discrete_derivatives(phi: &TestFunction, n: usize, j: i64) -> (f64, f64, f64) {
    let nf = n as f64;
    let f = |k: i64| phi.eval(k as f64 / nf, 0);
    let (m, c, p) = (f(j - 1), f(j), f(j + 1));
    (nf * (p - c), 0.5 * nf * (p - m), nf * nf * (p + m - 2.0 * c))
}

/// Site `j` shifted by `s` lattice units, as a position in `[-1/2, 1/2)`.
/// The offset is wrapped before dividing, so integer shifts are bit-exact
/// rotations.
pub fn frame_position(j: usize, shift: f64, n: usize) -> f64 {
    let (d, nf) = (j as f64 - shift, n as f64);
    (d - nf * (d / nf + 0.5).floor()) / nf
}

/// `φ((j − shift)/n)` on the ring.
pub fn frame_values(phi: &TestFunction, n: usize, shift: f64, order: usize) -> Vec<f64> {
    (0..n).map(|j| phi.eval(frame_position(j, shift, n), order)).collect()
}

/// `∇^{1,n}` of ring values.
pub fn grad1(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|j| n as f64 * (v[(j + 1) % n] - v[j])).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FieldKind {
    Volume,
    Energy,
    /// `η̄ + u ζ̄`.
    Combined(f64),
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FieldSample {
    pub value: f64,
    pub t: f64,
    pub frame_velocity: f64,
    pub kind: FieldKind,
}

pub fn window_guard(n: usize, velocity: f64, t: f64) -> Result<()> {
    let (shift, limit) = (velocity.abs() * t, n as f64 / 4.0);
    if shift > limit {
        return Err(OflError::WindowOverflow { shift, limit });
    }
    Ok(())
}

/// `n^{-1/2}Σ_j (observable)_j φ((j − vt)/n)` with quadrature centering.
pub fn fluctuation_field(
    eta: &[f64],
    spec: &PotentialSpec,
    p: &ScalingParams,
    phi: &TestFunction,
    kind: FieldKind,
    t: f64,
    velocity: f64,
) -> Result<FieldSample> {
    let n = eta.len();
    window_guard(n, velocity, t)?;
    let beta = p.beta(n);
    let (ce, cz) = centering(spec, beta, p.lambda)?;
    let (a, b) = match kind {
        FieldKind::Volume => (1.0, 0.0),
        FieldKind::Energy => (0.0, 1.0),
        FieldKind::Combined(u) => (1.0, u),
    };
    let w = frame_values(phi, n, velocity * t, 0);
    let value = eta
        .iter()
        .zip(&w)
        .map(|(&x, &wj)| {
            let o = if b == 0.0 { a * (x - ce) } else { a * (x - ce) + b * (scaled(spec, beta, 0, x) - cz) };
            o * wj
        })
        .sum::<f64>()
        / (n as f64).sqrt();
    Ok(FieldSample { value, t, frame_velocity: velocity, kind })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    I,
    II,
}

/// `(𝔲_n, v_n)` cancelling the linear fluctuations.
pub fn regime_parameters(case: Regime, n: usize, p: &ScalingParams, c3: f64) -> Result<(f64, f64)> {
    match case {
        Regime::I => {
            let u = c3 * p.beta(n);
            Ok((u, p.theta(n) * p.alpha(n) * (2.0 + 2.0 * p.lambda * u)))
        }
        Regime::II => {
            if p.lambda == 0.0 {
                return Err(OflError::param("fields", "case II needs lambda != 0"));
            }
            Ok((-1.0 / p.lambda, 0.0))
        }
    }
}

/// `(1/ℓ)Σ_{i<ℓ} g_{j+i}` (`Right`) or `g_{j−1−i}` (`Left`), periodic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

pub fn local_average(series: &[f64], j: i64, ell: usize, side: Side) -> Result<f64> {
    let n = series.len();
    if ell == 0 || ell > n {
        return Err(OflError::param("fields", format!("window length must be in 1..={n}")));
    }
    let idx = |k: i64| series[k.rem_euclid(n as i64) as usize];
    let s: f64 = match side {
        Side::Right => (0..ell as i64).map(|i| idx(j + i)).sum(),
        Side::Left => (0..ell as i64).map(|i| idx(j - 1 - i)).sum(),
    };
    Ok(s / ell as f64)
}

/// The pair of test functions and frame velocities of `𝒵 = 𝒱(φ₁) + ℰ(φ₂)`.
#[derive(Clone, Debug)]
pub struct FieldPair {
    pub phi1: TestFunction,
    pub phi2: TestFunction,
    pub f1: f64,
    pub f2: f64,
}

/// `(η, ζ)` site values.
fn eta_zeta(eta: &[f64], spec: &PotentialSpec, beta: f64) -> Vec<f64> {
    eta.iter().map(|&x| scaled(spec, beta, 0, x)).collect()
}

/// Integrand of the predictable quadratic variation,
/// `(θ/2n³)Σ_j (Δη_j ∇φ₁_j + Δζ_j ∇φ₂_j)²` with `Δ·_j = ·_j − ·_{j+1}`.
pub fn qv_integrand(eta: &[f64], zeta: &[f64], theta: f64, w1: &[f64], w2: &[f64]) -> f64 {
    let n = eta.len();
    let mut acc = 0.0;
    for j in 0..n {
        let k = (j + 1) % n;
        let d = (eta[j] - eta[k]) * w1[j] + (zeta[j] - zeta[k]) * w2[j];
        acc += d * d;
    }
    0.5 * theta * acc / (n as f64).powi(3)
}

/// Time quadrature (trapezoid) of the quadratic variation over recorded
/// snapshots. Snapshots must resolve the exchange time scale `1/θ` for a
/// path-accurate value; expectations are unbiased either way.
pub fn martingale_qv(times: &[f64], states: &[Vec<f64>], spec: &PotentialSpec, p: &ScalingParams, pair: &FieldPair) -> Result<f64> {
    if times.len() != states.len() || times.len() < 2 {
        return Err(OflError::Shape { module: "fields", msg: "need at least two snapshots".into() });
    }
    let n = states[0].len();
    let (theta, beta) = (p.theta(n), p.beta(n));
    let val = |t: f64, s: &[f64]| {
        let w1 = grad1(&frame_values(&pair.phi1, n, pair.f1 * t, 0));
        let w2 = grad1(&frame_values(&pair.phi2, n, pair.f2 * t, 0));
        qv_integrand(s, &eta_zeta(s, spec, beta), theta, &w1, &w2)
    };
    let mut acc = 0.0;
    let mut prev = val(times[0], &states[0]);
    for k in 1..times.len() {
        let cur = val(times[k], &states[k]);
        acc += 0.5 * (prev + cur) * (times[k] - times[k - 1]);
        prev = cur;
    }
    Ok(acc)
}

/// `ℓ`-independent prediction `t‖∂φ₁‖² + ((2λ²+1)/2)t‖∂φ₂‖² + 2λt⟨∂φ₁,∂φ₂⟩`.
pub fn qv_limit(pair: &FieldPair, lambda: f64, t: f64) -> f64 {
    t * pair.phi1.norm2_sq(1)
        + 0.5 * (2.0 * lambda * lambda + 1.0) * t * pair.phi2.norm2_sq(1)
        + 2.0 * lambda * t * pair.phi1.inner(1, &pair.phi2, 1)
}

/// Dynkin decomposition along a path: `𝒵_t`, `∫(∂_s + L_n)𝒵_s ds` and the
/// quadratic variation integral, accumulated exactly between exchanges.
/// Without flow and with static frames all three are updated in `O(1)` per
/// exchange.
#[derive(Clone, Debug, Serialize)]
pub struct DynkinSample {
    pub t: f64,
    pub z: f64,
    pub compensator: f64,
    pub qv: f64,
}

impl DynkinSample {
    /// `𝒩_t = 𝒵_t − 𝒵_0 − ∫(∂_s + L_n)𝒵`.
    pub fn martingale(&self, z0: f64) -> f64 {
        self.z - z0 - self.compensator
    }
}

pub struct DynkinObserver {
    n: usize,
    theta: f64,
    c: f64,
    spec: PotentialSpec,
    beta: f64,
    centers: (f64, f64),
    pair: FieldPair,
    fast: bool,
    // Static weights: Φ, ∇Φ, lattice Laplacian of Φ.
    w: [Vec<f64>; 2],
    g: [Vec<f64>; 2],
    lap: [Vec<f64>; 2],
    zeta: Vec<f64>,
    // Current integrand values and running integrals.
    t_last: f64,
    z: f64,
    drift: f64,
    qv: f64,
    drift_int: f64,
    qv_int: f64,
    bond_qv: Vec<f64>,
    events: u64,
    pub samples: Vec<DynkinSample>,
}

impl DynkinObserver {
    pub fn new(eta: &[f64], t0: f64, spec: &PotentialSpec, p: &ScalingParams, pair: FieldPair) -> Result<Self> {
        let n = eta.len();
        let beta = p.beta(n);
        let centers = centering(spec, beta, p.lambda)?;
        let c = p.theta(n) * p.alpha(n);
        let fast = c == 0.0 && pair.f1 == 0.0 && pair.f2 == 0.0;
        let lapl = |v: &[f64]| -> Vec<f64> { (0..n).map(|j| v[(j + 1) % n] + v[(j + n - 1) % n] - 2.0 * v[j]).collect() };
        let w1 = frame_values(&pair.phi1, n, 0.0, 0);
        let w2 = frame_values(&pair.phi2, n, 0.0, 0);
        let mut o = DynkinObserver {
            n,
            theta: p.theta(n),
            c,
            spec: spec.clone(),
            beta,
            centers,
            g: [grad1(&w1), grad1(&w2)],
            lap: [lapl(&w1), lapl(&w2)],
            w: [w1, w2],
            pair,
            fast,
            zeta: vec![0.0; n],
            t_last: t0,
            z: 0.0,
            drift: 0.0,
            qv: 0.0,
            drift_int: 0.0,
            qv_int: 0.0,
            bond_qv: vec![0.0; n],
            events: 0,
            samples: Vec::new(),
        };
        o.refresh(t0, eta);
        Ok(o)
    }

    fn set_weights(&mut self, t: f64) {
        let n = self.n;
        for (k, (phi, f)) in [(&self.pair.phi1, self.pair.f1), (&self.pair.phi2, self.pair.f2)].into_iter().enumerate() {
            let v = frame_values(phi, n, f * t, 0);
            self.g[k] = grad1(&v);
            self.lap[k] = (0..n).map(|j| v[(j + 1) % n] + v[(j + n - 1) % n] - 2.0 * v[j]).collect();
            self.w[k] = v;
        }
    }

    fn bond(&self, eta: &[f64], j: usize) -> f64 {
        let k = (j + 1) % self.n;
        let d = (eta[j] - eta[k]) * self.g[0][j] + (self.zeta[j] - self.zeta[k]) * self.g[1][j];
        0.5 * self.theta * d * d / (self.n as f64).powi(3)
    }

    /// Recomputes all integrand values at time `t`.
    fn refresh(&mut self, t: f64, eta: &[f64]) {
        let n = self.n;
        if !self.fast {
            self.set_weights(t);
        }
        self.zeta = eta_zeta(eta, &self.spec, self.beta);
        let (ce, cz) = self.centers;
        let sq = (n as f64).sqrt();
        let mut z = 0.0;
        let mut drift = 0.0;
        for j in 0..n {
            let (a, b) = (eta[j] - ce, self.zeta[j] - cz);
            z += a * self.w[0][j] + b * self.w[1][j];
            drift += 0.5 * self.theta * (eta[j] * self.lap[0][j] + self.zeta[j] * self.lap[1][j]);
        }
        if !self.fast {
            let xi: Vec<f64> = eta.iter().map(|&x| scaled(&self.spec, self.beta, 1, x)).collect();
            let d1 = frame_values(&self.pair.phi1, n, self.pair.f1 * t, 1);
            let d2 = frame_values(&self.pair.phi2, n, self.pair.f2 * t, 1);
            for j in 0..n {
                let (a, b) = (eta[j] - ce, self.zeta[j] - cz);
                // ∂_s φ((j − f s)/n) = −(f/n)φ'.
                drift -= (self.pair.f1 * a * d1[j] + self.pair.f2 * b * d2[j]) / n as f64;
                let dxi = xi[(j + n - 1) % n] - xi[(j + 1) % n];
                drift += self.c * (dxi * self.w[0][j] + xi[j] * dxi * self.w[1][j]);
            }
        }
        self.z = z / sq;
        self.drift = drift / sq;
        for j in 0..n {
            self.bond_qv[j] = self.bond(eta, j);
        }
        self.qv = self.bond_qv.iter().sum();
    }

    fn integrate_to(&mut self, t: f64, eta: &[f64]) {
        let dt = t - self.t_last;
        if self.fast {
            self.drift_int += self.drift * dt;
            self.qv_int += self.qv * dt;
        } else {
            let (d0, q0) = (self.drift, self.qv);
            self.refresh(t, eta);
            self.drift_int += 0.5 * (d0 + self.drift) * dt;
            self.qv_int += 0.5 * (q0 + self.qv) * dt;
        }
        self.t_last = t;
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Disables the incremental path (for cross-checks).
    pub fn always_recompute(mut self) -> Self {
        self.fast = false;
        self
    }
}

impl PathObserver for DynkinObserver {
    fn record(&mut self, _index: usize, t: f64, eta: &[f64]) -> Result<()> {
        self.integrate_to(t, eta);
        self.samples.push(DynkinSample { t, z: self.z, compensator: self.drift_int, qv: self.qv_int });
        Ok(())
    }

    fn segment_end(&mut self, t: f64, eta: &[f64]) {
        self.integrate_to(t, eta);
    }

    fn exchanged(&mut self, t: f64, eta: &[f64], j: usize) {
        if !self.fast {
            self.refresh(t, eta);
            return;
        }
        let n = self.n;
        let k = (j + 1) % n;
        self.events += 1;
        if self.events % 65536 == 0 {
            self.refresh(t, eta);
            return;
        }
        // Only sites j, j+1 changed: they swapped values.
        self.zeta.swap(j, k);
        let (ce, cz) = self.centers;
        let sq = (n as f64).sqrt();
        let site = |s: &Self, i: usize| {
            let z = (eta[i] - ce) * s.w[0][i] + (s.zeta[i] - cz) * s.w[1][i];
            let d = 0.5 * s.theta * (eta[i] * s.lap[0][i] + s.zeta[i] * s.lap[1][i]);
            (z, d)
        };
        // Contributions before the swap had the values exchanged.
        let before = |s: &Self, i: usize, src: usize| {
            let z = (eta[src] - ce) * s.w[0][i] + (s.zeta[src] - cz) * s.w[1][i];
            let d = 0.5 * s.theta * (eta[src] * s.lap[0][i] + s.zeta[src] * s.lap[1][i]);
            (z, d)
        };
        let (za, da) = site(self, j);
        let (zb, db) = site(self, k);
        let (zo1, do1) = before(self, j, k);
        let (zo2, do2) = before(self, k, j);
        self.z += (za + zb - zo1 - zo2) / sq;
        self.drift += (da + db - do1 - do2) / sq;
        for b in [(j + n - 1) % n, j, k] {
            let v = self.bond(eta, b);
            self.qv += v - self.bond_qv[b];
            self.bond_qv[b] = v;
        }
    }
}

/// `E[|∫_0^T Σ_j (ξ̄_jξ̄_{j+1} − (→ξ̄^ℓ_j)²)∇^{1,n}T⁻_{vs}φ_j ds|²]` per `ℓ`,
/// accumulated along one path for several window lengths at once.
pub struct Bg2Observer {
    n: usize,
    spec: PotentialSpec,
    beta: f64,
    lambda: f64,
    phi: TestFunction,
    velocity: f64,
    pub ells: Vec<usize>,
    fast: bool,
    xb: Vec<f64>,
    w: Vec<f64>,
    avg: Vec<Vec<f64>>,
    term: Vec<Vec<f64>>,
    value: Vec<f64>,
    t_last: f64,
    pub integral: Vec<f64>,
    events: u64,
}

impl Bg2Observer {
    pub fn new(eta: &[f64], t0: f64, spec: &PotentialSpec, p: &ScalingParams, phi: TestFunction, velocity: f64, ells: &[usize]) -> Result<Self> {
        let n = eta.len();
        if ells.iter().any(|&l| l < 2 || l > n) {
            return Err(OflError::param("fields", "window lengths must be in 2..=n"));
        }
        let fast = p.theta(n) * p.alpha(n) == 0.0 && velocity == 0.0;
        let mut o = Bg2Observer {
            n,
            spec: spec.clone(),
            beta: p.beta(n),
            lambda: p.lambda,
            phi,
            velocity,
            ells: ells.to_vec(),
            fast,
            xb: vec![0.0; n],
            w: vec![0.0; n],
            avg: vec![vec![0.0; n]; ells.len()],
            term: vec![vec![0.0; n]; ells.len()],
            value: vec![0.0; ells.len()],
            t_last: t0,
            integral: vec![0.0; ells.len()],
            events: 0,
        };
        o.refresh(t0, eta);
        Ok(o)
    }

    pub fn always_recompute(mut self) -> Self {
        self.fast = false;
        self
    }

    fn term_at(&self, q: usize, j: usize) -> f64 {
        let n = self.n;
        (self.xb[j] * self.xb[(j + 1) % n] - self.avg[q][j] * self.avg[q][j]) * self.w[j]
    }

    fn refresh(&mut self, t: f64, eta: &[f64]) {
        let n = self.n;
        // E[ξ] = λ under ν_n.
        self.xb = eta.iter().map(|&x| scaled(&self.spec, self.beta, 1, x) - self.lambda).collect();
        self.w = grad1(&frame_values(&self.phi, n, self.velocity * t, 0));
        for q in 0..self.ells.len() {
            let l = self.ells[q];
            let mut s: f64 = (0..l).map(|i| self.xb[i % n]).sum();
            for j in 0..n {
                self.avg[q][j] = s / l as f64;
                s += self.xb[(j + l) % n] - self.xb[j];
            }
            for j in 0..n {
                self.term[q][j] = self.term_at(q, j);
            }
            self.value[q] = self.term[q].iter().sum();
        }
    }

    fn integrate_to(&mut self, t: f64, eta: &[f64]) {
        let dt = t - self.t_last;
        if self.fast {
            for q in 0..self.ells.len() {
                self.integral[q] += self.value[q] * dt;
            }
        } else {
            let old = self.value.clone();
            self.refresh(t, eta);
            for q in 0..self.ells.len() {
                self.integral[q] += 0.5 * (old[q] + self.value[q]) * dt;
            }
        }
        self.t_last = t;
    }
}

impl PathObserver for Bg2Observer {
    fn record(&mut self, _index: usize, t: f64, eta: &[f64]) -> Result<()> {
        self.integrate_to(t, eta);
        Ok(())
    }

    fn segment_end(&mut self, t: f64, eta: &[f64]) {
        self.integrate_to(t, eta);
    }

    fn exchanged(&mut self, t: f64, eta: &[f64], j: usize) {
        self.events += 1;
        if !self.fast || self.events % 65536 == 0 {
            self.refresh(t, eta);
            return;
        }
        let n = self.n;
        let k = (j + 1) % n;
        self.xb.swap(j, k);
        // New minus old value at j (the value at k is its negative).
        let delta = self.xb[j] - self.xb[k];
        for q in 0..self.ells.len() {
            let l = self.ells[q];
            // Windows containing exactly one of j, j+1.
            let only_j = (j + n + 1 - l) % n;
            self.avg[q][only_j] += delta / l as f64;
            self.avg[q][k] -= delta / l as f64;
            for i in [(j + n - 1) % n, j, k, only_j] {
                let v = self.term_at(q, i);
                self.value[q] += v - self.term[q][i];
                self.term[q][i] = v;
            }
        }
    }
}

/// `(Tℓ/n + T²n/ℓ²)‖∂φ‖²`.
pub fn bg2_bound(t: f64, ell: usize, n: usize, grad_norm_sq: f64) -> f64 {
    let l = ell as f64;
    (t * l / n as f64 + t * t * n as f64 / (l * l)) * grad_norm_sq
}

/// Ensemble second moments (with standard errors) from per-member integrals.
pub fn bg2_diagnostic(integrals: &[Vec<f64>]) -> Vec<(f64, f64)> {
    if integrals.is_empty() {
        return Vec::new();
    }
    (0..integrals[0].len())
        .map(|q| {
            let sq: Vec<f64> = integrals.iter().map(|v| v[q] * v[q]).collect();
            (mean(&sq), if sq.len() > 1 { stderr(&sq) } else { 0.0 })
        })
        .collect()
}

/// Least-squares constant in log space for `D(ℓ) ≈ C·B(ℓ)`.
pub fn fit_bound_constant(diag: &[f64], bound: &[f64]) -> f64 {
    let logs: Vec<f64> = diag.iter().zip(bound).map(|(d, b)| (d / b).ln()).collect();
    mean(&logs).exp()
}
