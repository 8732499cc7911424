//! The Markov process generated by `θ(n)(S + α A)` on a ring of `n` sites:
//! exchange events from a superposed Poisson clock of rate `nθ/2` with a
//! uniform bond, and Dormand–Prince 5(4) integration of
//! `dη_j/dt = θα(ξ_{j−1} − ξ_{j+1})` between events. Time is macroscopic.

use crate::error::{OflError, Result};
use crate::gibbs::{GibbsParams, GibbsSampler};
use crate::potential::{scaled, PotentialSpec};
use crate::rng::stream;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    /// `θ(n) = n^a`.
    pub a: f64,
    /// `α_n = γ n^{-κ}`.
    pub kappa: f64,
    pub gamma: f64,
    /// `β_n = n^{-beta_exp}`.
    pub beta_exp: f64,
    pub lambda: f64,
}

impl ScalingParams {
    pub fn new(a: f64, kappa: f64, gamma: f64, beta_exp: f64, lambda: f64) -> Self {
        ScalingParams { a, kappa, gamma, beta_exp, lambda }
    }

    /// Time exponent `min(3/2 + 3κ/2, 2)` of the Lévy/diffusive regime.
    pub fn levy_regime(kappa: f64, gamma: f64, beta_exp: f64, lambda: f64) -> Self {
        ScalingParams { a: (1.5 + 1.5 * kappa).min(2.0), kappa, gamma, beta_exp, lambda }
    }

    pub fn theta(&self, n: usize) -> f64 {
        (n as f64).powf(self.a)
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.gamma * (n as f64).powf(-self.kappa)
    }

    pub fn beta(&self, n: usize) -> f64 {
        (n as f64).powf(-self.beta_exp)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let (t, al, b) = (self.theta(n), self.alpha(n), self.beta(n));
        if !(t.is_finite() && t > 0.0 && al.is_finite() && al >= 0.0 && b.is_finite() && b > 0.0) {
            return Err(OflError::param("chain", format!("derived theta={t}, alpha={al}, beta={b} must be finite and positive")));
        }
        if !self.lambda.is_finite() {
            return Err(OflError::param("chain", "lambda must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub eta: Vec<f64>,
    pub t: f64,
}

impl ChainState {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.len() < 4 {
            return Err(OflError::param("chain", format!("need at least 4 sites, got {}", eta.len())));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(OflError::param("chain", "configuration has non-finite entries"));
        }
        Ok(ChainState { eta, t: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.eta.len()
    }

    /// `Ση`, summed in sorted order so that any permutation gives the same bits.
    pub fn volume(&self) -> f64 {
        permutation_invariant_sum(self.eta.clone())
    }

    /// `ΣV_β(η_j)`, permutation invariant like [`ChainState::volume`].
    pub fn energy(&self, spec: &PotentialSpec, beta: f64) -> f64 {
        permutation_invariant_sum(self.eta.iter().map(|&x| scaled(spec, beta, 0, x)).collect())
    }
}

fn permutation_invariant_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Product-measure sample `ν_n` with `b = 1`, the configured `λ` and `β_n`.
pub fn sample_stationary<R: Rng + ?Sized>(n: usize, spec: &PotentialSpec, p: &ScalingParams, rng: &mut R) -> Result<ChainState> {
    let s = GibbsSampler::new(GibbsParams::new(p.beta(n), 1.0, p.lambda), spec)?;
    ChainState::new(s.sample_vec(rng, n))
}

fn drift_into(xi: &[f64], c: f64, out: &mut [f64]) {
    let n = xi.len();
    out[0] = c * (xi[n - 1] - xi[1]);
    for j in 1..n - 1 {
        out[j] = c * (xi[j - 1] - xi[j + 1]);
    }
    out[n - 1] = c * (xi[n - 2] - xi[0]);
}

/// `θα(ξ_{j−1} − ξ_{j+1})` with periodic indices.
pub fn drift(state: &ChainState, spec: &PotentialSpec, p: &ScalingParams) -> Vec<f64> {
    let n = state.n();
    let beta = p.beta(n);
    let xi: Vec<f64> = state.eta.iter().map(|&x| scaled(spec, beta, 1, x)).collect();
    let mut out = vec![0.0; n];
    drift_into(&xi, p.theta(n) * p.alpha(n), &mut out);
    out
}

/// Swaps `η_j` and `η_{j+1}` (periodic).
pub fn exchange_event(state: &mut ChainState, j: usize) {
    let n = state.n();
    state.eta.swap(j % n, (j + 1) % n);
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub ode_tol: f64,
    /// Turns the exchange clock off (pure flow).
    pub exchange: bool,
    /// Macroscopic times at which to record; must be increasing in `[0, T]`.
    pub record_times: Vec<f64>,
    /// Keep full snapshots in the trajectory.
    pub keep_states: bool,
}

impl SimOptions {
    pub fn new(ode_tol: f64) -> Self {
        SimOptions { ode_tol, exchange: true, record_times: Vec::new(), keep_states: true }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub exchanges: u64,
    pub ode_steps: u64,
    pub rejected_steps: u64,
}

// Dormand–Prince 5(4) tableau; the flow is autonomous so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive DP45 integrator with FSAL and local repair of the first stage
/// after an exchange.
struct Flow<'a> {
    spec: &'a PotentialSpec,
    beta: f64,
    c: f64,
    tol: f64,
    h: f64,
    k: [Vec<f64>; 7],
    xi: Vec<f64>,
    tmp: Vec<f64>,
    y5: Vec<f64>,
    steps: u64,
    rejected: u64,
}

impl<'a> Flow<'a> {
    fn new(spec: &'a PotentialSpec, beta: f64, c: f64, tol: f64, eta: &[f64]) -> Self {
        let n = eta.len();
        let mut f = Flow {
            spec,
            beta,
            c,
            tol,
            h: 0.0,
            k: std::array::from_fn(|_| vec![0.0; n]),
            xi: vec![0.0; n],
            tmp: vec![0.0; n],
            y5: vec![0.0; n],
            steps: 0,
            rejected: 0,
        };
        f.refresh(eta);
        f
    }

    fn eval(&mut self, y: &[f64], slot: usize) {
        for (x, &v) in self.xi.iter_mut().zip(y) {
            *x = scaled(self.spec, self.beta, 1, v);
        }
        drift_into(&self.xi, self.c, &mut self.k[slot]);
    }

    fn refresh(&mut self, eta: &[f64]) {
        let y = eta.to_vec();
        self.eval(&y, 0);
    }

    /// Recomputes stage 0 near bond `(j, j+1)` after a swap.
    fn repair(&mut self, eta: &[f64], j: usize) {
        let n = eta.len();
        for d in 0..4 {
            let s = (j + n - 1 + d) % n;
            let l = scaled(self.spec, self.beta, 1, eta[(s + n - 1) % n]);
            let r = scaled(self.spec, self.beta, 1, eta[(s + 1) % n]);
            self.k[0][s] = self.c * (l - r);
        }
    }

    fn stage(&mut self, y: &[f64], h: f64, coef: &[(usize, f64)], slot: usize) {
        let mut tmp = std::mem::take(&mut self.tmp);
        for (i, t) in tmp.iter_mut().enumerate() {
            let mut acc = y[i];
            for &(s, a) in coef {
                acc += h * a * self.k[s][i];
            }
            *t = acc;
        }
        self.eval(&tmp, slot);
        self.tmp = tmp;
    }

    /// Integrates `y` over `[t0, t1]`.
    fn advance(&mut self, y: &mut [f64], t0: f64, t1: f64) -> Result<()> {
        let mut t = t0;
        if self.h <= 0.0 {
            self.h = t1 - t0;
        }
        while t < t1 {
            if self.h < 1e-14 * t.abs().max(1.0) {
                return Err(OflError::StepUnderflow { t, h: self.h });
            }
            let last = self.h >= t1 - t;
            let h = if last { t1 - t } else { self.h };
            self.stage(y, h, &[(0, A21)], 1);
            self.stage(y, h, &[(0, A31), (1, A32)], 2);
            self.stage(y, h, &[(0, A41), (1, A42), (2, A43)], 3);
            self.stage(y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4);
            self.stage(y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5);
            let mut y5 = std::mem::take(&mut self.y5);
            for (i, v) in y5.iter_mut().enumerate() {
                *v = y[i]
                    + h * (B1 * self.k[0][i] + B3 * self.k[2][i] + B4 * self.k[3][i] + B5 * self.k[4][i] + B6 * self.k[5][i]);
            }
            self.eval(&y5, 6);
            let mut err = 0.0f64;
            for i in 0..y.len() {
                let e = h
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let sc = self.tol * (1.0 + y[i].abs().max(y5[i].abs()));
                let q = e.abs() / sc;
                // Overflowing trial stages reject the step instead of poisoning `max`.
                err = if q.is_nan() || err.is_nan() { f64::INFINITY } else { err.max(q) };
            }
            if err <= 1.0 {
                y.copy_from_slice(&y5);
                self.k.swap(0, 6);
                t = if last { t1 } else { t + h };
                self.steps += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // A step clipped by the interval end says nothing about growth.
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
            } else {
                self.rejected += 1;
                self.h = h * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
            }
            self.y5 = y5;
        }
        Ok(())
    }
}

/// Hooks into a running simulation. Between consecutive calls the path is
/// the deterministic flow, so integrals along the path can be accumulated
/// exactly segment by segment.
pub trait PathObserver {
    /// At each requested record time.
    fn record(&mut self, _index: usize, _t: f64, _eta: &[f64]) -> Result<()> {
        Ok(())
    }
    /// End of a flow segment, just before an exchange (or at `T`).
    fn segment_end(&mut self, _t: f64, _eta: &[f64]) {}
    /// Right after the swap of bond `(j, j+1)`.
    fn exchanged(&mut self, _t: f64, _eta: &[f64], _j: usize) {}
}

struct RecordFn<F>(F);

impl<F: FnMut(usize, f64, &[f64]) -> Result<()>> PathObserver for RecordFn<F> {
    fn record(&mut self, index: usize, t: f64, eta: &[f64]) -> Result<()> {
        (self.0)(index, t, eta)
    }
}

/// Event-driven simulation up to macroscopic time `t_end` with path hooks.
pub fn simulate_path<R, O>(
    state: &mut ChainState,
    spec: &PotentialSpec,
    p: &ScalingParams,
    t_end: f64,
    opts: &SimOptions,
    rng: &mut R,
    observer: &mut O,
) -> Result<Trajectory>
where
    R: Rng + ?Sized,
    O: PathObserver + ?Sized,
{
    let n = state.n();
    p.validate(n)?;
    if !(t_end > 0.0) {
        return Err(OflError::param("chain", "T must be positive"));
    }
    if !(opts.ode_tol > 0.0) {
        return Err(OflError::param("chain", "odeTol must be positive"));
    }
    let times = &opts.record_times;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < state.t || t > t_end) {
        return Err(OflError::param("chain", "record times must be increasing within [0, T]"));
    }
    let theta = p.theta(n);
    let c = theta * p.alpha(n);
    let beta = p.beta(n);
    let rate = 0.5 * n as f64 * theta;
    let has_flow = c != 0.0;
    let mut flow = Flow::new(spec, beta, c, opts.ode_tol, &state.eta);
    let mut traj = Trajectory::default();
    let mut next_event = if opts.exchange { state.t + Distribution::<f64>::sample(&Exp1, rng) / rate } else { f64::INFINITY };
    let mut rec = 0;
    let push = |rec: usize, state: &ChainState, traj: &mut Trajectory, observer: &mut O| -> Result<()> {
        observer.record(rec, state.t, &state.eta)?;
        traj.times.push(state.t);
        if opts.keep_states {
            traj.states.push(state.eta.clone());
        }
        Ok(())
    };
    while rec < times.len() && times[rec] <= state.t {
        push(rec, state, &mut traj, observer)?;
        rec += 1;
    }
    loop {
        let next_rec = times.get(rec).copied().unwrap_or(f64::INFINITY);
        let target = next_event.min(next_rec).min(t_end);
        if has_flow && target > state.t {
            flow.advance(&mut state.eta, state.t, target)?;
        }
        state.t = target;
        if target == next_rec {
            push(rec, state, &mut traj, observer)?;
            rec += 1;
            continue;
        }
        observer.segment_end(state.t, &state.eta);
        if target == next_event && target < t_end {
            let j = rng.random_range(0..n);
            exchange_event(state, j);
            if has_flow {
                flow.repair(&state.eta, j);
            }
            observer.exchanged(state.t, &state.eta, j);
            traj.exchanges += 1;
            next_event += Distribution::<f64>::sample(&Exp1, rng) / rate;
            continue;
        }
        break;
    }
    while rec < times.len() {
        push(rec, state, &mut traj, observer)?;
        rec += 1;
    }
    if let Some(&x) = state.eta.iter().find(|v| !v.is_finite()) {
        return Err(OflError::Overflow { x, beta });
    }
    traj.ode_steps = flow.steps;
    traj.rejected_steps = flow.rejected;
    Ok(traj)
}

/// [`simulate_path`] with a callback at each record time.
pub fn simulate_observe<R, F>(
    state: &mut ChainState,
    spec: &PotentialSpec,
    p: &ScalingParams,
    t_end: f64,
    opts: &SimOptions,
    rng: &mut R,
    observer: F,
) -> Result<Trajectory>
where
    R: Rng + ?Sized,
    F: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    simulate_path(state, spec, p, t_end, opts, rng, &mut RecordFn(observer))
}

pub fn simulate<R: Rng + ?Sized>(
    state: &mut ChainState,
    spec: &PotentialSpec,
    p: &ScalingParams,
    t_end: f64,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    simulate_observe(state, spec, p, t_end, opts, rng, |_, _, _| Ok(()))
}

/// Runs `members` independent jobs, member `i` with RNG stream `(seed, i)`;
/// results come back in member order regardless of scheduling.
pub fn run_ensemble<T, F>(members: usize, seed: u64, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut crate::rng::Stream) -> Result<T> + Sync,
{
    (0..members)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            job(i, &mut rng)
        })
        .collect()
}
