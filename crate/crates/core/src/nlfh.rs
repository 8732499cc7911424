//! Two-mode nonlinear fluctuating hydrodynamics for the chain: thermodynamic
//! map, flux Jacobian, normal modes, Hessians, coupling matrices and the
//! universality-class lookup.
//!
//! The one-site measure is parametrised as `exp(-b V_β(η) + τ η)`, so that
//! `P = E[ξ] = τ/b` exactly (integration by parts). The currents of the
//! generator `θ(S + αA)` are `j^v = θα(ξ_j + ξ_{j+1})` and
//! `j^e = θα ξ_j ξ_{j+1}` up to gradient terms, so the flux is
//! `θα(2P, P²)`. Mode 1 is the sound mode (velocity `2θα(P_v + P P_e)`),
//! mode 2 the heat mode (velocity zero).

use crate::error::{OflError, Result};
use crate::gibbs::{GibbsMeasure, GibbsParams};
use crate::potential::{scaled, PotentialSpec};
use crate::quad::FixedRule;
use serde::Serialize;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThermoPoint {
    pub v: f64,
    pub e: f64,
    pub tau: f64,
    pub b: f64,
}

impl ThermoPoint {
    /// `E[ξ]`.
    pub fn pressure(&self) -> f64 {
        self.tau / self.b
    }
}

/// Closed form of the harmonic (`β = 0`) map.
pub fn thermo_map_closed_form(v: f64, e: f64) -> Result<ThermoPoint> {
    let s = 2.0 * e - v * v;
    if !(s > 0.0) {
        return Err(OflError::param("nlfh", format!("2e - v^2 = {s} must be positive")));
    }
    Ok(ThermoPoint { v, e, tau: v / s, b: 1.0 / s })
}

#[derive(Clone, Copy, Debug)]
struct Moments {
    eta: f64,
    zeta: f64,
    var_eta: f64,
    cov: f64,
    var_zeta: f64,
}

/// Newton solver for `(τ, b)` on a fixed quadrature rule, so that nearby
/// targets see the same discretisation and finite differences stay smooth.
pub struct ThermoSolver {
    rule: FixedRule,
    zeta: Vec<f64>,
}

const PANELS: usize = 256;
const ORDER: usize = 16;
const MAX_NEWTON: usize = 100;

impl ThermoSolver {
    /// Builds the rule around the measure with parameters `(tau, b)`.
    pub fn around(spec: &PotentialSpec, beta: f64, tau: f64, b: f64) -> Result<Self> {
        let m = GibbsMeasure::new(GibbsParams::new(beta, b, tau), spec)?;
        let (lo, hi) = m.window();
        let pad = 0.3 * (hi - lo);
        let rule = FixedRule::composite(lo - pad, hi + pad, PANELS, ORDER);
        let zeta = rule.nodes.iter().map(|&x| scaled(spec, beta, 0, x)).collect();
        Ok(ThermoSolver { rule, zeta })
    }

    fn moments(&self, tau: f64, b: f64) -> Moments {
        let logs: Vec<f64> = self.rule.nodes.iter().zip(&self.zeta).map(|(&x, &z)| -b * z + tau * x).collect();
        let fmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().zip(&self.rule.weights).map(|(l, w)| w * (l - fmax).exp()).collect();
        let mass: f64 = w.iter().sum();
        let mut eta = 0.0;
        let mut zeta = 0.0;
        for ((wi, x), z) in w.iter().zip(&self.rule.nodes).zip(&self.zeta) {
            eta += wi * x;
            zeta += wi * z;
        }
        eta /= mass;
        zeta /= mass;
        let (mut vee, mut c, mut vzz) = (0.0, 0.0, 0.0);
        for ((wi, x), z) in w.iter().zip(&self.rule.nodes).zip(&self.zeta) {
            let (dx, dz) = (x - eta, z - zeta);
            vee += wi * dx * dx;
            c += wi * dx * dz;
            vzz += wi * dz * dz;
        }
        Moments { eta, zeta, var_eta: vee / mass, cov: c / mass, var_zeta: vzz / mass }
    }

    /// Solves `E[η] = v`, `E[V_β(η)] = e` starting from `(tau, b)`.
    pub fn solve(&self, v: f64, e: f64, mut tau: f64, mut b: f64) -> Result<ThermoPoint> {
        let scale = 1.0 + v.abs() + e.abs();
        let resid = |m: &Moments| ((m.eta - v).powi(2) + (m.zeta - e).powi(2)).sqrt();
        let mut m = self.moments(tau, b);
        let mut r = resid(&m);
        for _ in 0..MAX_NEWTON {
            if r < 1e-14 * scale {
                return Ok(ThermoPoint { v, e, tau, b });
            }
            // Unknowns (τ, ln b).
            let j = [[m.var_eta, -b * m.cov], [m.cov, -b * m.var_zeta]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !(det.abs() > 0.0) || !det.is_finite() {
                break;
            }
            let (f0, f1) = (m.eta - v, m.zeta - e);
            let dt = -(j[1][1] * f0 - j[0][1] * f1) / det;
            let dl = -(-j[1][0] * f0 + j[0][0] * f1) / det;
            let mut step = 1.0;
            let mut moved = false;
            while step >= 1.0 / 1024.0 {
                let (t2, b2) = (tau + step * dt, b * (step * dl).exp());
                let m2 = self.moments(t2, b2);
                let r2 = resid(&m2);
                if r2.is_finite() && r2 < r {
                    tau = t2;
                    b = b2;
                    m = m2;
                    r = r2;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if r < 1e-11 * scale {
            return Ok(ThermoPoint { v, e, tau, b });
        }
        Err(OflError::NoConvergence { tau, b })
    }
}

fn initial_guess(v: f64, e: f64) -> (f64, f64) {
    match thermo_map_closed_form(v, e) {
        Ok(p) => (p.tau, p.b),
        Err(_) => (v, 1.0),
    }
}

/// `(τ, b)` with `E[η] = v` and `E[V_β(η)] = e`; closed form at `β = 0`.
pub fn thermo_map(v: f64, e: f64, spec: &PotentialSpec, beta: f64) -> Result<ThermoPoint> {
    if beta == 0.0 {
        return thermo_map_closed_form(v, e);
    }
    if !(beta > 0.0) {
        return Err(OflError::param("nlfh", "beta must be non-negative"));
    }
    let (t0, b0) = initial_guess(v, e);
    let p = ThermoSolver::around(spec, beta, t0, b0)?.solve(v, e, t0, b0)?;
    // Re-centre the rule on the solution and polish.
    ThermoSolver::around(spec, beta, p.tau, p.b)?.solve(v, e, p.tau, p.b)
}

impl ThermoSolver {
    /// `∇_{(v,e)} P` at `(tau, b)` from the inverse of the moment-map
    /// Jacobian `∂(E η, E V)/∂(τ, b) = [[Var η, -Cov], [Cov, -Var V]]`.
    pub fn pressure_gradient(&self, tau: f64, b: f64) -> [f64; 2] {
        let m = self.moments(tau, b);
        let k = [[m.var_eta, -m.cov], [m.cov, -m.var_zeta]];
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        let kinv = [[k[1][1] / det, -k[0][1] / det], [-k[1][0] / det, k[0][0] / det]];
        let dp = [1.0 / b, -tau / (b * b)];
        [dp[0] * kinv[0][0] + dp[1] * kinv[1][0], dp[0] * kinv[0][1] + dp[1] * kinv[1][1]]
    }
}

/// `P(v, e)` with its gradient and Hessian. The gradient is exact on the
/// quadrature rule; the Hessian is a Richardson-extrapolated central
/// difference of the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PressureJet {
    pub p: f64,
    pub grad: [f64; 2],
    pub hess: Mat2,
}

pub const FD_STEP: f64 = 1e-4;

pub fn pressure_jet(point: &ThermoPoint, spec: &PotentialSpec, beta: f64) -> Result<PressureJet> {
    if beta == 0.0 {
        let p = thermo_map_closed_form(point.v, point.e)?;
        return Ok(PressureJet { p: p.pressure(), grad: [1.0, 0.0], hess: [[0.0; 2]; 2] });
    }
    let solver = ThermoSolver::around(spec, beta, point.tau, point.b)?;
    let base = solver.solve(point.v, point.e, point.tau, point.b)?;
    let grad_at = |dv: f64, de: f64| -> Result<[f64; 2]> {
        let q = solver.solve(point.v + dv, point.e + de, base.tau, base.b)?;
        Ok(solver.pressure_gradient(q.tau, q.b))
    };
    let diff = |h: f64| -> Result<Mat2> {
        let (vp, vm) = (grad_at(h, 0.0)?, grad_at(-h, 0.0)?);
        let (ep, em) = (grad_at(0.0, h)?, grad_at(0.0, -h)?);
        let mixed = 0.5 * ((vp[1] - vm[1]) + (ep[0] - em[0])) / (2.0 * h);
        Ok([[(vp[0] - vm[0]) / (2.0 * h), mixed], [mixed, (ep[1] - em[1]) / (2.0 * h)]])
    };
    let (d1, d2) = (diff(FD_STEP)?, diff(FD_STEP / 2.0)?);
    let mut hess = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            hess[a][b] = (4.0 * d2[a][b] - d1[a][b]) / 3.0;
        }
    }
    Ok(PressureJet { p: base.pressure(), grad: solver.pressure_gradient(base.tau, base.b), hess })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum UniversalityClass {
    #[serde(rename = "KPZ")]
    Kpz,
    #[serde(rename = "mod. KPZ")]
    ModKpz,
    #[serde(rename = "Diff")]
    Diff,
    #[serde(rename = "3/2-Levy")]
    Levy32,
    #[serde(rename = "5/3-Levy")]
    Levy53,
    #[serde(rename = "Gold-Levy")]
    GoldLevy,
}

impl UniversalityClass {
    pub fn name(&self) -> &'static str {
        match self {
            UniversalityClass::Kpz => "KPZ",
            UniversalityClass::ModKpz => "mod. KPZ",
            UniversalityClass::Diff => "Diff",
            UniversalityClass::Levy32 => "3/2-Levy",
            UniversalityClass::Levy53 => "5/3-Levy",
            UniversalityClass::GoldLevy => "Gold-Levy",
        }
    }
}

/// Which classification table a pattern was read from. `SwappedII` is
/// table II with the two modes relabelled, covering `G¹₁₁ = 0 ≠ G²₂₂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Table {
    I,
    II,
    III,
    SwappedII,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub mode1: UniversalityClass,
    pub mode2: UniversalityClass,
    pub table: Table,
}

/// Lookup on the zero/non-zero pattern of `(G¹₁₁, G¹₂₂, G²₁₁, G²₂₂)`.
pub fn classify_pattern(g1_11: bool, g1_22: bool, g2_11: bool, g2_22: bool) -> Classification {
    use UniversalityClass::*;
    let c = |mode1, mode2, table| Classification { mode1, mode2, table };
    match (g1_11, g2_22) {
        (true, true) => c(Kpz, Kpz, Table::I),
        (true, false) => match (g1_22, g2_11) {
            (_, true) => c(Kpz, Levy53, Table::II),
            (true, false) => c(ModKpz, Diff, Table::II),
            (false, false) => c(Kpz, Diff, Table::II),
        },
        (false, false) => match (g1_22, g2_11) {
            (true, true) => c(GoldLevy, GoldLevy, Table::III),
            (true, false) => c(Levy32, Diff, Table::III),
            (false, true) => c(Diff, Levy32, Table::III),
            (false, false) => c(Diff, Diff, Table::III),
        },
        (false, true) => {
            let s = classify_pattern(g2_22, g2_11, g1_22, g1_11);
            c(s.mode2, s.mode1, Table::SwappedII)
        }
    }
}

pub const ZERO_TOL: f64 = 1e-6;
pub const AMBIGUOUS_TOL: f64 = 1e-3;

/// Thresholds the four diagonal entries against `‖G‖_max` and looks up the
/// pattern.
pub fn classify(g1: &Mat2, g2: &Mat2) -> Result<Classification> {
    let scale = g1.iter().chain(g2.iter()).flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let entries = [("G1_11", g1[0][0]), ("G1_22", g1[1][1]), ("G2_11", g2[0][0]), ("G2_22", g2[1][1])];
    let mut nz = [false; 4];
    for (i, (name, val)) in entries.iter().enumerate() {
        let rel = if scale > 0.0 { val.abs() / scale } else { 0.0 };
        if rel >= ZERO_TOL && rel < AMBIGUOUS_TOL {
            return Err(OflError::ClassificationAmbiguous { entry: name, value: *val, relative: rel });
        }
        nz[i] = rel >= AMBIGUOUS_TOL;
    }
    Ok(classify_pattern(nz[0], nz[1], nz[2], nz[3]))
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeCouplingReport {
    pub point: ThermoPoint,
    pub beta: f64,
    pub theta_alpha: f64,
    pub jet: PressureJet,
    pub flux: [f64; 2],
    pub j: Mat2,
    /// Sound-mode velocity (mode 1).
    pub v_plus: f64,
    /// Heat-mode velocity (mode 2), zero for this flux.
    pub v_minus: f64,
    pub r: Mat2,
    pub rinv: Mat2,
    /// Rows are the coefficients of `(η̄, ζ̄)` in modes 1 and 2.
    pub modes: Mat2,
    pub h1: Mat2,
    pub h2: Mat2,
    pub g1: Mat2,
    pub g2: Mat2,
    pub class_pair: Option<Classification>,
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    mul(a, b)
}

/// Everything but the classification.
pub fn coupling_matrices(point: &ThermoPoint, spec: &PotentialSpec, beta: f64, theta_alpha: f64) -> Result<ModeCouplingReport> {
    let jet = pressure_jet(point, spec, beta)?;
    let (p, [pv, pe]) = (jet.p, jet.grad);
    let d = pv + p * pe;
    if !(d.abs() > 1e-12) {
        return Err(OflError::Degeneracy(d));
    }
    let ta = theta_alpha;
    let flux = [2.0 * ta * p, ta * p * p];
    let j = [[2.0 * ta * pv, 2.0 * ta * pe], [2.0 * ta * p * pv, 2.0 * ta * p * pe]];
    // Columns: sound eigenvector (1, P), heat eigenvector (P_e, -P_v).
    let rinv = [[1.0, pe], [p, -pv]];
    let r = [[pv / d, pe / d], [p / d, -1.0 / d]];
    let hp = jet.hess;
    let h1 = [[2.0 * ta * hp[0][0], 2.0 * ta * hp[0][1]], [2.0 * ta * hp[1][0], 2.0 * ta * hp[1][1]]];
    let mut h2 = [[0.0; 2]; 2];
    let g = [pv, pe];
    for a in 0..2 {
        for b in 0..2 {
            h2[a][b] = p * h1[a][b] + 2.0 * ta * g[a] * g[b];
        }
    }
    let s1 = mul(&mul(&transpose(&rinv), &h1), &rinv);
    let s2 = mul(&mul(&transpose(&rinv), &h2), &rinv);
    let gmat = |i: usize| -> Mat2 {
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                out[a][b] = 0.5 * (r[i][0] * s1[a][b] + r[i][1] * s2[a][b]);
            }
        }
        out
    };
    Ok(ModeCouplingReport {
        point: *point,
        beta,
        theta_alpha,
        jet,
        flux,
        j,
        v_plus: 2.0 * ta * d,
        v_minus: 0.0,
        r,
        rinv,
        modes: r,
        h1,
        h2,
        g1: gmat(0),
        g2: gmat(1),
        class_pair: None,
    })
}

pub fn mode_coupling(point: &ThermoPoint, spec: &PotentialSpec, beta: f64, theta_alpha: f64) -> Result<ModeCouplingReport> {
    let mut rep = coupling_matrices(point, spec, beta, theta_alpha)?;
    rep.class_pair = Some(classify(&rep.g1, &rep.g2)?);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        let p = thermo_map(0.0, 0.5, &PotentialSpec::harmonic(), 0.0).unwrap();
        assert_eq!((p.tau, p.b), (0.0, 1.0));
        let p = thermo_map(1.0, 1.5, &PotentialSpec::harmonic(), 0.0).unwrap();
        assert_eq!((p.tau, p.b), (0.5, 0.5));
        assert!(thermo_map(1.0, 0.4, &PotentialSpec::harmonic(), 0.0).is_err());
    }

    #[test]
    fn beta_zero_couplings() {
        let s = PotentialSpec::harmonic();
        let p = thermo_map(0.0, 0.5, &s, 0.0).unwrap();
        let r = mode_coupling(&p, &s, 0.0, 1.0).unwrap();
        assert!((r.j[0][0] - 2.0).abs() < 1e-10 && r.j[0][1].abs() < 1e-10 && r.j[1][0].abs() < 1e-10);
        assert!((r.g2[0][0] + 1.0).abs() < 1e-10);
        assert!(r.g1.iter().flatten().all(|v| v.abs() < 1e-10));
        let c = r.class_pair.unwrap();
        assert_eq!((c.mode1, c.mode2), (UniversalityClass::Diff, UniversalityClass::Levy32));
    }
}
