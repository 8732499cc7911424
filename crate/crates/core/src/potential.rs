//! Convex potentials with derivative access up to order five, their
//! small-amplitude rescaling `V_β(x) = β⁻² V(βx)` and the Taylor data that
//! selects the scaling regime.

use crate::error::{OflError, Result};
use std::fmt;
use std::sync::Arc;

pub const MAX_ORDER: usize = 5;

pub type DerivFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Family {
    Harmonic,
    FpuAlpha(f64),
    Toda,
    Custom { name: String, deriv: DerivFn },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Harmonic => write!(f, "Harmonic"),
            Family::FpuAlpha(a) => write!(f, "FpuAlpha({a})"),
            Family::Toda => write!(f, "Toda"),
            Family::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub family: Family,
    pub gamma_v: f64,
}

/// `e^{-y} - 1 + y` without cancellation near zero.
fn toda0(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let mut term = y * y / 2.0;
        let mut sum = term;
        for k in 3..20 {
            term *= -y / k as f64;
            sum += term;
        }
        sum
    } else {
        (-y).exp_m1() + y
    }
}

impl PotentialSpec {
    pub fn harmonic() -> Self {
        PotentialSpec { family: Family::Harmonic, gamma_v: 1.0 }
    }

    pub fn fpu_alpha(alpha: f64) -> Self {
        PotentialSpec { family: Family::FpuAlpha(alpha), gamma_v: 1.0 }
    }

    pub fn toda() -> Self {
        PotentialSpec { family: Family::Toda, gamma_v: 1.0 }
    }

    pub fn custom(name: &str, gamma_v: f64, deriv: DerivFn) -> Self {
        PotentialSpec { family: Family::Custom { name: name.to_string(), deriv }, gamma_v }
    }

    pub fn with_gamma_v(mut self, gamma_v: f64) -> Self {
        self.gamma_v = gamma_v;
        self
    }

    pub fn name(&self) -> String {
        match &self.family {
            Family::Harmonic => "harmonic".into(),
            Family::FpuAlpha(_) => "fpu_alpha".into(),
            Family::Toda => "toda".into(),
            Family::Custom { name, .. } => name.clone(),
        }
    }

    pub fn is_harmonic(&self) -> bool {
        matches!(self.family, Family::Harmonic)
    }

    /// `V^{(order)}(x)`; orders above five return 0 for the built-in
    /// polynomial families and are not defined otherwise.
    pub fn deriv(&self, order: usize, x: f64) -> f64 {
        match &self.family {
            Family::Harmonic => match order {
                0 => 0.5 * x * x,
                1 => x,
                2 => 1.0,
                _ => 0.0,
            },
            Family::FpuAlpha(a) => match order {
                0 => x * x * (0.5 + x * (a + 0.25 * x)),
                1 => x * (1.0 + x * (3.0 * a + x)),
                2 => 1.0 + x * (6.0 * a + 3.0 * x),
                3 => 6.0 * a + 6.0 * x,
                4 => 6.0,
                _ => 0.0,
            },
            Family::Toda => match order {
                0 => toda0(x),
                1 => -(-x).exp_m1(),
                k if k % 2 == 0 => (-x).exp(),
                _ => -(-x).exp(),
            },
            Family::Custom { deriv, .. } => deriv(order, x),
        }
    }
}

/// d^order/dx^order of `β⁻² V(βx)`, i.e. `β^{order-2} V^{(order)}(βx)`.
pub fn eval_scaled(spec: &PotentialSpec, beta: f64, order: usize, x: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(OflError::param("potential", format!("beta must be positive, got {beta}")));
    }
    let v = beta.powi(order as i32 - 2) * spec.deriv(order, beta * x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OflError::Overflow { x, beta })
    }
}

/// Infallible variant for hot loops where the argument range is controlled.
#[inline]
pub fn scaled(spec: &PotentialSpec, beta: f64, order: usize, x: f64) -> f64 {
    beta.powi(order as i32 - 2) * spec.deriv(order, beta * x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KStar {
    Finite(u32),
    /// The harmonic chain: no anharmonic Taylor coefficient at all.
    Infinite,
    /// c3 = c4 = c5 = 0 for a non-harmonic potential; only derivatives up
    /// to order five are accessible, so kStar is only known to exceed 5.
    AboveFive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorData {
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub k_star: KStar,
}

pub fn taylor_data(spec: &PotentialSpec) -> TaylorData {
    let c = [spec.deriv(3, 0.0), spec.deriv(4, 0.0), spec.deriv(5, 0.0)];
    let k_star = if spec.is_harmonic() {
        KStar::Infinite
    } else {
        match c.iter().position(|v| v.abs() > 1e-10) {
            Some(i) => KStar::Finite(3 + i as u32),
            None => KStar::AboveFive,
        }
    };
    TaylorData { c3: c[0], c4: c[1], c5: c[2], k_star }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub severity: Severity,
    pub witness: f64,
    pub worst: f64,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed || e.severity == Severity::Warning)
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Sampled checks of smoothness-normalisation, convexity, non-negativity
/// (warning only) and at-most-exponential growth on `[-range, range]`.
///
/// Growth passes for order k when `|V^{(k)}(x)| e^{-γ_V |x|}` on the outer
/// eighths of the grid stays below twice its maximum on the interior.
pub fn validate_assumptions(spec: &PotentialSpec, sample_range: f64, n_samples: usize) -> ValidationReport {
    let n = n_samples.max(100);
    let grid: Vec<f64> = (0..n).map(|i| -sample_range + 2.0 * sample_range * i as f64 / (n - 1) as f64).collect();
    let mut entries = vec![];

    let norm = [(0, 0.0), (1, 0.0), (2, 1.0)];
    for (k, target) in norm {
        let dev = (spec.deriv(k, 0.0) - target).abs();
        entries.push(CheckEntry {
            name: format!("normalization_d{k}"),
            passed: dev <= 1e-12,
            severity: Severity::Error,
            witness: 0.0,
            worst: dev,
        });
    }

    let (wx, wv) = grid
        .iter()
        .map(|&x| (x, spec.deriv(2, x)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    entries.push(CheckEntry { name: "convexity".into(), passed: wv >= -1e-12, severity: Severity::Error, witness: wx, worst: wv });

    let (wx, wv) = grid
        .iter()
        .map(|&x| (x, spec.deriv(0, x)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    entries.push(CheckEntry {
        name: "non_negativity".into(),
        passed: wv >= -1e-12,
        severity: Severity::Warning,
        witness: wx,
        worst: wv,
    });

    let q = n / 8;
    for k in 0..=MAX_ORDER {
        let w: Vec<f64> = grid.iter().map(|&x| spec.deriv(k, x).abs() * (-spec.gamma_v * x.abs()).exp()).collect();
        let finite = w.iter().all(|v| v.is_finite());
        let inner = w[q..n - q].iter().cloned().fold(0.0, f64::max);
        let outer = w[..q].iter().chain(&w[n - q..]).cloned().fold(0.0, f64::max);
        let bounded = outer <= 2.0 * inner + 1e-12;
        let (wi, wv) = w.iter().enumerate().fold((0, 0.0f64), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        entries.push(CheckEntry {
            name: format!("growth_d{k}"),
            passed: finite && bounded,
            severity: Severity::Error,
            witness: grid[wi],
            worst: wv,
        });
    }
    ValidationReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_examples() {
        assert_eq!(eval_scaled(&PotentialSpec::harmonic(), 0.3, 0, 2.0).unwrap(), 2.0);
        let v = eval_scaled(&PotentialSpec::toda(), 1e-6, 1, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-5);
        assert!(eval_scaled(&PotentialSpec::toda(), 0.0, 1, 1.0).is_err());
        assert!(matches!(eval_scaled(&PotentialSpec::toda(), 1.0, 0, -800.0), Err(OflError::Overflow { .. })));
    }

    #[test]
    fn fpu_first_derivative_matches_central_difference() {
        let s = PotentialSpec::fpu_alpha(0.5);
        let h = 1e-5;
        let fd = (eval_scaled(&s, 0.1, 0, 1.0 + h).unwrap() - eval_scaled(&s, 0.1, 0, 1.0 - h).unwrap()) / (2.0 * h);
        assert!((eval_scaled(&s, 0.1, 1, 1.0).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn taylor_examples() {
        let t = taylor_data(&PotentialSpec::harmonic());
        assert_eq!((t.c3, t.c4, t.k_star), (0.0, 0.0, KStar::Infinite));
        let t = taylor_data(&PotentialSpec::toda());
        assert_eq!((t.c3, t.c4, t.k_star), (-1.0, 1.0, KStar::Finite(3)));
        let t = taylor_data(&PotentialSpec::fpu_alpha(0.25));
        assert_eq!((t.c3, t.c4, t.k_star), (1.5, 6.0, KStar::Finite(3)));
        let t = taylor_data(&PotentialSpec::fpu_alpha(0.0));
        assert_eq!(t.k_star, KStar::Finite(4));
    }

    #[test]
    fn convexity_examples() {
        let r = validate_assumptions(&PotentialSpec::harmonic(), 10.0, 1000);
        assert!(r.entries.iter().all(|e| e.passed));
        let r = validate_assumptions(&PotentialSpec::fpu_alpha(0.5), 10.0, 2001);
        assert!(r.entry("convexity").unwrap().passed);
        let r = validate_assumptions(&PotentialSpec::fpu_alpha(0.7), 10.0, 2001);
        let c = r.entry("convexity").unwrap();
        assert!(!c.passed);
        assert!((c.witness + 0.7).abs() < 0.02);
        assert!(!r.passed());
    }

    #[test]
    fn toda_series_branch_is_continuous() {
        for y in [0.0999999, 0.1000001, -0.0999999, -0.1000001] {
            let direct = (-y as f64).exp() - 1.0 + y;
            assert!((toda0(y) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn growth_check_flags_superexponential_potential() {
        let s = PotentialSpec::custom(
            "cosh2",
            1.0,
            Arc::new(|k, x: f64| {
                let c = (2.0 * x).cosh();
                let s = (2.0 * x).sinh();
                let p = [c, s, c, s, c, s][k] * 2f64.powi(k as i32);
                if k == 0 { (p - 1.0) / 4.0 } else { p / 4.0 }
            }),
        );
        let r = validate_assumptions(&s, 10.0, 500);
        assert!(!r.entry("growth_d0").unwrap().passed);
    }
}
