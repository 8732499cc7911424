//! Smooth, rapidly decaying test functions with analytic derivatives up to
//! order three.

use crate::error::{OflError, Result};
use crate::quad::integrate;
use std::fmt;
use std::sync::Arc;

pub type TestFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Shape {
    /// `exp(-u²/2)`, `u = (x - center)/sigma`.
    Gaussian { sigma: f64 },
    /// `exp(-1/(1-u²))` on `|u| < 1`, `u = (x - center)/radius`.
    Bump { radius: f64 },
    /// `He_k(u) exp(-u²/2)` with the probabilists' Hermite polynomial.
    Hermite { order: usize, sigma: f64 },
    /// User-supplied `(x, derivative order) -> value` with a support radius.
    Custom { name: String, f: TestFn, radius: f64 },
}

#[derive(Clone)]
pub struct TestFunction {
    pub shape: Shape,
    pub center: f64,
    pub amplitude: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match &self.shape {
            Shape::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
            Shape::Bump { radius } => format!("bump(radius={radius})"),
            Shape::Hermite { order, sigma } => format!("hermite(order={order}, sigma={sigma})"),
            Shape::Custom { name, .. } => format!("custom({name})"),
        };
        write!(f, "{s} at {} x {}", self.center, self.amplitude)
    }
}

fn hermite_he(k: usize, u: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, u);
    if k == 0 {
        return h0;
    }
    for i in 1..k {
        let h2 = u * h1 - i as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

impl TestFunction {
    pub fn gaussian(sigma: f64) -> Self {
        TestFunction { shape: Shape::Gaussian { sigma }, center: 0.0, amplitude: 1.0 }
    }

    pub fn bump(radius: f64) -> Self {
        TestFunction { shape: Shape::Bump { radius }, center: 0.0, amplitude: 1.0 }
    }

    pub fn hermite(order: usize, sigma: f64) -> Self {
        TestFunction { shape: Shape::Hermite { order, sigma }, center: 0.0, amplitude: 1.0 }
    }

    pub fn custom(name: &str, radius: f64, f: TestFn) -> Self {
        TestFunction { shape: Shape::Custom { name: name.into(), f, radius }, center: 0.0, amplitude: 1.0 }
    }

    pub fn zero() -> Self {
        TestFunction { shape: Shape::Gaussian { sigma: 1.0 }, center: 0.0, amplitude: 0.0 }
    }

    pub fn centered(mut self, c: f64) -> Self {
        self.center = c;
        self
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.amplitude *= a;
        self
    }

    /// Parses `gaussian:SIGMA`, `bump:RADIUS` or `hermite:ORDER:SIGMA`.
    pub fn parse(s: &str) -> Result<Self> {
        if s.trim() == "zero" {
            return Ok(TestFunction::zero());
        }
        // `gaussian:0.1@0.2` centres the function at 0.2.
        if let Some((f, c)) = s.split_once('@') {
            let c: f64 = c.trim().parse().map_err(|_| OflError::Config(format!("test function '{s}': bad centre")))?;
            return Ok(TestFunction::parse(f)?.centered(c));
        }
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| OflError::Config(format!("test function '{s}' is missing a parameter")))?
                .parse::<f64>()
                .map_err(|_| OflError::Config(format!("test function '{s}': bad number")))
        };
        match parts[0] {
            "gaussian" => Ok(TestFunction::gaussian(num(1)?)),
            "bump" => Ok(TestFunction::bump(num(1)?)),
            "hermite" => Ok(TestFunction::hermite(num(1)? as usize, num(2)?)),
            other => Err(OflError::Config(format!("unknown test function '{other}'"))),
        }
    }

    /// Radius around the center outside which the function is below 1e-30
    /// of its scale.
    pub fn support_radius(&self) -> f64 {
        match &self.shape {
            Shape::Gaussian { sigma } => 12.0 * sigma,
            Shape::Hermite { order, sigma } => (12.0 + 2.0 * (*order as f64).sqrt()) * sigma,
            Shape::Bump { radius } => *radius,
            Shape::Custom { radius, .. } => *radius,
        }
    }

    pub fn eval(&self, x: f64, order: usize) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let y = x - self.center;
        let v = match &self.shape {
            Shape::Gaussian { sigma } => {
                let u = y / sigma;
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                sign * hermite_he(order, u) * (-0.5 * u * u).exp() / sigma.powi(order as i32)
            }
            Shape::Hermite { order: k, sigma } => {
                let u = y / sigma;
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                sign * hermite_he(k + order, u) * (-0.5 * u * u).exp() / sigma.powi(order as i32)
            }
            Shape::Bump { radius } => {
                let u = y / radius;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - u * u;
                    let f = (-1.0 / s).exp();
                    let g1 = -2.0 * u / (s * s);
                    let g2 = -2.0 / (s * s) - 8.0 * u * u / (s * s * s);
                    let g3 = -24.0 * u / s.powi(3) - 48.0 * u.powi(3) / s.powi(4);
                    let d = match order {
                        0 => f,
                        1 => g1 * f,
                        2 => (g2 + g1 * g1) * f,
                        3 => (g3 + 3.0 * g1 * g2 + g1.powi(3)) * f,
                        _ => f64::NAN,
                    };
                    d / radius.powi(order as i32)
                }
            }
            Shape::Custom { f, .. } => f(y, order),
        };
        self.amplitude * v
    }

    /// `∫ φ^{(a)} ψ^{(b)} dx` by adaptive quadrature over the joint support.
    pub fn inner(&self, a: usize, other: &TestFunction, b: usize) -> f64 {
        let lo = (self.center - self.support_radius()).max(other.center - other.support_radius());
        let hi = (self.center + self.support_radius()).min(other.center + other.support_radius());
        if hi <= lo {
            return 0.0;
        }
        integrate(|x| self.eval(x, a) * other.eval(x, b), lo, hi, 1e-15, 1e-12).value
    }

    pub fn norm2_sq(&self, order: usize) -> f64 {
        self.inner(order, self, order)
    }
}
