//! TOML experiment configuration. Every block rejects unknown keys and is
//! echoed, fully resolved, into the run manifest.

use ofl_core::chain::ScalingParams;
use ofl_core::potential::PotentialSpec;
use ofl_core::spde::SpdeConfig;
use ofl_core::spectral::LevyForm;
use ofl_core::test_function::TestFunction;
use ofl_core::{OflError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    #[serde(default)]
    pub potential: PotentialConf,
    #[serde(default)]
    pub gibbs: GibbsConf,
    #[serde(default)]
    pub chain: ChainConf,
    #[serde(default)]
    pub run: RunConf,
    #[serde(default)]
    pub field: FieldConf,
    #[serde(default)]
    pub correlate: CorrelateConf,
    #[serde(default)]
    pub kernel: KernelConf,
    #[serde(default)]
    pub poisson: PoissonConf,
    #[serde(default)]
    pub nlfh: NlfhConf,
    #[serde(default)]
    pub spde: SpdeConf,
    #[serde(default)]
    pub bg2: Bg2Conf,
    #[serde(default)]
    pub validate: ValidateConf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConf {
    /// `harmonic`, `fpu_alpha` or `toda`.
    pub family: String,
    pub alpha: f64,
    pub gamma_v: Option<f64>,
}

impl Default for PotentialConf {
    fn default() -> Self {
        PotentialConf { family: "harmonic".into(), alpha: 0.1, gamma_v: None }
    }
}

impl PotentialConf {
    pub fn spec(&self) -> Result<PotentialSpec> {
        let s = match self.family.as_str() {
            "harmonic" => PotentialSpec::harmonic(),
            "fpu_alpha" => PotentialSpec::fpu_alpha(self.alpha),
            "toda" => PotentialSpec::toda(),
            f => return Err(OflError::Config(format!("potential.family: unknown family '{f}'"))),
        };
        Ok(match self.gamma_v {
            Some(g) => s.with_gamma_v(g),
            None => s,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConf {
    /// Explicit `β`; otherwise `β = n^{-beta_exponent}`.
    pub beta: Option<f64>,
    pub beta_exponent: f64,
    pub n: usize,
    pub lambda: f64,
    pub b: f64,
    pub samples: usize,
}

impl Default for GibbsConf {
    fn default() -> Self {
        GibbsConf { beta: None, beta_exponent: 0.5, n: 128, lambda: 0.0, b: 1.0, samples: 10000 }
    }
}

impl GibbsConf {
    pub fn resolved_beta(&self) -> f64 {
        self.beta.unwrap_or((self.n as f64).powf(-self.beta_exponent))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConf {
    pub n: usize,
    pub a: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub beta_exp: f64,
    pub lambda: f64,
}

impl Default for ChainConf {
    fn default() -> Self {
        ChainConf { n: 128, a: 1.5, kappa: 0.0, gamma: 1.0, beta_exp: 0.5, lambda: 0.0 }
    }
}

impl ChainConf {
    pub fn params(&self) -> Result<ScalingParams> {
        let p = ScalingParams::new(self.a, self.kappa, self.gamma, self.beta_exp, self.lambda);
        p.validate(self.n).map_err(config_error)?;
        if self.n < 8 {
            return Err(OflError::Config(format!("chain.n must be at least 8, got {}", self.n)));
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConf {
    #[serde(rename = "T")]
    pub t: f64,
    pub ensemble: usize,
    pub seed: Option<u64>,
    pub ode_tol: f64,
    /// Record times; defaults to `[T]`.
    pub record: Vec<f64>,
    /// Members whose full trajectories are written by `simulate`.
    pub snapshots: usize,
}

impl Default for RunConf {
    fn default() -> Self {
        RunConf { t: 0.1, ensemble: 8, seed: None, ode_tol: 1e-9, record: vec![], snapshots: 1 }
    }
}

impl RunConf {
    pub fn record_times(&self) -> Vec<f64> {
        if self.record.is_empty() {
            vec![self.t]
        } else {
            self.record.clone()
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.t > 0.0) || self.ensemble == 0 || !(self.ode_tol > 0.0) {
            return Err(OflError::Config("run: T, ensemble and ode_tol must be positive".into()));
        }
        let r = self.record_times();
        if r.windows(2).any(|w| w[1] <= w[0]) || r.iter().any(|&t| !(0.0..=self.t).contains(&t)) {
            return Err(OflError::Config("run.record must be increasing within [0, T]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConf {
    pub phi: String,
    pub phi2: String,
    pub f1: f64,
    pub f2: f64,
}

impl Default for FieldConf {
    fn default() -> Self {
        FieldConf { phi: "gaussian:0.1".into(), phi2: "zero".into(), f1: 0.0, f2: 0.0 }
    }
}

pub fn test_function(s: &str) -> Result<TestFunction> {
    TestFunction::parse(s)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateConf {
    /// `exact` (harmonic only) or `monte_carlo`.
    pub method: String,
    pub times: Vec<f64>,
    pub form: String,
    pub mirror: bool,
}

impl Default for CorrelateConf {
    fn default() -> Self {
        CorrelateConf { method: "exact".into(), times: vec![0.05, 0.1, 0.2], form: "lattice".into(), mirror: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Value(f64),
    Auto(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConf {
    pub gamma: f64,
    pub kappa: f64,
    pub times: Vec<f64>,
    pub m: usize,
    #[serde(rename = "L")]
    pub l: Length,
    pub form: String,
    /// Only grid points with `|x| <= x_max` are written.
    pub x_max: Option<f64>,
}

impl Default for KernelConf {
    fn default() -> Self {
        KernelConf { gamma: 1.0, kappa: 0.1, times: vec![0.05, 0.1, 0.2], m: 4096, l: Length::Auto("auto".into()), form: "lattice".into(), x_max: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonConf {
    pub phi: String,
    pub kappa: f64,
    pub gamma: f64,
    pub ns: Vec<usize>,
    pub width: f64,
}

impl Default for PoissonConf {
    fn default() -> Self {
        PoissonConf { phi: "gaussian:0.1".into(), kappa: 0.2, gamma: 1.0, ns: vec![64, 128, 256, 512], width: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlfhConf {
    pub beta: f64,
    pub theta_alpha: f64,
    /// `(v, e)` points.
    pub points: Vec<(f64, f64)>,
}

impl Default for NlfhConf {
    fn default() -> Self {
        NlfhConf { beta: 0.0, theta_alpha: 1.0, points: vec![(0.0, 1.0), (0.5, 2.0)] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdeConf {
    /// `ou` or `sbe`.
    pub mode: String,
    pub m: usize,
    pub nu: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub dt: f64,
    pub sigma: (f64, f64),
    pub blowup: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub ensemble: usize,
    pub record_every: usize,
    /// Decreasing box widths for the energy-estimate probe; empty to skip.
    pub eps: Vec<f64>,
    pub phi: String,
}

impl Default for SpdeConf {
    fn default() -> Self {
        let c = SpdeConfig::new(32, 0.5, 1.0, 1.0, 1.0 / 2048.0);
        SpdeConf {
            mode: "sbe".into(),
            m: c.m,
            nu: c.nu,
            lambda: c.lambda,
            d: c.d,
            dt: c.dt,
            sigma: c.sigma,
            blowup: c.blowup,
            t: 1.0,
            ensemble: 50,
            record_every: 64,
            eps: vec![],
            phi: "gaussian:0.1".into(),
        }
    }
}

impl SpdeConf {
    pub fn config(&self) -> Result<SpdeConfig> {
        let c = SpdeConfig { m: self.m, nu: self.nu, lambda: self.lambda, d: self.d, dt: self.dt, sigma: self.sigma, blowup: self.blowup };
        c.validate().map_err(config_error)?;
        Ok(c)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bg2Conf {
    pub ells: Vec<usize>,
    pub velocity: f64,
}

impl Default for Bg2Conf {
    fn default() -> Self {
        Bg2Conf { ells: vec![8, 16, 32, 64], velocity: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConf {
    pub range: f64,
    pub samples: usize,
}

impl Default for ValidateConf {
    fn default() -> Self {
        ValidateConf { range: 5.0, samples: 2000 }
    }
}

pub fn config_error(e: OflError) -> OflError {
    match e {
        OflError::Config(_) => e,
        other => OflError::Config(other.to_string()),
    }
}

pub fn levy_form(s: &str) -> Result<LevyForm> {
    LevyForm::parse(s).map_err(config_error)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OflError::Config(e.message().to_string()))
    }

    /// Checks everything the given subcommand will read.
    pub fn check(&self, command: &str) -> Result<()> {
        if let Some(e) = &self.experiment {
            if e.replace('_', "-") != command {
                return Err(OflError::Config(format!("config is for experiment '{e}', not '{command}'")));
            }
        }
        let chain = |c: &Config| -> Result<()> {
            c.potential.spec()?;
            c.chain.params()?;
            c.run.check()
        };
        match command {
            "sample" => {
                self.potential.spec()?;
                if !(self.gibbs.resolved_beta() > 0.0 && self.gibbs.b > 0.0) || self.gibbs.samples == 0 {
                    return Err(OflError::Config("gibbs: beta, b and samples must be positive".into()));
                }
            }
            "simulate" => chain(self)?,
            "qv" => {
                chain(self)?;
                test_function(&self.field.phi)?;
                test_function(&self.field.phi2)?;
            }
            "bg2" => {
                chain(self)?;
                test_function(&self.field.phi)?;
                if self.bg2.ells.iter().any(|&l| l < 2 || l > self.chain.n) || self.bg2.ells.is_empty() {
                    return Err(OflError::Config("bg2.ells must lie in 2..=chain.n".into()));
                }
            }
            "correlate" => {
                chain(self)?;
                levy_form(&self.correlate.form)?;
                if !matches!(self.correlate.method.as_str(), "exact" | "monte_carlo") {
                    return Err(OflError::Config(format!("correlate.method: unknown method '{}'", self.correlate.method)));
                }
                if self.correlate.method == "exact" && !self.potential.spec()?.is_harmonic() {
                    return Err(OflError::Config("correlate.method = exact needs the harmonic potential".into()));
                }
                if self.correlate.times.is_empty() || self.correlate.times.iter().any(|&t| !(t > 0.0)) {
                    return Err(OflError::Config("correlate.times must be positive".into()));
                }
            }
            "kernel" => {
                levy_form(&self.kernel.form)?;
                if let Length::Auto(s) = &self.kernel.l {
                    if s != "auto" {
                        return Err(OflError::Config(format!("kernel.L must be a number or \"auto\", got '{s}'")));
                    }
                }
                if self.kernel.times.is_empty() || self.kernel.times.iter().any(|&t| !(t > 0.0)) {
                    return Err(OflError::Config("kernel.times must be positive".into()));
                }
                if self.kernel.x_max.is_some_and(|x| !(x > 0.0)) {
                    return Err(OflError::Config("kernel.x_max must be positive".into()));
                }
            }
            "poisson" => {
                test_function(&self.poisson.phi)?;
                if self.poisson.ns.iter().any(|&n| n < 8) {
                    return Err(OflError::Config("poisson.ns must be at least 8".into()));
                }
            }
            "nlfh" => {
                self.potential.spec()?;
            }
            "spde" => {
                self.spde.config()?;
                if !matches!(self.spde.mode.as_str(), "ou" | "sbe") || self.spde.ensemble == 0 {
                    return Err(OflError::Config("spde.mode must be ou or sbe with a positive ensemble".into()));
                }
                test_function(&self.spde.phi)?;
            }
            "validate-potential" => {
                self.potential.spec()?;
            }
            other => return Err(OflError::Config(format!("unknown experiment '{other}'"))),
        }
        Ok(())
    }
}
