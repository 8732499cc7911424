use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OflError {
    #[error("potential: non-finite value at x={x}, beta={beta}")]
    Overflow { x: f64, beta: f64 },
    #[error("gibbs: partition function diverges ({0})")]
    Divergence(String),
    #[error("gibbs: envelope failure ({0})")]
    EnvelopeFailure(String),
    #[error("{module}: parameter error: {msg}")]
    Parameter { module: &'static str, msg: String },
    #[error("fields: moving frame leaves the window (|v|T={shift}, limit {limit})")]
    WindowOverflow { shift: f64, limit: f64 },
    #[error("chain_dynamics: step size underflow at t={t} (h={h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("correlation: kernel is not symmetric at ({i}, {j})")]
    AsymmetricKernel { i: usize, j: usize },
    #[error("{module}: shape mismatch: {msg}")]
    Shape { module: &'static str, msg: String },
    #[error("spectral: aliasing, kernel mass inside the period is {mass}")]
    Aliasing { mass: f64 },
    #[error("nlfh: no convergence (last iterate tau={tau}, b={b})")]
    NoConvergence { tau: f64, b: f64 },
    #[error("nlfh: degenerate Jacobian (d={0})")]
    Degeneracy(f64),
    #[error("nlfh: ambiguous classification, {entry}={value} (relative {relative})")]
    ClassificationAmbiguous { entry: &'static str, value: f64, relative: f64 },
    #[error("spde: blow-up, max|u|={0}")]
    BlowUp(f64),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl OflError {
    pub fn param(module: &'static str, msg: impl Into<String>) -> Self {
        OflError::Parameter { module, msg: msg.into() }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, OflError::Config(_))
    }
}

impl From<std::io::Error> for OflError {
    fn from(e: std::io::Error) -> Self {
        OflError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OflError>;
