use thiserror::Error;

/// Errors raised by model assembly, the numerical solvers and the scenario layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}` = {value}: {reason}")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("pressure profile of axle {axle} is not continuously differentiable (the flexible carcass needs dp/dxi)")]
    NonDifferentiablePressure { axle: usize },

    #[error("invalid pressure profile: {0}")]
    InvalidPressure(String),

    #[error("steady bristle profile of component {component} did not contract after {iterations} iterations (strict dissipativity violated for these parameters?)")]
    NonContraction { component: usize, iterations: usize },

    #[error("equilibrium Newton iteration stagnated after {iterations} iterations, last residual {residual:e}")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("CFL condition violated: dt = {dt:e} s exceeds the maximal admissible dt = {dt_max:e} s")]
    Cfl { dt: f64, dt_max: f64 },

    #[error("eigenvalue solver failed on a {size}x{size} matrix (max |entry| = {max_abs:e})")]
    Eigensolver { size: usize, max_abs: f64 },

    #[error("matrix is not Hurwitz (max real part {max_real:e}); the Lyapunov equation has no positive definite solution")]
    NotHurwitz { max_real: f64 },

    #[error("requested poles are not attainable: mode {mode} is not controllable")]
    Uncontrollable { mode: f64 },

    #[error("pair is not detectable: unobservable mode {mode} has nonnegative real part")]
    Undetectable { mode: f64 },

    #[error("invalid pole set: {0}")]
    InvalidPoles(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::NonDifferentiablePressure { .. }
            | Error::InvalidPressure(_)
            | Error::Cfl { .. }
            | Error::InvalidPoles(_)
            | Error::Config(_) => 2,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
