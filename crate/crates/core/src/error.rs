use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Simulation configuration violates an alignment or range invariant.
    Config(String),
    /// An input lies outside the domain of a formula (e.g. `rtt < min_rtt`).
    Domain(String),
    /// A window index ran past the available history.
    Index { t: usize, k: usize },
    /// Log and trace cover different durations.
    DurationMismatch { log_us: u64, trace_us: u64 },
    /// No ACK was observed, so delay statistics are undefined.
    EmptyLog,
    /// The optimizer saw identical returns for the whole population.
    Optimizer(String),
    /// No rollout satisfied the delay constraint during trace selection.
    NoFeasibleTrace { tau_ms: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "invalid simulation config: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Index { t, k } => {
                write!(f, "window of {k} differences does not fit before index {t}")
            }
            Error::DurationMismatch { log_us, trace_us } => {
                write!(f, "episode log covers {log_us} us but trace covers {trace_us} us")
            }
            Error::EmptyLog => f.write_str("episode log contains no ACKs"),
            Error::Optimizer(msg) => write!(f, "optimizer failure: {msg}"),
            Error::NoFeasibleTrace { tau_ms } => write!(f, "no rollout reached the delay threshold of {tau_ms:.3} ms"),
        }
    }
}

impl core::error::Error for Error {}
