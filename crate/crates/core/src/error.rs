use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Pool snapshots disagree on the price by more than the balancedness tolerance.
    #[error("pools are not balanced: {}", describe_imbalance(.offending, *.tolerance))]
    Imbalance {
        /// `(index, relative deviation from the aggregate price)` per offending pool.
        offending: Vec<(usize, f64)>,
        tolerance: f64,
    },

    /// Malformed input file or job description. `location` names the row or field.
    #[error("{location}: {message}")]
    Config { location: String, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }
}

fn describe_imbalance(offending: &[(usize, f64)], tolerance: f64) -> String {
    let pools: Vec<String> = offending
        .iter()
        .map(|(i, dev)| format!("pool {i} deviates {:.3}%", dev * 100.0))
        .collect();
    format!("{} (tolerance {:.3}%)", pools.join(", "), tolerance * 100.0)
}
