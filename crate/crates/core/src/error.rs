use thiserror::Error;

/// Errors produced by design construction, criterion evaluation and optimization.
#[derive(Debug, Error)]
pub enum DesignError {
    /// Invalid user input; `path` locates the offending field (e.g. "toxicity.params[1]").
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },

    /// The information matrix cannot support the requested estimation task.
    #[error("singular design: information matrix has rank {rank}, but rank {required} is required")]
    SingularDesign { rank: usize, required: usize },

    /// Minimally supported D-optimal theory requires distinct half-maximal
    /// parameters across the two outcomes for MM/MM, Emax/Emax and MM/Emax pairs.
    #[error("half-maximal parameters must differ between efficacy and toxicity models (both are {value})")]
    EqualHalfMax { value: f64 },

    /// No closed-form minimally supported design exists for this family pair.
    #[error("no closed-form minimal design for {efficacy}/{toxicity}; run `optimize --k {minimal_k}` instead")]
    NoClosedForm {
        efficacy: String,
        toxicity: String,
        minimal_k: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("optimizer did not converge: {0}")]
    NonConverged(String),
}

pub type Result<T> = std::result::Result<T, DesignError>;

impl DesignError {
    /// Prefix the field path of an `Invalid` error with an outer object name.
    /// Leaves every other variant untouched.
    pub fn nest(self, prefix: &str) -> Self {
        match self {
            DesignError::Invalid { path, message } => DesignError::Invalid {
                path: if path.is_empty() {
                    prefix.to_string()
                } else {
                    format!("{prefix}.{path}")
                },
                message,
            },
            other => other,
        }
    }
}
