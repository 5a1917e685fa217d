use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("unknown team `{name}`{}", suggestion_suffix(.suggestions))]
    UnknownTeam {
        name: String,
        suggestions: Vec<String>,
    },

    #[error("mode finding did not converge after {iterations} iterations (max |gradient| = {gradient_norm:.3e})")]
    ModeNotConverged {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn suggestion_suffix(suggestions: &[String]) -> String {
    if suggestions.is_empty() {
        String::new()
    } else {
        format!("; did you mean: {}?", suggestions.join(", "))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
