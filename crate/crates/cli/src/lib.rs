//! Library side of the pipeline executable: configuration, run manifests,
//! the subcommand implementations, and the exit-code table.

pub mod config;
pub mod manifest;
pub mod ops;

/// Exit codes, stable for scripting: 0 success, 2 configuration or usage
/// error, 3 backend error, 4 validation error, 5 id mismatch, 1 anything
/// else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(cli) = cause.downcast_ref::<CliError>() {
            return match cli {
                CliError::Config(_) => 2,
                CliError::Backend(_) => 3,
                CliError::Validation(_) => 4,
                CliError::IdMismatch(_) => 5,
            };
        }
        if let Some(extract) = cause.downcast_ref::<radlt::extraction::ExtractError>() {
            return match extract {
                radlt::extraction::ExtractError::Backend(_)
                | radlt::extraction::ExtractError::Partial(_) => 3,
                radlt::extraction::ExtractError::Validation(_)
                | radlt::extraction::ExtractError::MalformedResponse { .. } => 4,
                _ => 1,
            };
        }
        if cause.downcast_ref::<radlt::extraction::BackendError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<radlt::schema::ValidationError>().is_some() {
            return 4;
        }
        if let Some(metrics) = cause.downcast_ref::<radlt::metrics::MetricsError>() {
            return match metrics {
                radlt::metrics::MetricsError::IdMismatch(..)
                | radlt::metrics::MetricsError::DuplicateReportId(_) => 5,
                _ => 1,
            };
        }
        if let Some(adapter) = cause.downcast_ref::<radlt::adapters::AdapterError>() {
            return match adapter {
                radlt::adapters::AdapterError::IdMismatch { .. } => 5,
                _ => 4,
            };
        }
        if cause.downcast_ref::<radlt::studystats::StudyError>().is_some() {
            return 4;
        }
    }
    1
}

mod thiserror_shim {
    /// Coarse error classes raised directly by the CLI layer.
    #[derive(Debug)]
    pub enum CliError {
        Config(String),
        Backend(String),
        Validation(String),
        IdMismatch(String),
    }

    impl std::fmt::Display for CliError {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            match self {
                CliError::Config(m) => write!(f, "configuration error: {m}"),
                CliError::Backend(m) => write!(f, "backend error: {m}"),
                CliError::Validation(m) => write!(f, "validation error: {m}"),
                CliError::IdMismatch(m) => write!(f, "id mismatch: {m}"),
            }
        }
    }

    impl std::error::Error for CliError {}
}

pub use thiserror_shim::CliError;
