//! Expression parsing, experiment runners and report emission on top of `equidist`.

pub mod experiments;
pub mod expr;
pub mod report;

pub use expr::{parse_f_expr, Expr, ExprError, Formula};
pub use report::{ExperimentConfig, ExperimentReport, Suite};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] equidist::Error),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
