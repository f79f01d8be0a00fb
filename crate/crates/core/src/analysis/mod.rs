//! Error metrics, residual loss, error/variance correlation and reports.

pub mod correlation;
pub mod metrics;
pub mod report;

pub use correlation::{dtw, pearson, DtwResult};
pub use metrics::{relative_l2_error_acdm, relative_l2_error_refiner, residual_loss, AcdmError, ErrorMode};
pub use report::{correlation_report, CorrelationReport, ResidualSummary, TaskKind};
