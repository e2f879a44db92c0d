//! Variable orderings, criterion sweeps over the subset size, model
//! selection, analytic optimal sizes and the real-data pipeline.

mod cv;
mod optimal;
mod order;
mod pipeline;
mod sweep;

pub use cv::{fold_assignment, kfold_cv, CvConfig};
pub use optimal::{analytic_optimal_size, err_f_curve, err_r_curve};
pub use order::{check_permutation, forward_rss_order, order_variables, prescient_order, OrderStrategy};
pub use pipeline::{ingest_csv, proportional_allocation, Imputation, Ingested, PipelineConfig, Transform};
pub use sweep::{criterion_sweep, select, Criterion, SweepOptions, SweepRow, SweepTable};
