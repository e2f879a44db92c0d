//! Deterministic Monte Carlo scenarios reproducing the df_R study as CSV.
//!
//! Replicate `r` of a scenario draws from stream `(master_seed, r)`, so
//! results are identical for any thread count and any subset of replicates
//! can be recomputed independently.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod registry;
pub mod replicate;
pub mod result;
pub mod scenario;

pub use analysis::{relative_mse, selection_histogram, RelativeMse, SelectionHistogram};
pub use registry::{find, registry, scenario_names};
pub use result::{run_scenario, run_scenario_to, ExperimentResult, Record, SummaryRecord};
pub use scenario::{Kind, Ordering, Scenario, Sweep};
