//! Angular error metrics, per-test-set reports and the feature-set sweep.

mod metrics;
mod report;
mod sweep;

pub use metrics::{abs_errors_deg, bootstrap_mean_ci, mae_degrees, BOOTSTRAP_RESAMPLES};
pub use report::{checkpoint_id, evaluate, AngleMae, EvalReport, GroupMae, Prediction};
pub use sweep::{
    canonical_order, row_seed, run_sweep, table_index, RowTraining, SourceCsvRow, SweepCsvRow, SweepObserver, SweepPlan, SweepResult, SweepRow,
    TestSet,
};
