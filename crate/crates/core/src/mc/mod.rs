//! Monte Carlo laboratory: designs, replication driver and table reports.

pub mod design;
pub mod replicate;
pub mod report;

pub use design::{gen_design, gen_design_with_errors, DesignSpec, Truth};
pub use replicate::{run_replications, Estimator, GmmRep, LsRep, McConfig, ProbitRep, RepRecord};
pub use report::{summarize, CoefMetrics, MadVariant, McReport, TableLayout, Timing};
