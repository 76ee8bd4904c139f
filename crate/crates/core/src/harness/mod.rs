//! Seeded benchmark protocols: inversion quality, edit quality (edit
//! deviation between the initial and the updated generator), leave-one-out
//! ablations and the latent-space ablation, plus report emission.

mod methods;
mod report;
mod run;
mod targets;
mod toy;

pub use methods::{ablation_flag_map, Method, MethodOutput};
pub use report::{
    emit_report, load_report, read_csv_rows, CellFailure, CsvRow, MetricColumn, Report, ReportFormat, ReportRow,
    REPORT_SCHEMA_VERSION,
};
pub use run::{
    edit_deviation, run_benchmark, run_edit_quality, run_inversion_quality, run_latent_space_ablation,
    run_leave_one_out, BenchmarkSpec, CellResult, EditDeviation,
};
pub use targets::{checkerboard_gradient, shifted_generator, TargetKind};
pub use toy::{toy_bank, toy_generator, TOY_BANK_NORM, TOY_BANK_SEED, TOY_GENERATOR_SEED};
