//! Matrix files, built-in problems and run output.

mod generators;
mod mtx;
mod record;

pub use generators::{generate_builtin, GeneratorKind, GeneratorParams};
pub use mtx::{read_matrix_market, read_matrix_market_from, write_matrix_market, write_matrix_market_to};
pub use record::{
    write_history, write_history_to, HistoryFormat, ProblemInfo, RunRecord, StepTimes,
    HISTORY_COLUMNS, SCHEMA_VERSION,
};
