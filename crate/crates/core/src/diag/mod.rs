//! Metrics, traces, termination rules and independent oracles.

pub mod oracle;
pub mod rate;
pub mod reference;
pub mod stop;
pub mod trace;

pub use oracle::{
    check_contraction, check_lemma1, check_lemma1_with, duality_gap, enum_stats, enum_stats_batches,
    enum_stats_weighted, fd_grad, golden_section_max, numeric_conjugate, EnumStats, InequalityCheck,
};
pub use rate::{fit_linear_rate, RateFit};
pub use reference::{solve_reference, Reference, ReferenceCache, DEFAULT_REFERENCE_TOL};
pub use stop::{should_stop, StopRule};
pub use trace::{read_trace, trace_to_string, write_trace, TraceRecord, TRACE_HEADER};
