//! Simulated annotation and benchmarking.

pub mod bench;
pub mod sim;

pub use bench::{
    aggregate, bench_shape, read_report, report_csv, report_table, run_benchmark, write_report, BenchConfig, BenchShape,
    BenchmarkReport, CategoryStats, ConfigEcho, NocStats, PartResult,
};
pub use sim::{noc, simulate_part, SimConfig, Step, Trajectory};
