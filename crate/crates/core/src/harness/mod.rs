//! Run configuration, charge ingestion and the sparse-grid convergence study.

mod charges;
mod config;
mod report;
mod study;

pub use charges::{ingest_charges, parse_pqr, shifted_charges, IngestReport};
pub use config::{
    BoundsBlock, ChargesBlock, CoefficientsBlock, GeometryBlock, GridBlock, InlineCharge, OutputBlock, RegionBlock,
    RunConfig, SolverBlock, SparseGridBlock, StochasticBlock,
};
pub use study::{
    fit_rate, records_csv, records_svg, run_study, solve_knot, ConvergenceRecord, KnotSolve, RateFit, StudyOutput,
    StudySetup, CSV_HEADER,
};
pub use report::{
    bounds_input, bounds_report, gaussian_l2_norms, nominal_solve, region_report, BoundsReport, NominalSolve,
    RegionReport,
};
