//! Dynamic reservoir forward model: condensate-gas ratios, pressure match
//! through the P/z trend, compaction subsidence, and a small RMSE history match.

mod cgr;
mod history;
mod pvt;
mod subsidence;

pub use cgr::{cgr_cumulative, cgr_instantaneous, read_offtake_csv, OfftakeRecord, OfftakeSeries};
pub use history::{
    history_match, read_benchmarks_csv, read_pressure_observations_csv, read_ranges_csv, write_ranked_csv, Benchmark, HistoryMatchProblem, HistoryMatchResult,
    ParamRange, PressureObservation, RankedModel, Region, SubsidenceSetup,
};
pub use pvt::{pressure_match, read_pvt_csv, GasPvt, ZTable, PVT_DAMPING, PVT_MAX_ITER, PVT_TOL};
pub use subsidence::{subsidence, CompactionBlock};
