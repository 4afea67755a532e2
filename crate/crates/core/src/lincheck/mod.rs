//! History recording, schedule exploration and a brute-force
//! linearizability checker.

mod checker;
mod explore;
mod history;

pub use checker::{check, CheckConfig, CheckError, Verdict, Witness};
pub use explore::{explore, step, ExploreConfig, ExploreReport, Program};
pub use history::{History, HistoryError, OpRecord, Recorder, ThreadLog};
