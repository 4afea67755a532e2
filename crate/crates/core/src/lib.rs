//! Lazy, constant-time snapshots for lock-free data structures.
//!
//! A [`Camera`] is a shared timestamp counter. Every mutable pointer field of a
//! data structure is replaced by a versioned CAS object ([`VersionedCas`] or,
//! for recorded-once structures, [`DirectVersionedCas`]) that keeps the values
//! it has held in a timestamped version list. Taking a snapshot is a single
//! counter increment; reading a field "as of" a snapshot walks that field's
//! version list back to the first version no newer than the snapshot.
//!
//! On top of these primitives the crate provides three snapshot-enabled
//! structures whose multi-point queries are atomic:
//!
//! * [`MsQueue`]: Michael–Scott queue with `peek_end_points`, `scan` and `ith`.
//! * [`HarrisList`]: Harris sorted list with `range`, `multisearch` and `ith`.
//! * [`Bst`]: leaf-oriented non-blocking BST with range, range-sum, successor,
//!   find-if, multisearch and height queries, in indirect, direct and plain
//!   (non-snapshot baseline) flavours.
//!
//! Memory is reclaimed with an epoch scheme ([`reclaim`]) that also frees
//! displaced versions. The [`oracle`] and [`lincheck`] modules hold sequential
//! specifications and a brute-force linearizability checker used to validate
//! all of the above.

pub mod bst;
pub mod camera;
pub mod cell;
mod error;
pub mod hooks;
pub mod instrument;
pub mod lincheck;
pub mod link;
pub mod list;
pub mod oracle;
pub mod queue;
pub mod reclaim;
pub mod vcas;
pub mod vcas_direct;

pub use bst::{Bst, DirectBst, PlainBst};
pub use camera::{Camera, SnapshotHandle};
pub use cell::SnapshotCell;
pub use error::QueryError;
pub use list::HarrisList;
pub use queue::MsQueue;
pub use reclaim::{EpochManager, Guard, LocalHandle, Snapshot, SnapshotGuard};
pub use vcas::VersionedCas;
pub use vcas_direct::DirectVersionedCas;
