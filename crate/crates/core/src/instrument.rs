//! Step counters behind the complexity assertions.
//!
//! Three kinds of bookkeeping live here:
//!
//! * per-thread step counters (snapshot reads and version-list hops), cheap
//!   enough to stay on permanently;
//! * a process-wide count of successful versioned CAS operations, kept in
//!   per-thread padded slots so that it is contention-free to update;
//! * an opt-in per-thread log of commits and snapshot reads from which the
//!   version-list traversal bound can be checked after the fact.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering::Relaxed};

use crossbeam_utils::CachePadded;

const COMMIT_SLOTS: usize = 64;

static COMMITS: [CachePadded<AtomicU64>; COMMIT_SLOTS] =
    [const { CachePadded::new(AtomicU64::new(0)) }; COMMIT_SLOTS];
static NEXT_SLOT: AtomicUsize = AtomicUsize::new(0);

static DOUBLE_PUBLICATIONS: AtomicU64 = AtomicU64::new(0);
static ISOLATION_BREACHES: AtomicU64 = AtomicU64::new(0);
static QUERY_SIDE_TOUCHES: AtomicU64 = AtomicU64::new(0);

/// One entry of a bound log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundEvent {
    /// A successful versioned CAS on `cell` whose new version got `ts`.
    Commit { cell: usize, ts: u64 },
    /// A snapshot read of `cell` at `handle` that walked `hops` links.
    Read { cell: usize, handle: u64, hops: u64 },
}

struct Local {
    slot: usize,
    reads: Cell<u64>,
    hops: Cell<u64>,
    cells_read: Cell<u64>,
    logging: Cell<bool>,
    sample_mask: Cell<usize>,
    log: RefCell<Vec<BoundEvent>>,
}

thread_local! {
    static LOCAL: Local = Local {
        slot: NEXT_SLOT.fetch_add(1, Relaxed) % COMMIT_SLOTS,
        reads: Cell::new(0),
        hops: Cell::new(0),
        cells_read: Cell::new(0),
        logging: Cell::new(false),
        sample_mask: Cell::new(0),
        log: RefCell::new(Vec::new()),
    };
}

#[inline]
fn sampled(cell: usize, mask: usize) -> bool {
    // Fibonacci hashing so that neighbouring allocations spread out.
    ((cell >> 4).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) & mask == 0
}

#[inline]
pub(crate) fn commit(cell: usize, ts: u64) {
    LOCAL.with(|l| {
        COMMITS[l.slot].fetch_add(1, Relaxed);
        if l.logging.get() && sampled(cell, l.sample_mask.get()) {
            l.log.borrow_mut().push(BoundEvent::Commit { cell, ts });
        }
    });
}

#[inline]
pub(crate) fn snapshot_read(cell: usize, handle: u64, hops: u64) {
    LOCAL.with(|l| {
        l.reads.set(l.reads.get() + 1);
        l.hops.set(l.hops.get() + hops);
        if l.logging.get() && hops > 0 && sampled(cell, l.sample_mask.get()) {
            l.log.borrow_mut().push(BoundEvent::Read { cell, handle, hops });
        }
    });
}

/// Counts a node visited by a snapshot query that is not backed by a
/// versioned cell read (used by the plain baseline cells).
#[inline]
pub(crate) fn plain_read() {
    LOCAL.with(|l| l.cells_read.set(l.cells_read.get() + 1));
}

pub(crate) fn double_publication() {
    DOUBLE_PUBLICATIONS.fetch_add(1, Relaxed);
}

pub(crate) fn isolation_breach() {
    ISOLATION_BREACHES.fetch_add(1, Relaxed);
}

#[allow(dead_code)]
pub(crate) fn query_side_touch() {
    QUERY_SIDE_TOUCHES.fetch_add(1, Relaxed);
}

/// Nodes published by more than one successful direct vCAS, process-wide.
pub fn double_publications() -> u64 {
    DOUBLE_PUBLICATIONS.load(Relaxed)
}

/// Direct snapshot reads that walked past the initial node of their own
/// version list, process-wide.
pub fn isolation_breaches() -> u64 {
    ISOLATION_BREACHES.load(Relaxed)
}

/// Query code paths that touched update-only fields, process-wide.
pub fn query_side_touches() -> u64 {
    QUERY_SIDE_TOUCHES.load(Relaxed)
}

/// Successful versioned CAS operations across all threads so far.
pub fn total_commits() -> u64 {
    COMMITS.iter().map(|c| c.load(Relaxed)).sum()
}

/// Per-thread step counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Steps {
    pub snapshot_reads: u64,
    pub hops: u64,
    pub plain_reads: u64,
}

impl Steps {
    pub fn total(&self) -> u64 {
        self.snapshot_reads + self.hops + self.plain_reads
    }

    fn since(&self, earlier: &Steps) -> Steps {
        Steps {
            snapshot_reads: self.snapshot_reads - earlier.snapshot_reads,
            hops: self.hops - earlier.hops,
            plain_reads: self.plain_reads - earlier.plain_reads,
        }
    }
}

pub fn thread_steps() -> Steps {
    LOCAL.with(|l| Steps {
        snapshot_reads: l.reads.get(),
        hops: l.hops.get(),
        plain_reads: l.cells_read.get(),
    })
}

/// Cost of one measured operation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cost {
    pub steps: Steps,
    /// Successful versioned CAS operations (on any object) counted while the
    /// operation ran. A commit is counted after its version is timestamped,
    /// so each concurrent writer may have one more version outstanding.
    pub concurrent_commits: u64,
}

/// Runs `f` and reports the steps it took on this thread.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, Cost) {
    let c0 = total_commits();
    let s0 = thread_steps();
    let r = f();
    let s1 = thread_steps();
    let c1 = total_commits();
    (
        r,
        Cost {
            steps: s1.since(&s0),
            concurrent_commits: c1.saturating_sub(c0),
        },
    )
}

/// Starts logging commits and snapshot reads on this thread. Only cells whose
/// address hash falls in a `1 / (sample_mask + 1)` bucket are logged; use 0 to
/// log every cell.
pub fn start_bound_log(sample_mask: usize) {
    LOCAL.with(|l| {
        l.sample_mask.set(sample_mask);
        l.logging.set(true);
        l.log.borrow_mut().clear();
    });
}

/// Stops logging on this thread and returns what was logged.
pub fn take_bound_log() -> Vec<BoundEvent> {
    LOCAL.with(|l| {
        l.logging.set(false);
        std::mem::take(&mut *l.log.borrow_mut())
    })
}

/// Outcome of checking the version-list traversal bound.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoundReport {
    pub reads_checked: u64,
    pub commits_seen: u64,
    pub violations: u64,
    /// Up to a few offending reads, for diagnostics.
    pub examples: Vec<BoundEvent>,
    /// Histogram of hops per checked read: index `i` counts reads with
    /// `2^(i-1) < hops <= 2^i` (index 0 is exactly one hop).
    pub hop_histogram: Vec<u64>,
}

/// Checks every logged snapshot read against the number of logged commits on
/// the same cell whose timestamp exceeds the read's handle. Each hop passes
/// over one such version, so hops can never exceed that count.
pub fn check_traversal_bound<'a, I>(logs: I) -> BoundReport
where
    I: IntoIterator<Item = &'a [BoundEvent]>,
{
    let mut commits: HashMap<usize, Vec<u64>> = HashMap::new();
    let mut reads = Vec::new();
    for log in logs {
        for ev in log {
            match *ev {
                BoundEvent::Commit { cell, ts } => commits.entry(cell).or_default().push(ts),
                BoundEvent::Read { .. } => reads.push(*ev),
            }
        }
    }
    let mut report = BoundReport {
        commits_seen: commits.values().map(|v| v.len() as u64).sum(),
        ..Default::default()
    };
    for v in commits.values_mut() {
        v.sort_unstable();
    }
    for ev in reads {
        let BoundEvent::Read { cell, handle, hops } = ev else {
            continue;
        };
        report.reads_checked += 1;
        let bucket = (64 - (hops.max(1) - 1).leading_zeros()) as usize;
        if report.hop_histogram.len() <= bucket {
            report.hop_histogram.resize(bucket + 1, 0);
        }
        report.hop_histogram[bucket] += 1;
        let newer = commits.get(&cell).map_or(0, |ts| {
            let first_newer = ts.partition_point(|&t| t <= handle);
            (ts.len() - first_newer) as u64
        });
        if hops > newer {
            report.violations += 1;
            if report.examples.len() < 8 {
                report.examples.push(ev);
            }
        }
    }
    report
}
