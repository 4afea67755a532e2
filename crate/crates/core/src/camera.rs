//! The shared timestamp source that all versioned CAS objects of one data
//! structure are associated with.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};

use crossbeam_utils::CachePadded;

use crate::hooks;

/// Timestamp of a version whose commit time has not been installed yet.
///
/// Valid timestamps are strictly smaller.
pub const TBD: u64 = u64::MAX;

const OVERFLOW_ALARM: u64 = 1 << 63;

/// Identifies one consistent cut across every object sharing a [`Camera`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SnapshotHandle(pub u64);

impl SnapshotHandle {
    pub fn ts(self) -> u64 {
        self.0
    }
}

impl fmt::Display for SnapshotHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// Global clock for a family of versioned CAS objects.
pub struct Camera {
    timestamp: CachePadded<AtomicU64>,
}

impl Camera {
    pub fn new() -> Self {
        Camera {
            timestamp: CachePadded::new(AtomicU64::new(0)),
        }
    }

    /// Returns the current counter value as a handle and tries once to bump
    /// the counter. A failed bump means a concurrent caller already moved the
    /// counter past `ts`, which is all a snapshot needs.
    pub fn take_snapshot(&self) -> SnapshotHandle {
        hooks::access();
        let ts = self.timestamp.load(SeqCst);
        debug_assert!(ts < OVERFLOW_ALARM, "camera timestamp overflow");
        hooks::access();
        let _ = self.timestamp.compare_exchange(ts, ts + 1, SeqCst, SeqCst);
        SnapshotHandle(ts)
    }

    pub fn peek_timestamp(&self) -> u64 {
        hooks::access();
        self.timestamp.load(SeqCst)
    }
}

impl Default for Camera {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Camera")
            .field("timestamp", &self.timestamp.load(SeqCst))
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn fresh_camera_hands_out_zero() {
        let c = Camera::new();
        assert_eq!(c.peek_timestamp(), 0);
        assert_eq!(c.take_snapshot(), SnapshotHandle(0));
        assert_eq!(c.peek_timestamp(), 1);
    }

    #[test]
    fn sequential_handles_count_up() {
        let c = Camera::new();
        for expected in 0..1000u64 {
            assert_eq!(c.take_snapshot().ts(), expected);
        }
        assert_eq!(c.peek_timestamp(), 1000);
    }

    #[test]
    fn concurrent_snapshots_stay_within_bounds() {
        let c = Arc::new(Camera::new());
        let k = 6;
        let handles: Vec<u64> = (0..k)
            .map(|_| {
                let c = Arc::clone(&c);
                thread::spawn(move || c.take_snapshot().ts())
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect();
        let max = *handles.iter().max().unwrap();
        let fin = c.peek_timestamp();
        assert!(fin > max);
        assert!(fin <= k);
    }
}
