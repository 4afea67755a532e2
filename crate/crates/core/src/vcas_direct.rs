//! Versioned CAS without indirection, for recorded-once structures.
//!
//! The timestamp and the version link live inside the user's node, so a
//! successful CAS allocates nothing. This is only correct if every node is
//! the new value of at most one successful CAS (and all CASes installing the
//! same node expect the same old value). Under that discipline a node is in at
//! most one version list as a non-oldest element, and the oldest element of a
//! list (an initial value) is never traversed past, so the lists behave as if
//! they were disjoint.

use std::fmt;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU32, AtomicU64, Ordering::SeqCst};

use crate::camera::{Camera, TBD};
use crate::cell::SnapshotCell;
use crate::hooks::{self, Mutation};
use crate::instrument;
use crate::link::Link;
use crate::reclaim::{Guard, Snapshot};

static INVALID_NEXTV: u8 = 0;

/// The "not yet linked" marker for `nextv`. Compared against, never
/// dereferenced.
#[inline]
fn invalid_nextv<N>() -> *mut N {
    &INVALID_NEXTV as *const u8 as *mut N
}

/// Version bookkeeping embedded in every node used with
/// [`DirectVersionedCas`].
pub struct VersionFields<N> {
    ts: AtomicU64,
    nextv: AtomicPtr<N>,
    publications: AtomicU32,
}

impl<N> VersionFields<N> {
    pub fn new() -> Self {
        VersionFields {
            ts: AtomicU64::new(TBD),
            nextv: AtomicPtr::new(invalid_nextv()),
            publications: AtomicU32::new(0),
        }
    }

    pub fn timestamp(&self) -> u64 {
        self.ts.load(SeqCst)
    }

    /// `None` while still unlinked, otherwise the older version (or null).
    pub fn older(&self) -> Option<*mut N> {
        let p = self.nextv.load(SeqCst);
        (p != invalid_nextv()).then_some(p)
    }

    pub fn publications(&self) -> u32 {
        self.publications.load(SeqCst)
    }

    #[inline]
    fn load_ts(&self) -> u64 {
        hooks::access();
        self.ts.load(SeqCst)
    }

    #[inline]
    fn init_ts(&self, camera: &Camera) {
        if self.load_ts() == TBD {
            let cur = camera.peek_timestamp();
            hooks::access();
            let _ = self.ts.compare_exchange(TBD, cur, SeqCst, SeqCst);
        }
    }

    /// Normalizes an unlinked node to "no older version".
    pub fn init_nextv(&self) {
        hooks::access();
        if self.nextv.load(SeqCst) == invalid_nextv() {
            hooks::access();
            let _ = self
                .nextv
                .compare_exchange(invalid_nextv(), ptr::null_mut(), SeqCst, SeqCst);
        }
    }
}

impl<N> Default for VersionFields<N> {
    fn default() -> Self {
        Self::new()
    }
}

impl<N> fmt::Debug for VersionFields<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VersionFields")
            .field("ts", &self.ts.load(SeqCst))
            .field("linked", &self.older().is_some())
            .finish()
    }
}

/// Nodes that carry their own version fields.
pub trait Versionable: Send + Sync + 'static {
    fn version(&self) -> &VersionFields<Self>
    where
        Self: Sized;

    /// Called on every node reached by a traversal, e.g. to check poisoning.
    fn on_visit(&self) {}
}

/// A CAS cell over node pointers whose versions are the nodes themselves.
pub struct DirectVersionedCas<N> {
    head: AtomicPtr<N>,
    /// Timestamp of the initial version, 0 when it is null.
    born: u64,
}

unsafe impl<N: Send + Sync> Send for DirectVersionedCas<N> {}
unsafe impl<N: Send + Sync> Sync for DirectVersionedCas<N> {}

impl<N: Versionable> DirectVersionedCas<N> {
    pub fn new(initial: Link<N>, camera: &Camera) -> Self {
        let p = initial.as_ptr();
        let born = match unsafe { p.as_ref() } {
            Some(n) => {
                n.version().init_nextv();
                n.version().init_ts(camera);
                n.version().load_ts()
            }
            None => 0,
        };
        DirectVersionedCas {
            head: AtomicPtr::new(p),
            born,
        }
    }

    #[inline]
    fn head(&self) -> *mut N {
        hooks::access();
        self.head.load(SeqCst)
    }

    fn cell_id(&self) -> usize {
        self as *const Self as usize
    }

    pub fn read(&self, camera: &Camera, _guard: &Guard<'_>) -> Link<N> {
        let head = self.head();
        if let Some(h) = unsafe { head.as_ref() } {
            h.on_visit();
            if !hooks::mutated(Mutation::SkipReadHelp) {
                h.version().init_ts(camera);
            }
        }
        Link::from_raw(head)
    }

    pub fn compare_and_swap(
        &self,
        old: Link<N>,
        new: Link<N>,
        camera: &Camera,
        _guard: &Guard<'_>,
    ) -> bool {
        let head = self.head();
        if let Some(h) = unsafe { head.as_ref() } {
            h.on_visit();
            if !hooks::mutated(Mutation::SkipHeadHelpBeforeCas) {
                h.version().init_ts(camera);
            }
        }
        if head != old.as_ptr() {
            return false;
        }
        if new == old {
            return true;
        }
        let node = unsafe { &*new.as_ptr() };
        let fields = node.version();
        // Link the new node to the version it displaces before publishing it.
        // Every CAS installing this node expects the same old value, so racing
        // helpers agree on the link.
        hooks::access();
        let _ = fields
            .nextv
            .compare_exchange(invalid_nextv(), head, SeqCst, SeqCst);
        hooks::access();
        if self
            .head
            .compare_exchange(head, new.as_ptr(), SeqCst, SeqCst)
            .is_ok()
        {
            let published = fields.publications.fetch_add(1, SeqCst) + 1;
            if published > 1 {
                instrument::double_publication();
                debug_assert!(false, "recorded-once violation: node published twice");
            }
            fields.init_ts(camera);
            instrument::commit(self.cell_id(), fields.ts.load(SeqCst));
            true
        } else {
            // The head cannot be null after a failed CAS from `head`.
            let cur = self.head();
            if let Some(c) = unsafe { cur.as_ref() } {
                c.version().init_ts(camera);
            }
            false
        }
    }

    pub fn read_snapshot(&self, snap: &Snapshot<'_>) -> Link<N> {
        let h = snap.handle().ts();
        let mut node = self.head();
        if let Some(n) = unsafe { node.as_ref() } {
            n.on_visit();
            n.version().init_ts(snap.camera());
        }
        if self.born > h {
            instrument::isolation_breach();
            debug_assert!(false, "snapshot {h} predates the initial version of its list");
        }
        let mut hops = 0u64;
        while let Some(n) = unsafe { node.as_ref() } {
            if n.version().load_ts() <= h {
                break;
            }
            hooks::access();
            let next = n.version().nextv.load(SeqCst);
            debug_assert!(next != invalid_nextv(), "published node without a version link");
            node = next;
            if let Some(m) = unsafe { node.as_ref() } {
                m.on_visit();
            }
            hops += 1;
        }
        instrument::snapshot_read(self.cell_id(), h, hops);
        Link::from_raw(node)
    }
}

impl<N: Versionable> SnapshotCell<Link<N>> for DirectVersionedCas<N> {
    const VERSIONED: bool = true;

    fn new(initial: Link<N>, camera: &Camera) -> Self {
        DirectVersionedCas::new(initial, camera)
    }

    #[inline]
    fn load(&self, camera: &Camera, guard: &Guard<'_>) -> Link<N> {
        self.read(camera, guard)
    }

    #[inline]
    fn compare_and_swap(&self, old: Link<N>, new: Link<N>, camera: &Camera, guard: &Guard<'_>) -> bool {
        DirectVersionedCas::compare_and_swap(self, old, new, camera, guard)
    }

    #[inline]
    fn load_at(&self, snap: &Snapshot<'_>) -> Link<N> {
        self.read_snapshot(snap)
    }

    fn load_exclusive(&mut self) -> Link<N> {
        Link::from_raw(*self.head.get_mut())
    }
}

impl<N> fmt::Debug for DirectVersionedCas<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DirectVersionedCas({:p})", self.head.load(SeqCst))
    }
}
