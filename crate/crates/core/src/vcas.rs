//! Indirect versioned CAS: a version list of immutable value nodes whose
//! timestamps are installed after publication, with helping.

use std::fmt;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU64, Ordering::SeqCst};

use crate::camera::{Camera, TBD};
use crate::cell::SnapshotCell;
use crate::hooks::{self, Mutation};
use crate::instrument;
use crate::reclaim::{poison_in_place, Guard, Reclaim, RecordHeader, Snapshot};

/// One version: an immutable value, a write-once timestamp and an immutable
/// link to the next older version.
#[repr(C)]
pub struct VNode<V> {
    header: RecordHeader,
    ts: AtomicU64,
    nextv: *mut VNode<V>,
    val: V,
}

unsafe impl<V: Send + 'static> Reclaim for VNode<V> {
    fn header(&self) -> &RecordHeader {
        &self.header
    }
}

unsafe impl<V: Send> Send for VNode<V> {}

impl<V> VNode<V> {
    fn alloc(val: V, nextv: *mut VNode<V>) -> *mut VNode<V> {
        Box::into_raw(Box::new(VNode {
            header: RecordHeader::new(),
            ts: AtomicU64::new(TBD),
            nextv,
            val,
        }))
    }

    #[inline]
    fn ts(&self) -> u64 {
        hooks::access();
        self.ts.load(SeqCst)
    }

    /// Installs a timestamp read from `camera` if none is installed yet.
    #[inline]
    fn init_ts(&self, camera: &Camera) {
        if self.ts() == TBD {
            let cur = camera.peek_timestamp();
            hooks::access();
            let _ = self.ts.compare_exchange(TBD, cur, SeqCst, SeqCst);
        }
    }
}

/// A CAS object that remembers every value it has held.
///
/// All objects used together in queries must share one [`Camera`]; every call
/// takes it explicitly. Displaced versions are retired to the epoch manager
/// of the guard passed to [`compare_and_swap`](Self::compare_and_swap).
pub struct VersionedCas<V> {
    head: AtomicPtr<VNode<V>>,
}

unsafe impl<V: Send + Sync> Send for VersionedCas<V> {}
unsafe impl<V: Send + Sync> Sync for VersionedCas<V> {}

impl<V> VersionedCas<V>
where
    V: Copy + Eq + Send + Sync + 'static,
{
    pub fn new(initial: V, camera: &Camera) -> Self {
        let node = VNode::alloc(initial, ptr::null_mut());
        unsafe { (*node).init_ts(camera) };
        VersionedCas {
            head: AtomicPtr::new(node),
        }
    }

    #[inline]
    fn head(&self) -> &VNode<V> {
        hooks::access();
        let h = unsafe { &*self.head.load(SeqCst) };
        h.header.check();
        h
    }

    fn cell_id(&self) -> usize {
        self as *const Self as usize
    }

    pub fn read(&self, camera: &Camera, _guard: &Guard<'_>) -> V {
        let head = self.head();
        if !hooks::mutated(Mutation::SkipReadHelp) {
            head.init_ts(camera);
        }
        head.val
    }

    pub fn compare_and_swap(&self, old: V, new: V, camera: &Camera, guard: &Guard<'_>) -> bool {
        let head = self.head();
        if !hooks::mutated(Mutation::SkipHeadHelpBeforeCas) {
            head.init_ts(camera);
        }
        if head.val != old {
            return false;
        }
        if new == old {
            return true;
        }
        let head_ptr = head as *const VNode<V> as *mut VNode<V>;
        let fresh = VNode::alloc(new, head_ptr);
        hooks::access();
        if self
            .head
            .compare_exchange(head_ptr, fresh, SeqCst, SeqCst)
            .is_ok()
        {
            let fresh = unsafe { &*fresh };
            fresh.init_ts(camera);
            instrument::commit(self.cell_id(), fresh.ts.load(SeqCst));
            // The displaced version is retired only after the new one has a
            // timestamp, so any snapshot pinned later stops at or before it.
            unsafe { guard.retire(head_ptr) };
            true
        } else {
            // Never published, so nobody else can have seen it.
            unsafe { drop(Box::from_raw(fresh)) };
            self.head().init_ts(camera);
            false
        }
    }

    pub fn read_snapshot(&self, snap: &Snapshot<'_>) -> V {
        let h = snap.handle().ts();
        let mut node = self.head();
        node.init_ts(snap.camera());
        let mut hops = 0u64;
        while node.ts() > h {
            let next = node.nextv;
            if next.is_null() {
                debug_assert!(
                    false,
                    "snapshot {h} predates this versioned CAS object (oldest version has ts {})",
                    node.ts.load(SeqCst)
                );
                break;
            }
            node = unsafe { &*next };
            node.header.check();
            hops += 1;
        }
        instrument::snapshot_read(self.cell_id(), h, hops);
        node.val
    }

    /// Timestamp of the current head version, after helping it.
    pub fn head_timestamp(&self, camera: &Camera, _guard: &Guard<'_>) -> u64 {
        let head = self.head();
        head.init_ts(camera);
        head.ts.load(SeqCst)
    }

    /// Every version reachable from the head, newest first, as
    /// `(value, timestamp)`.
    ///
    /// # Safety
    ///
    /// No version of this object may have been freed yet, e.g. the caller has
    /// held `_guard` since before the object's first successful CAS.
    pub unsafe fn version_list(&self, _guard: &Guard<'_>) -> Vec<(V, u64)> {
        let mut out = Vec::new();
        let mut node = self.head.load(SeqCst);
        while let Some(n) = node.as_ref() {
            out.push((n.val, n.ts.load(SeqCst)));
            node = n.nextv;
        }
        out
    }
}

impl<V> SnapshotCell<V> for VersionedCas<V>
where
    V: Copy + Eq + Send + Sync + 'static,
{
    const VERSIONED: bool = true;

    fn new(initial: V, camera: &Camera) -> Self {
        VersionedCas::new(initial, camera)
    }

    #[inline]
    fn load(&self, camera: &Camera, guard: &Guard<'_>) -> V {
        self.read(camera, guard)
    }

    #[inline]
    fn compare_and_swap(&self, old: V, new: V, camera: &Camera, guard: &Guard<'_>) -> bool {
        VersionedCas::compare_and_swap(self, old, new, camera, guard)
    }

    #[inline]
    fn load_at(&self, snap: &Snapshot<'_>) -> V {
        self.read_snapshot(snap)
    }

    fn load_exclusive(&mut self) -> V {
        unsafe { (**self.head.get_mut()).val }
    }

    fn poison_owned(&self) {
        self.poison_head();
    }
}

impl<V: Send + 'static> VersionedCas<V> {
    /// Poisons the head version, which this object owns.
    fn poison_head(&self) {
        let head = self.head.load(SeqCst);
        unsafe { poison_in_place(&*head) };
    }
}

impl<V> Drop for VersionedCas<V> {
    fn drop(&mut self) {
        // Older versions were retired when they were displaced; only the head
        // belongs to this object. Poisoned heads are leaked on purpose.
        let head = *self.head.get_mut();
        unsafe {
            if !(*head).header.is_retired() {
                drop(Box::from_raw(head));
            }
        }
    }
}

impl<V: fmt::Debug> fmt::Debug for VersionedCas<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = unsafe { &*self.head.load(SeqCst) };
        f.debug_struct("VersionedCas")
            .field("val", &head.val)
            .field("ts", &head.ts.load(SeqCst))
            .finish()
    }
}
