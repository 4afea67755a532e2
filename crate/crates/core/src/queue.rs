//! Michael–Scott queue with atomic multi-point queries.
//!
//! `Head` and `Tail` are versioned. An enqueue takes effect when `Tail`
//! swings to its node, so at any snapshot the abstract queue is exactly the
//! nodes after `Head`'s dummy up to and including `Tail`. The `next` fields
//! are written once each; with the [`Plain`](crate::cell::Plain) family they
//! are left unversioned, which is safe because queries never follow `next`
//! past the snapshot's tail.

use std::fmt;
use std::ptr;
use std::sync::Arc;

use crate::camera::Camera;
use crate::cell::{CellFamily, SnapshotCell, Versioned};
use crate::error::QueryError;
use crate::link::Link;
use crate::reclaim::{EpochManager, Guard, LocalHandle, Reclaim, RecordHeader, Snapshot};
use crate::vcas::VersionedCas;

// `next` is not the last field so that sizedness does not depend on the
// cell type, which would make the trait solver recurse.
pub struct QNode<K: 'static, F: CellFamily> {
    header: RecordHeader,
    next: F::Cell<Link<QNode<K, F>>>,
    key: Option<K>,
}

unsafe impl<K: Send + 'static, F: CellFamily> Reclaim for QNode<K, F> {
    fn header(&self) -> &RecordHeader {
        &self.header
    }

    fn poison_owned(&self) {
        self.next.poison_owned();
    }
}

impl<K: 'static, F: CellFamily> QNode<K, F> {
    fn alloc(key: Option<K>, camera: &Camera) -> Link<Self> {
        Link::from_box(Box::new(QNode {
            header: RecordHeader::new(),
            key,
            next: SnapshotCell::new(Link::null(), camera),
        }))
    }
}

#[inline]
unsafe fn node<'g, K: 'static, F: CellFamily>(l: Link<QNode<K, F>>) -> &'g QNode<K, F> {
    let n = &*l.as_ptr();
    n.header.check();
    n
}

/// A lock-free FIFO queue whose `scan`, `ith` and `peek_end_points` see one
/// consistent state.
pub struct MsQueue<K: 'static, F: CellFamily = Versioned> {
    camera: Camera,
    manager: Arc<EpochManager>,
    head: VersionedCas<Link<QNode<K, F>>>,
    tail: VersionedCas<Link<QNode<K, F>>>,
}

unsafe impl<K: Send + Sync + 'static, F: CellFamily> Send for MsQueue<K, F> {}
unsafe impl<K: Send + Sync + 'static, F: CellFamily> Sync for MsQueue<K, F> {}

impl<K, F> MsQueue<K, F>
where
    K: Copy + Send + Sync + 'static,
    F: CellFamily,
{
    pub fn new() -> Self {
        Self::with_manager(EpochManager::new())
    }

    pub fn with_manager(manager: Arc<EpochManager>) -> Self {
        let camera = Camera::new();
        let dummy = QNode::alloc(None, &camera);
        let head = VersionedCas::new(dummy, &camera);
        let tail = VersionedCas::new(dummy, &camera);
        MsQueue {
            camera,
            manager,
            head,
            tail,
        }
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn manager(&self) -> &Arc<EpochManager> {
        &self.manager
    }

    pub fn register(&self) -> LocalHandle {
        self.manager.register()
    }

    fn check_guard(&self, guard: &Guard<'_>) {
        debug_assert!(
            Arc::ptr_eq(guard.local().manager(), &self.manager),
            "guard belongs to a different epoch manager"
        );
    }

    fn check_snapshot(&self, snap: &Snapshot<'_>) {
        debug_assert!(
            ptr::eq(snap.camera(), &self.camera),
            "snapshot taken on another structure's camera"
        );
    }

    pub fn enqueue(&self, key: K, guard: &Guard<'_>) {
        self.check_guard(guard);
        let cam = &self.camera;
        let fresh = QNode::<K, F>::alloc(Some(key), cam);
        loop {
            let last = self.tail.read(cam, guard);
            let last_node = unsafe { node(last) };
            let next = last_node.next.load(cam, guard);
            if last != self.tail.read(cam, guard) {
                continue;
            }
            if next.is_null() {
                if last_node.next.compare_and_swap(Link::null(), fresh, cam, guard) {
                    self.tail.compare_and_swap(last, fresh, cam, guard);
                    return;
                }
            } else {
                self.tail.compare_and_swap(last, next, cam, guard);
            }
        }
    }

    pub fn dequeue(&self, guard: &Guard<'_>) -> Option<K> {
        self.check_guard(guard);
        let cam = &self.camera;
        loop {
            let first = self.head.read(cam, guard);
            let last = self.tail.read(cam, guard);
            let next = unsafe { node(first) }.next.load(cam, guard);
            if first != self.head.read(cam, guard) {
                continue;
            }
            if first == last {
                if next.is_null() {
                    return None;
                }
                // Swing a lagging tail first so head never passes it.
                self.tail.compare_and_swap(last, next, cam, guard);
            } else {
                let key = unsafe { node(next) }.key;
                if self.head.compare_and_swap(first, next, cam, guard) {
                    unsafe { guard.retire(first.as_ptr()) };
                    return key;
                }
            }
        }
    }

    /// Takes a snapshot of this queue that stays valid while `guard` lives.
    pub fn snapshot<'g>(&'g self, guard: &'g Guard<'_>) -> Snapshot<'g> {
        self.check_guard(guard);
        guard.snapshot(&self.camera)
    }

    /// `(first, last)` element at one instant, `(None, None)` when empty.
    pub fn peek_end_points(&self, guard: &Guard<'_>) -> (Option<K>, Option<K>) {
        let snap = self.snapshot(guard);
        self.peek_end_points_at(&snap)
    }

    pub fn peek_end_points_at(&self, snap: &Snapshot<'_>) -> (Option<K>, Option<K>) {
        self.check_snapshot(snap);
        let first = self.head.read_snapshot(snap);
        let last = self.tail.read_snapshot(snap);
        if first == last {
            return (None, None);
        }
        let front = unsafe { node(node(first).next.load_at(snap)) };
        (front.key, unsafe { node(last) }.key)
    }

    /// Every element, front to back, at one instant.
    pub fn scan(&self, guard: &Guard<'_>) -> Vec<K> {
        let snap = self.snapshot(guard);
        self.scan_at(&snap)
    }

    pub fn scan_at(&self, snap: &Snapshot<'_>) -> Vec<K> {
        self.check_snapshot(snap);
        let first = self.head.read_snapshot(snap);
        let last = self.tail.read_snapshot(snap);
        let mut out = Vec::new();
        let mut q = first;
        while q != last {
            q = unsafe { node(q) }.next.load_at(snap);
            out.extend(unsafe { node(q) }.key);
        }
        out
    }

    /// The `i`-th element from the front (1-based) at one instant.
    pub fn ith(&self, i: usize, guard: &Guard<'_>) -> Result<Option<K>, QueryError> {
        if i == 0 {
            return Err(QueryError::ZeroIndex);
        }
        let snap = self.snapshot(guard);
        self.ith_at(i, &snap)
    }

    pub fn ith_at(&self, i: usize, snap: &Snapshot<'_>) -> Result<Option<K>, QueryError> {
        if i == 0 {
            return Err(QueryError::ZeroIndex);
        }
        self.check_snapshot(snap);
        let first = self.head.read_snapshot(snap);
        let last = self.tail.read_snapshot(snap);
        let mut q = first;
        for _ in 0..i {
            if q == last {
                return Ok(None);
            }
            q = unsafe { node(q) }.next.load_at(snap);
        }
        Ok(unsafe { node(q) }.key)
    }
}

impl<K, F> Default for MsQueue<K, F>
where
    K: Copy + Send + Sync + 'static,
    F: CellFamily,
{
    fn default() -> Self {
        Self::new()
    }
}

impl<K: 'static, F: CellFamily> Drop for MsQueue<K, F> {
    fn drop(&mut self) {
        let mut p = self.head.load_exclusive().as_ptr();
        while !p.is_null() {
            let mut b = unsafe { Box::from_raw(p) };
            p = b.next.load_exclusive().as_ptr();
        }
    }
}

impl<K: 'static, F: CellFamily> fmt::Debug for MsQueue<K, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MsQueue")
            .field("timestamp", &self.camera.peek_timestamp())
            .finish_non_exhaustive()
    }
}
