//! Leaf-oriented non-blocking BST (Ellen, Fatourou, Ruppert, van Breugel)
//! with atomic multi-point queries.
//!
//! Keys live in leaves; internal nodes route. Every update is a single child
//! CAS, coordinated through a per-node `update` word (state plus info record)
//! that is never versioned: queries only look at keys and child pointers.
//!
//! The child-pointer cell type is chosen by a [`TreeMode`]:
//!
//! * [`Indirect`]: [`VersionedCas`] version lists (the default).
//! * [`Direct`]: [`DirectVersionedCas`] with versions embedded in the nodes.
//!   This needs every node to be installed by at most one successful CAS, so
//!   deletes replace the removed parent with a fresh copy of the surviving
//!   sibling instead of promoting the sibling itself.
//! * [`Plain`]: ordinary atomics, for overhead comparisons. Queries on a plain
//!   tree are not atomic.

mod query;

use std::cell::Cell;
use std::fmt;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicUsize, Ordering::SeqCst};
use std::sync::Arc;

use crate::camera::Camera;
use crate::cell::{PlainCell, SnapshotCell};
use crate::hooks;
use crate::instrument;
use crate::link::Link;
use crate::reclaim::{EpochManager, Guard, LocalHandle, Reclaim, RecordHeader, Snapshot};
use crate::vcas::VersionedCas;
use crate::vcas_direct::{DirectVersionedCas, VersionFields, Versionable};

/// Routing key: real keys sort below the two sentinels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TreeKey<K> {
    Fin(K),
    Inf1,
    Inf2,
}

impl<K: Ord> TreeKey<K> {
    #[inline]
    fn above(&self, k: &K) -> bool {
        match self {
            TreeKey::Fin(x) => k < x,
            _ => true,
        }
    }
}

/// Selects the cell type of child pointers.
pub trait TreeMode: Send + Sync + 'static {
    /// Deletes copy the surviving sibling.
    const RECORDED_ONCE: bool;
    type Child<N: Versionable>: SnapshotCell<Link<N>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Indirect;

impl TreeMode for Indirect {
    const RECORDED_ONCE: bool = false;
    type Child<N: Versionable> = VersionedCas<Link<N>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Direct;

impl TreeMode for Direct {
    const RECORDED_ONCE: bool = true;
    type Child<N: Versionable> = DirectVersionedCas<N>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Plain;

impl TreeMode for Plain {
    const RECORDED_ONCE: bool = false;
    type Child<N: Versionable> = PlainCell<Link<N>>;
}

const CLEAN: usize = 0;
const IFLAG: usize = 1;
const DFLAG: usize = 2;
const MARK: usize = 3;

thread_local! {
    static IN_QUERY: Cell<bool> = const { Cell::new(false) };
}

/// Marks the current thread as running a query; reads of `update` words
/// while marked are counted as violations.
struct QueryScope(bool);

impl QueryScope {
    fn enter() -> Self {
        QueryScope(IN_QUERY.with(|q| q.replace(true)))
    }
}

impl Drop for QueryScope {
    fn drop(&mut self) {
        IN_QUERY.with(|q| q.set(self.0));
    }
}

struct Internal<K: Send + Sync + 'static, M: TreeMode> {
    left: M::Child<Node<K, M>>,
    right: M::Child<Node<K, M>>,
    update: AtomicUsize,
}

pub struct Node<K: Send + Sync + 'static, M: TreeMode> {
    header: RecordHeader,
    version: VersionFields<Node<K, M>>,
    internal: Option<Internal<K, M>>,
    key: TreeKey<K>,
}

unsafe impl<K: Send + Sync + 'static, M: TreeMode> Send for Node<K, M> {}
unsafe impl<K: Send + Sync + 'static, M: TreeMode> Sync for Node<K, M> {}

impl<K: Send + Sync + 'static, M: TreeMode> Versionable for Node<K, M> {
    fn version(&self) -> &VersionFields<Self> {
        &self.version
    }

    fn on_visit(&self) {
        self.header.check();
    }
}

unsafe impl<K: Send + Sync + 'static, M: TreeMode> Reclaim for Node<K, M> {
    fn header(&self) -> &RecordHeader {
        &self.header
    }

    fn poison_owned(&self) {
        if let Some(i) = &self.internal {
            i.left.poison_owned();
            i.right.poison_owned();
        }
    }
}

type NodeLink<K, M> = Link<Node<K, M>>;

impl<K, M> Node<K, M>
where
    K: Send + Sync + 'static,
    M: TreeMode,
{
    fn leaf(key: TreeKey<K>) -> NodeLink<K, M> {
        Link::from_box(Box::new(Node {
            header: RecordHeader::new(),
            version: VersionFields::new(),
            internal: None,
            key,
        }))
    }

    fn internal(key: TreeKey<K>, left: NodeLink<K, M>, right: NodeLink<K, M>, camera: &Camera) -> NodeLink<K, M> {
        Link::from_box(Box::new(Node {
            header: RecordHeader::new(),
            version: VersionFields::new(),
            internal: Some(Internal {
                left: SnapshotCell::new(left, camera),
                right: SnapshotCell::new(right, camera),
                update: AtomicUsize::new(CLEAN),
            }),
            key,
        }))
    }

    #[inline]
    fn inner(&self) -> &Internal<K, M> {
        self.internal.as_ref().expect("leaf has no children")
    }

    fn is_leaf(&self) -> bool {
        self.internal.is_none()
    }

    #[inline]
    fn update(&self) -> usize {
        if IN_QUERY.with(|q| q.get()) {
            instrument::query_side_touch();
        }
        hooks::access();
        self.inner().update.load(SeqCst)
    }

    #[inline]
    fn child(&self, left: bool) -> &M::Child<Node<K, M>> {
        let i = self.inner();
        if left {
            &i.left
        } else {
            &i.right
        }
    }
}

#[inline]
unsafe fn node<'g, K: Send + Sync + 'static, M: TreeMode>(l: NodeLink<K, M>) -> &'g Node<K, M> {
    let n = &*l.as_ptr();
    n.header.check();
    n
}

enum Op<K: Send + Sync + 'static, M: TreeMode> {
    Insert {
        p: NodeLink<K, M>,
        l: NodeLink<K, M>,
        left: bool,
        new_internal: NodeLink<K, M>,
    },
    Delete {
        gp: NodeLink<K, M>,
        p: NodeLink<K, M>,
        l: NodeLink<K, M>,
        gp_left: bool,
        pupdate: usize,
        replacement: AtomicPtr<Node<K, M>>,
    },
}

struct Info<K: Send + Sync + 'static, M: TreeMode> {
    header: RecordHeader,
    op: Op<K, M>,
}

unsafe impl<K: Send + Sync + 'static, M: TreeMode> Send for Info<K, M> {}
unsafe impl<K: Send + Sync + 'static, M: TreeMode> Sync for Info<K, M> {}

unsafe impl<K: Send + Sync + 'static, M: TreeMode> Reclaim for Info<K, M> {
    fn header(&self) -> &RecordHeader {
        &self.header
    }
}

#[inline]
fn state(w: usize) -> usize {
    w & 3
}

#[inline]
fn info_ptr<K: Send + Sync + 'static, M: TreeMode>(w: usize) -> *mut Info<K, M> {
    (w & !3) as *mut Info<K, M>
}

#[inline]
fn pack<K: Send + Sync + 'static, M: TreeMode>(info: *mut Info<K, M>, st: usize) -> usize {
    debug_assert_eq!(info as usize & 3, 0);
    info as usize | st
}

struct SearchResult<K: Send + Sync + 'static, M: TreeMode> {
    gp: NodeLink<K, M>,
    p: NodeLink<K, M>,
    l: NodeLink<K, M>,
    gp_left: bool,
    p_left: bool,
    gpupdate: usize,
    pupdate: usize,
}

/// A lock-free ordered set over keys of type `K`.
pub struct NbBst<K: Send + Sync + 'static, M: TreeMode = Indirect> {
    camera: Camera,
    manager: Arc<EpochManager>,
    root: NodeLink<K, M>,
}

pub type Bst<K> = NbBst<K, Indirect>;
pub type DirectBst<K> = NbBst<K, Direct>;
pub type PlainBst<K> = NbBst<K, Plain>;

unsafe impl<K: Send + Sync + 'static, M: TreeMode> Send for NbBst<K, M> {}
unsafe impl<K: Send + Sync + 'static, M: TreeMode> Sync for NbBst<K, M> {}

impl<K, M> NbBst<K, M>
where
    K: Ord + Copy + Send + Sync + 'static,
    M: TreeMode,
{
    pub fn new() -> Self {
        Self::with_manager(EpochManager::new())
    }

    pub fn with_manager(manager: Arc<EpochManager>) -> Self {
        let camera = Camera::new();
        let root = Node::internal(
            TreeKey::Inf2,
            Node::leaf(TreeKey::Inf1),
            Node::leaf(TreeKey::Inf2),
            &camera,
        );
        NbBst {
            camera,
            manager,
            root,
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

    pub fn snapshot<'g>(&'g self, guard: &'g Guard<'_>) -> Snapshot<'g> {
        self.check_guard(guard);
        guard.snapshot(&self.camera)
    }

    fn search(&self, k: &K, guard: &Guard<'_>) -> SearchResult<K, M> {
        let cam = &self.camera;
        let mut gp = Link::null();
        let mut p = Link::null();
        let mut l = self.root;
        let (mut gp_left, mut p_left) = (false, false);
        let (mut gpupdate, mut pupdate) = (CLEAN, CLEAN);
        loop {
            let n = unsafe { node(l) };
            if n.is_leaf() {
                break;
            }
            gp = p;
            p = l;
            gp_left = p_left;
            gpupdate = pupdate;
            pupdate = n.update();
            p_left = n.key.above(k);
            l = n.child(p_left).load(cam, guard);
        }
        SearchResult {
            gp,
            p,
            l,
            gp_left,
            p_left,
            gpupdate,
            pupdate,
        }
    }

    pub fn find(&self, k: K, guard: &Guard<'_>) -> bool {
        self.check_guard(guard);
        let r = self.search(&k, guard);
        unsafe { node(r.l) }.key == TreeKey::Fin(k)
    }

    pub fn insert(&self, k: K, guard: &Guard<'_>) -> bool {
        self.check_guard(guard);
        let cam = &self.camera;
        loop {
            let r = self.search(&k, guard);
            let leaf = unsafe { node(r.l) };
            if leaf.key == TreeKey::Fin(k) {
                return false;
            }
            if state(r.pupdate) != CLEAN {
                self.help(r.pupdate, guard);
                continue;
            }
            let new_leaf = Node::leaf(TreeKey::Fin(k));
            let sibling = Node::leaf(leaf.key);
            let new_key = leaf.key.max(TreeKey::Fin(k));
            let (lc, rc) = if TreeKey::Fin(k) < leaf.key {
                (new_leaf, sibling)
            } else {
                (sibling, new_leaf)
            };
            let new_internal = Node::internal(new_key, lc, rc, cam);
            let info = Box::into_raw(Box::new(Info {
                header: RecordHeader::new(),
                op: Op::Insert {
                    p: r.p,
                    l: r.l,
                    left: r.p_left,
                    new_internal,
                },
            }));
            let p = unsafe { node(r.p) };
            hooks::access();
            match p.inner().update.compare_exchange(r.pupdate, pack(info, IFLAG), SeqCst, SeqCst) {
                Ok(_) => {
                    self.retire_info(r.pupdate, guard);
                    self.help_insert(info, guard);
                    return true;
                }
                Err(cur) => {
                    unsafe {
                        drop(Box::from_raw(info));
                        drop(Box::from_raw(lc.as_ptr()));
                        drop(Box::from_raw(rc.as_ptr()));
                        drop(Box::from_raw(new_internal.as_ptr()));
                    }
                    self.help(cur, guard);
                }
            }
        }
    }

    pub fn delete(&self, k: K, guard: &Guard<'_>) -> bool {
        self.check_guard(guard);
        loop {
            let r = self.search(&k, guard);
            if unsafe { node(r.l) }.key != TreeKey::Fin(k) {
                return false;
            }
            if state(r.gpupdate) != CLEAN {
                self.help(r.gpupdate, guard);
                continue;
            }
            if state(r.pupdate) != CLEAN {
                self.help(r.pupdate, guard);
                continue;
            }
            let info = Box::into_raw(Box::new(Info {
                header: RecordHeader::new(),
                op: Op::Delete {
                    gp: r.gp,
                    p: r.p,
                    l: r.l,
                    gp_left: r.gp_left,
                    pupdate: r.pupdate,
                    replacement: AtomicPtr::new(ptr::null_mut()),
                },
            }));
            let gp = unsafe { node(r.gp) };
            hooks::access();
            match gp.inner().update.compare_exchange(r.gpupdate, pack(info, DFLAG), SeqCst, SeqCst) {
                Ok(_) => {
                    self.retire_info(r.gpupdate, guard);
                    if self.help_delete(info, guard) {
                        return true;
                    }
                }
                Err(cur) => {
                    unsafe { drop(Box::from_raw(info)) };
                    self.help(cur, guard);
                }
            }
        }
    }

    /// Retires the info record of a `Clean` update word that was just
    /// replaced.
    fn retire_info(&self, w: usize, guard: &Guard<'_>) {
        debug_assert_eq!(state(w), CLEAN);
        let i = info_ptr::<K, M>(w);
        if !i.is_null() {
            unsafe { guard.retire(i) };
        }
    }

    fn help(&self, w: usize, guard: &Guard<'_>) {
        let info = info_ptr::<K, M>(w);
        match state(w) {
            IFLAG => self.help_insert(info, guard),
            MARK => self.help_marked(info, guard),
            DFLAG => {
                self.help_delete(info, guard);
            }
            _ => {}
        }
    }

    fn cas_child(
        &self,
        parent: NodeLink<K, M>,
        left: bool,
        old: NodeLink<K, M>,
        new: NodeLink<K, M>,
        guard: &Guard<'_>,
    ) -> bool {
        unsafe { node(parent) }
            .child(left)
            .compare_and_swap(old, new, &self.camera, guard)
    }

    fn help_insert(&self, info: *mut Info<K, M>, guard: &Guard<'_>) {
        let i = unsafe { &*info };
        i.header.check();
        let Op::Insert {
            p,
            l,
            left,
            new_internal,
        } = i.op
        else {
            unreachable!("insert flag on a delete record")
        };
        if self.cas_child(p, left, l, new_internal, guard) {
            unsafe { guard.retire(l.as_ptr()) };
        }
        hooks::access();
        let _ = unsafe { node(p) }.inner().update.compare_exchange(
            pack(info, IFLAG),
            pack(info, CLEAN),
            SeqCst,
            SeqCst,
        );
    }

    fn help_delete(&self, info: *mut Info<K, M>, guard: &Guard<'_>) -> bool {
        let i = unsafe { &*info };
        i.header.check();
        let Op::Delete { gp, p, pupdate, .. } = i.op else {
            unreachable!("delete flag on an insert record")
        };
        let pu = &unsafe { node(p) }.inner().update;
        let marked = pack(info, MARK);
        hooks::access();
        match pu.compare_exchange(pupdate, marked, SeqCst, SeqCst) {
            Ok(_) => {
                self.retire_info(pupdate, guard);
                self.help_marked(info, guard);
                true
            }
            Err(cur) if cur == marked => {
                self.help_marked(info, guard);
                true
            }
            Err(cur) => {
                self.help(cur, guard);
                hooks::access();
                let _ = unsafe { node(gp) }.inner().update.compare_exchange(
                    pack(info, DFLAG),
                    pack(info, CLEAN),
                    SeqCst,
                    SeqCst,
                );
                false
            }
        }
    }

    fn help_marked(&self, info: *mut Info<K, M>, guard: &Guard<'_>) {
        let cam = &self.camera;
        let i = unsafe { &*info };
        i.header.check();
        let Op::Delete {
            gp,
            p,
            l,
            gp_left,
            ref replacement,
            ..
        } = i.op
        else {
            unreachable!("mark on an insert record")
        };
        let pn = unsafe { node(p) };
        let other = if pn.child(false).load(cam, guard) == l {
            pn.child(true).load(cam, guard)
        } else {
            pn.child(false).load(cam, guard)
        };
        let new = if M::RECORDED_ONCE {
            self.freeze(other, info, guard);
            self.replacement(other, replacement, guard)
        } else {
            other
        };
        if self.cas_child(gp, gp_left, p, new, guard) {
            unsafe {
                guard.retire(p.as_ptr());
                guard.retire(l.as_ptr());
                if M::RECORDED_ONCE {
                    guard.retire(other.as_ptr());
                }
            }
        }
        hooks::access();
        let _ = unsafe { node(gp) }.inner().update.compare_exchange(
            pack(info, DFLAG),
            pack(info, CLEAN),
            SeqCst,
            SeqCst,
        );
    }

    /// Marks the surviving sibling with the delete's record so its children
    /// stop changing before they are copied.
    fn freeze(&self, s: NodeLink<K, M>, info: *mut Info<K, M>, guard: &Guard<'_>) {
        let sn = unsafe { node(s) };
        if sn.is_leaf() {
            return;
        }
        let marked = pack(info, MARK);
        loop {
            let su = sn.update();
            if su == marked {
                return;
            }
            if state(su) != CLEAN {
                self.help(su, guard);
                continue;
            }
            hooks::access();
            if sn
                .inner()
                .update
                .compare_exchange(su, marked, SeqCst, SeqCst)
                .is_ok()
            {
                self.retire_info(su, guard);
                return;
            }
        }
    }

    /// The one copy of `s` used by every helper of this delete.
    fn replacement(
        &self,
        s: NodeLink<K, M>,
        slot: &AtomicPtr<Node<K, M>>,
        guard: &Guard<'_>,
    ) -> NodeLink<K, M> {
        hooks::access();
        let cur = slot.load(SeqCst);
        if !cur.is_null() {
            return Link::from_raw(cur);
        }
        let sn = unsafe { node(s) };
        let copy = if sn.is_leaf() {
            Node::leaf(sn.key)
        } else {
            let cam = &self.camera;
            Node::internal(
                sn.key,
                sn.child(true).load(cam, guard),
                sn.child(false).load(cam, guard),
                cam,
            )
        };
        hooks::access();
        match slot.compare_exchange(ptr::null_mut(), copy.as_ptr(), SeqCst, SeqCst) {
            Ok(_) => copy,
            Err(won) => {
                unsafe { drop(Box::from_raw(copy.as_ptr())) };
                Link::from_raw(won)
            }
        }
    }

    /// Number of edges on the longest path from the root to a leaf, counted
    /// from the root's left child (the sentinel structure above real keys
    /// is excluded); 0 for an empty tree. Takes a snapshot.
    pub fn height(&self, guard: &Guard<'_>) -> usize {
        let snap = self.snapshot(guard);
        self.height_at(&snap)
    }
}

impl<K> NbBst<K, Direct>
where
    K: Ord + Copy + Send + Sync + 'static,
{
    /// Same as [`delete`](Self::delete): in direct mode every delete replaces
    /// the removed parent with a fresh copy of the surviving sibling.
    pub fn delete_recorded_once(&self, k: K, guard: &Guard<'_>) -> bool {
        self.delete(k, guard)
    }
}

impl<K, M> Default for NbBst<K, M>
where
    K: Ord + Copy + Send + Sync + 'static,
    M: TreeMode,
{
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Send + Sync + 'static, M: TreeMode> Drop for NbBst<K, M> {
    fn drop(&mut self) {
        let mut stack = vec![self.root.as_ptr()];
        while let Some(p) = stack.pop() {
            let mut b = unsafe { Box::from_raw(p) };
            if let Some(inner) = b.internal.as_mut() {
                stack.push(inner.left.load_exclusive().as_ptr());
                stack.push(inner.right.load_exclusive().as_ptr());
                let info = info_ptr::<K, M>(*inner.update.get_mut());
                if !info.is_null() {
                    unsafe { drop(Box::from_raw(info)) };
                }
            }
        }
    }
}

impl<K: Send + Sync + 'static, M: TreeMode> fmt::Debug for NbBst<K, M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NbBst")
            .field("timestamp", &self.camera.peek_timestamp())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn basic<M: TreeMode>() {
        let t: NbBst<i64, M> = NbBst::new();
        let h = t.register();
        let g = h.pin();
        assert!(!t.find(5, &g));
        assert!(t.insert(5, &g));
        assert!(!t.insert(5, &g));
        assert!(t.find(5, &g));
        assert!(t.insert(1, &g));
        assert!(t.delete(5, &g));
        assert!(!t.delete(5, &g));
        assert!(t.find(1, &g));
        assert!(!t.find(5, &g));
    }

    #[test]
    fn basic_all_modes() {
        basic::<Indirect>();
        basic::<Direct>();
        basic::<Plain>();
    }

    fn random_against_model<M: TreeMode>(seed: u64) {
        let t: NbBst<u32, M> = NbBst::new();
        let h = t.register();
        let mut model = BTreeSet::new();
        let mut x = seed;
        for _ in 0..3000 {
            let g = h.pin();
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = ((x >> 33) % 64) as u32;
            match (x >> 20) % 3 {
                0 => assert_eq!(t.insert(k, &g), model.insert(k)),
                1 => assert_eq!(t.delete(k, &g), model.remove(&k)),
                _ => assert_eq!(t.find(k, &g), model.contains(&k)),
            }
        }
    }

    #[test]
    fn matches_model_all_modes() {
        random_against_model::<Indirect>(1);
        random_against_model::<Direct>(2);
        random_against_model::<Plain>(3);
    }

    #[test]
    fn direct_mode_publishes_each_node_once() {
        let before = instrument::double_publications();
        random_against_model::<Direct>(99);
        assert_eq!(instrument::double_publications(), before);
    }

    fn concurrent<M: TreeMode>() {
        let t: Arc<NbBst<u64, M>> = Arc::new(NbBst::new());
        let hs: Vec<_> = (0..4u64)
            .map(|tid| {
                let t = Arc::clone(&t);
                std::thread::spawn(move || {
                    let h = t.register();
                    let mut x = tid + 7;
                    for _ in 0..4000 {
                        let g = h.pin();
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        let k = (x >> 33) % 128;
                        if x & 1 == 0 {
                            t.insert(k, &g);
                        } else {
                            t.delete(k, &g);
                        }
                    }
                })
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
        let h = t.register();
        let g = h.pin();
        let keys = t.range(0, 1000, &g).unwrap();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        for k in 0..128 {
            assert_eq!(t.find(k, &g), keys.contains(&k));
        }
    }

    #[test]
    fn concurrent_all_modes() {
        concurrent::<Indirect>();
        concurrent::<Direct>();
        concurrent::<Plain>();
    }
}
