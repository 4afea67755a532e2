//! Harris's lock-free sorted linked list with atomic range queries.
//!
//! Each `next` field holds a link and a deletion mark in one versioned word.
//! A delete takes effect when the mark is set; physical unlinking happens
//! later and may remove a whole chain of marked nodes with one CAS. Queries
//! walk the list as of a snapshot and skip every node that was marked at that
//! instant, whether or not it had been unlinked yet.

use std::cmp::Ordering;
use std::fmt;
use std::ptr;
use std::sync::Arc;

use crate::camera::Camera;
use crate::cell::{CellFamily, SnapshotCell, Versioned};
use crate::error::QueryError;
use crate::link::{Link, MarkedLink};
use crate::reclaim::{EpochManager, Guard, LocalHandle, Reclaim, RecordHeader, Snapshot};

/// A key widened with the two sentinels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bounded<K> {
    NegInf,
    Key(K),
    PosInf,
}

impl<K: Ord> Bounded<K> {
    fn cmp_key(&self, k: &K) -> Ordering {
        match self {
            Bounded::NegInf => Ordering::Less,
            Bounded::Key(x) => x.cmp(k),
            Bounded::PosInf => Ordering::Greater,
        }
    }
}

pub struct LNode<K: 'static, F: CellFamily> {
    header: RecordHeader,
    next: F::Cell<MarkedLink<LNode<K, F>>>,
    key: Bounded<K>,
}

unsafe impl<K: Send + 'static, F: CellFamily> Reclaim for LNode<K, F> {
    fn header(&self) -> &RecordHeader {
        &self.header
    }

    fn poison_owned(&self) {
        self.next.poison_owned();
    }
}

impl<K: 'static, F: CellFamily> LNode<K, F> {
    fn boxed(key: Bounded<K>, next: Link<Self>, camera: &Camera) -> Box<Self> {
        Box::new(LNode {
            header: RecordHeader::new(),
            next: SnapshotCell::new(MarkedLink::new(next, false), camera),
            key,
        })
    }
}

#[inline]
unsafe fn node<'g, K: 'static, F: CellFamily>(l: Link<LNode<K, F>>) -> &'g LNode<K, F> {
    let n = &*l.as_ptr();
    n.header.check();
    n
}

/// A lock-free ordered set.
pub struct HarrisList<K: 'static, F: CellFamily = Versioned> {
    camera: Camera,
    manager: Arc<EpochManager>,
    head: Link<LNode<K, F>>,
    tail: Link<LNode<K, F>>,
}

unsafe impl<K: Send + Sync + 'static, F: CellFamily> Send for HarrisList<K, F> {}
unsafe impl<K: Send + Sync + 'static, F: CellFamily> Sync for HarrisList<K, F> {}

impl<K, F> HarrisList<K, F>
where
    K: Ord + Copy + Send + Sync + 'static,
    F: CellFamily,
{
    pub fn new() -> Self {
        Self::with_manager(EpochManager::new())
    }

    pub fn with_manager(manager: Arc<EpochManager>) -> Self {
        let camera = Camera::new();
        let tail = Link::from_box(LNode::boxed(Bounded::PosInf, Link::null(), &camera));
        let head = Link::from_box(LNode::boxed(Bounded::NegInf, tail, &camera));
        HarrisList {
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

    /// Returns adjacent unmarked `(left, right)` with `left.key < k <=
    /// right.key`, unlinking any marked nodes between them.
    fn search(&self, k: &K, guard: &Guard<'_>) -> (Link<LNode<K, F>>, Link<LNode<K, F>>) {
        let cam = &self.camera;
        'retry: loop {
            let mut left = self.head;
            let mut left_next = unsafe { node(self.head) }.next.load(cam, guard);
            let mut t = self.head;
            let mut t_next = left_next;
            loop {
                if !t_next.is_marked() {
                    left = t;
                    left_next = t_next;
                }
                t = t_next.link();
                if t == self.tail {
                    break;
                }
                t_next = unsafe { node(t) }.next.load(cam, guard);
                if !t_next.is_marked() && unsafe { node(t) }.key.cmp_key(k) != Ordering::Less {
                    break;
                }
            }
            let right = t;
            if left_next.link() == right {
                if right != self.tail && unsafe { node(right) }.next.load(cam, guard).is_marked() {
                    continue 'retry;
                }
                return (left, right);
            }
            let unlinked = MarkedLink::new(right, false);
            if unsafe { node(left) }
                .next
                .compare_and_swap(left_next, unlinked, cam, guard)
            {
                // Marked nexts never change, so the chain we walked is
                // exactly what the CAS removed.
                let mut c = left_next.link();
                while c != right {
                    let nx = unsafe { node(c) }.next.load(cam, guard).link();
                    unsafe { guard.retire(c.as_ptr()) };
                    c = nx;
                }
                if right != self.tail && unsafe { node(right) }.next.load(cam, guard).is_marked() {
                    continue 'retry;
                }
                return (left, right);
            }
        }
    }

    pub fn insert(&self, key: K, guard: &Guard<'_>) -> bool {
        self.check_guard(guard);
        let cam = &self.camera;
        let mut fresh: Option<Box<LNode<K, F>>> = None;
        loop {
            let (left, right) = self.search(&key, guard);
            if unsafe { node(right) }.key == Bounded::Key(key) {
                return false;
            }
            // Rebuilt on every attempt so its first version is stamped
            // before it can become reachable.
            let mut b = match fresh.take() {
                Some(mut b) => {
                    b.next = SnapshotCell::new(MarkedLink::new(right, false), cam);
                    b
                }
                None => LNode::boxed(Bounded::Key(key), right, cam),
            };
            let link = Link::from_raw(&mut *b as *mut LNode<K, F>);
            if unsafe { node(left) }.next.compare_and_swap(
                MarkedLink::new(right, false),
                MarkedLink::new(link, false),
                cam,
                guard,
            ) {
                let _ = Box::into_raw(b);
                return true;
            }
            fresh = Some(b);
        }
    }

    pub fn delete(&self, key: K, guard: &Guard<'_>) -> bool {
        self.check_guard(guard);
        let cam = &self.camera;
        loop {
            let (left, right) = self.search(&key, guard);
            let r = unsafe { node(right) };
            if r.key != Bounded::Key(key) {
                return false;
            }
            let rn = r.next.load(cam, guard);
            if rn.is_marked() {
                continue;
            }
            if r.next.compare_and_swap(rn, rn.marked(), cam, guard) {
                if unsafe { node(left) }.next.compare_and_swap(
                    MarkedLink::new(right, false),
                    MarkedLink::new(rn.link(), false),
                    cam,
                    guard,
                ) {
                    unsafe { guard.retire(right.as_ptr()) };
                } else {
                    self.search(&key, guard);
                }
                return true;
            }
        }
    }

    pub fn contains(&self, key: K, guard: &Guard<'_>) -> bool {
        self.check_guard(guard);
        let cam = &self.camera;
        let mut t = unsafe { node(self.head) }.next.load(cam, guard).link();
        loop {
            let n = unsafe { node(t) };
            match n.key.cmp_key(&key) {
                Ordering::Less => t = n.next.load(cam, guard).link(),
                Ordering::Equal => return !n.next.load(cam, guard).is_marked(),
                Ordering::Greater => return false,
            }
        }
    }

    pub fn snapshot<'g>(&'g self, guard: &'g Guard<'_>) -> Snapshot<'g> {
        self.check_guard(guard);
        guard.snapshot(&self.camera)
    }

    /// First successor of `from` at the snapshot that was not marked then.
    fn get_next(&self, from: Link<LNode<K, F>>, snap: &Snapshot<'_>) -> Link<LNode<K, F>> {
        let mut n = unsafe { node(from) }.next.load_at(snap).link();
        while n != self.tail {
            let nx = unsafe { node(n) }.next.load_at(snap);
            if !nx.is_marked() {
                break;
            }
            n = nx.link();
        }
        n
    }

    fn key_of(&self, l: Link<LNode<K, F>>) -> Bounded<K> {
        unsafe { node(l) }.key
    }

    /// Keys in `[s, e]`, ascending, at one instant.
    pub fn range(&self, s: K, e: K, guard: &Guard<'_>) -> Result<Vec<K>, QueryError> {
        if s > e {
            return Err(QueryError::InvertedRange);
        }
        let snap = self.snapshot(guard);
        self.range_at(s, e, &snap)
    }

    pub fn range_at(&self, s: K, e: K, snap: &Snapshot<'_>) -> Result<Vec<K>, QueryError> {
        if s > e {
            return Err(QueryError::InvertedRange);
        }
        self.check_snapshot(snap);
        let mut out = Vec::new();
        let mut n = self.get_next(self.head, snap);
        while let Bounded::Key(k) = self.key_of(n) {
            if k > e {
                break;
            }
            if k >= s {
                out.push(k);
            }
            n = self.get_next(n, snap);
        }
        Ok(out)
    }

    /// Membership of every key in `keys`, in input order, at one instant.
    pub fn multisearch(&self, keys: &[K], guard: &Guard<'_>) -> Vec<bool> {
        let snap = self.snapshot(guard);
        self.multisearch_at(keys, &snap)
    }

    pub fn multisearch_at(&self, keys: &[K], snap: &Snapshot<'_>) -> Vec<bool> {
        self.check_snapshot(snap);
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        let mut out = vec![false; keys.len()];
        let mut n = self.get_next(self.head, snap);
        for idx in order {
            let want = &keys[idx];
            while self.key_of(n).cmp_key(want) == Ordering::Less {
                n = self.get_next(n, snap);
            }
            out[idx] = self.key_of(n).cmp_key(want) == Ordering::Equal;
        }
        out
    }

    /// The `i`-th smallest key (1-based) at one instant.
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
        let mut n = self.head;
        for _ in 0..i {
            n = self.get_next(n, snap);
            if n == self.tail {
                return Ok(None);
            }
        }
        match self.key_of(n) {
            Bounded::Key(k) => Ok(Some(k)),
            _ => Ok(None),
        }
    }
}

impl<K, F> Default for HarrisList<K, F>
where
    K: Ord + Copy + Send + Sync + 'static,
    F: CellFamily,
{
    fn default() -> Self {
        Self::new()
    }
}

impl<K: 'static, F: CellFamily> Drop for HarrisList<K, F> {
    fn drop(&mut self) {
        let mut p = self.head.as_ptr();
        while !p.is_null() {
            let mut b = unsafe { Box::from_raw(p) };
            p = b.next.load_exclusive().link().as_ptr();
        }
    }
}

impl<K: 'static, F: CellFamily> fmt::Debug for HarrisList<K, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HarrisList")
            .field("timestamp", &self.camera.peek_timestamp())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn set_semantics() {
        let l: HarrisList<i32> = HarrisList::new();
        let h = l.register();
        let g = h.pin();
        assert!(l.insert(5, &g));
        assert!(!l.insert(5, &g));
        assert!(l.contains(5, &g));
        assert!(l.delete(5, &g));
        assert!(!l.delete(5, &g));
        assert!(!l.contains(5, &g));
    }

    #[test]
    fn queries() {
        let l: HarrisList<i32> = HarrisList::new();
        let h = l.register();
        let g = h.pin();
        for k in [9, 1, 5] {
            l.insert(k, &g);
        }
        assert_eq!(l.range(2, 9, &g).unwrap(), vec![5, 9]);
        assert_eq!(l.range(9, 2, &g), Err(QueryError::InvertedRange));
        assert_eq!(l.multisearch(&[7, 5], &g), vec![false, true]);
        assert_eq!(l.ith(2, &g), Ok(Some(5)));
        assert_eq!(l.ith(4, &g), Ok(None));
        assert_eq!(l.ith(0, &g), Err(QueryError::ZeroIndex));
    }

    #[test]
    fn marked_but_linked_nodes_are_skipped() {
        let l: HarrisList<i32> = HarrisList::new();
        let h = l.register();
        let g = h.pin();
        for k in [1, 2, 3] {
            l.insert(k, &g);
        }
        // Mark 2 without unlinking it.
        let cam = l.camera();
        let mut n = unsafe { node(l.head) }.next.load(cam, &g).link();
        while unsafe { node(n) }.key != Bounded::Key(2) {
            n = unsafe { node(n) }.next.load(cam, &g).link();
        }
        let nn = unsafe { node(n) };
        let cur = nn.next.load(cam, &g);
        assert!(nn.next.compare_and_swap(cur, cur.marked(), cam, &g));
        let s = l.snapshot(&g);
        assert_eq!(l.range_at(0, 10, &s).unwrap(), vec![1, 3]);
        let one = unsafe { node(l.head) }.next.load(cam, &g).link();
        assert_eq!(unsafe { node(l.get_next(one, &s)) }.key, Bounded::Key(3));
        assert!(!l.contains(2, &g));
        // A later search unlinks it; the old snapshot is unaffected.
        assert!(l.insert(2, &g));
        assert_eq!(l.range_at(0, 10, &s).unwrap(), vec![1, 3]);
        assert_eq!(l.range(0, 10, &g).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn all_marked_up_to_tail() {
        let l: HarrisList<i32> = HarrisList::new();
        let h = l.register();
        let g = h.pin();
        l.insert(4, &g);
        let cam = l.camera();
        let n = unsafe { node(l.head) }.next.load(cam, &g).link();
        let cur = unsafe { node(n) }.next.load(cam, &g);
        assert!(unsafe { node(n) }.next.compare_and_swap(cur, cur.marked(), cam, &g));
        let s = l.snapshot(&g);
        assert_eq!(l.get_next(l.head, &s), l.tail);
    }

    #[test]
    fn snapshots_survive_updates() {
        let l: HarrisList<u32> = HarrisList::new();
        let h = l.register();
        let g = h.pin();
        let mut model = BTreeSet::new();
        let mut taken = Vec::new();
        let mut x = 12345u64;
        for _ in 0..400 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = ((x >> 33) % 40) as u32;
            if x & 1 == 0 {
                assert_eq!(l.insert(k, &g), model.insert(k));
            } else {
                assert_eq!(l.delete(k, &g), model.remove(&k));
            }
            taken.push((l.snapshot(&g), model.iter().copied().collect::<Vec<_>>()));
        }
        for (s, want) in &taken {
            assert_eq!(&l.range_at(0, 100, s).unwrap(), want);
        }
    }

    #[test]
    fn concurrent_disjoint_ranges() {
        let l: Arc<HarrisList<u64>> = Arc::new(HarrisList::new());
        let hs: Vec<_> = (0..4u64)
            .map(|t| {
                let l = Arc::clone(&l);
                std::thread::spawn(move || {
                    let h = l.register();
                    for round in 0..300 {
                        let g = h.pin();
                        for i in 0..8 {
                            let k = t * 100 + i;
                            if round % 2 == 0 {
                                assert!(l.insert(k, &g));
                            } else {
                                assert!(l.delete(k, &g));
                            }
                        }
                    }
                })
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
        let h = l.register();
        let g = h.pin();
        assert!(l.range(0, 1000, &g).unwrap().is_empty());
    }
}
