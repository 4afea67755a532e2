//! Snapshot queries. Each one is the textbook sequential algorithm run on
//! the tree as it was at the snapshot, reading children with `load_at`.

use super::{node, NbBst, Node, NodeLink, QueryScope, TreeKey, TreeMode};
use crate::cell::SnapshotCell;
use crate::error::QueryError;
use crate::reclaim::{Guard, Snapshot};

impl<K, M> NbBst<K, M>
where
    K: Ord + Copy + Send + Sync + 'static,
    M: TreeMode,
{
    #[inline]
    fn child_at(&self, n: &Node<K, M>, left: bool, snap: &Snapshot<'_>) -> NodeLink<K, M> {
        n.child(left).load_at(snap)
    }

    /// In-order walk of the leaves whose keys may lie in `[lo, hi]`
    /// (`None` = unbounded), stopping when `visit` returns false.
    fn walk(
        &self,
        lo: Option<&K>,
        hi: Option<&K>,
        snap: &Snapshot<'_>,
        mut visit: impl FnMut(&K) -> bool,
    ) {
        self.check_snapshot(snap);
        let _scope = QueryScope::enter();
        let mut stack = vec![self.root];
        while let Some(l) = stack.pop() {
            let n = unsafe { node(l) };
            if n.is_leaf() {
                if let TreeKey::Fin(k) = &n.key {
                    if lo.is_none_or(|lo| k >= lo) && hi.is_none_or(|hi| k <= hi) && !visit(k) {
                        return;
                    }
                }
                continue;
            }
            // Left subtree keys are < n.key, right subtree keys are >= n.key.
            let go_right = match (&n.key, hi) {
                (TreeKey::Fin(x), Some(hi)) => hi >= x,
                (TreeKey::Fin(_), None) => true,
                _ => false,
            };
            let go_left = lo.is_none_or(|lo| n.key.above(lo));
            if go_right {
                stack.push(self.child_at(n, false, snap));
            }
            if go_left {
                stack.push(self.child_at(n, true, snap));
            }
        }
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
        let mut out = Vec::new();
        self.walk(Some(&s), Some(&e), snap, |k| {
            out.push(*k);
            true
        });
        Ok(out)
    }

    /// Sum of the keys in `[a, b]` at one instant.
    pub fn range_sum(&self, a: K, b: K, guard: &Guard<'_>) -> Result<i128, QueryError>
    where
        K: Into<i128>,
    {
        if a > b {
            return Err(QueryError::InvertedRange);
        }
        let snap = self.snapshot(guard);
        self.range_sum_at(a, b, &snap)
    }

    pub fn range_sum_at(&self, a: K, b: K, snap: &Snapshot<'_>) -> Result<i128, QueryError>
    where
        K: Into<i128>,
    {
        if a > b {
            return Err(QueryError::InvertedRange);
        }
        let mut sum = 0i128;
        self.walk(Some(&a), Some(&b), snap, |k| {
            sum += (*k).into();
            true
        });
        Ok(sum)
    }

    /// The first `c` keys strictly greater than `k`, ascending.
    pub fn succ(&self, k: K, c: usize, guard: &Guard<'_>) -> Result<Vec<K>, QueryError> {
        if c == 0 {
            return Err(QueryError::ZeroCount);
        }
        let snap = self.snapshot(guard);
        self.succ_at(k, c, &snap)
    }

    pub fn succ_at(&self, k: K, c: usize, snap: &Snapshot<'_>) -> Result<Vec<K>, QueryError> {
        if c == 0 {
            return Err(QueryError::ZeroCount);
        }
        let mut out = Vec::with_capacity(c);
        self.walk(Some(&k), None, snap, |x| {
            if *x > k {
                out.push(*x);
            }
            out.len() < c
        });
        Ok(out)
    }

    /// The smallest key in `[s, e)` satisfying `pred`.
    pub fn find_if(
        &self,
        s: K,
        e: K,
        pred: impl Fn(&K) -> bool,
        guard: &Guard<'_>,
    ) -> Result<Option<K>, QueryError> {
        if s > e {
            return Err(QueryError::InvertedRange);
        }
        let snap = self.snapshot(guard);
        self.find_if_at(s, e, pred, &snap)
    }

    pub fn find_if_at(
        &self,
        s: K,
        e: K,
        pred: impl Fn(&K) -> bool,
        snap: &Snapshot<'_>,
    ) -> Result<Option<K>, QueryError> {
        if s > e {
            return Err(QueryError::InvertedRange);
        }
        let mut found = None;
        self.walk(Some(&s), Some(&e), snap, |k| {
            if *k < e && pred(k) {
                found = Some(*k);
                false
            } else {
                *k < e
            }
        });
        Ok(found)
    }

    /// Membership of every key in `keys`, in input order, at one instant.
    pub fn multisearch(&self, keys: &[K], guard: &Guard<'_>) -> Vec<bool> {
        let snap = self.snapshot(guard);
        self.multisearch_at(keys, &snap)
    }

    pub fn multisearch_at(&self, keys: &[K], snap: &Snapshot<'_>) -> Vec<bool> {
        self.check_snapshot(snap);
        let _scope = QueryScope::enter();
        keys.iter()
            .map(|k| {
                let mut l = self.root;
                loop {
                    let n = unsafe { node(l) };
                    if n.is_leaf() {
                        break n.key == TreeKey::Fin(*k);
                    }
                    l = self.child_at(n, n.key.above(k), snap);
                }
            })
            .collect()
    }

    pub fn height_at(&self, snap: &Snapshot<'_>) -> usize {
        self.check_snapshot(snap);
        let _scope = QueryScope::enter();
        let top = self.child_at(unsafe { node(self.root) }, true, snap);
        let mut best = 0;
        let mut stack = vec![(top, 0usize)];
        while let Some((l, d)) = stack.pop() {
            let n = unsafe { node(l) };
            if n.is_leaf() {
                if matches!(n.key, TreeKey::Fin(_)) {
                    best = best.max(d);
                }
                continue;
            }
            stack.push((self.child_at(n, true, snap), d + 1));
            stack.push((self.child_at(n, false, snap), d + 1));
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use crate::bst::{Bst, DirectBst};
    use crate::error::QueryError;
    use crate::instrument;

    #[test]
    fn table_two_examples() {
        let t: Bst<i64> = Bst::new();
        let h = t.register();
        let g = h.pin();
        assert_eq!(t.range(0, 100, &g).unwrap(), Vec::<i64>::new());
        assert_eq!(t.range_sum(0, 100, &g), Ok(0));
        assert_eq!(t.height(&g), 0);
        for k in [1, 5, 9] {
            t.insert(k, &g);
        }
        assert_eq!(t.range(2, 9, &g).unwrap(), vec![5, 9]);
        assert_eq!(t.range(9, 2, &g), Err(QueryError::InvertedRange));
        assert_eq!(t.range_sum(2, 9, &g), Ok(14));
        assert_eq!(t.succ(1, 2, &g).unwrap(), vec![5, 9]);
        assert_eq!(t.succ(9, 2, &g).unwrap(), Vec::<i64>::new());
        assert_eq!(t.succ(1, 0, &g), Err(QueryError::ZeroCount));
        assert_eq!(t.find_if(0, 10, |k| k % 4 == 1, &g), Ok(Some(1)));
        assert_eq!(t.find_if(2, 9, |k| k % 4 == 1, &g), Ok(Some(5)));
        assert_eq!(t.find_if(6, 9, |k| k % 4 == 1, &g), Ok(None));
        assert_eq!(t.multisearch(&[5, 7], &g), vec![true, false]);
    }

    #[test]
    fn height_convention() {
        let t: Bst<u32> = Bst::new();
        let h = t.register();
        let g = h.pin();
        t.insert(10, &g);
        assert_eq!(t.height(&g), 1);
        t.insert(20, &g);
        assert_eq!(t.height(&g), 2);
        t.insert(30, &g);
        assert_eq!(t.height(&g), 3);
        t.delete(20, &g);
        assert_eq!(t.height(&g), 2);
    }

    #[test]
    fn queries_never_read_update_words() {
        let t: DirectBst<u32> = DirectBst::new();
        let h = t.register();
        let g = h.pin();
        for k in 0..50 {
            t.insert(k * 7 % 101, &g);
        }
        let before = instrument::query_side_touches();
        t.range(0, 100, &g).unwrap();
        t.succ(3, 5, &g).unwrap();
        t.find_if(0, 100, |k| k % 2 == 0, &g).unwrap();
        t.multisearch(&[1, 2, 3], &g);
        t.height(&g);
        assert_eq!(instrument::query_side_touches(), before);
    }

    #[test]
    fn old_snapshot_survives_updates() {
        let t: DirectBst<u32> = DirectBst::new();
        let h = t.register();
        let g = h.pin();
        for k in [4, 8, 15, 16, 23, 42] {
            t.insert(k, &g);
        }
        let s = t.snapshot(&g);
        t.delete_recorded_once(15, &g);
        t.delete_recorded_once(16, &g);
        t.insert(17, &g);
        assert_eq!(t.range_at(0, 100, &s).unwrap(), vec![4, 8, 15, 16, 23, 42]);
        assert_eq!(t.range(0, 100, &g).unwrap(), vec![4, 8, 17, 23, 42]);
    }
}
