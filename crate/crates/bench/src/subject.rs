//! One enum over every benchmarked structure, so drivers can stay
//! non-generic.

use std::sync::Arc;

use chronocas::bst::{NbBst, TreeMode};
use chronocas::cell::{CellFamily, Plain, Versioned};
use chronocas::oracle::{QueueOp, QueueRet, SetOp, SetRet};
use chronocas::{Bst, DirectBst, EpochManager, Guard, HarrisList, MsQueue, PlainBst, QueryError};

use crate::config::Structure;

pub enum Subject {
    Queue(MsQueue<u64, Versioned>),
    QueuePlain(MsQueue<u64, Plain>),
    List(HarrisList<u64, Versioned>),
    ListPlain(HarrisList<u64, Plain>),
    Bst(Bst<u64>),
    BstDirect(DirectBst<u64>),
    BstPlain(PlainBst<u64>),
}

macro_rules! each {
    ($s:expr, $x:ident => $body:expr) => {
        match $s {
            Subject::Queue($x) => $body,
            Subject::QueuePlain($x) => $body,
            Subject::List($x) => $body,
            Subject::ListPlain($x) => $body,
            Subject::Bst($x) => $body,
            Subject::BstDirect($x) => $body,
            Subject::BstPlain($x) => $body,
        }
    };
}

impl Subject {
    /// The structure itself, or with `baseline` its counterpart without
    /// versioned links.
    pub fn new(structure: Structure, baseline: bool) -> Self {
        match (structure, baseline) {
            (Structure::Queue, false) => Subject::Queue(MsQueue::new()),
            (Structure::Queue, true) => Subject::QueuePlain(MsQueue::new()),
            (Structure::List, false) => Subject::List(HarrisList::new()),
            (Structure::List, true) => Subject::ListPlain(HarrisList::new()),
            (Structure::Bst, false) => Subject::Bst(Bst::new()),
            (Structure::BstDirect, false) => Subject::BstDirect(DirectBst::new()),
            (Structure::BstPlain, _) | (_, true) => Subject::BstPlain(PlainBst::new()),
        }
    }

    pub fn manager(&self) -> &Arc<EpochManager> {
        each!(self, x => x.manager())
    }

    pub fn is_queue(&self) -> bool {
        matches!(self, Subject::Queue(_) | Subject::QueuePlain(_))
    }

    /// Most times a range query reads the same versioned cell.
    pub fn reads_per_cell(&self) -> u64 {
        match self {
            Subject::List(_) | Subject::ListPlain(_) => 2,
            _ => 1,
        }
    }

    pub fn insert(&self, k: u64, g: &Guard<'_>) -> bool {
        match self {
            Subject::Queue(q) => {
                q.enqueue(k, g);
                true
            }
            Subject::QueuePlain(q) => {
                q.enqueue(k, g);
                true
            }
            Subject::List(l) => l.insert(k, g),
            Subject::ListPlain(l) => l.insert(k, g),
            Subject::Bst(t) => t.insert(k, g),
            Subject::BstDirect(t) => t.insert(k, g),
            Subject::BstPlain(t) => t.insert(k, g),
        }
    }

    pub fn delete(&self, k: u64, g: &Guard<'_>) -> bool {
        match self {
            Subject::Queue(q) => q.dequeue(g).is_some(),
            Subject::QueuePlain(q) => q.dequeue(g).is_some(),
            Subject::List(l) => l.delete(k, g),
            Subject::ListPlain(l) => l.delete(k, g),
            Subject::Bst(t) => t.delete(k, g),
            Subject::BstDirect(t) => t.delete_recorded_once(k, g),
            Subject::BstPlain(t) => t.delete(k, g),
        }
    }

    pub fn find(&self, k: u64, g: &Guard<'_>) -> bool {
        match self {
            Subject::Queue(q) => q.peek_end_points(g).0.is_some(),
            Subject::QueuePlain(q) => q.peek_end_points(g).0.is_some(),
            Subject::List(l) => l.contains(k, g),
            Subject::ListPlain(l) => l.contains(k, g),
            Subject::Bst(t) => t.find(k, g),
            Subject::BstDirect(t) => t.find(k, g),
            Subject::BstPlain(t) => t.find(k, g),
        }
    }

    /// Range query over `[k, k + size - 1]`, or for the queue a read of the
    /// `size`-th element. Returns the number of keys reported.
    pub fn query(&self, k: u64, size: u64, g: &Guard<'_>) -> usize {
        let e = k.saturating_add(size.max(1) - 1);
        match self {
            Subject::Queue(q) => q.ith(size as usize, g).unwrap().is_some() as usize,
            Subject::QueuePlain(q) => q.ith(size as usize, g).unwrap().is_some() as usize,
            Subject::List(l) => l.range(k, e, g).unwrap().len(),
            Subject::ListPlain(l) => l.range(k, e, g).unwrap().len(),
            Subject::Bst(t) => t.range(k, e, g).unwrap().len(),
            Subject::BstDirect(t) => t.range(k, e, g).unwrap().len(),
            Subject::BstPlain(t) => t.range(k, e, g).unwrap().len(),
        }
    }

    /// Keys in `[s, e]`; empty for the queue.
    pub fn range(&self, s: u64, e: u64, g: &Guard<'_>) -> Vec<u64> {
        match self {
            Subject::Queue(_) | Subject::QueuePlain(_) => Vec::new(),
            Subject::List(l) => l.range(s, e, g).unwrap(),
            Subject::ListPlain(l) => l.range(s, e, g).unwrap(),
            Subject::Bst(t) => t.range(s, e, g).unwrap(),
            Subject::BstDirect(t) => t.range(s, e, g).unwrap(),
            Subject::BstPlain(t) => t.range(s, e, g).unwrap(),
        }
    }

    /// Current contents in queue order or key order.
    pub fn contents(&self, g: &Guard<'_>) -> Vec<u64> {
        match self {
            Subject::Queue(q) => q.scan(g),
            Subject::QueuePlain(q) => q.scan(g),
            Subject::List(l) => l.range(0, u64::MAX, g).unwrap(),
            Subject::ListPlain(l) => l.range(0, u64::MAX, g).unwrap(),
            Subject::Bst(t) => t.range(0, u64::MAX, g).unwrap(),
            Subject::BstDirect(t) => t.range(0, u64::MAX, g).unwrap(),
            Subject::BstPlain(t) => t.range(0, u64::MAX, g).unwrap(),
        }
    }

    /// Applies a queue operation; `None` for set structures.
    pub fn apply_queue(&self, op: &QueueOp, g: &Guard<'_>) -> Option<QueueRet> {
        match self {
            Subject::Queue(q) => Some(queue_apply(q, op, g)),
            Subject::QueuePlain(q) => Some(queue_apply(q, op, g)),
            _ => None,
        }
    }

    /// Applies a set operation; `None` for the queue and for operations the
    /// structure does not offer.
    pub fn apply_set(&self, op: &SetOp, g: &Guard<'_>) -> Option<SetRet> {
        match self {
            Subject::Queue(_) | Subject::QueuePlain(_) => None,
            Subject::List(l) => list_apply(l, op, g),
            Subject::ListPlain(l) => list_apply(l, op, g),
            Subject::Bst(t) => bst_apply(t, op, g),
            Subject::BstDirect(t) => bst_apply(t, op, g),
            Subject::BstPlain(t) => bst_apply(t, op, g),
        }
    }
}

pub fn queue_apply<F: CellFamily>(q: &MsQueue<u64, F>, op: &QueueOp, g: &Guard<'_>) -> QueueRet {
    match *op {
        QueueOp::Enqueue(k) => {
            q.enqueue(k, g);
            QueueRet::Unit
        }
        QueueOp::Dequeue => QueueRet::Key(q.dequeue(g)),
        QueueOp::PeekEndPoints => {
            let (a, b) = q.peek_end_points(g);
            QueueRet::Ends(a, b)
        }
        QueueOp::Scan => QueueRet::Keys(q.scan(g)),
        QueueOp::Ith(i) => q.ith(i, g).map_or_else(QueueRet::Error, QueueRet::Key),
    }
}

fn keys(r: Result<Vec<u64>, QueryError>) -> SetRet {
    r.map_or_else(SetRet::Error, SetRet::Keys)
}

pub fn list_apply<F: CellFamily>(l: &HarrisList<u64, F>, op: &SetOp, g: &Guard<'_>) -> Option<SetRet> {
    Some(match op {
        SetOp::Insert(k) => SetRet::Bool(l.insert(*k, g)),
        SetOp::Delete(k) => SetRet::Bool(l.delete(*k, g)),
        SetOp::Contains(k) => SetRet::Bool(l.contains(*k, g)),
        SetOp::Range(s, e) => keys(l.range(*s, *e, g)),
        SetOp::MultiSearch(ks) => SetRet::Flags(l.multisearch(ks, g)),
        SetOp::Ith(i) => l.ith(*i, g).map_or_else(SetRet::Error, SetRet::Key),
        _ => return None,
    })
}

pub fn bst_apply<M: TreeMode>(t: &NbBst<u64, M>, op: &SetOp, g: &Guard<'_>) -> Option<SetRet> {
    Some(match op {
        SetOp::Insert(k) => SetRet::Bool(t.insert(*k, g)),
        SetOp::Delete(k) => SetRet::Bool(t.delete(*k, g)),
        SetOp::Contains(k) => SetRet::Bool(t.find(*k, g)),
        SetOp::Range(s, e) => keys(t.range(*s, *e, g)),
        SetOp::RangeSum(s, e) => t.range_sum(*s, *e, g).map_or_else(SetRet::Error, SetRet::Sum),
        SetOp::Succ(k, c) => keys(t.succ(*k, *c, g)),
        SetOp::FindIf(s, e, p) => t
            .find_if(*s, *e, |k| p.eval(*k), g)
            .map_or_else(SetRet::Error, SetRet::Key),
        SetOp::MultiSearch(ks) => SetRet::Flags(t.multisearch(ks, g)),
        SetOp::Height => SetRet::Height(t.height(g)),
        SetOp::Ith(_) => return None,
    })
}
