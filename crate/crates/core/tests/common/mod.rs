#![allow(dead_code)]

use chronocas::bst::{NbBst, TreeMode};
use chronocas::cell::CellFamily;
use chronocas::oracle::{QueueOp, QueueRet, SetOp, SetRet};
use chronocas::{Guard, HarrisList, MsQueue, QueryError};

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
        QueueOp::Ith(i) => opt(q.ith(i, g)),
    }
}

fn opt(r: Result<Option<u64>, QueryError>) -> QueueRet {
    match r {
        Ok(k) => QueueRet::Key(k),
        Err(e) => QueueRet::Error(e),
    }
}

fn keys(r: Result<Vec<u64>, QueryError>) -> SetRet {
    r.map_or_else(SetRet::Error, SetRet::Keys)
}

/// `None` for operations the list does not offer.
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

/// `None` for operations the tree does not offer.
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
