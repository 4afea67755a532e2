//! Sequential specifications.
//!
//! Each state type steps deterministically through the operations of one
//! abstract data type. They serve as replay oracles for single-threaded
//! tests and as the specifications the linearizability checker searches
//! against.

mod queue;
mod set;
mod tree;
mod vcas;

use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

pub use queue::{QueueOp, QueueRet, SeqQueue};
pub use set::{Pred, SeqSet, SetOp, SetRet};
pub use tree::SeqLeafTree;
pub use vcas::{SeqVcas, VcasOp, VcasRet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("handle {0} was never issued")]
    UnknownHandle(u64),
    #[error("object {0} does not exist")]
    UnknownObject(usize),
    #[error("handle {handle} predates object {object}")]
    PredatesObject { object: usize, handle: u64 },
    #[error("operation not supported by this specification")]
    Unsupported,
}

/// A sequential object.
pub trait Sequential: Clone + Eq + Hash + Debug {
    type Op: Clone + Debug;
    type Ret: Clone + Debug + PartialEq;

    fn step(&mut self, op: &Self::Op) -> Result<Self::Ret, OracleError>;

    /// The successor state if `op` may return `observed` here.
    fn accepts(&self, op: &Self::Op, observed: &Self::Ret) -> Option<Self> {
        let mut next = self.clone();
        match next.step(op) {
            Ok(r) if r == *observed => Some(next),
            _ => None,
        }
    }

    /// The successor state for an operation whose result was never seen.
    fn apply_pending(&self, op: &Self::Op) -> Option<Self> {
        let mut next = self.clone();
        next.step(op).ok().map(|_| next)
    }
}

/// Runs `ops` in order from `state`, collecting results.
pub fn replay<S: Sequential>(state: &mut S, ops: &[S::Op]) -> Result<Vec<S::Ret>, OracleError> {
    ops.iter().map(|op| state.step(op)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_replays_to_nothing() {
        let mut s = SeqQueue::default();
        assert_eq!(replay(&mut s, &[]), Ok(vec![]));
    }

    #[test]
    fn single_op_equals_step() {
        let mut a = SeqSet::default();
        let mut b = SeqSet::default();
        let op = SetOp::Insert(4);
        assert_eq!(replay(&mut a, std::slice::from_ref(&op)).unwrap(), vec![b.step(&op).unwrap()]);
    }
}
