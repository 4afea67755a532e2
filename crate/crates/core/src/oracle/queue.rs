use std::collections::VecDeque;

use super::{OracleError, Sequential};
use crate::error::QueryError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum QueueOp {
    Enqueue(u64),
    Dequeue,
    PeekEndPoints,
    Scan,
    Ith(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum QueueRet {
    Unit,
    Key(Option<u64>),
    Ends(Option<u64>, Option<u64>),
    Keys(Vec<u64>),
    Error(QueryError),
}

/// FIFO queue with atomic whole-queue queries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SeqQueue {
    items: VecDeque<u64>,
}

impl SeqQueue {
    pub fn from_items(items: impl IntoIterator<Item = u64>) -> Self {
        SeqQueue {
            items: items.into_iter().collect(),
        }
    }

    pub fn items(&self) -> impl Iterator<Item = u64> + '_ {
        self.items.iter().copied()
    }
}

impl Sequential for SeqQueue {
    type Op = QueueOp;
    type Ret = QueueRet;

    fn step(&mut self, op: &QueueOp) -> Result<QueueRet, OracleError> {
        Ok(match *op {
            QueueOp::Enqueue(k) => {
                self.items.push_back(k);
                QueueRet::Unit
            }
            QueueOp::Dequeue => QueueRet::Key(self.items.pop_front()),
            QueueOp::PeekEndPoints => {
                QueueRet::Ends(self.items.front().copied(), self.items.back().copied())
            }
            QueueOp::Scan => QueueRet::Keys(self.items.iter().copied().collect()),
            QueueOp::Ith(0) => QueueRet::Error(QueryError::ZeroIndex),
            QueueOp::Ith(i) => QueueRet::Key(self.items.get(i - 1).copied()),
        })
    }
}
