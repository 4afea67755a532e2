use std::collections::BTreeSet;
use std::ops::Bound::{Excluded, Included, Unbounded};

use super::{OracleError, Sequential};
use crate::error::QueryError;

/// Predicates for find-if, kept as data so operations stay comparable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pred {
    /// `k % m == r`
    ModEq { m: u64, r: u64 },
    Any,
}

impl Pred {
    pub fn eval(&self, k: u64) -> bool {
        match *self {
            Pred::ModEq { m, r } => m != 0 && k % m == r,
            Pred::Any => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SetOp {
    Insert(u64),
    Delete(u64),
    Contains(u64),
    Range(u64, u64),
    RangeSum(u64, u64),
    Succ(u64, usize),
    FindIf(u64, u64, Pred),
    MultiSearch(Vec<u64>),
    Ith(usize),
    Height,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SetRet {
    Bool(bool),
    Keys(Vec<u64>),
    Sum(i128),
    Key(Option<u64>),
    Flags(Vec<bool>),
    Height(usize),
    Error(QueryError),
}

/// Answers every set query from a sorted key sequence.
pub(super) fn query(keys: &BTreeSet<u64>, op: &SetOp) -> Option<SetRet> {
    Some(match op {
        SetOp::Contains(k) => SetRet::Bool(keys.contains(k)),
        SetOp::Range(s, e) if s > e => SetRet::Error(QueryError::InvertedRange),
        SetOp::Range(s, e) => SetRet::Keys(keys.range(s..=e).copied().collect()),
        SetOp::RangeSum(s, e) if s > e => SetRet::Error(QueryError::InvertedRange),
        SetOp::RangeSum(s, e) => SetRet::Sum(keys.range(s..=e).map(|&k| k as i128).sum()),
        SetOp::Succ(_, 0) => SetRet::Error(QueryError::ZeroCount),
        SetOp::Succ(k, c) => SetRet::Keys(
            keys.range((Excluded(*k), Unbounded))
                .take(*c)
                .copied()
                .collect(),
        ),
        SetOp::FindIf(s, e, _) if s > e => SetRet::Error(QueryError::InvertedRange),
        SetOp::FindIf(s, e, p) => SetRet::Key(
            keys.range((Included(*s), Excluded(*e)))
                .copied()
                .find(|&k| p.eval(k)),
        ),
        SetOp::MultiSearch(ks) => SetRet::Flags(ks.iter().map(|k| keys.contains(k)).collect()),
        SetOp::Ith(0) => SetRet::Error(QueryError::ZeroIndex),
        SetOp::Ith(i) => SetRet::Key(keys.iter().nth(i - 1).copied()),
        _ => return None,
    })
}

/// Ordered set. Has no shape, so `Height` is unsupported.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SeqSet {
    keys: BTreeSet<u64>,
}

impl SeqSet {
    pub fn from_keys(keys: impl IntoIterator<Item = u64>) -> Self {
        SeqSet {
            keys: keys.into_iter().collect(),
        }
    }

    pub fn keys(&self) -> &BTreeSet<u64> {
        &self.keys
    }
}

impl Sequential for SeqSet {
    type Op = SetOp;
    type Ret = SetRet;

    fn step(&mut self, op: &SetOp) -> Result<SetRet, OracleError> {
        match op {
            SetOp::Insert(k) => Ok(SetRet::Bool(self.keys.insert(*k))),
            SetOp::Delete(k) => Ok(SetRet::Bool(self.keys.remove(k))),
            SetOp::Height => Err(OracleError::Unsupported),
            q => Ok(query(&self.keys, q).expect("query op")),
        }
    }
}
