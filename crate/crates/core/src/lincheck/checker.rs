use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::history::{History, OpRecord};
use crate::oracle::Sequential;

#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    pub max_ops: usize,
    pub max_threads: usize,
    /// Search nodes expanded before giving up.
    pub step_budget: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            max_ops: 24,
            max_threads: 8,
            step_budget: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("history too large: {ops} completed ops over {threads} threads")]
    TooLarge { ops: usize, threads: usize },
}

/// Why a history was rejected: the longest linearizable prefix found, after
/// which none of the remaining operations can take effect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness<O, R> {
    pub prefix: Vec<OpRecord<O, R>>,
    pub remaining: Vec<OpRecord<O, R>>,
}

impl<O: fmt::Debug, R: fmt::Debug> fmt::Display for Witness<O, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "longest linearizable prefix:")?;
        for r in &self.prefix {
            writeln!(f, "  {r}")?;
        }
        writeln!(f, "cannot be extended by any of:")?;
        for r in &self.remaining {
            writeln!(f, "  {r}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict<O, R> {
    /// Indices into the history's records, in linearization order. Pending
    /// operations that were dropped do not appear.
    Linearizable { order: Vec<usize> },
    NotLinearizable { witness: Witness<O, R> },
    /// The step budget ran out first.
    Inconclusive { steps: u64 },
}

impl<O, R> Verdict<O, R> {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable { .. })
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Verdict::NotLinearizable { .. })
    }
}

struct Search<'a, S: Sequential> {
    recs: &'a [OpRecord<S::Op, S::Ret>],
    completed: u64,
    dead: HashSet<(u64, S)>,
    steps: u64,
    budget: u64,
    path: Vec<usize>,
    best: Vec<usize>,
}

impl<S: Sequential> Search<'_, S> {
    fn dfs(&mut self, done: u64, state: &S) -> Option<bool> {
        self.steps += 1;
        if self.steps > self.budget {
            return None;
        }
        if self.path.len() > self.best.len() {
            self.best = self.path.clone();
        }
        if done & self.completed == self.completed {
            return Some(true);
        }
        let bound = self
            .recs
            .iter()
            .enumerate()
            .filter(|(i, _)| done & (1 << i) == 0)
            .filter_map(|(_, r)| r.response)
            .min()
            .unwrap_or(u64::MAX);
        for (i, r) in self.recs.iter().enumerate() {
            if done & (1 << i) != 0 || r.invoke > bound {
                continue;
            }
            let next = match &r.ret {
                Some(ret) => state.accepts(&r.op, ret),
                None => state.apply_pending(&r.op),
            };
            let Some(next) = next else { continue };
            let key = (done | 1 << i, next);
            if self.dead.contains(&key) {
                continue;
            }
            self.path.push(i);
            match self.dfs(key.0, &key.1) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            self.path.pop();
            self.dead.insert(key);
        }
        Some(false)
    }
}

/// Decides whether `history` is linearizable with respect to the sequential
/// object starting in `init`.
pub fn check<S: Sequential>(
    init: &S,
    history: &History<S::Op, S::Ret>,
    cfg: &CheckConfig,
) -> Result<Verdict<S::Op, S::Ret>, CheckError> {
    let ops = history.completed();
    let threads = history.threads();
    if ops > cfg.max_ops || threads > cfg.max_threads || history.len() > 63 {
        return Err(CheckError::TooLarge { ops, threads });
    }
    let recs = history.records();
    let completed = recs
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_pending())
        .fold(0u64, |m, (i, _)| m | 1 << i);
    let mut search = Search {
        recs,
        completed,
        dead: HashSet::new(),
        steps: 0,
        budget: cfg.step_budget,
        path: Vec::new(),
        best: Vec::new(),
    };
    Ok(match search.dfs(0, init) {
        Some(true) => Verdict::Linearizable { order: search.path },
        None => Verdict::Inconclusive {
            steps: search.steps,
        },
        Some(false) => {
            let prefix: Vec<_> = search.best.iter().map(|&i| recs[i].clone()).collect();
            let remaining = (0..recs.len())
                .filter(|i| !search.best.contains(i) && !recs[*i].is_pending())
                .map(|i| recs[i].clone())
                .collect();
            Verdict::NotLinearizable {
                witness: Witness { prefix, remaining },
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{SeqVcas, VcasOp, VcasRet};

    fn rec(t: usize, op: VcasOp, ret: VcasRet, inv: u64, resp: u64) -> OpRecord<VcasOp, VcasRet> {
        OpRecord {
            thread: t,
            op,
            ret: Some(ret),
            invoke: inv,
            response: Some(resp),
        }
    }

    fn one_object() -> SeqVcas {
        let mut s = SeqVcas::new();
        s.add_object(0);
        s
    }

    #[test]
    fn sequential_history_accepted() {
        let h = History::from_records(vec![
            rec(0, VcasOp::Cas { obj: 0, old: 0, new: 1 }, VcasRet::Bool(true), 0, 1),
            rec(0, VcasOp::Read(0), VcasRet::Value(1), 2, 3),
        ])
        .unwrap();
        let v = check(&one_object(), &h, &CheckConfig::default()).unwrap();
        assert_eq!(v, Verdict::Linearizable { order: vec![0, 1] });
    }

    #[test]
    fn two_winning_cas_on_same_old_rejected() {
        let h = History::from_records(vec![
            rec(0, VcasOp::Cas { obj: 0, old: 0, new: 1 }, VcasRet::Bool(true), 0, 2),
            rec(1, VcasOp::Cas { obj: 0, old: 0, new: 2 }, VcasRet::Bool(true), 1, 3),
        ])
        .unwrap();
        let v = check(&one_object(), &h, &CheckConfig::default()).unwrap();
        let Verdict::NotLinearizable { witness } = v else {
            panic!("{v:?}")
        };
        assert_eq!(witness.prefix.len(), 1);
        assert_eq!(witness.remaining.len(), 1);
        assert!(witness.to_string().contains("cannot be extended"));
    }

    #[test]
    fn snapshot_read_of_later_commit_rejected() {
        let h = History::from_records(vec![
            rec(0, VcasOp::TakeSnapshot, VcasRet::Handle(0), 0, 1),
            rec(1, VcasOp::Cas { obj: 0, old: 0, new: 7 }, VcasRet::Bool(true), 2, 3),
            rec(0, VcasOp::ReadSnapshot { obj: 0, handle: 0 }, VcasRet::Value(7), 4, 5),
        ])
        .unwrap();
        let v = check(&one_object(), &h, &CheckConfig::default()).unwrap();
        assert!(v.is_rejected());
    }

    #[test]
    fn overlapping_cas_and_snapshot_both_orders() {
        for seen in [0, 7] {
            let h = History::from_records(vec![
                rec(0, VcasOp::TakeSnapshot, VcasRet::Handle(0), 0, 3),
                rec(1, VcasOp::Cas { obj: 0, old: 0, new: 7 }, VcasRet::Bool(true), 1, 2),
                rec(0, VcasOp::ReadSnapshot { obj: 0, handle: 0 }, VcasRet::Value(seen), 4, 5),
            ])
            .unwrap();
            assert!(check(&one_object(), &h, &CheckConfig::default())
                .unwrap()
                .is_linearizable());
        }
    }

    #[test]
    fn pending_cas_may_take_effect_or_not() {
        let pending = OpRecord {
            thread: 1,
            op: VcasOp::Cas { obj: 0, old: 0, new: 4 },
            ret: None,
            invoke: 0,
            response: None,
        };
        for seen in [0, 4] {
            let h = History::from_records(vec![
                pending.clone(),
                rec(0, VcasOp::Read(0), VcasRet::Value(seen), 1, 2),
            ])
            .unwrap();
            let v = check(&one_object(), &h, &CheckConfig::default()).unwrap();
            assert!(v.is_linearizable(), "{seen}");
        }
        let h = History::from_records(vec![
            pending,
            rec(0, VcasOp::Read(0), VcasRet::Value(5), 1, 2),
        ])
        .unwrap();
        assert!(check(&one_object(), &h, &CheckConfig::default()).unwrap().is_rejected());
    }

    #[test]
    fn oversized_history_refused() {
        let recs = (0..25)
            .map(|i| rec(0, VcasOp::Read(0), VcasRet::Value(0), 2 * i, 2 * i + 1))
            .collect();
        let h = History::from_records(recs).unwrap();
        assert_eq!(
            check(&one_object(), &h, &CheckConfig::default()),
            Err(CheckError::TooLarge { ops: 25, threads: 1 })
        );
    }

    #[test]
    fn tiny_budget_is_inconclusive() {
        let h = History::from_records(vec![
            rec(0, VcasOp::Read(0), VcasRet::Value(0), 0, 1),
            rec(0, VcasOp::Read(0), VcasRet::Value(0), 2, 3),
        ])
        .unwrap();
        let cfg = CheckConfig {
            step_budget: 1,
            ..CheckConfig::default()
        };
        assert!(matches!(
            check(&one_object(), &h, &cfg).unwrap(),
            Verdict::Inconclusive { .. }
        ));
    }
}
