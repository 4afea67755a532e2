use std::collections::BTreeSet;

use super::set::{query, SetOp, SetRet};
use super::{OracleError, Sequential};
use crate::bst::TreeKey;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Shape {
    Leaf(TreeKey<u64>),
    Internal(TreeKey<u64>, Box<Shape>, Box<Shape>),
}

/// Leaf-oriented search tree with the same shape rules as the concurrent
/// tree, so it can answer `Height` exactly for sequential histories.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeqLeafTree {
    root: Shape,
    keys: BTreeSet<u64>,
}

impl Default for SeqLeafTree {
    fn default() -> Self {
        SeqLeafTree {
            root: Shape::Internal(
                TreeKey::Inf2,
                Box::new(Shape::Leaf(TreeKey::Inf1)),
                Box::new(Shape::Leaf(TreeKey::Inf2)),
            ),
            keys: BTreeSet::new(),
        }
    }
}

fn insert(s: &mut Shape, k: u64) -> bool {
    match s {
        Shape::Internal(key, l, r) => {
            if TreeKey::Fin(k) < *key {
                insert(l, k)
            } else {
                insert(r, k)
            }
        }
        Shape::Leaf(lk) => {
            let lk = *lk;
            if lk == TreeKey::Fin(k) {
                return false;
            }
            let new = Box::new(Shape::Leaf(TreeKey::Fin(k)));
            let old = Box::new(Shape::Leaf(lk));
            *s = if TreeKey::Fin(k) < lk {
                Shape::Internal(lk, new, old)
            } else {
                Shape::Internal(TreeKey::Fin(k), old, new)
            };
            true
        }
    }
}

fn delete(s: &mut Shape, k: u64) -> bool {
    let Shape::Internal(key, l, r) = s else {
        return false;
    };
    let left = TreeKey::Fin(k) < *key;
    let (child, sibling) = if left { (l, r) } else { (r, l) };
    if let Shape::Leaf(lk) = **child {
        if lk != TreeKey::Fin(k) {
            return false;
        }
        let keep = std::mem::replace(&mut **sibling, Shape::Leaf(TreeKey::Inf1));
        *s = keep;
        return true;
    }
    delete(child, k)
}

fn fin_depth(s: &Shape, d: usize) -> usize {
    match s {
        Shape::Leaf(TreeKey::Fin(_)) => d,
        Shape::Leaf(_) => 0,
        Shape::Internal(_, l, r) => fin_depth(l, d + 1).max(fin_depth(r, d + 1)),
    }
}

impl SeqLeafTree {
    pub fn height(&self) -> usize {
        match &self.root {
            Shape::Internal(_, l, _) => fin_depth(l, 0),
            Shape::Leaf(_) => 0,
        }
    }

    pub fn keys(&self) -> &BTreeSet<u64> {
        &self.keys
    }
}

impl Sequential for SeqLeafTree {
    type Op = SetOp;
    type Ret = SetRet;

    fn step(&mut self, op: &SetOp) -> Result<SetRet, OracleError> {
        Ok(match op {
            SetOp::Insert(k) => {
                let done = insert(&mut self.root, *k);
                if done {
                    self.keys.insert(*k);
                }
                SetRet::Bool(done)
            }
            SetOp::Delete(k) => {
                let done = delete(&mut self.root, *k);
                if done {
                    self.keys.remove(k);
                }
                SetRet::Bool(done)
            }
            SetOp::Height => SetRet::Height(self.height()),
            q => query(&self.keys, q).expect("query op"),
        })
    }
}
