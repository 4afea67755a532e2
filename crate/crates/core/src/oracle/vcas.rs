//! Versioned CAS objects sharing one camera, per the definition of a
//! versioned CAS: every commit is logged with the camera time at which it
//! happened, and a snapshot read returns the last value logged no later than
//! the handle.

use super::{OracleError, Sequential};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum VcasOp {
    /// Creates an object; returns its index.
    New(u64),
    Read(usize),
    Cas { obj: usize, old: u64, new: u64 },
    TakeSnapshot,
    ReadSnapshot { obj: usize, handle: u64 },
    PeekTimestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum VcasRet {
    Obj(usize),
    Value(u64),
    Bool(bool),
    Handle(u64),
    Time(u64),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SeqVcas {
    clock: u64,
    /// Per object: the creation entry, then `(value, time)` per commit with
    /// strictly increasing times. A later commit at the same time overwrites
    /// the commit entry.
    logs: Vec<Vec<(u64, u64)>>,
}

impl SeqVcas {
    pub fn new() -> Self {
        Self::default()
    }

    /// A camera that has already issued `clock` handles.
    pub fn with_clock(clock: u64) -> Self {
        SeqVcas {
            clock,
            logs: Vec::new(),
        }
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn add_object(&mut self, initial: u64) -> usize {
        self.logs.push(vec![(initial, self.clock)]);
        self.logs.len() - 1
    }

    pub fn current(&self, obj: usize) -> Option<u64> {
        self.logs.get(obj).and_then(|l| l.last()).map(|e| e.0)
    }

    fn log(&self, obj: usize) -> Result<&Vec<(u64, u64)>, OracleError> {
        self.logs.get(obj).ok_or(OracleError::UnknownObject(obj))
    }

    fn committed_since_last_snapshot(&self) -> bool {
        self.logs
            .iter()
            .any(|l| l.len() > 1 && l.last().is_some_and(|e| e.1 == self.clock))
    }
}

impl Sequential for SeqVcas {
    type Op = VcasOp;
    type Ret = VcasRet;

    fn step(&mut self, op: &VcasOp) -> Result<VcasRet, OracleError> {
        Ok(match *op {
            VcasOp::New(v) => VcasRet::Obj(self.add_object(v)),
            VcasOp::Read(obj) => VcasRet::Value(self.log(obj)?.last().unwrap().0),
            VcasOp::Cas { obj, old, new } => {
                let clock = self.clock;
                let log = self.logs.get_mut(obj).ok_or(OracleError::UnknownObject(obj))?;
                let (cur, at) = *log.last().unwrap();
                if cur != old {
                    VcasRet::Bool(false)
                } else {
                    if new != old {
                        if at == clock && log.len() > 1 {
                            log.last_mut().unwrap().0 = new;
                        } else {
                            log.push((new, clock));
                        }
                    }
                    VcasRet::Bool(true)
                }
            }
            VcasOp::TakeSnapshot => {
                self.clock += 1;
                VcasRet::Handle(self.clock - 1)
            }
            VcasOp::ReadSnapshot { obj, handle } => {
                if handle >= self.clock {
                    return Err(OracleError::UnknownHandle(handle));
                }
                let log = self.log(obj)?;
                if log[0].1 > handle {
                    return Err(OracleError::PredatesObject { object: obj, handle });
                }
                let idx = log.partition_point(|e| e.1 <= handle);
                VcasRet::Value(log[idx - 1].0)
            }
            VcasOp::PeekTimestamp => VcasRet::Time(self.clock),
        })
    }

    /// Two concurrent snapshots may return the same handle when no commit
    /// falls between them.
    fn accepts(&self, op: &VcasOp, observed: &VcasRet) -> Option<Self> {
        if let (VcasOp::TakeSnapshot, VcasRet::Handle(h)) = (op, observed) {
            if *h == self.clock {
                let mut next = self.clone();
                next.clock += 1;
                return Some(next);
            }
            if *h + 1 == self.clock && !self.committed_since_last_snapshot() {
                return Some(self.clone());
            }
            return None;
        }
        let mut next = self.clone();
        match next.step(op) {
            Ok(r) if r == *observed => Some(next),
            _ => None,
        }
    }
}
