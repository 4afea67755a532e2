use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Arc;

use thiserror::Error;

/// One operation as seen by its caller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpRecord<O, R> {
    pub thread: usize,
    pub op: O,
    /// `None` while pending.
    pub ret: Option<R>,
    pub invoke: u64,
    pub response: Option<u64>,
}

impl<O, R> OpRecord<O, R> {
    pub fn is_pending(&self) -> bool {
        self.response.is_none()
    }
}

impl<O: fmt::Debug, R: fmt::Debug> fmt::Display for OpRecord<O, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{} {:?}", self.thread, self.op)?;
        match (&self.ret, self.response) {
            (Some(r), Some(resp)) => write!(f, " -> {:?} [{}..{}]", r, self.invoke, resp),
            _ => write!(f, " pending [{}..]", self.invoke),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("malformed history: {0}")]
    Malformed(String),
}

/// Source of globally ordered invocation and response events.
#[derive(Clone, Default)]
pub struct Recorder {
    seq: Arc<AtomicU64>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn thread_log<O, R>(&self, thread: usize) -> ThreadLog<O, R> {
        ThreadLog {
            seq: self.seq.clone(),
            thread,
            records: Vec::new(),
        }
    }
}

/// Per-thread record buffer. Not shared; merged after the run.
pub struct ThreadLog<O, R> {
    seq: Arc<AtomicU64>,
    thread: usize,
    records: Vec<OpRecord<O, R>>,
}

impl<O, R: Clone> ThreadLog<O, R> {
    pub fn thread(&self) -> usize {
        self.thread
    }

    /// Records `op` around the call to `f`.
    pub fn call(&mut self, op: O, f: impl FnOnce() -> R) -> R {
        let i = self.invoke(op);
        let r = f();
        self.respond(i, r.clone());
        r
    }

    /// Opens an operation; returns its slot for [`ThreadLog::respond`].
    pub fn invoke(&mut self, op: O) -> usize {
        let invoke = self.seq.fetch_add(1, SeqCst);
        self.records.push(OpRecord {
            thread: self.thread,
            op,
            ret: None,
            invoke,
            response: None,
        });
        self.records.len() - 1
    }

    pub fn respond(&mut self, slot: usize, ret: R) {
        let rec = &mut self.records[slot];
        rec.response = Some(self.seq.fetch_add(1, SeqCst));
        rec.ret = Some(ret);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<OpRecord<O, R>> {
        self.records
    }
}

/// A well-formed concurrent history, ordered by invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History<O, R> {
    records: Vec<OpRecord<O, R>>,
}

impl<O, R> History<O, R> {
    /// Merges per-thread logs and validates them.
    pub fn from_logs(logs: Vec<ThreadLog<O, R>>) -> Result<Self, HistoryError>
    where
        R: Clone,
    {
        Self::from_records(logs.into_iter().flat_map(|l| l.into_records()).collect())
    }

    pub fn from_records(mut records: Vec<OpRecord<O, R>>) -> Result<Self, HistoryError> {
        records.sort_by_key(|r| (r.thread, r.invoke));
        let mut seen = std::collections::HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.ret.is_some() != r.response.is_some() {
                return Err(HistoryError::Malformed(format!(
                    "thread {} op at {} has mismatched response",
                    r.thread, r.invoke
                )));
            }
            if !seen.insert(r.invoke) || r.response.is_some_and(|s| !seen.insert(s)) {
                return Err(HistoryError::Malformed(format!(
                    "event number reused near {}",
                    r.invoke
                )));
            }
            if let Some(resp) = r.response {
                if resp <= r.invoke {
                    return Err(HistoryError::Malformed(format!(
                        "thread {} op at {} responds at {}",
                        r.thread, r.invoke, resp
                    )));
                }
            }
            if let Some(next) = records.get(i + 1).filter(|n| n.thread == r.thread) {
                match r.response {
                    None => {
                        return Err(HistoryError::Malformed(format!(
                            "thread {} invokes at {} with an op still pending",
                            r.thread, next.invoke
                        )))
                    }
                    Some(resp) if resp > next.invoke => {
                        return Err(HistoryError::Malformed(format!(
                            "thread {} ops overlap at {}",
                            r.thread, next.invoke
                        )))
                    }
                    _ => {}
                }
            }
        }
        records.sort_by_key(|r| r.invoke);
        Ok(History { records })
    }

    pub fn records(&self) -> &[OpRecord<O, R>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn completed(&self) -> usize {
        self.records.iter().filter(|r| !r.is_pending()).count()
    }

    pub fn threads(&self) -> usize {
        let mut t: Vec<_> = self.records.iter().map(|r| r.thread).collect();
        t.sort_unstable();
        t.dedup();
        t.len()
    }

    /// True if `a` responded before `b` was invoked.
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.records[a]
            .response
            .is_some_and(|r| r < self.records[b].invoke)
    }
}

impl<O: fmt::Debug, R: fmt::Debug> fmt::Display for History<O, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.records.iter().enumerate() {
            writeln!(f, "#{i} {r}")?;
        }
        Ok(())
    }
}
