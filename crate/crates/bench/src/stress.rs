//! Real-thread stress in short recorded windows, each window checked for
//! linearizability against the sequential specification.

use std::sync::{Arc, Barrier, Mutex};
use std::thread;

use chronocas::hooks::{ActiveToken, MutationSet, Scheduler, ThreadScope};
use chronocas::instrument::{self, check_traversal_bound, BoundEvent};
use chronocas::lincheck::{check, CheckConfig, History, Recorder, ThreadLog, Verdict};
use chronocas::oracle::{Pred, QueueOp, SeqQueue, SeqSet, Sequential, SetOp};
use chronocas::reclaim;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Mix, Structure, WorkloadConfig};
use crate::run::BoundSummary;
use crate::subject::Subject;

pub const MAX_STRESS_THREADS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct StressConfig {
    pub structure: Structure,
    pub threads: usize,
    pub windows: usize,
    pub ops_per_thread: usize,
    /// Keys are drawn from `[1, key_range]`; small ranges make operations
    /// collide.
    pub key_range: u64,
    pub mix: Mix,
    pub rq_size: u64,
    pub seed: u64,
    pub mutations: MutationSet,
    /// Yield at one in this many shared-memory access points (0 never), so
    /// that operations overlap even when threads outnumber cores.
    pub jitter: u32,
}

impl StressConfig {
    pub fn new(structure: Structure, threads: usize, windows: usize) -> Self {
        StressConfig {
            structure,
            threads,
            windows,
            ops_per_thread: (20 / threads.max(1)).clamp(1, 6),
            key_range: 8,
            mix: Mix {
                ins: 30,
                del: 25,
                find: 20,
                rq: 25,
            },
            rq_size: 4,
            seed: 1,
            mutations: MutationSet::NONE,
            jitter: 3,
        }
    }

    /// Window settings derived from a workload: its structure, thread count,
    /// mix and seed, with a key range small enough for collisions.
    pub fn from_workload(cfg: &WorkloadConfig, windows: usize) -> Result<Self, ConfigError> {
        cfg.validate()?;
        if cfg.threads > MAX_STRESS_THREADS {
            return Err(ConfigError::TooManyThreads {
                got: cfg.threads,
                max: MAX_STRESS_THREADS,
            });
        }
        Ok(StressConfig {
            mix: cfg.mix,
            rq_size: cfg.rq_size.clamp(1, 8),
            seed: cfg.seed,
            key_range: cfg.key_range().clamp(2, 8),
            ..StressConfig::new(cfg.structure, cfg.threads, windows)
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub structure: String,
    pub threads: usize,
    pub windows: usize,
    pub ops: u64,
    pub accepted: usize,
    pub rejected: usize,
    /// Windows the checker could not decide within its budget; never counted
    /// as accepted.
    pub inconclusive: usize,
    /// Windows whose operations did not overlap at all.
    pub sequential_windows: usize,
    /// The first rejected window and the checker's witness.
    pub witness: Option<String>,
    pub bound: BoundSummary,
    pub trap_reads: u64,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.rejected == 0 && self.inconclusive == 0 && self.bound.violations == 0 && self.trap_reads == 0
    }
}

pub(crate) struct Jitter(pub(crate) u32);

impl Scheduler for Jitter {
    fn yield_point(&self, _thread: usize) {
        if rand::thread_rng().gen_ratio(1, self.0) {
            thread::yield_now();
        }
    }
}

/// An abstract data type as seen by the stress driver.
trait Adt: Sync {
    type Spec: Sequential<Op = Self::Op, Ret = Self::Ret> + Send;
    type Op: Clone + std::fmt::Debug + Send + Sync;
    type Ret: Clone + std::fmt::Debug + PartialEq + Send;

    fn gen(rng: &mut ChaCha8Rng, cfg: &StressConfig, subject: &Subject) -> <Self::Spec as Sequential>::Op;
    fn apply(
        subject: &Subject,
        op: &<Self::Spec as Sequential>::Op,
        g: &chronocas::Guard<'_>,
    ) -> <Self::Spec as Sequential>::Ret;
    fn spec(contents: Vec<u64>) -> Self::Spec;
}

struct QueueAdt;

impl Adt for QueueAdt {
    type Spec = SeqQueue;
    type Op = QueueOp;
    type Ret = chronocas::oracle::QueueRet;

    fn gen(rng: &mut ChaCha8Rng, cfg: &StressConfig, _: &Subject) -> QueueOp {
        let Mix { ins, del, find, .. } = cfg.mix;
        let dice = rng.gen_range(0..100);
        if dice < ins {
            QueueOp::Enqueue(rng.gen_range(1..=cfg.key_range))
        } else if dice < ins + del {
            QueueOp::Dequeue
        } else if dice < ins + del + find {
            QueueOp::PeekEndPoints
        } else if rng.gen() {
            QueueOp::Scan
        } else {
            QueueOp::Ith(rng.gen_range(1..=cfg.rq_size as usize))
        }
    }

    fn apply(subject: &Subject, op: &QueueOp, g: &chronocas::Guard<'_>) -> chronocas::oracle::QueueRet {
        subject.apply_queue(op, g).expect("queue operation on a set")
    }

    fn spec(contents: Vec<u64>) -> SeqQueue {
        SeqQueue::from_items(contents)
    }
}

struct SetAdt;

impl Adt for SetAdt {
    type Spec = SeqSet;
    type Op = SetOp;
    type Ret = chronocas::oracle::SetRet;

    fn gen(rng: &mut ChaCha8Rng, cfg: &StressConfig, subject: &Subject) -> SetOp {
        let Mix { ins, del, find, .. } = cfg.mix;
        let r = cfg.key_range;
        let k = rng.gen_range(1..=r);
        let e = k + rng.gen_range(0..cfg.rq_size);
        let dice = rng.gen_range(0..100);
        if dice < ins {
            return SetOp::Insert(k);
        }
        if dice < ins + del {
            return SetOp::Delete(k);
        }
        if dice < ins + del + find {
            return SetOp::Contains(k);
        }
        let list = matches!(subject, Subject::List(_) | Subject::ListPlain(_));
        let plain = matches!(subject, Subject::BstPlain(_) | Subject::ListPlain(_));
        if plain {
            // The unversioned baselines answer multi-point queries without
            // a snapshot, so only single-point queries are linearizable.
            return SetOp::Contains(k);
        }
        match rng.gen_range(0..5) {
            0 | 1 => SetOp::Range(k, e),
            2 => SetOp::MultiSearch(vec![k, rng.gen_range(1..=r)]),
            _ if list => SetOp::Ith(rng.gen_range(1..=r as usize / 2 + 1)),
            3 => SetOp::Succ(k, rng.gen_range(1..=3)),
            _ if rng.gen() => SetOp::RangeSum(k, e),
            _ => SetOp::FindIf(k, e, Pred::ModEq { m: 2, r: rng.gen_range(0..2) }),
        }
    }

    fn apply(subject: &Subject, op: &SetOp, g: &chronocas::Guard<'_>) -> chronocas::oracle::SetRet {
        subject.apply_set(op, g).expect("set operation not offered")
    }

    fn spec(contents: Vec<u64>) -> SeqSet {
        SeqSet::from_keys(contents)
    }
}

type Logs<A> = Mutex<Vec<ThreadLog<<A as Adt>::Op, <A as Adt>::Ret>>>;

fn stress_adt<A: Adt>(subject: &Subject, cfg: &StressConfig) -> StressReport {
    let traps0 = reclaim::trap_reads();
    {
        let h = subject.manager().register();
        for k in (1..=cfg.key_range).step_by(2) {
            subject.insert(k, &h.pin());
        }
    }
    let jitter: Option<Arc<dyn Scheduler>> = (cfg.jitter > 0).then(|| Arc::new(Jitter(cfg.jitter)) as _);
    let _active = (cfg.mutations != MutationSet::NONE || jitter.is_some()).then(ActiveToken::acquire);
    let recorder = Recorder::new();
    let start = Barrier::new(cfg.threads + 1);
    let end = Barrier::new(cfg.threads + 1);
    let logs: Logs<A> = Mutex::new(Vec::new());
    let checker = CheckConfig::default();
    let mut report = StressReport {
        structure: cfg.structure.to_string(),
        threads: cfg.threads,
        windows: cfg.windows,
        ..Default::default()
    };
    let bound_logs: Vec<Vec<BoundEvent>> = thread::scope(|s| {
        let workers: Vec<_> = (0..cfg.threads)
            .map(|tid| {
                let (recorder, start, end, logs) = (&recorder, &start, &end, &logs);
                let jitter = jitter.clone();
                s.spawn(move || {
                    let _scope = ThreadScope::enter(jitter, tid, cfg.mutations);
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((tid as u64 + 1) << 40));
                    let h = subject.manager().register();
                    instrument::start_bound_log(0);
                    for _ in 0..cfg.windows {
                        let ops: Vec<_> = (0..cfg.ops_per_thread).map(|_| A::gen(&mut rng, cfg, subject)).collect();
                        let mut log = recorder.thread_log(tid);
                        start.wait();
                        for op in &ops {
                            if rng.gen() {
                                thread::yield_now();
                            }
                            let g = h.pin();
                            log.call(op.clone(), || A::apply(subject, op, &g));
                        }
                        logs.lock().unwrap().push(log);
                        end.wait();
                    }
                    instrument::take_bound_log()
                })
            })
            .collect();
        let h = subject.manager().register();
        for _ in 0..cfg.windows {
            let init = A::spec(subject.contents(&h.pin()));
            start.wait();
            end.wait();
            let window = std::mem::take(&mut *logs.lock().unwrap());
            let history = History::from_logs(window).expect("recorded history is well formed");
            report.ops += history.len() as u64;
            let recs = history.records();
            let overlapping = (0..recs.len()).any(|a| (0..recs.len()).any(|b| a != b && !history.precedes(a, b) && !history.precedes(b, a)));
            if !overlapping {
                report.sequential_windows += 1;
            }
            match check(&init, &history, &checker).expect("window within checker limits") {
                Verdict::Linearizable { .. } => report.accepted += 1,
                Verdict::NotLinearizable { witness } => {
                    report.rejected += 1;
                    if report.witness.is_none() {
                        report.witness = Some(format!("initial state {init:?}\n{history}{witness}"));
                    }
                }
                Verdict::Inconclusive { .. } => report.inconclusive += 1,
            }
        }
        workers.into_iter().map(|w| w.join().unwrap()).collect()
    });
    let b = check_traversal_bound(bound_logs.iter().map(Vec::as_slice));
    report.bound = BoundSummary {
        reads_checked: b.reads_checked,
        commits_seen: b.commits_seen,
        violations: b.violations,
        hop_histogram: b.hop_histogram,
    };
    report.trap_reads = reclaim::trap_reads() - traps0;
    report
}

/// Runs `cfg.windows` recorded windows on a fresh structure.
pub fn stress(cfg: &StressConfig) -> StressReport {
    assert!((1..=MAX_STRESS_THREADS).contains(&cfg.threads), "stress supports 1 to 8 threads");
    let subject = Subject::new(cfg.structure, false);
    if subject.is_queue() {
        stress_adt::<QueueAdt>(&subject, cfg)
    } else {
        stress_adt::<SetAdt>(&subject, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chronocas::hooks::Mutation;

    #[test]
    fn two_thread_queue_windows_are_accepted() {
        let r = stress(&StressConfig::new(Structure::Queue, 2, 100));
        assert_eq!(r.accepted, 100, "{:?}", r.witness);
        assert!(r.passed());
        assert!(r.sequential_windows < 100);
    }

    #[test]
    fn single_thread_windows_are_trivially_accepted() {
        for s in Structure::ALL {
            let r = stress(&StressConfig::new(s, 1, 30));
            assert_eq!(r.accepted, 30, "{s}: {:?}", r.witness);
            assert_eq!(r.sequential_windows, 30);
        }
    }

    #[test]
    fn every_structure_passes_short_stress() {
        for s in Structure::ALL {
            let r = stress(&StressConfig::new(s, 3, 60));
            assert!(r.passed(), "{s}: {r:?}");
        }
    }

    #[test]
    fn mutated_runs_still_report() {
        let cfg = StressConfig {
            mutations: Mutation::SkipReadHelp.into(),
            ..StressConfig::new(Structure::Bst, 2, 20)
        };
        let r = stress(&cfg);
        assert_eq!(r.accepted + r.rejected + r.inconclusive, 20);
    }
}
