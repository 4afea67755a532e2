//! Schedule exploration for small closed programs.
//!
//! Threads run one at a time. Each stops at every [`hooks::access`] point
//! and waits until the controller picks it again, so the sequence of picks
//! fully determines the interleaving of shared accesses. Programs are
//! explored depth-first over these picks; when the tree is larger than the
//! configured budget the explorer falls back to seeded random sampling.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::history::{History, Recorder, ThreadLog};
use crate::hooks::{self, ActiveToken, MutationSet, Scheduler, ThreadScope};

type ThreadFn<S, O, R> = Box<dyn Fn(&S, &mut ThreadLog<O, R>) + Send + Sync>;

/// A fixed set of threads run against a fresh instance from `setup`.
pub struct Program<S, O, R> {
    setup: Box<dyn Fn() -> S + Send + Sync>,
    threads: Vec<ThreadFn<S, O, R>>,
}

impl<S: Sync, O: Send, R: Clone + Send> Program<S, O, R> {
    pub fn new(setup: impl Fn() -> S + Send + Sync + 'static) -> Self {
        Program {
            setup: Box::new(setup),
            threads: Vec::new(),
        }
    }

    pub fn thread(mut self, f: impl Fn(&S, &mut ThreadLog<O, R>) + Send + Sync + 'static) -> Self {
        self.threads.push(Box::new(f));
        self
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ExploreConfig {
    /// Exhaustive search stops after this many schedules.
    pub max_schedules: usize,
    /// Random schedules run when exhaustive search is cut short.
    pub samples: usize,
    pub seed: u64,
    pub mutations: MutationSet,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_schedules: 20_000,
            samples: 2_000,
            seed: 0,
            mutations: MutationSet::NONE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreReport {
    pub schedules: usize,
    /// Every schedule was visited.
    pub exhaustive: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Idle,
    Running,
    Waiting,
    Done,
}

struct Control {
    status: Mutex<Vec<Status>>,
    cv: Condvar,
}

impl Control {
    fn set(&self, t: usize, s: Status) {
        self.status.lock().unwrap()[t] = s;
        self.cv.notify_all();
    }

    fn wait_not_running(&self, t: usize) {
        let mut st = self.status.lock().unwrap();
        while st[t] == Status::Running {
            st = self.cv.wait(st).unwrap();
        }
    }
}

impl Scheduler for Control {
    fn yield_point(&self, thread: usize) {
        let mut st = self.status.lock().unwrap();
        st[thread] = Status::Waiting;
        self.cv.notify_all();
        while st[thread] != Status::Running {
            st = self.cv.wait(st).unwrap();
        }
    }
}

enum Chooser<'a> {
    /// Follows `prefix`, then always picks the first option, logging
    /// `(pick, options)` at every choice point.
    Replay {
        prefix: &'a [(usize, usize)],
        trace: Vec<(usize, usize)>,
    },
    Random(&'a mut ChaCha8Rng),
}

impl Chooser<'_> {
    fn pick(&mut self, options: usize) -> usize {
        match self {
            Chooser::Replay { prefix, trace } => {
                let c = prefix.get(trace.len()).map_or(0, |p| p.0);
                trace.push((c, options));
                c
            }
            Chooser::Random(rng) => rng.gen_range(0..options),
        }
    }
}

const MAX_STEPS: usize = 1_000_000;

fn run_once<S: Sync, O: Send, R: Clone + Send>(
    program: &Program<S, O, R>,
    mutations: MutationSet,
    chooser: &mut Chooser<'_>,
) -> (S, History<O, R>) {
    let n = program.threads.len();
    let ctl = Arc::new(Control {
        status: Mutex::new(vec![Status::Idle; n]),
        cv: Condvar::new(),
    });
    let instance = (program.setup)();
    let recorder = Recorder::new();
    let mut logs: Vec<Option<ThreadLog<O, R>>> = (0..n).map(|_| None).collect();
    let panicked = std::thread::scope(|scope| {
        let handles: Vec<_> = program
            .threads
            .iter()
            .enumerate()
            .map(|(t, body)| {
                ctl.set(t, Status::Running);
                let sched: Arc<dyn Scheduler> = ctl.clone();
                let done = ctl.clone();
                let instance = &instance;
                let mut log = recorder.thread_log(t);
                let h = scope.spawn(move || {
                    let _scope = ThreadScope::enter(Some(sched), t, mutations);
                    let r = catch_unwind(AssertUnwindSafe(|| body(instance, &mut log)));
                    done.set(t, Status::Done);
                    r.map(|_| log)
                });
                ctl.wait_not_running(t);
                h
            })
            .collect();
        let mut steps = 0;
        loop {
            let waiting: Vec<usize> = {
                let st = ctl.status.lock().unwrap();
                (0..n).filter(|&t| st[t] == Status::Waiting).collect()
            };
            if waiting.is_empty() {
                break;
            }
            steps += 1;
            assert!(steps < MAX_STEPS, "explored program does not terminate");
            let t = if waiting.len() == 1 {
                waiting[0]
            } else {
                waiting[chooser.pick(waiting.len())]
            };
            ctl.set(t, Status::Running);
            ctl.wait_not_running(t);
        }
        let mut panicked = None;
        for (t, h) in handles.into_iter().enumerate() {
            match h.join().unwrap() {
                Ok(log) => logs[t] = Some(log),
                Err(p) => panicked = panicked.or(Some(p)),
            }
        }
        panicked
    });
    if let Some(p) = panicked {
        resume_unwind(p);
    }
    let history = History::from_logs(logs.into_iter().map(Option::unwrap).collect())
        .expect("recorder produced a malformed history");
    (instance, history)
}

/// Runs `program` under every schedule (or a sample of them), handing each
/// resulting history and final instance to `visit`.
pub fn explore<S: Sync, O: Send, R: Clone + Send>(
    program: &Program<S, O, R>,
    cfg: &ExploreConfig,
    mut visit: impl FnMut(&History<O, R>, &S),
) -> ExploreReport {
    let _active = ActiveToken::acquire();
    let mut prefix: Vec<(usize, usize)> = Vec::new();
    let mut schedules = 0;
    loop {
        let mut chooser = Chooser::Replay {
            prefix: &prefix,
            trace: Vec::new(),
        };
        let (inst, hist) = run_once(program, cfg.mutations, &mut chooser);
        visit(&hist, &inst);
        drop(inst);
        schedules += 1;
        let Chooser::Replay { mut trace, .. } = chooser else {
            unreachable!()
        };
        while trace.last().is_some_and(|&(c, k)| c + 1 == k) {
            trace.pop();
        }
        match trace.last_mut() {
            None => {
                return ExploreReport {
                    schedules,
                    exhaustive: true,
                }
            }
            Some(last) => last.0 += 1,
        }
        prefix = trace;
        if schedules >= cfg.max_schedules {
            break;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.samples {
        let (inst, hist) = run_once(program, cfg.mutations, &mut Chooser::Random(&mut rng));
        visit(&hist, &inst);
        schedules += 1;
    }
    ExploreReport {
        schedules,
        exhaustive: false,
    }
}

/// A schedulable step for hand-written test programs.
pub fn step() {
    hooks::access();
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn count(threads: usize, accesses: usize) -> ExploreReport {
        let mut p: Program<(), (), ()> = Program::new(|| ());
        for _ in 0..threads {
            p = p.thread(move |_, _| {
                for _ in 0..accesses {
                    step();
                }
            });
        }
        explore(&p, &ExploreConfig::default(), |_, _| {})
    }

    #[test]
    fn schedule_counts() {
        assert_eq!(count(1, 3).schedules, 1);
        assert_eq!(count(2, 1).schedules, 2);
        assert_eq!(count(2, 2).schedules, 6);
        assert_eq!(count(3, 1).schedules, 6);
        assert_eq!(count(3, 2).schedules, 90);
        assert!(count(2, 2).exhaustive);
    }

    #[test]
    fn every_interleaving_observed() {
        let p: Program<AtomicUsize, &str, usize> = Program::new(|| AtomicUsize::new(0))
            .thread(|x, log| {
                log.call("t0", || {
                    step();
                    let v = x.load(Ordering::SeqCst);
                    step();
                    x.store(v + 1, Ordering::SeqCst);
                    v
                });
            })
            .thread(|x, log| {
                log.call("t1", || {
                    step();
                    let v = x.load(Ordering::SeqCst);
                    step();
                    x.store(v + 1, Ordering::SeqCst);
                    v
                });
            });
        let mut finals = std::collections::BTreeSet::new();
        let r = explore(&p, &ExploreConfig::default(), |h, x| {
            assert_eq!(h.len(), 2);
            finals.insert(x.load(Ordering::SeqCst));
        });
        assert_eq!(r.schedules, 6);
        assert_eq!(finals.into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn sampling_beyond_budget() {
        let p: Program<(), (), ()> = Program::new(|| ())
            .thread(|_, _| (0..4).for_each(|_| step()))
            .thread(|_, _| (0..4).for_each(|_| step()));
        let cfg = ExploreConfig {
            max_schedules: 10,
            samples: 5,
            ..ExploreConfig::default()
        };
        let r = explore(&p, &cfg, |_, _| {});
        assert_eq!(r, ExploreReport { schedules: 15, exhaustive: false });
    }

    #[test]
    #[should_panic(expected = "boom")]
    fn thread_panic_propagates() {
        let p: Program<(), (), ()> = Program::new(|| ())
            .thread(|_, _| {
                step();
                panic!("boom");
            })
            .thread(|_, _| step());
        explore(&p, &ExploreConfig::default(), |_, _| {});
    }
}
