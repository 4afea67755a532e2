//! Paired-key stress for range query atomicity.
//!
//! Every thread owns `pairs` key pairs `(a, b)` and cycles through inserting
//! `a0, b0, a1, b1, ...` and then deleting them in the same order, so at any
//! instant its keys form a prefix or a suffix of that sequence. A range query
//! that is atomic must see, for each thread, the intersection of the range
//! with one of the states the thread passed through while the query ran.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chronocas::hooks::{ActiveToken, MutationSet, Scheduler, ThreadScope};
use chronocas::instrument;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Structure;
use crate::stress::Jitter;
use crate::subject::Subject;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedConfig {
    pub structure: Structure,
    pub threads: usize,
    pub seconds: f64,
    pub pairs: usize,
    pub query_every: u32,
    pub seed: u64,
    /// Yield with probability `1/jitter` at shared accesses; 0 disables.
    pub jitter: u32,
    /// Run on the counterpart without versioned links, whose range queries
    /// are not atomic.
    pub baseline: bool,
}

impl PairedConfig {
    pub fn new(structure: Structure, threads: usize, seconds: f64) -> Self {
        PairedConfig {
            structure,
            threads,
            seconds,
            pairs: 8,
            query_every: 4,
            seed: 1,
            jitter: 4,
            baseline: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub structure: String,
    pub threads: usize,
    pub updates: u64,
    pub queries: u64,
    /// Queries that fully covered at least one pair of another thread
    /// while that thread was updating.
    pub spanning_queries: u64,
    /// (query, pair) instances checked against a concurrent writer.
    pub pairs_checked: u64,
    pub violations: u64,
    pub bound_violations: u64,
    pub first_violation: Option<String>,
}

impl PairedReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.bound_violations == 0
    }
}

struct Layout {
    structure: Structure,
    threads: usize,
    pairs: usize,
}

impl Layout {
    fn pair(&self, t: usize, j: usize) -> (u64, u64) {
        let idx = (j * self.threads + t) as u64;
        match self.structure {
            Structure::List => (2 * idx + 2, 2 * idx + 3),
            _ => (idx + 1, idx + 1 + (self.pairs * self.threads) as u64),
        }
    }

    fn max_key(&self) -> u64 {
        let n = (self.pairs * self.threads) as u64;
        match self.structure {
            Structure::List => 2 * n + 1,
            _ => 2 * n,
        }
    }

    /// Insertion order of thread `t`'s keys.
    fn sequence(&self, t: usize) -> Vec<u64> {
        (0..self.pairs)
            .flat_map(|j| {
                let (a, b) = self.pair(t, j);
                [a, b]
            })
            .collect()
    }

    fn cycle(&self) -> u64 {
        4 * self.pairs as u64
    }

    /// Thread `t`'s keys after `k` of its steps, restricted to `[s, e]`.
    fn state(&self, seq: &[u64], k: u64, s: u64, e: u64) -> Vec<u64> {
        let p = (k % self.cycle()) as usize;
        let half = seq.len();
        let live = if p <= half { &seq[..p] } else { &seq[p - half..] };
        let mut v: Vec<u64> = live.iter().copied().filter(|x| (s..=e).contains(x)).collect();
        v.sort_unstable();
        v
    }

    fn owner(&self, key: u64) -> usize {
        let idx = match self.structure {
            Structure::List => (key - 2) / 2,
            _ => (key - 1) % (self.pairs * self.threads) as u64,
        };
        idx as usize % self.threads
    }
}

/// Runs the paired-key workload on list or tree structures.
pub fn paired(cfg: &PairedConfig) -> PairedReport {
    assert!(cfg.structure.is_set(), "paired stress needs a set structure");
    assert!(cfg.threads >= 1 && cfg.pairs >= 1 && cfg.query_every >= 1);
    let subject = Subject::new(cfg.structure, cfg.baseline);
    let layout = Layout {
        structure: cfg.structure,
        threads: cfg.threads,
        pairs: cfg.pairs,
    };
    let seqs: Vec<Vec<u64>> = (0..cfg.threads).map(|t| layout.sequence(t)).collect();
    let started: Vec<AtomicU64> = (0..cfg.threads).map(|_| AtomicU64::new(0)).collect();
    let completed: Vec<AtomicU64> = (0..cfg.threads).map(|_| AtomicU64::new(0)).collect();
    let stop = AtomicBool::new(false);
    let jitter: Option<Arc<dyn Scheduler>> = (cfg.jitter > 0).then(|| Arc::new(Jitter(cfg.jitter)) as _);
    let _active = jitter.is_some().then(ActiveToken::acquire);
    let in_flight = cfg.threads as u64 - 1;

    let reports: Vec<PairedReport> = thread::scope(|s| {
        let workers: Vec<_> = (0..cfg.threads)
            .map(|tid| {
                let (subject, layout, seqs, started, completed, stop) =
                    (&subject, &layout, &seqs, &started, &completed, &stop);
                let jitter = jitter.clone();
                s.spawn(move || {
                    let _scope = ThreadScope::enter(jitter, tid, MutationSet::NONE);
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((tid as u64 + 1) << 32));
                    let h = subject.manager().register();
                    let mut r = PairedReport::default();
                    let mut step = 0u64;
                    while !stop.load(Ordering::Relaxed) {
                        let p = (step % layout.cycle()) as usize;
                        let half = seqs[tid].len();
                        let key = seqs[tid][p % half];
                        started[tid].store(step + 1, Ordering::SeqCst);
                        let g = h.pin();
                        let ok = if p < half { subject.insert(key, &g) } else { subject.delete(key, &g) };
                        drop(g);
                        completed[tid].store(step + 1, Ordering::SeqCst);
                        step += 1;
                        r.updates += 1;
                        if !ok {
                            r.violations += 1;
                            r.first_violation.get_or_insert_with(|| format!("thread {tid} update of {key} failed"));
                        }
                        if !step.is_multiple_of(cfg.query_every as u64) {
                            continue;
                        }
                        let max = layout.max_key();
                        let (a, b) = (rng.gen_range(1..=max), rng.gen_range(1..=max));
                        let (lo, hi) = if rng.gen_ratio(1, 4) { (1, max) } else { (a.min(b), a.max(b)) };
                        let before: Vec<u64> = completed.iter().map(|c| c.load(Ordering::SeqCst)).collect();
                        let g = h.pin();
                        let (keys, cost) = instrument::measure(|| subject.range(lo, hi, &g));
                        drop(g);
                        let after: Vec<u64> = started.iter().map(|c| c.load(Ordering::SeqCst)).collect();
                        r.queries += 1;
                        if !cfg.baseline && cost.steps.hops > subject.reads_per_cell() * (cost.concurrent_commits + in_flight) {
                            r.bound_violations += 1;
                        }
                        let mut spanning = false;
                        for t in 0..layout.threads {
                            let seen: Vec<u64> = keys.iter().copied().filter(|&k| layout.owner(k) == t).collect();
                            let (c0, i1) = (before[t], after[t]);
                            if i1 - c0 >= layout.cycle() {
                                continue;
                            }
                            let ok = (c0..=i1).any(|k| layout.state(&seqs[t], k, lo, hi) == seen);
                            if t != tid && i1 > c0 {
                                let spanned = (0..layout.pairs)
                                    .map(|j| layout.pair(t, j))
                                    .filter(|&(a, b)| lo <= a && b <= hi)
                                    .count() as u64;
                                r.pairs_checked += spanned;
                                spanning |= spanned > 0;
                            }
                            if !ok {
                                r.violations += 1;
                                r.first_violation.get_or_insert_with(|| {
                                    format!(
                                        "query [{lo}, {hi}] by thread {tid} saw {seen:?} of thread {t}, \
                                         which was between steps {c0} and {i1}"
                                    )
                                });
                            }
                        }
                        r.spanning_queries += spanning as u64;
                    }
                    r
                })
            })
            .collect();
        let deadline = Instant::now() + Duration::from_secs_f64(cfg.seconds);
        while Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        stop.store(true, Ordering::Relaxed);
        workers.into_iter().map(|w| w.join().unwrap()).collect()
    });

    let mut total = PairedReport {
        structure: cfg.structure.to_string(),
        threads: cfg.threads,
        ..Default::default()
    };
    for r in reports {
        total.updates += r.updates;
        total.queries += r.queries;
        total.spanning_queries += r.spanning_queries;
        total.pairs_checked += r.pairs_checked;
        total.violations += r.violations;
        total.bound_violations += r.bound_violations;
        if total.first_violation.is_none() {
            total.first_violation = r.first_violation;
        }
    }
    total
}
