//! Timed mixed workloads.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering::*};
use std::sync::Barrier;
use std::thread;
use std::time::{Duration, Instant};

use chronocas::instrument::{self, check_traversal_bound, BoundEvent};
use chronocas::reclaim;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Mix, Structure, WorkloadConfig};
use crate::subject::Subject;

pub const SCHEMA_VERSION: u32 = 1;

/// Bound logs record one cell in this many (mask + 1).
const BOUND_SAMPLE_MASK: usize = 15;
const SORTED_CHUNK: usize = 1024;
const SAMPLE_EVERY: Duration = Duration::from_millis(2);

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCounts {
    pub ins: u64,
    pub del: u64,
    pub find: u64,
    pub rq: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.ins + self.del + self.find + self.rq
    }

    fn add(&mut self, o: &OpCounts) {
        self.ins += o.ins;
        self.del += o.del;
        self.find += o.find;
        self.rq += o.rq;
    }
}

/// Operations per second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub ins: f64,
    pub del: f64,
    pub find: f64,
    pub rq: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub reads_checked: u64,
    pub commits_seen: u64,
    /// Snapshot reads that walked past more versions than were committed
    /// after their handle.
    pub violations: u64,
    /// Reads by hop count: index `i` counts reads with `2^(i-1) < hops <=
    /// 2^i`, index 0 counts single hops. Reads without hops are not logged.
    pub hop_histogram: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReclaimSummary {
    pub retired: u64,
    pub freed: u64,
    /// Highest live retired count sampled during the measured run.
    pub max_live_retired: u64,
    /// Highest live retired count sampled in the first tenth of the run.
    pub max_live_retired_first_tenth: u64,
    /// `max_live_retired <= 2 * max(max_live_retired_first_tenth, 1)`.
    pub plateau: bool,
    pub trap_reads: u64,
    pub poison: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub structure: String,
    pub throughput: f64,
    /// Throughput of the measured structure divided by the baseline's.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: WorkloadConfig,
    pub key_range: u64,
    pub elapsed_seconds: f64,
    pub ops: OpCounts,
    pub throughput: Throughput,
    pub initial_size: u64,
    pub final_size: u64,
    pub snapshot_reads: u64,
    pub hops: u64,
    pub bound: BoundSummary,
    /// Range queries whose version hops exceeded what the concurrent
    /// successful versioned CAS operations allow: each such version can be
    /// passed once per read of its cell, and each other thread may have one
    /// commit still uncounted when the query ends.
    pub query_violations: u64,
    pub violations: u64,
    pub reclaim: ReclaimSummary,
    pub baseline: Option<BaselineSummary>,
}

impl RunReport {
    pub const CSV_HEADER: &'static str = "schema,structure,threads,prefill,key_range,ins,del,find,rq,rq_size,seconds,\
         total_ops_per_s,ins_per_s,del_per_s,find_per_s,rq_per_s,hops,violations,max_live_retired,trap_reads,baseline_ratio";

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        let t = &self.throughput;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3},{:.1},{:.1},{:.1},{:.1},{:.1},{},{},{},{},{}",
            self.schema_version,
            c.structure,
            c.threads,
            c.prefill,
            self.key_range,
            c.mix.ins,
            c.mix.del,
            c.mix.find,
            c.mix.rq,
            c.rq_size,
            self.elapsed_seconds,
            t.total,
            t.ins,
            t.del,
            t.find,
            t.rq,
            self.hops,
            self.violations,
            self.reclaim.max_live_retired,
            self.reclaim.trap_reads,
            self.baseline.as_ref().map_or(String::new(), |b| format!("{:.4}", b.ratio)),
        )
    }
}

struct WorkerResult {
    ops: OpCounts,
    snapshot_reads: u64,
    hops: u64,
    query_violations: u64,
    log: Vec<BoundEvent>,
}

fn prefill(subject: &Subject, cfg: &WorkloadConfig) {
    let range = cfg.key_range();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_F111);
    if subject.is_queue() {
        let h = subject.manager().register();
        for _ in 0..cfg.prefill {
            subject.insert(rng.gen_range(1..=range), &h.pin());
        }
        return;
    }
    if cfg.sorted {
        let mut keys: Vec<u64> = sample(&mut rng, range as usize, cfg.prefill as usize)
            .into_iter()
            .map(|k| k as u64 + 1)
            .collect();
        keys.sort_unstable();
        let cursor = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..cfg.threads {
                s.spawn(|| {
                    let h = subject.manager().register();
                    loop {
                        let start = cursor.fetch_add(SORTED_CHUNK, Relaxed);
                        if start >= keys.len() {
                            break;
                        }
                        for &k in &keys[start..(start + SORTED_CHUNK).min(keys.len())] {
                            subject.insert(k, &h.pin());
                        }
                    }
                });
            }
        });
        return;
    }
    let h = subject.manager().register();
    let mut size = 0;
    while size < cfg.prefill {
        if subject.insert(rng.gen_range(1..=range), &h.pin()) {
            size += 1;
        }
    }
}

fn worker(
    subject: &Subject,
    cfg: &WorkloadConfig,
    tid: usize,
    start: &Barrier,
    measuring: &AtomicBool,
    stop: &AtomicBool,
) -> WorkerResult {
    let range = cfg.key_range();
    let Mix { ins, del, find, .. } = cfg.mix;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add((tid as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    let h = subject.manager().register();
    let mut ops = OpCounts::default();
    let mut query_violations = 0;
    let mut counting = false;
    // A concurrent writer may be between its head swap and counting the
    // commit when the query ends; each other thread has at most one such
    // version outstanding.
    let in_flight = cfg.threads as u64 - 1;
    let mut steps0 = instrument::thread_steps();
    start.wait();
    while !stop.load(Relaxed) {
        if !counting && measuring.load(Relaxed) {
            counting = true;
            ops = OpCounts::default();
            query_violations = 0;
            steps0 = instrument::thread_steps();
            instrument::start_bound_log(BOUND_SAMPLE_MASK);
        }
        let k = rng.gen_range(1..=range);
        let dice = rng.gen_range(0..100);
        let g = h.pin();
        if dice < ins {
            subject.insert(k, &g);
            ops.ins += 1;
        } else if dice < ins + del {
            subject.delete(k, &g);
            ops.del += 1;
        } else if dice < ins + del + find {
            subject.find(k, &g);
            ops.find += 1;
        } else {
            let (_, cost) = instrument::measure(|| subject.query(k, cfg.rq_size, &g));
            if cost.steps.hops > subject.reads_per_cell() * (cost.concurrent_commits + in_flight) {
                query_violations += 1;
            }
            ops.rq += 1;
        }
    }
    let steps = instrument::thread_steps();
    WorkerResult {
        ops,
        snapshot_reads: steps.snapshot_reads - steps0.snapshot_reads,
        hops: steps.hops - steps0.hops,
        query_violations,
        log: if counting { instrument::take_bound_log() } else { Vec::new() },
    }
}

/// Prefills a fresh structure and runs the configured mix on it.
pub fn run(cfg: &WorkloadConfig) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    Ok(run_on(&Subject::new(cfg.structure, false), cfg))
}

/// Like [`run`], then repeats the run on the structure's unversioned
/// counterpart and reports the throughput ratio.
pub fn run_with_baseline(cfg: &WorkloadConfig) -> Result<RunReport, ConfigError> {
    let mut report = run(cfg)?;
    let base = Subject::new(cfg.structure, true);
    let base_report = run_on(&base, cfg);
    let name = match base {
        Subject::QueuePlain(_) => "queue-unversioned-next",
        Subject::ListPlain(_) => "list-plain-cas-baseline",
        _ => Structure::BstPlain.name(),
    };
    report.baseline = Some(BaselineSummary {
        structure: name.to_string(),
        throughput: base_report.throughput.total,
        ratio: report.throughput.total / base_report.throughput.total.max(f64::MIN_POSITIVE),
    });
    Ok(report)
}

fn run_on(subject: &Subject, cfg: &WorkloadConfig) -> RunReport {
    let traps0 = reclaim::trap_reads();
    prefill(subject, cfg);
    let initial_size = subject.contents(&subject.manager().register().pin()).len() as u64;
    let start = Barrier::new(cfg.threads + 1);
    let measuring = AtomicBool::new(false);
    let stop = AtomicBool::new(false);
    let mgr = subject.manager();
    let (results, elapsed, samples) = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|tid| {
                let (start, measuring, stop) = (&start, &measuring, &stop);
                s.spawn(move || worker(subject, cfg, tid, start, measuring, stop))
            })
            .collect();
        start.wait();
        thread::sleep(Duration::from_secs_f64(cfg.warmup_seconds));
        let base = mgr.stats();
        measuring.store(true, SeqCst);
        let t0 = Instant::now();
        let total = Duration::from_secs_f64(cfg.seconds);
        let mut samples = Vec::new();
        while t0.elapsed() < total {
            thread::sleep(SAMPLE_EVERY.min(total.saturating_sub(t0.elapsed())));
            let st = mgr.stats();
            samples.push((t0.elapsed(), st.live.saturating_sub(base.live)));
        }
        stop.store(true, SeqCst);
        let elapsed = t0.elapsed();
        let results: Vec<WorkerResult> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        (results, elapsed, samples)
    });
    let secs = elapsed.as_secs_f64();
    let mut ops = OpCounts::default();
    let (mut snapshot_reads, mut hops, mut query_violations) = (0, 0, 0);
    for r in &results {
        ops.add(&r.ops);
        snapshot_reads += r.snapshot_reads;
        hops += r.hops;
        query_violations += r.query_violations;
    }
    let bound = check_traversal_bound(results.iter().map(|r| r.log.as_slice()));
    let tenth = elapsed / 10;
    let max_live = samples.iter().map(|s| s.1).max().unwrap_or(0);
    let max_first = samples.iter().filter(|s| s.0 <= tenth).map(|s| s.1).max().unwrap_or(0);
    let st = mgr.stats();
    let final_size = subject.contents(&mgr.register().pin()).len() as u64;
    let per = |n: u64| n as f64 / secs;
    RunReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        key_range: cfg.key_range(),
        elapsed_seconds: secs,
        ops,
        throughput: Throughput {
            ins: per(ops.ins),
            del: per(ops.del),
            find: per(ops.find),
            rq: per(ops.rq),
            total: per(ops.total()),
        },
        initial_size,
        final_size,
        snapshot_reads,
        hops,
        violations: bound.violations + query_violations,
        bound: BoundSummary {
            reads_checked: bound.reads_checked,
            commits_seen: bound.commits_seen,
            violations: bound.violations,
            hop_histogram: bound.hop_histogram,
        },
        query_violations,
        reclaim: ReclaimSummary {
            retired: st.retired,
            freed: st.freed,
            max_live_retired: max_live,
            max_live_retired_first_tenth: max_first,
            plateau: max_live <= 2 * max_first.max(1),
            trap_reads: reclaim::trap_reads() - traps0,
            poison: reclaim::poison_enabled(),
        },
        baseline: None,
    }
}
