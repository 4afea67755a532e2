//! Instrumented step bounds: version-list traversal, current-state access and
//! query cost.

use std::sync::atomic::{AtomicBool, Ordering::*};
use std::sync::{Arc, Barrier};
use std::thread;

use chronocas::instrument::{self, check_traversal_bound, measure};
use chronocas::{Bst, Camera, DirectBst, EpochManager, HarrisList, MsQueue, VersionedCas};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn traversal_bound_holds_under_concurrency() {
    let cam = Arc::new(Camera::new());
    let mgr = EpochManager::new();
    let cells: Arc<Vec<VersionedCas<u64>>> = Arc::new((0..4).map(|_| VersionedCas::new(0, &cam)).collect());
    let start = Arc::new(Barrier::new(4));
    let workers: Vec<_> = (0..4)
        .map(|tid| {
            let (cam, mgr, cells, start) = (cam.clone(), mgr.clone(), cells.clone(), start.clone());
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(tid);
                let h = mgr.register();
                instrument::start_bound_log(0);
                start.wait();
                for i in 0..20_000u64 {
                    let g = h.pin();
                    let c = &cells[rng.gen_range(0..cells.len())];
                    if tid < 2 {
                        let cur = c.read(&cam, &g);
                        c.compare_and_swap(cur, cur + 1, &cam, &g);
                    } else {
                        let s = g.snapshot(&cam);
                        if i % 4 == 0 {
                            thread::yield_now();
                        }
                        for c in cells.iter() {
                            c.read_snapshot(&s);
                        }
                    }
                    if i % 32 == 0 {
                        thread::yield_now();
                    }
                }
                instrument::take_bound_log()
            })
        })
        .collect();
    let logs: Vec<_> = workers.into_iter().map(|w| w.join().unwrap()).collect();
    let report = check_traversal_bound(logs.iter().map(Vec::as_slice));
    assert_eq!(report.violations, 0, "{:?}", report.examples);
    assert!(report.commits_seen >= 20_000);
    assert!(report.reads_checked > 0);
}

#[test]
fn current_state_access_ignores_history() {
    let cam = Camera::new();
    let mgr = EpochManager::new();
    let h = mgr.register();
    let g = h.pin();
    let c = VersionedCas::new(0u64, &cam);
    for v in 1..=1_000_000u64 {
        cam.take_snapshot();
        assert!(c.compare_and_swap(v - 1, v, &cam, &g));
    }
    let s = g.snapshot(&cam);
    let (v, cost) = measure(|| c.read_snapshot(&s));
    assert_eq!(v, 1_000_000);
    assert_eq!(cost.steps.hops, 0);
    assert_eq!(c.read(&cam, &g), 1_000_000);
}

/// Steps of a solo query: one snapshot read per visited node plus constant
/// overhead, and no version hops.
#[test]
fn solo_query_costs() {
    let q: MsQueue<u64> = MsQueue::new();
    let l: HarrisList<u64> = HarrisList::new();
    let t: Bst<u64> = Bst::new();
    let (hq, hl, ht) = (q.register(), l.register(), t.register());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2_000 {
        let k = rng.gen_range(0..10_000u64);
        q.enqueue(k, &hq.pin());
        l.insert(k, &hl.pin());
        t.insert(k, &ht.pin());
    }
    let m = l.range(0, u64::MAX, &hl.pin()).unwrap().len() as u64;
    for i in [1usize, 10, 100, 1_000] {
        let (_, cost) = measure(|| q.ith(i, &hq.pin()).unwrap());
        assert_eq!(cost.steps.hops, 0);
        assert!(cost.steps.snapshot_reads <= 4 + i as u64, "ith({i}) {cost:?}");
    }
    let g = hl.pin();
    let (_, cost) = measure(|| l.range(5_000, 5_100, &g).unwrap());
    assert!(cost.steps.snapshot_reads <= 4 + 2 * m, "{cost:?}");
    let (_, cost) = measure(|| l.ith(m as usize, &g).unwrap());
    assert!(cost.steps.snapshot_reads <= 4 + 2 * m, "{cost:?}");
    drop(g);
    let g = ht.pin();
    let h = t.height(&g) as u64;
    for (s, e) in [(0, 10), (5_000, 5_100), (0, 10_000)] {
        let (keys, cost) = measure(|| t.range(s, e, &g).unwrap());
        let k = keys.len() as u64;
        assert_eq!(cost.steps.hops, 0);
        assert!(cost.steps.snapshot_reads <= 8 + 4 * (h + k), "range({s},{e}) h={h} k={k} {cost:?}");
    }
    let (_, cost) = measure(|| t.succ(4_000, 20, &g).unwrap());
    assert!(cost.steps.snapshot_reads <= 8 + 4 * (h + 20), "{cost:?}");
    let (_, cost) = measure(|| t.height(&g));
    assert!(cost.steps.snapshot_reads <= 4 + 2 * (2 * m + 2), "{cost:?}");
}

/// Under concurrent updates every extra hop is paid for by a successful
/// versioned CAS counted during the query, or by one of the writers' commits
/// still in flight when it ended (at most one per writer).
#[test]
fn concurrent_query_hops_are_paid_by_concurrent_commits() {
    let t: Arc<Bst<u64>> = Arc::new(Bst::new());
    {
        let h = t.register();
        for k in (0..2_000).step_by(2) {
            t.insert(k, &h.pin());
        }
    }
    let stop = Arc::new(AtomicBool::new(false));
    let writers: Vec<_> = (0..2)
        .map(|tid| {
            let (t, stop) = (t.clone(), stop.clone());
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + tid);
                let h = t.register();
                while !stop.load(Relaxed) {
                    let k = rng.gen_range(0..2_000);
                    if rng.gen() {
                        t.insert(k, &h.pin());
                    } else {
                        t.delete(k, &h.pin());
                    }
                }
            })
        })
        .collect();
    let h = t.register();
    let mut hopped = 0;
    for i in 0..3_000u64 {
        let s = (i * 37) % 1_900;
        let (_, cost) = measure(|| {
            let g = h.pin();
            let snap = t.snapshot(&g);
            if i % 2 == 0 {
                thread::yield_now();
            }
            t.range_at(s, s + 100, &snap).unwrap()
        });
        assert!(cost.steps.hops <= cost.concurrent_commits + 2, "{cost:?}");
        hopped += cost.steps.hops;
    }
    stop.store(true, Relaxed);
    for w in writers {
        w.join().unwrap();
    }
    assert!(hopped > 0);
}

#[test]
fn direct_tree_publishes_each_node_once() {
    let before = instrument::double_publications();
    let t: Arc<DirectBst<u64>> = Arc::new(DirectBst::new());
    let workers: Vec<_> = (0..4)
        .map(|tid| {
            let t = t.clone();
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(tid);
                let h = t.register();
                for i in 0..25_000 {
                    let k = rng.gen_range(0..512);
                    match rng.gen_range(0..3) {
                        0 => {
                            t.insert(k, &h.pin());
                        }
                        1 => {
                            t.delete_recorded_once(k, &h.pin());
                        }
                        _ => {
                            t.range(k, k + 32, &h.pin()).unwrap();
                        }
                    }
                    if i % 64 == 0 {
                        thread::yield_now();
                    }
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    assert_eq!(instrument::double_publications(), before);
    assert_eq!(instrument::isolation_breaches(), 0);
}

#[test]
fn direct_and_indirect_trees_answer_identically() {
    let a: Bst<u64> = Bst::new();
    let b: DirectBst<u64> = DirectBst::new();
    let (ha, hb) = (a.register(), b.register());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut ta, mut tb) = (String::new(), String::new());
    for _ in 0..10_000 {
        let k = rng.gen_range(0..300u64);
        let e = k + rng.gen_range(0..60);
        let (ga, gb) = (ha.pin(), hb.pin());
        let (x, y) = match rng.gen_range(0..8) {
            0 | 1 => (format!("{}", a.insert(k, &ga)), format!("{}", b.insert(k, &gb))),
            2 => (format!("{}", a.delete(k, &ga)), format!("{}", b.delete_recorded_once(k, &gb))),
            3 => (format!("{:?}", a.range(k, e, &ga)), format!("{:?}", b.range(k, e, &gb))),
            4 => (format!("{:?}", a.range_sum(k, e, &ga)), format!("{:?}", b.range_sum(k, e, &gb))),
            5 => (format!("{:?}", a.succ(k, 4, &ga)), format!("{:?}", b.succ(k, 4, &gb))),
            6 => (
                format!("{:?} {}", a.multisearch(&[k, e], &ga), a.height(&ga)),
                format!("{:?} {}", b.multisearch(&[k, e], &gb), b.height(&gb)),
            ),
            _ => (
                format!("{:?}", a.find_if(k, e, |x| x % 7 == 3, &ga)),
                format!("{:?}", b.find_if(k, e, |x| x % 7 == 3, &gb)),
            ),
        };
        ta.push_str(&x);
        ta.push('\n');
        tb.push_str(&y);
        tb.push('\n');
    }
    assert_eq!(ta.as_bytes(), tb.as_bytes());
}
