//! Exhaustive and sampled interleavings of small versioned CAS programs.

use std::collections::BTreeSet;
use std::sync::Arc;

use chronocas::hooks::{Mutation, MutationSet};
use chronocas::lincheck::{check, explore, CheckConfig, ExploreConfig, Program, ThreadLog, Verdict};
use chronocas::link::Link;
use chronocas::oracle::{SeqVcas, VcasOp, VcasRet};
use chronocas::vcas_direct::{VersionFields, Versionable};
use chronocas::{Camera, DirectVersionedCas, EpochManager, Guard, SnapshotHandle, VersionedCas};

struct World {
    cam: Camera,
    mgr: Arc<EpochManager>,
    objs: Vec<VersionedCas<u64>>,
}

impl World {
    fn new(init: &[u64]) -> Self {
        let cam = Camera::new();
        let objs = init.iter().map(|&v| VersionedCas::new(v, &cam)).collect();
        World {
            cam,
            mgr: EpochManager::new(),
            objs,
        }
    }

    fn spec(init: &[u64]) -> SeqVcas {
        let mut s = SeqVcas::new();
        for &v in init {
            s.add_object(v);
        }
        s
    }
}

type Log = ThreadLog<VcasOp, VcasRet>;

fn cas(w: &World, log: &mut Log, g: &Guard<'_>, obj: usize, old: u64, new: u64) -> bool {
    let r = log.call(VcasOp::Cas { obj, old, new }, || {
        VcasRet::Bool(w.objs[obj].compare_and_swap(old, new, &w.cam, g))
    });
    r == VcasRet::Bool(true)
}

fn read(w: &World, log: &mut Log, g: &Guard<'_>, obj: usize) {
    log.call(VcasOp::Read(obj), || VcasRet::Value(w.objs[obj].read(&w.cam, g)));
}

fn snap_read(w: &World, log: &mut Log, g: &Guard<'_>, objs: &[usize]) {
    let slot = log.invoke(VcasOp::TakeSnapshot);
    let h = g.snapshot(&w.cam).handle().ts();
    log.respond(slot, VcasRet::Handle(h));
    let s = unsafe { g.adopt_snapshot(&w.cam, SnapshotHandle(h)) };
    for &obj in objs {
        log.call(VcasOp::ReadSnapshot { obj, handle: h }, || {
            VcasRet::Value(w.objs[obj].read_snapshot(&s))
        });
    }
}

/// Explores `program` and counts histories the checker rejects. Panics on
/// inconclusive verdicts.
fn rejections(program: &Program<World, VcasOp, VcasRet>, init: &[u64], cfg: &ExploreConfig) -> (usize, usize, bool) {
    let spec = World::spec(init);
    let mut bad = 0;
    let report = explore(program, cfg, |h, _| match check(&spec, h, &CheckConfig::default()).unwrap() {
        Verdict::Linearizable { .. } => {}
        Verdict::NotLinearizable { witness } => {
            if bad == 0 && cfg.mutations == MutationSet::NONE {
                eprintln!("{h}\n{witness}");
            }
            bad += 1;
        }
        Verdict::Inconclusive { .. } => panic!("inconclusive:\n{h}"),
    });
    (bad, report.schedules, report.exhaustive)
}

/// A write racing a plain read followed by a snapshot read on the same
/// thread. Needs the read-side timestamp help.
fn read_then_snapshot() -> Program<World, VcasOp, VcasRet> {
    Program::new(|| World::new(&[0]))
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            cas(w, log, &g, 0, 0, 1);
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            read(w, log, &g, 0);
            snap_read(w, log, &g, &[0]);
        })
}

/// A write racing a failing write followed by a snapshot read. Needs the
/// timestamp help before the comparison.
fn failed_cas_then_snapshot() -> Program<World, VcasOp, VcasRet> {
    Program::new(|| World::new(&[0]))
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            cas(w, log, &g, 0, 0, 1);
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            cas(w, log, &g, 0, 0, 5);
            snap_read(w, log, &g, &[0]);
        })
}

#[test]
fn read_then_snapshot_is_linearizable() {
    let (bad, n, exhaustive) = rejections(&read_then_snapshot(), &[0], &ExploreConfig::default());
    assert!(exhaustive, "{n} schedules");
    assert_eq!(bad, 0);
}

#[test]
fn failed_cas_then_snapshot_is_linearizable() {
    let (bad, n, exhaustive) = rejections(&failed_cas_then_snapshot(), &[0], &ExploreConfig::default());
    assert!(exhaustive, "{n} schedules");
    assert_eq!(bad, 0);
}

#[test]
fn removing_read_help_is_caught() {
    let cfg = ExploreConfig {
        mutations: Mutation::SkipReadHelp.into(),
        ..ExploreConfig::default()
    };
    let (bad, _, _) = rejections(&read_then_snapshot(), &[0], &cfg);
    assert!(bad >= 1);
}

#[test]
fn removing_head_help_before_cas_is_caught() {
    let cfg = ExploreConfig {
        mutations: Mutation::SkipHeadHelpBeforeCas.into(),
        ..ExploreConfig::default()
    };
    let (bad, _, _) = rejections(&failed_cas_then_snapshot(), &[0], &cfg);
    assert!(bad >= 1);
}

#[test]
fn write_snapshot_read_three_threads() {
    let p = Program::new(|| World::new(&[0]))
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            cas(w, log, &g, 0, 0, 1);
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            let slot = log.invoke(VcasOp::TakeSnapshot);
            let s = g.snapshot(&w.cam).handle().ts();
            log.respond(slot, VcasRet::Handle(s));
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            read(w, log, &g, 0);
        });
    let cfg = ExploreConfig {
        max_schedules: 200_000,
        ..ExploreConfig::default()
    };
    let (bad, n, exhaustive) = rejections(&p, &[0], &cfg);
    assert!(exhaustive, "{n} schedules");
    assert_eq!(bad, 0);
}

#[test]
fn two_writers_and_a_snapshot_reader_sampled() {
    let p = Program::new(|| World::new(&[0, 0]))
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            if cas(w, log, &g, 0, 0, 1) {
                cas(w, log, &g, 1, 0, 1);
            }
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            cas(w, log, &g, 0, 0, 2);
            read(w, log, &g, 1);
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            snap_read(w, log, &g, &[0, 1]);
        });
    let cfg = ExploreConfig {
        max_schedules: 3_000,
        samples: 3_000,
        seed: 7,
        ..ExploreConfig::default()
    };
    let (bad, n, _) = rejections(&p, &[0, 0], &cfg);
    assert_eq!(n, 6_000);
    assert_eq!(bad, 0);
}

#[test]
fn concurrent_snapshots_advance_the_camera_consistently() {
    for k in 2..=3 {
        let mut p: Program<World, VcasOp, VcasRet> = Program::new(|| World::new(&[]));
        for _ in 0..k {
            p = p.thread(|w, log| {
                log.call(VcasOp::TakeSnapshot, || VcasRet::Handle(w.cam.take_snapshot().ts()));
            });
        }
        let spec = World::spec(&[]);
        let mut finals = BTreeSet::new();
        let r = explore(&p, &ExploreConfig::default(), |h, w| {
            let last = w.cam.peek_timestamp();
            let max = h
                .records()
                .iter()
                .map(|r| match r.ret {
                    Some(VcasRet::Handle(x)) => x,
                    _ => unreachable!(),
                })
                .max()
                .unwrap();
            assert!(last > max && last <= k as u64, "{h}final {last}");
            assert!(check(&spec, h, &CheckConfig::default()).unwrap().is_linearizable());
            finals.insert(last);
        });
        assert!(r.exhaustive);
        assert_eq!(r.schedules, if k == 2 { 6 } else { 90 });
        assert_eq!(finals.into_iter().collect::<Vec<_>>(), (1..=k as u64).collect::<Vec<_>>());
    }
}

#[test]
fn racing_timestamp_helpers_agree() {
    let p: Program<World, VcasOp, VcasRet> = Program::new(|| World::new(&[0]))
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            cas(w, log, &g, 0, 0, 1);
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            read(w, log, &g, 0);
        })
        .thread(|w, log| {
            log.call(VcasOp::TakeSnapshot, || VcasRet::Handle(w.cam.take_snapshot().ts()));
        });
    let mut seen = BTreeSet::new();
    let cfg = ExploreConfig {
        max_schedules: 200_000,
        ..ExploreConfig::default()
    };
    let r = explore(&p, &cfg, |_, w| {
        let h = w.mgr.register();
        let g = h.pin();
        let ts = w.objs[0].head_timestamp(&w.cam, &g);
        assert!(ts <= 1);
        seen.insert(ts);
    });
    assert!(r.exhaustive);
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![0, 1]);
}

struct DNode {
    version: VersionFields<DNode>,
}

impl Versionable for DNode {
    fn version(&self) -> &VersionFields<Self> {
        &self.version
    }
}

fn dnode() -> *mut DNode {
    Box::into_raw(Box::new(DNode {
        version: VersionFields::new(),
    }))
}

struct DirectWorld {
    cam: Camera,
    mgr: Arc<EpochManager>,
    nodes: Vec<*mut DNode>,
    cell: DirectVersionedCas<DNode>,
}

unsafe impl Sync for DirectWorld {}

impl DirectWorld {
    /// Node 0 is the initial head; the rest are fresh.
    fn new(fresh: usize) -> Self {
        let cam = Camera::new();
        let nodes: Vec<_> = (0..=fresh).map(|_| dnode()).collect();
        let cell = DirectVersionedCas::new(Link::from_raw(nodes[0]), &cam);
        DirectWorld {
            cam,
            mgr: EpochManager::new(),
            nodes,
            cell,
        }
    }

    fn id(&self, l: Link<DNode>) -> u64 {
        self.nodes.iter().position(|&n| n == l.as_ptr()).map_or(u64::MAX, |i| i as u64)
    }

    fn node(&self, i: usize) -> &DNode {
        unsafe { &*self.nodes[i] }
    }
}

impl Drop for DirectWorld {
    fn drop(&mut self) {
        for &n in &self.nodes {
            unsafe { drop(Box::from_raw(n)) };
        }
    }
}

#[test]
fn init_nextv_racing_publication() {
    let p: Program<DirectWorld, (), ()> = Program::new(|| DirectWorld::new(1))
        .thread(|w, _| {
            let h = w.mgr.register();
            let g = h.pin();
            assert!(w.cell.compare_and_swap(
                Link::from_raw(w.nodes[0]),
                Link::from_raw(w.nodes[1]),
                &w.cam,
                &g
            ));
        })
        .thread(|w, _| w.node(1).version().init_nextv());
    let mut outcomes = BTreeSet::new();
    let r = explore(&p, &ExploreConfig::default(), |_, w| {
        let n = w.node(1).version();
        let older = n.older().expect("nextv left unlinked");
        assert!(older.is_null() || older == w.nodes[0]);
        assert_eq!(n.publications(), 1);
        outcomes.insert(older.is_null());
    });
    assert!(r.exhaustive);
    assert_eq!(outcomes.len(), 2);
}

fn direct_program() -> Program<DirectWorld, VcasOp, VcasRet> {
    Program::new(|| DirectWorld::new(1))
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            log.call(VcasOp::Cas { obj: 0, old: 0, new: 1 }, || {
                VcasRet::Bool(w.cell.compare_and_swap(
                    Link::from_raw(w.nodes[0]),
                    Link::from_raw(w.nodes[1]),
                    &w.cam,
                    &g,
                ))
            });
        })
        .thread(|w, log| {
            let h = w.mgr.register();
            let g = h.pin();
            log.call(VcasOp::Read(0), || VcasRet::Value(w.id(w.cell.read(&w.cam, &g))));
            let slot = log.invoke(VcasOp::TakeSnapshot);
            let s = g.snapshot(&w.cam);
            log.respond(slot, VcasRet::Handle(s.handle().ts()));
            log.call(VcasOp::ReadSnapshot { obj: 0, handle: s.handle().ts() }, || {
                VcasRet::Value(w.id(w.cell.read_snapshot(&s)))
            });
        })
}

fn direct_rejections(mutations: MutationSet) -> usize {
    let spec = World::spec(&[0]);
    let mut bad = 0;
    let cfg = ExploreConfig {
        mutations,
        ..ExploreConfig::default()
    };
    let r = explore(&direct_program(), &cfg, |h, _| {
        if check(&spec, h, &CheckConfig::default()).unwrap().is_rejected() {
            bad += 1;
        }
    });
    assert!(r.exhaustive);
    bad
}

#[test]
fn direct_vcas_is_linearizable() {
    assert_eq!(direct_rejections(MutationSet::NONE), 0);
}

#[test]
fn direct_vcas_needs_read_help() {
    assert!(direct_rejections(Mutation::SkipReadHelp.into()) >= 1);
}
