//! Small closed versioned CAS programs explored schedule by schedule.

use std::sync::Arc;

use chronocas::hooks::{Mutation, MutationSet};
use chronocas::lincheck::{check, explore, CheckConfig, ExploreConfig, Program, ThreadLog, Verdict};
use chronocas::link::Link;
use chronocas::oracle::{SeqVcas, VcasOp, VcasRet};
use chronocas::vcas_direct::{VersionFields, Versionable};
use chronocas::{Camera, DirectVersionedCas, EpochManager, Guard, SnapshotHandle, VersionedCas};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub name: String,
    pub threads: usize,
    pub schedules: usize,
    pub exhaustive: bool,
    pub rejected: usize,
    pub inconclusive: usize,
    pub witness: Option<String>,
}

pub struct World {
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
}

fn spec(init: &[u64]) -> SeqVcas {
    let mut s = SeqVcas::new();
    for &v in init {
        s.add_object(v);
    }
    s
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
    // The guard is held across the snapshot and the reads below.
    let s = unsafe { g.adopt_snapshot(&w.cam, SnapshotHandle(h)) };
    for &obj in objs {
        log.call(VcasOp::ReadSnapshot { obj, handle: h }, || {
            VcasRet::Value(w.objs[obj].read_snapshot(&s))
        });
    }
}

macro_rules! pinned {
    (|$w:ident, $log:ident, $g:ident| $body:block) => {
        |$w: &World, $log: &mut Log| {
            let h = $w.mgr.register();
            let $g = h.pin();
            $body
        }
    };
}

/// A write racing a plain read followed by a snapshot read.
pub fn read_then_snapshot() -> Program<World, VcasOp, VcasRet> {
    Program::new(|| World::new(&[0]))
        .thread(pinned!(|w, log, g| {
            cas(w, log, &g, 0, 0, 1);
        }))
        .thread(pinned!(|w, log, g| {
            read(w, log, &g, 0);
            snap_read(w, log, &g, &[0]);
        }))
}

/// A write racing a failing write followed by a snapshot read.
pub fn failed_cas_then_snapshot() -> Program<World, VcasOp, VcasRet> {
    Program::new(|| World::new(&[0]))
        .thread(pinned!(|w, log, g| {
            cas(w, log, &g, 0, 0, 1);
        }))
        .thread(pinned!(|w, log, g| {
            cas(w, log, &g, 0, 0, 5);
            snap_read(w, log, &g, &[0]);
        }))
}

/// A write, a bare snapshot and a plain read on three threads.
pub fn write_snapshot_read() -> Program<World, VcasOp, VcasRet> {
    Program::new(|| World::new(&[0]))
        .thread(pinned!(|w, log, g| {
            cas(w, log, &g, 0, 0, 1);
        }))
        .thread(pinned!(|w, log, g| {
            let slot = log.invoke(VcasOp::TakeSnapshot);
            let s = g.snapshot(&w.cam).handle().ts();
            log.respond(slot, VcasRet::Handle(s));
        }))
        .thread(pinned!(|w, log, g| {
            read(w, log, &g, 0);
        }))
}

/// Two chained writes racing a snapshot read.
pub fn chained_writes_and_snapshot() -> Program<World, VcasOp, VcasRet> {
    Program::new(|| World::new(&[0]))
        .thread(pinned!(|w, log, g| {
            cas(w, log, &g, 0, 0, 1);
            cas(w, log, &g, 0, 1, 2);
        }))
        .thread(pinned!(|w, log, g| {
            snap_read(w, log, &g, &[0]);
        }))
}

/// Two objects, two writers and a reader taking one snapshot of both.
pub fn two_objects_sampled() -> Program<World, VcasOp, VcasRet> {
    Program::new(|| World::new(&[0, 0]))
        .thread(pinned!(|w, log, g| {
            if cas(w, log, &g, 0, 0, 1) {
                cas(w, log, &g, 1, 0, 1);
            }
        }))
        .thread(pinned!(|w, log, g| {
            cas(w, log, &g, 0, 0, 2);
            read(w, log, &g, 1);
        }))
        .thread(pinned!(|w, log, g| {
            snap_read(w, log, &g, &[0, 1]);
        }))
}

fn run<W: Sync>(
    name: &str,
    program: &Program<W, VcasOp, VcasRet>,
    init: &[u64],
    cfg: &ExploreConfig,
) -> ProgramReport {
    let spec = spec(init);
    let mut report = ProgramReport {
        name: name.to_string(),
        threads: program.thread_count(),
        schedules: 0,
        exhaustive: false,
        rejected: 0,
        inconclusive: 0,
        witness: None,
    };
    let r = explore(program, cfg, |h, _| match check(&spec, h, &CheckConfig::default()) {
        Ok(Verdict::Linearizable { .. }) => {}
        Ok(Verdict::NotLinearizable { witness }) => {
            report.rejected += 1;
            if report.witness.is_none() {
                report.witness = Some(format!("{h}{witness}"));
            }
        }
        Ok(Verdict::Inconclusive { .. }) | Err(_) => report.inconclusive += 1,
    });
    report.schedules = r.schedules;
    report.exhaustive = r.exhaustive;
    report
}

fn exhaustive(mutations: MutationSet) -> ExploreConfig {
    ExploreConfig {
        max_schedules: 200_000,
        samples: 0,
        mutations,
        ..ExploreConfig::default()
    }
}

struct DNode {
    version: VersionFields<DNode>,
}

impl Versionable for DNode {
    fn version(&self) -> &VersionFields<Self> {
        &self.version
    }
}

pub struct DirectWorld {
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
        let nodes: Vec<_> = (0..=fresh)
            .map(|_| {
                Box::into_raw(Box::new(DNode {
                    version: VersionFields::new(),
                }))
            })
            .collect();
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

    fn link(&self, i: usize) -> Link<DNode> {
        Link::from_raw(self.nodes[i])
    }
}

impl Drop for DirectWorld {
    fn drop(&mut self) {
        for &n in &self.nodes {
            unsafe { drop(Box::from_raw(n)) };
        }
    }
}

/// The read-then-snapshot race on a direct cell. Node ids stand in for
/// values.
pub fn direct_read_then_snapshot() -> Program<DirectWorld, VcasOp, VcasRet> {
    Program::new(|| DirectWorld::new(1))
        .thread(|w: &DirectWorld, log: &mut Log| {
            let h = w.mgr.register();
            let g = h.pin();
            log.call(VcasOp::Cas { obj: 0, old: 0, new: 1 }, || {
                VcasRet::Bool(w.cell.compare_and_swap(w.link(0), w.link(1), &w.cam, &g))
            });
        })
        .thread(|w: &DirectWorld, log: &mut Log| {
            let h = w.mgr.register();
            let g = h.pin();
            log.call(VcasOp::Read(0), || VcasRet::Value(w.id(w.cell.read(&w.cam, &g))));
            let slot = log.invoke(VcasOp::TakeSnapshot);
            let s = g.snapshot(&w.cam);
            log.respond(slot, VcasRet::Handle(s.handle().ts()));
            log.call(
                VcasOp::ReadSnapshot {
                    obj: 0,
                    handle: s.handle().ts(),
                },
                || VcasRet::Value(w.id(w.cell.read_snapshot(&s))),
            );
        })
}

/// Every canonical program, exhaustively, plus one sampled larger program.
pub fn canonical() -> Vec<ProgramReport> {
    let cfg = exhaustive(MutationSet::NONE);
    vec![
        run("read-then-snapshot", &read_then_snapshot(), &[0], &cfg),
        run("failed-cas-then-snapshot", &failed_cas_then_snapshot(), &[0], &cfg),
        run("write-snapshot-read", &write_snapshot_read(), &[0], &cfg),
        run("chained-writes-and-snapshot", &chained_writes_and_snapshot(), &[0], &cfg),
        run("direct-read-then-snapshot", &direct_read_then_snapshot(), &[0], &cfg),
        run(
            "two-objects-sampled",
            &two_objects_sampled(),
            &[0, 0],
            &ExploreConfig {
                max_schedules: 3_000,
                samples: 3_000,
                seed: 7,
                mutations: MutationSet::NONE,
            },
        ),
    ]
}

/// Explores the programs that depend on `m` with the mutation applied.
pub fn mutated(m: Mutation) -> Vec<ProgramReport> {
    let cfg = exhaustive(m.into());
    match m {
        Mutation::SkipReadHelp => vec![
            run("read-then-snapshot", &read_then_snapshot(), &[0], &cfg),
            run("direct-read-then-snapshot", &direct_read_then_snapshot(), &[0], &cfg),
        ],
        Mutation::SkipHeadHelpBeforeCas => {
            vec![run("failed-cas-then-snapshot", &failed_cas_then_snapshot(), &[0], &cfg)]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutations_are_rejected() {
        for m in [Mutation::SkipReadHelp, Mutation::SkipHeadHelpBeforeCas] {
            for r in mutated(m) {
                assert!(r.rejected >= 1, "{m:?}: {r:?}");
            }
        }
    }
}
