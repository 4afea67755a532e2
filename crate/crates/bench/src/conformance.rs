//! Long seeded single-threaded runs replayed against the sequential
//! specifications.

use std::fmt;

use chronocas::cell::{CellFamily, Plain, Versioned};
use chronocas::link::Link;
use chronocas::oracle::{
    OracleError, Pred, QueueOp, SeqLeafTree, SeqQueue, SeqSet, SeqVcas, Sequential, SetOp, VcasOp, VcasRet,
};
use chronocas::vcas_direct::{VersionFields, Versionable};
use chronocas::bst::{Direct, Indirect, NbBst, Plain as PlainTree, TreeMode};
use chronocas::{Camera, DirectVersionedCas, EpochManager, HarrisList, MsQueue, SnapshotHandle, VersionedCas};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::subject::{bst_apply, list_apply, queue_apply};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Vcas,
    VcasDirect,
    Queue,
    List,
    Bst,
    BstDirect,
    BstPlain,
}

impl Class {
    pub const ALL: [Class; 7] = [
        Class::Vcas,
        Class::VcasDirect,
        Class::Queue,
        Class::List,
        Class::Bst,
        Class::BstDirect,
        Class::BstPlain,
    ];
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Vcas => "vcas",
            Class::VcasDirect => "vcas-direct",
            Class::Queue => "queue",
            Class::List => "list",
            Class::Bst => "bst",
            Class::BstDirect => "bst-direct",
            Class::BstPlain => "bst-plain",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub class: String,
    pub ops: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<String>,
}

impl ConformanceReport {
    fn new(class: Class) -> Self {
        ConformanceReport {
            class: class.to_string(),
            ..Default::default()
        }
    }

    fn compare<T: PartialEq + fmt::Debug>(&mut self, op: &dyn fmt::Debug, got: T, want: T) {
        self.ops += 1;
        if got != want {
            self.mismatches += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(format!("op #{} {op:?}: got {got:?}, expected {want:?}", self.ops));
            }
        }
    }
}

/// Runs `ops` seeded random operations on one instance of `class`.
pub fn conformance(class: Class, ops: usize, seed: u64) -> ConformanceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match class {
        Class::Vcas => vcas(&mut rng, ops),
        Class::VcasDirect => direct(&mut rng, ops),
        Class::Queue => queue::<Versioned>(&mut rng, ops, class),
        Class::List => list::<Versioned>(&mut rng, ops, class),
        Class::Bst => bst::<Indirect>(&mut rng, ops, class),
        Class::BstDirect => bst::<Direct>(&mut rng, ops, class),
        Class::BstPlain => bst::<PlainTree>(&mut rng, ops, class),
    }
}

/// Same as [`conformance`] on the variants whose links are not versioned.
pub fn conformance_plain(class: Class, ops: usize, seed: u64) -> Option<ConformanceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match class {
        Class::Queue => Some(queue::<Plain>(&mut rng, ops, class)),
        Class::List => Some(list::<Plain>(&mut rng, ops, class)),
        _ => None,
    }
}

fn vcas_op(rng: &mut ChaCha8Rng, objs: usize, handles: &[u64], vals: u64) -> VcasOp {
    let obj = if objs == 0 { 0 } else { rng.gen_range(0..objs) };
    if objs == 0 {
        return VcasOp::New(rng.gen_range(0..vals));
    }
    match rng.gen_range(0..16) {
        0 => VcasOp::New(rng.gen_range(0..vals)),
        1..=3 => VcasOp::Read(obj),
        4..=8 => VcasOp::Cas {
            obj,
            old: rng.gen_range(0..vals),
            new: rng.gen_range(0..vals),
        },
        9 | 10 => VcasOp::TakeSnapshot,
        11 => VcasOp::PeekTimestamp,
        _ if handles.is_empty() => VcasOp::TakeSnapshot,
        _ => VcasOp::ReadSnapshot {
            obj,
            handle: handles[rng.gen_range(0..handles.len())],
        },
    }
}

fn vcas(rng: &mut ChaCha8Rng, ops: usize) -> ConformanceReport {
    let mut report = ConformanceReport::new(Class::Vcas);
    let cam = Camera::new();
    let mgr = EpochManager::new();
    let h = mgr.register();
    let g = h.pin();
    let mut objs: Vec<VersionedCas<u64>> = Vec::new();
    let mut handles = Vec::new();
    let mut spec = SeqVcas::new();
    while report.ops < ops as u64 {
        let op = vcas_op(rng, objs.len().min(64), &handles, 4);
        let want = match spec.step(&op) {
            Err(OracleError::PredatesObject { .. }) => continue,
            w => w.expect("generated operation is valid"),
        };
        let got = match op {
            VcasOp::New(v) => {
                objs.push(VersionedCas::new(v, &cam));
                VcasRet::Obj(objs.len() - 1)
            }
            VcasOp::Read(o) => VcasRet::Value(objs[o].read(&cam, &g)),
            VcasOp::Cas { obj, old, new } => VcasRet::Bool(objs[obj].compare_and_swap(old, new, &cam, &g)),
            VcasOp::TakeSnapshot => {
                let s = g.snapshot(&cam).handle().ts();
                handles.push(s);
                VcasRet::Handle(s)
            }
            VcasOp::ReadSnapshot { obj, handle } => {
                // The guard has been held since before every handle was issued.
                let s = unsafe { g.adopt_snapshot(&cam, SnapshotHandle(handle)) };
                VcasRet::Value(objs[obj].read_snapshot(&s))
            }
            VcasOp::PeekTimestamp => VcasRet::Time(cam.peek_timestamp()),
        };
        report.compare(&op, got, want);
    }
    report
}

struct DNode {
    version: VersionFields<DNode>,
    id: u64,
}

impl Versionable for DNode {
    fn version(&self) -> &VersionFields<Self> {
        &self.version
    }
}

/// Direct objects hold node identities. Node ids stand in for values, 0 is
/// the nil link, and every successful swap publishes a fresh node.
fn direct(rng: &mut ChaCha8Rng, ops: usize) -> ConformanceReport {
    let mut report = ConformanceReport::new(Class::VcasDirect);
    let cam = Camera::new();
    let mgr = EpochManager::new();
    let h = mgr.register();
    let g = h.pin();
    let mut arena: Vec<Box<DNode>> = Vec::new();
    let mut objs: Vec<DirectVersionedCas<DNode>> = Vec::new();
    let mut handles = Vec::new();
    let mut spec = SeqVcas::new();
    let alloc = |arena: &mut Vec<Box<DNode>>| {
        let id = arena.len() as u64 + 1;
        arena.push(Box::new(DNode {
            version: VersionFields::new(),
            id,
        }));
        id
    };
    let link_of = |arena: &Vec<Box<DNode>>, id: u64| {
        if id == 0 {
            Link::from_raw(std::ptr::null_mut())
        } else {
            Link::from_raw(&*arena[id as usize - 1] as *const DNode as *mut DNode)
        }
    };
    let id_of = |l: Link<DNode>| unsafe { l.as_ptr().as_ref() }.map_or(0, |n| n.id);
    while report.ops < ops as u64 {
        let mut op = vcas_op(rng, objs.len().min(64), &handles, 3);
        match &mut op {
            VcasOp::New(v) => *v = if *v == 0 { 0 } else { alloc(&mut arena) },
            VcasOp::Cas { obj, old, new } => {
                if rng.gen_ratio(2, 3) {
                    *old = spec.current(*obj).expect("object exists");
                }
                *new = if rng.gen_ratio(1, 5) { *old } else { alloc(&mut arena) };
            }
            _ => {}
        }
        let want = match spec.step(&op) {
            Err(OracleError::PredatesObject { .. }) => continue,
            w => w.expect("generated operation is valid"),
        };
        let got = match op {
            VcasOp::New(v) => {
                objs.push(DirectVersionedCas::new(link_of(&arena, v), &cam));
                VcasRet::Obj(objs.len() - 1)
            }
            VcasOp::Read(o) => VcasRet::Value(id_of(objs[o].read(&cam, &g))),
            VcasOp::Cas { obj, old, new } => VcasRet::Bool(objs[obj].compare_and_swap(
                link_of(&arena, old),
                link_of(&arena, new),
                &cam,
                &g,
            )),
            VcasOp::TakeSnapshot => {
                let s = g.snapshot(&cam).handle().ts();
                handles.push(s);
                VcasRet::Handle(s)
            }
            VcasOp::ReadSnapshot { obj, handle } => {
                let s = unsafe { g.adopt_snapshot(&cam, SnapshotHandle(handle)) };
                VcasRet::Value(id_of(objs[obj].read_snapshot(&s)))
            }
            VcasOp::PeekTimestamp => VcasRet::Time(cam.peek_timestamp()),
        };
        report.compare(&op, got, want);
    }
    for n in &arena {
        report.compare(&"publications", n.version.publications() <= 1, true);
    }
    report
}

fn queue<F: CellFamily>(rng: &mut ChaCha8Rng, ops: usize, class: Class) -> ConformanceReport {
    let mut report = ConformanceReport::new(class);
    let q: MsQueue<u64, F> = MsQueue::new();
    let h = q.register();
    let mut spec = SeqQueue::default();
    for _ in 0..ops {
        let op = match rng.gen_range(0..16) {
            0..=5 => QueueOp::Enqueue(rng.gen_range(0..1_000)),
            6..=10 => QueueOp::Dequeue,
            11 | 12 => QueueOp::PeekEndPoints,
            13 => QueueOp::Scan,
            _ => QueueOp::Ith(rng.gen_range(0..12)),
        };
        let got = queue_apply(&q, &op, &h.pin());
        report.compare(&op, got, spec.step(&op).expect("queue operations are total"));
    }
    report
}

fn set_op(rng: &mut ChaCha8Rng, range: u64, list: bool) -> SetOp {
    let k = rng.gen_range(0..range);
    let e = rng.gen_range(0..range + 2);
    match rng.gen_range(0..16) {
        0..=3 => SetOp::Insert(k),
        4..=6 => SetOp::Delete(k),
        7 | 8 => SetOp::Contains(k),
        9 => SetOp::Range(k, e),
        10 => SetOp::MultiSearch(vec![k, e, rng.gen_range(0..range)]),
        11 if list => SetOp::Ith(rng.gen_range(0..12)),
        11 => SetOp::RangeSum(k, e),
        12 if list => SetOp::Range(e, k),
        12 => SetOp::Succ(k, rng.gen_range(0..5)),
        13 if list => SetOp::Contains(e),
        13 => SetOp::FindIf(k, e, Pred::ModEq { m: 3, r: rng.gen_range(0..3) }),
        14 if list => SetOp::Ith(1),
        14 => SetOp::Height,
        _ => SetOp::Delete(e),
    }
}

fn list<F: CellFamily>(rng: &mut ChaCha8Rng, ops: usize, class: Class) -> ConformanceReport {
    let mut report = ConformanceReport::new(class);
    let l: HarrisList<u64, F> = HarrisList::new();
    let h = l.register();
    let mut spec = SeqSet::default();
    for _ in 0..ops {
        let op = set_op(rng, 96, true);
        let got = list_apply(&l, &op, &h.pin()).expect("list offers every generated operation");
        report.compare(&op, got, spec.step(&op).expect("set operations are total"));
    }
    report
}

fn bst<M: TreeMode>(rng: &mut ChaCha8Rng, ops: usize, class: Class) -> ConformanceReport {
    let mut report = ConformanceReport::new(class);
    let t: NbBst<u64, M> = NbBst::new();
    let h = t.register();
    let mut spec = SeqLeafTree::default();
    for _ in 0..ops {
        let op = set_op(rng, 128, false);
        let got = bst_apply(&t, &op, &h.pin()).expect("tree offers every generated operation");
        report.compare(&op, got, spec.step(&op).expect("tree operations are total"));
    }
    report
}

/// Results of a seeded single-threaded tree history, one line per
/// operation. `None` for non-tree classes.
pub fn transcript(class: Class, ops: usize, seed: u64) -> Option<String> {
    match class {
        Class::Bst => Some(tree_transcript::<Indirect>(ops, seed)),
        Class::BstDirect => Some(tree_transcript::<Direct>(ops, seed)),
        Class::BstPlain => Some(tree_transcript::<PlainTree>(ops, seed)),
        _ => None,
    }
}

fn tree_transcript<M: TreeMode>(ops: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: NbBst<u64, M> = NbBst::new();
    let h = t.register();
    let mut out = String::new();
    for _ in 0..ops {
        let op = set_op(&mut rng, 256, false);
        let ret = bst_apply(&t, &op, &h.pin()).expect("tree offers every generated operation");
        out.push_str(&format!("{op:?} -> {ret:?}\n"));
    }
    out
}
