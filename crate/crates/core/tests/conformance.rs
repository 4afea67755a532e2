//! Single-threaded histories replayed against the sequential specifications.

mod common;

use chronocas::bst::{Direct, Indirect, NbBst, Plain as PlainTree, TreeMode};
use chronocas::cell::{CellFamily, Plain, Versioned};
use chronocas::link::Link;
use chronocas::oracle::{
    OracleError, Pred, QueueOp, SeqLeafTree, SeqQueue, SeqSet, SeqVcas, Sequential, SetOp, VcasOp,
    VcasRet,
};
use chronocas::vcas_direct::{VersionFields, Versionable};
use chronocas::{
    Camera, DirectVersionedCas, EpochManager, HarrisList, MsQueue, SnapshotHandle, VersionedCas,
};
use proptest::prelude::*;

type Raw = (u8, u64, u64, u64);

fn raw_ops(max: usize) -> impl Strategy<Value = Vec<Raw>> {
    prop::collection::vec((any::<u8>(), any::<u64>(), any::<u64>(), any::<u64>()), 0..max)
}

fn vcas_op(r: &Raw, objs: usize, handles: &[u64], vals: u64) -> VcasOp {
    let (kind, a, b, c) = *r;
    let obj = if objs == 0 { 0 } else { a as usize % objs };
    match kind % 6 {
        _ if objs == 0 => VcasOp::New(b % vals),
        0 => VcasOp::New(b % vals),
        1 => VcasOp::Read(obj),
        2 | 3 => VcasOp::Cas {
            obj,
            old: b % vals,
            new: c % vals,
        },
        4 => VcasOp::TakeSnapshot,
        _ if handles.is_empty() => VcasOp::PeekTimestamp,
        _ => VcasOp::ReadSnapshot {
            obj,
            handle: handles[b as usize % handles.len()],
        },
    }
}

fn run_vcas(raw: &[Raw]) -> Result<(), TestCaseError> {
    let cam = Camera::new();
    let mgr = EpochManager::new();
    let h = mgr.register();
    let g = h.pin();
    let mut objs: Vec<VersionedCas<u64>> = Vec::new();
    let mut handles = Vec::new();
    let mut spec = SeqVcas::new();
    for r in raw {
        let op = vcas_op(r, objs.len(), &handles, 4);
        let want = match spec.step(&op) {
            Err(OracleError::PredatesObject { .. }) => continue,
            w => w.unwrap(),
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
                let s = unsafe { g.adopt_snapshot(&cam, SnapshotHandle(handle)) };
                VcasRet::Value(objs[obj].read_snapshot(&s))
            }
            VcasOp::PeekTimestamp => VcasRet::Time(cam.peek_timestamp()),
        };
        prop_assert_eq!(got, want, "op {:?}", op);
    }
    Ok(())
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

/// Direct objects hold node identities; node ids stand in for values and 0
/// is the nil link. Every successful swap publishes a fresh node.
fn run_direct(raw: &[Raw]) -> Result<(), TestCaseError> {
    let cam = Camera::new();
    let mgr = EpochManager::new();
    let h = mgr.register();
    let g = h.pin();
    let mut arena: Vec<Box<DNode>> = Vec::new();
    let mut objs: Vec<DirectVersionedCas<DNode>> = Vec::new();
    let mut handles = Vec::new();
    let mut spec = SeqVcas::new();
    let alloc = |arena: &mut Vec<Box<DNode>>| {
        arena.push(Box::new(DNode {
            version: VersionFields::new(),
            id: arena.len() as u64 + 1,
        }));
        let n = arena.last_mut().unwrap();
        (n.id, Link::from_raw(&mut **n as *mut DNode))
    };
    let id_of = |l: Link<DNode>| unsafe { l.as_ptr().as_ref() }.map_or(0, |n| n.id);
    let link_of = |arena: &Vec<Box<DNode>>, id: u64| {
        if id == 0 {
            Link::from_raw(std::ptr::null_mut())
        } else {
            Link::from_raw(&*arena[id as usize - 1] as *const DNode as *mut DNode)
        }
    };
    for r in raw {
        let mut op = vcas_op(r, objs.len(), &handles, 3);
        match &mut op {
            VcasOp::New(v) => *v = if *v == 0 { 0 } else { alloc(&mut arena).0 },
            VcasOp::Cas { obj, old, new } => {
                // Compare against the current identity most of the time.
                if r.2 % 3 != 0 {
                    *old = spec.current(*obj).unwrap();
                }
                *new = if r.3 % 5 == 0 { *old } else { alloc(&mut arena).0 };
            }
            _ => {}
        }
        let want = match spec.step(&op) {
            Err(OracleError::PredatesObject { .. }) => continue,
            w => w.unwrap(),
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
        prop_assert_eq!(got, want, "op {:?}", op);
    }
    for n in &arena {
        prop_assert!(n.version.publications() <= 1);
    }
    Ok(())
}

fn queue_op(r: &Raw) -> QueueOp {
    match r.0 % 8 {
        0..=2 => QueueOp::Enqueue(r.1 % 1000),
        3 | 4 => QueueOp::Dequeue,
        5 => QueueOp::PeekEndPoints,
        6 => QueueOp::Scan,
        _ => QueueOp::Ith(r.1 as usize % 8),
    }
}

fn run_queue<F: CellFamily>(raw: &[Raw]) -> Result<(), TestCaseError> {
    let q: MsQueue<u64, F> = MsQueue::new();
    let h = q.register();
    let mut spec = SeqQueue::default();
    for r in raw {
        let op = queue_op(r);
        let g = h.pin();
        let got = common::queue_apply(&q, &op, &g);
        prop_assert_eq!(got, spec.step(&op).unwrap(), "op {:?}", op);
    }
    Ok(())
}

fn set_op(r: &Raw, range: u64, list: bool) -> SetOp {
    let (kind, a, b, c) = *r;
    let k = a % range;
    let e = b % (range + 2);
    match kind % 16 {
        0..=3 => SetOp::Insert(k),
        4..=6 => SetOp::Delete(k),
        7 | 8 => SetOp::Contains(k),
        9 => SetOp::Range(k, e),
        10 => SetOp::MultiSearch(vec![k, e, c % range]),
        11 if list => SetOp::Ith(c as usize % 12),
        11 => SetOp::RangeSum(k, e),
        12 if list => SetOp::Range(e, k),
        12 => SetOp::Succ(k, c as usize % 5),
        13 if list => SetOp::Contains(e),
        13 => SetOp::FindIf(k, e, Pred::ModEq { m: 3, r: c % 3 }),
        14 if list => SetOp::Ith(1),
        14 => SetOp::Height,
        _ => SetOp::Delete(e),
    }
}

fn run_list<F: CellFamily>(raw: &[Raw]) -> Result<(), TestCaseError> {
    let l: HarrisList<u64, F> = HarrisList::new();
    let h = l.register();
    let mut spec = SeqSet::default();
    for r in raw {
        let op = set_op(r, 48, true);
        let g = h.pin();
        let got = common::list_apply(&l, &op, &g).unwrap();
        prop_assert_eq!(got, spec.step(&op).unwrap(), "op {:?}", op);
    }
    Ok(())
}

fn run_bst<M: TreeMode>(raw: &[Raw]) -> Result<(), TestCaseError> {
    let t: NbBst<u64, M> = NbBst::new();
    let h = t.register();
    let mut spec = SeqLeafTree::default();
    for r in raw {
        let op = set_op(r, 64, false);
        let g = h.pin();
        let got = common::bst_apply(&t, &op, &g).unwrap();
        prop_assert_eq!(got, spec.step(&op).unwrap(), "op {:?}", op);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn vcas_matches_spec(raw in raw_ops(300)) {
        run_vcas(&raw)?;
    }

    #[test]
    fn direct_vcas_matches_spec(raw in raw_ops(300)) {
        run_direct(&raw)?;
    }

    #[test]
    fn queue_matches_spec(raw in raw_ops(300)) {
        run_queue::<Versioned>(&raw)?;
        run_queue::<Plain>(&raw)?;
    }

    #[test]
    fn list_matches_spec(raw in raw_ops(300)) {
        run_list::<Versioned>(&raw)?;
        run_list::<Plain>(&raw)?;
    }

    #[test]
    fn bst_matches_spec(raw in raw_ops(300)) {
        run_bst::<Indirect>(&raw)?;
        run_bst::<Direct>(&raw)?;
        run_bst::<PlainTree>(&raw)?;
    }

    #[test]
    fn range_sum_is_sum_of_range(keys in prop::collection::vec(0u64..200, 0..60), a in 0u64..200, b in 0u64..200) {
        let t: NbBst<u64, Indirect> = NbBst::new();
        let h = t.register();
        let g = h.pin();
        for k in keys {
            t.insert(k, &g);
        }
        let (a, b) = (a.min(b), a.max(b));
        let sum: i128 = t.range(a, b, &g).unwrap().into_iter().map(i128::from).sum();
        prop_assert_eq!(t.range_sum(a, b, &g).unwrap(), sum);
    }
}

#[test]
fn worked_queue_scenario() {
    let q: MsQueue<u64> = MsQueue::new();
    let h = q.register();
    let g = h.pin();
    q.enqueue(3, &g);
    q.enqueue(10, &g);
    let snap = q.snapshot(&g);
    q.enqueue(10, &g);
    assert_eq!(q.dequeue(&g), Some(3));
    assert_eq!(q.scan_at(&snap), vec![3, 10]);
    assert_eq!(q.scan(&g), vec![10, 10]);
}

#[test]
fn fresh_constructions() {
    let cam = Camera::new();
    let mgr = EpochManager::new();
    let h = mgr.register();
    let g = h.pin();
    let v = VersionedCas::new(5u64, &cam);
    assert_eq!(v.head_timestamp(&cam, &g), 0);
    for _ in 0..3 {
        cam.take_snapshot();
    }
    let w = VersionedCas::new(5u64, &cam);
    assert_eq!(w.head_timestamp(&cam, &g), 3);
    assert_eq!(v.read(&cam, &g), 5);
    let nil: DirectVersionedCas<DNode> = DirectVersionedCas::new(Link::from_raw(std::ptr::null_mut()), &cam);
    assert!(nil.read(&cam, &g).is_null());
}
