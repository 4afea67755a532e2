//! Epoch-based reclamation for structure nodes, info records and displaced
//! versions.
//!
//! A global epoch counter starts at 1. A thread announces the epoch it read
//! when it pins and announces quiescence when it unpins. Retired records go
//! into the retiring thread's limbo bag for the epoch current at retirement;
//! there are three bags, indexed by epoch mod 3. A bag for epoch `r - 2` is
//! freed once the global epoch is at least `r` and every pinned announcement
//! is at least `r`.
//!
//! Displaced versions stay linked into their version lists when freed; a
//! snapshot reader pinned across its whole query never walks that far, since
//! its handle postdates every version it could otherwise reach.
//!
//! With poisoning enabled (`CHRONOCAS_DEBUG_POISON=1` or [`set_poison`]),
//! "freed" records are marked with a trap pattern and leaked instead of
//! deallocated, and every instrumented dereference checks for the trap. The
//! count of trap reads must stay zero.

use std::cell::{Cell, UnsafeCell};
use std::fmt;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering::*};
use std::sync::{Arc, Mutex};

use crossbeam_utils::CachePadded;
use thiserror::Error;

use crate::camera::{Camera, SnapshotHandle};

const QUIESCENT: u64 = 0;
const FIRST_EPOCH: u64 = 1;

const LIVE: u64 = 0x11FE_11FE_11FE_11FE;
const RETIRED: u64 = 0x2E71_2E71_2E71_2E71;
const TRAP: u64 = 0xDEAD_DEAD_DEAD_DEAD;

static POISON: AtomicU8 = AtomicU8::new(0);
static TRAP_READS: AtomicU64 = AtomicU64::new(0);

/// Whether freed records are poisoned instead of deallocated.
#[inline]
pub fn poison_enabled() -> bool {
    match POISON.load(Relaxed) {
        0 => {
            let on = std::env::var("CHRONOCAS_DEBUG_POISON").is_ok_and(|v| v == "1");
            let _ = POISON.compare_exchange(0, if on { 2 } else { 1 }, Relaxed, Relaxed);
            POISON.load(Relaxed) == 2
        }
        v => v == 2,
    }
}

/// Switches poisoning on or off for the whole process.
pub fn set_poison(on: bool) {
    POISON.store(if on { 2 } else { 1 }, SeqCst);
}

/// Reads of poisoned records observed so far.
pub fn trap_reads() -> u64 {
    TRAP_READS.load(SeqCst)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReclaimError {
    #[error("all {0} participant slots are in use")]
    TooManyParticipants(usize),
}

/// Liveness word carried at the start of every reclaimable record.
pub struct RecordHeader {
    state: AtomicU64,
}

impl RecordHeader {
    pub const fn new() -> Self {
        RecordHeader {
            state: AtomicU64::new(LIVE),
        }
    }

    /// Counts a trap read if this record has been poisoned.
    #[inline]
    pub fn check(&self) {
        if POISON.load(Relaxed) == 2 && self.state.load(Relaxed) == TRAP {
            TRAP_READS.fetch_add(1, SeqCst);
        }
    }

    pub fn is_retired(&self) -> bool {
        self.state.load(SeqCst) != LIVE
    }
}

impl Default for RecordHeader {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for RecordHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.state.load(Relaxed) {
            LIVE => "live",
            RETIRED => "retired",
            TRAP => "poisoned",
            _ => "corrupt",
        };
        f.write_str(s)
    }
}

/// A heap record that can be handed to [`Guard::retire`].
///
/// # Safety
///
/// Implementors must be allocated with `Box` and `header` must return a
/// header embedded in the record.
pub unsafe trait Reclaim: Send + 'static {
    fn header(&self) -> &RecordHeader;

    /// Poisons records owned by this one, which would otherwise be freed by
    /// its destructor.
    fn poison_owned(&self) {}
}

struct Retired {
    ptr: *mut (),
    free: unsafe fn(*mut (), bool),
}

unsafe impl Send for Retired {}

unsafe fn free_record<T: Reclaim>(ptr: *mut (), poison: bool) {
    let ptr = ptr as *mut T;
    if poison {
        let rec = &*ptr;
        rec.header().state.store(TRAP, SeqCst);
        rec.poison_owned();
    } else {
        drop(Box::from_raw(ptr));
    }
}

/// Marks `rec` and its owned records as trapped without freeing them. Used
/// for records owned by something being poisoned.
pub fn poison_in_place<T: Reclaim + ?Sized>(rec: &T) {
    rec.header().state.store(TRAP, SeqCst);
    rec.poison_owned();
}

impl Retired {
    unsafe fn free(self, poison: bool) {
        (self.free)(self.ptr, poison)
    }
}

#[derive(Default)]
struct Bag {
    epoch: u64,
    items: Vec<Retired>,
}

#[derive(Default)]
struct Slot {
    in_use: AtomicBool,
    announce: AtomicU64,
    retired: AtomicU64,
    freed: AtomicU64,
}

/// Tunables for an [`EpochManager`].
#[derive(Clone, Copy, Debug)]
pub struct EpochConfig {
    pub max_participants: usize,
    /// Attempt an epoch advance every this many pins (0 disables).
    pub advance_every_pins: u64,
    /// Attempt an advance when a thread holds this many retired records
    /// (0 disables).
    pub collect_threshold: usize,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            max_participants: 256,
            advance_every_pins: 32,
            collect_threshold: 256,
        }
    }
}

/// Counters exposed for reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReclaimStats {
    pub epoch: u64,
    pub retired: u64,
    pub freed: u64,
    pub live: u64,
    pub high_water: u64,
}

/// Global epoch, per-thread announcements, and orphaned limbo records.
pub struct EpochManager {
    epoch: CachePadded<AtomicU64>,
    slots: Box<[CachePadded<Slot>]>,
    config: EpochConfig,
    orphans: Mutex<Vec<(u64, Retired)>>,
    orphan_retired: AtomicU64,
    orphan_freed: AtomicU64,
    high_water: AtomicU64,
}

impl EpochManager {
    pub fn new() -> Arc<Self> {
        Self::with_config(EpochConfig::default())
    }

    pub fn with_config(config: EpochConfig) -> Arc<Self> {
        let slots = (0..config.max_participants)
            .map(|_| CachePadded::new(Slot::default()))
            .collect();
        Arc::new(EpochManager {
            epoch: CachePadded::new(AtomicU64::new(FIRST_EPOCH)),
            slots,
            config,
            orphans: Mutex::new(Vec::new()),
            orphan_retired: AtomicU64::new(0),
            orphan_freed: AtomicU64::new(0),
            high_water: AtomicU64::new(0),
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(SeqCst)
    }

    /// Claims a participant slot for the calling thread.
    pub fn register(self: &Arc<Self>) -> LocalHandle {
        self.try_register().expect("epoch manager participant slots exhausted")
    }

    pub fn try_register(self: &Arc<Self>) -> Result<LocalHandle, ReclaimError> {
        for (idx, slot) in self.slots.iter().enumerate() {
            if !slot.in_use.load(Relaxed)
                && slot
                    .in_use
                    .compare_exchange(false, true, SeqCst, Relaxed)
                    .is_ok()
            {
                slot.announce.store(QUIESCENT, SeqCst);
                return Ok(LocalHandle {
                    manager: Arc::clone(self),
                    slot: idx,
                    bags: UnsafeCell::new(Default::default()),
                    pin_depth: Cell::new(0),
                    pins: Cell::new(0),
                });
            }
        }
        Err(ReclaimError::TooManyParticipants(self.slots.len()))
    }

    /// Smallest epoch announced by a pinned participant, or `None` if all
    /// are quiescent.
    fn min_announcement(&self) -> Option<u64> {
        self.slots
            .iter()
            .filter(|s| s.in_use.load(SeqCst))
            .map(|s| s.announce.load(SeqCst))
            .filter(|&a| a != QUIESCENT)
            .min()
    }

    /// Bags for epochs `<= safe_bound() - 2` may be freed.
    fn safe_bound(&self) -> u64 {
        let global = self.epoch.load(SeqCst);
        self.min_announcement().map_or(global, |m| m.min(global))
    }

    /// Advances the epoch by one if every pinned participant has announced
    /// the current epoch. Returns whether this call performed the increment.
    /// The winner frees whatever orphaned records became safe.
    pub fn try_advance(&self) -> bool {
        let current = self.epoch.load(SeqCst);
        for s in self.slots.iter() {
            if s.in_use.load(SeqCst) {
                let a = s.announce.load(SeqCst);
                if a != QUIESCENT && a != current {
                    return false;
                }
            }
        }
        let won = self
            .epoch
            .compare_exchange(current, current + 1, SeqCst, SeqCst)
            .is_ok();
        if won {
            self.collect_orphans();
            self.note_high_water();
        }
        won
    }

    fn collect_orphans(&self) {
        let Ok(mut orphans) = self.orphans.try_lock() else {
            return;
        };
        let bound = self.safe_bound();
        let poison = poison_enabled();
        let mut freed = 0;
        let mut kept = Vec::with_capacity(orphans.len());
        for (epoch, r) in orphans.drain(..) {
            if epoch + 2 <= bound {
                unsafe { r.free(poison) };
                freed += 1;
            } else {
                kept.push((epoch, r));
            }
        }
        *orphans = kept;
        self.orphan_freed.fetch_add(freed, SeqCst);
    }

    fn note_high_water(&self) -> u64 {
        let live = self.live();
        self.high_water.fetch_max(live, SeqCst);
        live
    }

    fn live(&self) -> u64 {
        let (retired, freed) = self.totals();
        retired.saturating_sub(freed)
    }

    fn totals(&self) -> (u64, u64) {
        let mut retired = self.orphan_retired.load(SeqCst);
        let mut freed = self.orphan_freed.load(SeqCst);
        for s in self.slots.iter() {
            retired += s.retired.load(Relaxed);
            freed += s.freed.load(Relaxed);
        }
        (retired, freed)
    }

    /// Current counters; also folds the live count into the high-water mark.
    pub fn stats(&self) -> ReclaimStats {
        let (retired, freed) = self.totals();
        let live = retired.saturating_sub(freed);
        let high_water = self.high_water.fetch_max(live, SeqCst).max(live);
        ReclaimStats {
            epoch: self.epoch(),
            retired,
            freed,
            live,
            high_water,
        }
    }
}

impl Drop for EpochManager {
    fn drop(&mut self) {
        let poison = poison_enabled();
        let orphans = std::mem::take(self.orphans.get_mut().unwrap_or_else(|e| e.into_inner()));
        for (_, r) in orphans {
            unsafe { r.free(poison) };
        }
    }
}

impl fmt::Debug for EpochManager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EpochManager")
            .field("stats", &self.stats())
            .finish()
    }
}

/// A thread's registration with an [`EpochManager`]. Owns the thread's limbo
/// bags; records still in them when the handle is dropped are handed over to
/// the manager.
pub struct LocalHandle {
    manager: Arc<EpochManager>,
    slot: usize,
    bags: UnsafeCell<[Bag; 3]>,
    pin_depth: Cell<u32>,
    pins: Cell<u64>,
}

unsafe impl Send for LocalHandle {}

impl LocalHandle {
    pub fn manager(&self) -> &Arc<EpochManager> {
        &self.manager
    }

    fn slot(&self) -> &Slot {
        &self.manager.slots[self.slot]
    }

    /// Announces the current epoch. Everything readable through the data
    /// structures stays allocated until the returned guard is dropped.
    pub fn pin(&self) -> Guard<'_> {
        let depth = self.pin_depth.get();
        debug_assert!(depth == 0, "nested pin on the same participant");
        self.pin_depth.set(depth + 1);
        if depth == 0 {
            let slot = self.slot();
            // Re-validate so that a visible announcement is never more than
            // one epoch behind the global counter.
            loop {
                let e = self.manager.epoch.load(SeqCst);
                slot.announce.store(e, SeqCst);
                if self.manager.epoch.load(SeqCst) == e {
                    break;
                }
            }
            let pins = self.pins.get() + 1;
            self.pins.set(pins);
            let every = self.manager.config.advance_every_pins;
            if every != 0 && pins.is_multiple_of(every) {
                self.manager.try_advance();
                self.collect();
            }
        }
        Guard { local: self }
    }

    /// Pins and takes a snapshot on `camera`, in that order, so the handle is
    /// protected for as long as the returned guard lives. Dropping the guard
    /// (or calling [`SnapshotGuard::release`]) releases the snapshot.
    pub fn pin_snapshot<'a>(&'a self, camera: &'a Camera) -> SnapshotGuard<'a> {
        let guard = self.pin();
        let handle = camera.take_snapshot();
        SnapshotGuard {
            guard,
            camera,
            handle,
        }
    }

    pub fn is_pinned(&self) -> bool {
        self.pin_depth.get() > 0
    }

    fn unpin(&self) {
        let depth = self.pin_depth.get();
        debug_assert!(depth > 0);
        self.pin_depth.set(depth - 1);
        if depth == 1 {
            self.slot().announce.store(QUIESCENT, SeqCst);
        }
    }

    /// Number of records waiting in this thread's bags.
    pub fn pending(&self) -> usize {
        let bags = unsafe { &*self.bags.get() };
        bags.iter().map(|b| b.items.len()).sum()
    }

    /// Frees every bag whose epoch is now safe. Returns how many records were
    /// freed.
    pub fn collect(&self) -> usize {
        let bound = self.manager.safe_bound();
        let poison = poison_enabled();
        let bags = unsafe { &mut *self.bags.get() };
        let mut freed = 0;
        for bag in bags.iter_mut() {
            if !bag.items.is_empty() && bag.epoch + 2 <= bound {
                freed += bag.items.len();
                for r in bag.items.drain(..) {
                    unsafe { r.free(poison) };
                }
            }
        }
        if freed > 0 {
            self.slot().freed.fetch_add(freed as u64, Relaxed);
        }
        freed
    }

    fn retire_raw(&self, r: Retired) {
        let epoch = self.manager.epoch.load(SeqCst);
        let bags = unsafe { &mut *self.bags.get() };
        let bag = &mut bags[(epoch % 3) as usize];
        if bag.epoch != epoch {
            if !bag.items.is_empty() {
                // A bag three or more epochs old; its records are safe.
                debug_assert!(bag.epoch + 2 <= self.manager.safe_bound());
                let poison = poison_enabled();
                let n = bag.items.len() as u64;
                for old in bag.items.drain(..) {
                    unsafe { old.free(poison) };
                }
                self.slot().freed.fetch_add(n, Relaxed);
            }
            bag.epoch = epoch;
        }
        bag.items.push(r);
        let slot = self.slot();
        slot.retired.fetch_add(1, Relaxed);
        let threshold = self.manager.config.collect_threshold;
        if threshold != 0 && bag.items.len() % threshold == 0 {
            self.manager.try_advance();
            self.collect();
        }
    }
}

impl Drop for LocalHandle {
    fn drop(&mut self) {
        debug_assert!(!self.is_pinned());
        self.collect();
        let bags = self.bags.get_mut();
        let mut moved = 0u64;
        {
            let mut orphans = self
                .manager
                .orphans
                .lock()
                .unwrap_or_else(|e| e.into_inner());
            for bag in bags.iter_mut() {
                for r in bag.items.drain(..) {
                    orphans.push((bag.epoch, r));
                    moved += 1;
                }
            }
        }
        let slot = &self.manager.slots[self.slot];
        // Keep the accounting consistent: the records now count as the
        // manager's.
        slot.retired.fetch_sub(moved, Relaxed);
        self.manager.orphan_retired.fetch_add(moved, SeqCst);
        let (r, f) = (slot.retired.swap(0, SeqCst), slot.freed.swap(0, SeqCst));
        self.manager.orphan_retired.fetch_add(r, SeqCst);
        self.manager.orphan_freed.fetch_add(f, SeqCst);
        slot.announce.store(QUIESCENT, SeqCst);
        slot.in_use.store(false, SeqCst);
    }
}

impl fmt::Debug for LocalHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalHandle")
            .field("slot", &self.slot)
            .field("pinned", &self.is_pinned())
            .field("pending", &self.pending())
            .finish()
    }
}

/// Proof that the current thread is pinned.
pub struct Guard<'a> {
    local: &'a LocalHandle,
}

impl<'a> Guard<'a> {
    pub fn local(&self) -> &'a LocalHandle {
        self.local
    }

    /// Hands `ptr` to the reclamation scheme.
    ///
    /// # Safety
    ///
    /// `ptr` must come from `Box::into_raw`, must already be unreachable for
    /// operations that start after this call (apart from version-list links
    /// that only older snapshots follow), and must not be retired twice.
    pub unsafe fn retire<T: Reclaim>(&self, ptr: *mut T) {
        let prev = (*ptr).header().state.swap(RETIRED, SeqCst);
        if prev != LIVE {
            debug_assert!(false, "record retired twice");
            return;
        }
        self.local.retire_raw(Retired {
            ptr: ptr as *mut (),
            free: free_record::<T>,
        });
    }

    /// Takes a snapshot on `camera` that stays readable while this guard is
    /// alive.
    pub fn snapshot<'g>(&'g self, camera: &'g Camera) -> Snapshot<'g> {
        Snapshot {
            handle: camera.take_snapshot(),
            camera,
            _pin: PhantomData,
        }
    }

    /// Rebinds an existing handle to this guard.
    ///
    /// # Safety
    ///
    /// The guard must have been pinned before `handle` was taken.
    pub unsafe fn adopt_snapshot<'g>(&'g self, camera: &'g Camera, handle: SnapshotHandle) -> Snapshot<'g> {
        Snapshot {
            handle,
            camera,
            _pin: PhantomData,
        }
    }
}

impl Drop for Guard<'_> {
    fn drop(&mut self) {
        self.local.unpin();
    }
}

/// A snapshot handle that is protected by a pin for its whole lifetime.
#[derive(Clone, Copy)]
pub struct Snapshot<'g> {
    handle: SnapshotHandle,
    camera: &'g Camera,
    _pin: PhantomData<&'g ()>,
}

impl<'g> Snapshot<'g> {
    pub fn handle(&self) -> SnapshotHandle {
        self.handle
    }

    pub fn camera(&self) -> &'g Camera {
        self.camera
    }
}

impl fmt::Debug for Snapshot<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Snapshot({})", self.handle)
    }
}

/// An owned pin plus the snapshot taken under it.
pub struct SnapshotGuard<'a> {
    guard: Guard<'a>,
    camera: &'a Camera,
    handle: SnapshotHandle,
}

impl<'a> SnapshotGuard<'a> {
    pub fn handle(&self) -> SnapshotHandle {
        self.handle
    }

    pub fn guard(&self) -> &Guard<'a> {
        &self.guard
    }

    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            handle: self.handle,
            camera: self.camera,
            _pin: PhantomData,
        }
    }

    /// Gives up the snapshot and unpins.
    pub fn release(self) {}
}
