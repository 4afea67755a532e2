//! The cell abstraction the data structures are written against.
//!
//! A structure stores every mutable pointer field in a [`SnapshotCell`]. The
//! update paths use `load` and `compare_and_swap` exactly where the original
//! algorithm reads and CASes; queries use `load_at` with a snapshot. Swapping
//! the cell type switches a structure between the indirect versioned CAS, the
//! direct (recorded-once) variant, and a plain atomic baseline.

use std::fmt;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicUsize, Ordering::SeqCst};

use crate::camera::Camera;
use crate::hooks;
use crate::instrument;
use crate::link::Word;
use crate::reclaim::{Guard, Snapshot};
use crate::vcas::VersionedCas;

pub trait SnapshotCell<V: Copy + Eq>: Send + Sync + Sized {
    /// Whether snapshot reads reconstruct past states. Plain cells return
    /// the current value and are only suitable as a throughput baseline.
    const VERSIONED: bool;

    fn new(initial: V, camera: &Camera) -> Self;

    /// Current value (vRead).
    fn load(&self, camera: &Camera, guard: &Guard<'_>) -> V;

    /// Versioned compare-and-swap (vCAS).
    fn compare_and_swap(&self, old: V, new: V, camera: &Camera, guard: &Guard<'_>) -> bool;

    /// Value at the snapshot (readSnapshot).
    fn load_at(&self, snap: &Snapshot<'_>) -> V;

    /// Current value with no helping or protection, for teardown while the
    /// structure is exclusively owned.
    fn load_exclusive(&mut self) -> V;

    /// Poisons records owned by the cell (its current version, if any).
    fn poison_owned(&self) {}
}

/// Values storable in any cell family.
pub trait CellValue: Word + Send + Sync + 'static {}

impl<T: Word + Send + Sync + 'static> CellValue for T {}

/// Chooses the cell type for a structure's pointer fields.
pub trait CellFamily: Send + Sync + 'static {
    type Cell<T: CellValue>: SnapshotCell<T>;
}

/// Fields backed by [`VersionedCas`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Versioned;

impl CellFamily for Versioned {
    type Cell<T: CellValue> = VersionedCas<T>;
}

/// Fields backed by [`PlainCell`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Plain;

impl CellFamily for Plain {
    type Cell<T: CellValue> = PlainCell<T>;
}

/// An ordinary atomic word with no version history.
pub struct PlainCell<V> {
    word: AtomicUsize,
    _v: PhantomData<V>,
}

unsafe impl<V: Send> Send for PlainCell<V> {}
unsafe impl<V: Sync> Sync for PlainCell<V> {}

impl<V: Word + Send + Sync> SnapshotCell<V> for PlainCell<V> {
    const VERSIONED: bool = false;

    fn new(initial: V, _camera: &Camera) -> Self {
        PlainCell {
            word: AtomicUsize::new(initial.into_word()),
            _v: PhantomData,
        }
    }

    fn load(&self, _camera: &Camera, _guard: &Guard<'_>) -> V {
        hooks::access();
        V::from_word(self.word.load(SeqCst))
    }

    fn compare_and_swap(&self, old: V, new: V, _camera: &Camera, _guard: &Guard<'_>) -> bool {
        hooks::access();
        self.word
            .compare_exchange(old.into_word(), new.into_word(), SeqCst, SeqCst)
            .is_ok()
    }

    fn load_at(&self, _snap: &Snapshot<'_>) -> V {
        instrument::plain_read();
        hooks::access();
        V::from_word(self.word.load(SeqCst))
    }

    fn load_exclusive(&mut self) -> V {
        V::from_word(*self.word.get_mut())
    }
}

impl<V: Word + fmt::Debug> fmt::Debug for PlainCell<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("PlainCell")
            .field(&V::from_word(self.word.load(SeqCst)))
            .finish()
    }
}
