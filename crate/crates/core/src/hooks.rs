//! Interposition points used by the schedule explorer.
//!
//! Every shared-memory access in the camera, the versioned and plain cells,
//! and the tree's update words is preceded by [`access`]. Outside of an exploration this is a single relaxed
//! load. Inside one, the calling thread parks until the explorer's scheduler
//! grants it the next step, so an exploration fully controls the interleaving
//! of shared accesses.
//!
//! Explored threads may also carry a [`MutationSet`]: deliberately removed
//! helping steps, used to show that the checker catches the resulting bugs.

use std::cell::RefCell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// Receives control at every access point of an explored thread.
pub trait Scheduler: Send + Sync {
    fn yield_point(&self, thread: usize);
}

/// A helping step that can be switched off in explored threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mutation {
    /// `vRead` returns the head value without installing its timestamp.
    SkipReadHelp,
    /// `vCAS` skips installing the current head's timestamp before comparing
    /// and swinging the head.
    SkipHeadHelpBeforeCas,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MutationSet(u8);

impl MutationSet {
    pub const NONE: MutationSet = MutationSet(0);

    pub fn with(self, m: Mutation) -> Self {
        MutationSet(self.0 | Self::bit(m))
    }

    pub fn contains(self, m: Mutation) -> bool {
        self.0 & Self::bit(m) != 0
    }

    fn bit(m: Mutation) -> u8 {
        match m {
            Mutation::SkipReadHelp => 1,
            Mutation::SkipHeadHelpBeforeCas => 2,
        }
    }
}

impl From<Mutation> for MutationSet {
    fn from(m: Mutation) -> Self {
        MutationSet::NONE.with(m)
    }
}

static ACTIVE: AtomicUsize = AtomicUsize::new(0);

struct ThreadCtx {
    scheduler: Option<Arc<dyn Scheduler>>,
    thread: usize,
    mutations: MutationSet,
}

thread_local! {
    static CTX: RefCell<Option<ThreadCtx>> = const { RefCell::new(None) };
}

/// Marks one shared-memory access. Code outside this crate can call it to
/// make its own steps schedulable.
#[inline]
pub fn access() {
    if ACTIVE.load(Ordering::Relaxed) != 0 {
        access_slow();
    }
}

#[cold]
fn access_slow() {
    let target = CTX.with(|c| {
        c.borrow()
            .as_ref()
            .and_then(|ctx| ctx.scheduler.clone().map(|s| (s, ctx.thread)))
    });
    if let Some((sched, tid)) = target {
        sched.yield_point(tid);
    }
}

#[inline]
pub(crate) fn mutated(m: Mutation) -> bool {
    if ACTIVE.load(Ordering::Relaxed) == 0 {
        return false;
    }
    CTX.with(|c| c.borrow().as_ref().is_some_and(|ctx| ctx.mutations.contains(m)))
}

/// Keeps interposition armed process-wide while alive.
pub struct ActiveToken(());

impl ActiveToken {
    pub fn acquire() -> Self {
        ACTIVE.fetch_add(1, Ordering::SeqCst);
        ActiveToken(())
    }
}

impl Drop for ActiveToken {
    fn drop(&mut self) {
        ACTIVE.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Installs scheduler and mutation context for the current thread until the
/// returned guard is dropped.
pub struct ThreadScope(());

impl ThreadScope {
    pub fn enter(
        scheduler: Option<Arc<dyn Scheduler>>,
        thread: usize,
        mutations: MutationSet,
    ) -> Self {
        CTX.with(|c| {
            *c.borrow_mut() = Some(ThreadCtx {
                scheduler,
                thread,
                mutations,
            })
        });
        ThreadScope(())
    }
}

impl Drop for ThreadScope {
    fn drop(&mut self) {
        CTX.with(|c| *c.borrow_mut() = None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_set_bits() {
        let s = MutationSet::from(Mutation::SkipReadHelp);
        assert!(s.contains(Mutation::SkipReadHelp));
        assert!(!s.contains(Mutation::SkipHeadHelpBeforeCas));
        assert!(s.with(Mutation::SkipHeadHelpBeforeCas).contains(Mutation::SkipHeadHelpBeforeCas));
    }

    #[test]
    fn mutations_only_apply_inside_scope() {
        let _active = ActiveToken::acquire();
        assert!(!mutated(Mutation::SkipReadHelp));
        {
            let _s = ThreadScope::enter(None, 0, Mutation::SkipReadHelp.into());
            assert!(mutated(Mutation::SkipReadHelp));
        }
        assert!(!mutated(Mutation::SkipReadHelp));
    }
}
