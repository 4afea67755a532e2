//! Pointer values stored in versioned cells.
//!
//! Cells compare values by identity, so links are plain addresses with `Eq`
//! on the address (and mark bit).

use std::fmt;
use std::marker::PhantomData;

/// A possibly-null pointer to a structure node.
pub struct Link<N> {
    ptr: *mut N,
}

impl<N> Link<N> {
    pub const fn null() -> Self {
        Link {
            ptr: std::ptr::null_mut(),
        }
    }

    pub fn from_raw(ptr: *mut N) -> Self {
        Link { ptr }
    }

    pub fn from_box(b: Box<N>) -> Self {
        Link {
            ptr: Box::into_raw(b),
        }
    }

    pub fn as_ptr(self) -> *mut N {
        self.ptr
    }

    pub fn is_null(self) -> bool {
        self.ptr.is_null()
    }

    /// # Safety
    ///
    /// The pointee must be alive for `'a`; for shared nodes this means the
    /// caller is pinned and the node was reachable after the pin.
    pub unsafe fn deref<'a>(self) -> Option<&'a N> {
        self.ptr.as_ref()
    }
}

impl<N> Clone for Link<N> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<N> Copy for Link<N> {}

impl<N> PartialEq for Link<N> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.ptr, other.ptr)
    }
}

impl<N> Eq for Link<N> {}

impl<N> fmt::Debug for Link<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Link({:p})", self.ptr)
    }
}

// Links are inert addresses; dereferencing is already `unsafe`.
unsafe impl<N> Send for Link<N> {}
unsafe impl<N> Sync for Link<N> {}

/// A link plus a deletion mark, packed into one word (the mark uses the low
/// address bit, which is always clear for node allocations).
pub struct MarkedLink<N> {
    word: usize,
    _node: PhantomData<*mut N>,
}

impl<N> MarkedLink<N> {
    pub fn new(link: Link<N>, marked: bool) -> Self {
        let addr = link.as_ptr() as usize;
        debug_assert_eq!(addr & 1, 0, "node pointers must be 2-aligned");
        MarkedLink {
            word: addr | marked as usize,
            _node: PhantomData,
        }
    }

    pub fn link(self) -> Link<N> {
        Link::from_raw((self.word & !1) as *mut N)
    }

    pub fn is_marked(self) -> bool {
        self.word & 1 == 1
    }

    pub fn marked(self) -> Self {
        Self::new(self.link(), true)
    }

    pub fn unmarked(self) -> Self {
        Self::new(self.link(), false)
    }
}

impl<N> Clone for MarkedLink<N> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<N> Copy for MarkedLink<N> {}

impl<N> PartialEq for MarkedLink<N> {
    fn eq(&self, other: &Self) -> bool {
        self.word == other.word
    }
}

impl<N> Eq for MarkedLink<N> {}

impl<N> fmt::Debug for MarkedLink<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}{}",
            self.link(),
            if self.is_marked() { "+mark" } else { "" }
        )
    }
}

unsafe impl<N> Send for MarkedLink<N> {}
unsafe impl<N> Sync for MarkedLink<N> {}

/// Values that fit in a machine word, for the plain (unversioned) cells.
pub trait Word: Copy + Eq {
    fn into_word(self) -> usize;
    fn from_word(w: usize) -> Self;
}

impl<N> Word for Link<N> {
    fn into_word(self) -> usize {
        self.ptr as usize
    }

    fn from_word(w: usize) -> Self {
        Link::from_raw(w as *mut N)
    }
}

impl<N> Word for MarkedLink<N> {
    fn into_word(self) -> usize {
        self.word
    }

    fn from_word(w: usize) -> Self {
        MarkedLink {
            word: w,
            _node: PhantomData,
        }
    }
}
