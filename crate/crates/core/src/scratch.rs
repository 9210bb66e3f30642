//! Scratch-memory accounting for attention kernels.
//!
//! Kernels allocate their auxiliary buffers through [`ScratchBuf`], which
//! charges a thread-local meter. Inputs and outputs are never charged.
//! The outermost instrumented call on a thread resets the meter on entry
//! and publishes its peak on exit; [`scratch_report`] returns that value.

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScratchReport {
    pub peak_scratch_elems: usize,
}

thread_local! {
    static CURRENT: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
    static DEPTH: Cell<usize> = const { Cell::new(0) };
    static LAST: Cell<usize> = const { Cell::new(0) };
}

/// Peak auxiliary element count of the last completed attention call on
/// this thread.
pub fn scratch_report() -> ScratchReport {
    ScratchReport {
        peak_scratch_elems: LAST.with(Cell::get),
    }
}

fn charge(n: usize) {
    let cur = CURRENT.with(|c| {
        let v = c.get() + n;
        c.set(v);
        v
    });
    PEAK.with(|p| p.set(p.get().max(cur)));
}

fn release(n: usize) {
    CURRENT.with(|c| c.set(c.get().saturating_sub(n)));
}

/// Marks the extent of one instrumented call.
pub(crate) struct CallScope {
    _private: (),
}

impl CallScope {
    pub(crate) fn enter() -> Self {
        if DEPTH.with(Cell::get) == 0 {
            CURRENT.with(|c| c.set(0));
            PEAK.with(|p| p.set(0));
        }
        DEPTH.with(|d| d.set(d.get() + 1));
        Self { _private: () }
    }
}

impl Drop for CallScope {
    fn drop(&mut self) {
        let depth = DEPTH.with(|d| {
            let v = d.get() - 1;
            d.set(v);
            v
        });
        if depth == 0 {
            LAST.with(|l| l.set(PEAK.with(Cell::get)));
        }
    }
}

/// Runs `f` as its own instrumented call and returns its peak alongside.
/// Used by worker threads so the parent can account for them.
pub(crate) fn measured<R>(f: impl FnOnce() -> R) -> (R, usize) {
    let scope = CallScope::enter();
    let r = f();
    drop(scope);
    (r, LAST.with(Cell::get))
}

/// Charges `n` elements that live on other threads for the duration of the
/// returned guard.
pub(crate) struct External(usize);

impl External {
    pub(crate) fn charge(n: usize) -> Self {
        charge(n);
        Self(n)
    }
}

impl Drop for External {
    fn drop(&mut self) {
        release(self.0);
    }
}

/// A metered scratch buffer.
pub(crate) struct ScratchBuf<T> {
    buf: Vec<T>,
}

impl<T: Clone> ScratchBuf<T> {
    pub(crate) fn new(n: usize, fill: T) -> Self {
        charge(n);
        Self { buf: vec![fill; n] }
    }
}

impl<T> Drop for ScratchBuf<T> {
    fn drop(&mut self) {
        release(self.buf.len());
    }
}

impl<T> Deref for ScratchBuf<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.buf
    }
}

impl<T> DerefMut for ScratchBuf<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_scopes_publish_outer_peak() {
        {
            let _outer = CallScope::enter();
            let a = ScratchBuf::new(10, 0.0f64);
            {
                let _inner = CallScope::enter();
                let _b = ScratchBuf::new(5, 0.0f64);
            }
            drop(a);
            let _c = ScratchBuf::new(3, 0.0f64);
        }
        assert_eq!(scratch_report().peak_scratch_elems, 15);
    }

    #[test]
    fn measured_isolates_calls() {
        let ((), peak) = measured(|| {
            let _x = ScratchBuf::new(7, 0u8);
        });
        assert_eq!(peak, 7);
    }
}
