//! Analytic floating-point operation counter.
//!
//! Kernels add their nominal cost (a multiply-add counts as two flops) to a
//! thread-local tally. Callers measure a region by taking the difference of
//! [`count`] before and after.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

pub fn add(n: u64) {
    FLOPS.with(|f| f.set(f.get().wrapping_add(n)));
}

pub fn count() -> u64 {
    FLOPS.with(|f| f.get())
}

pub fn reset() {
    FLOPS.with(|f| f.set(0));
}

/// Runs `f` and returns its result together with the flops it recorded.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = count();
    let out = f();
    (out, count().wrapping_sub(start))
}
