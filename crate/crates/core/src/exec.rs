//! Execution strategy for the data-parallel loops.

/// How independent work items are evaluated.
///
/// `Parallel` only fans out when the crate is built with the `parallel`
/// feature; otherwise it runs the same code sequentially. Both strategies
/// reduce in input order, so results never depend on scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps every item and folds the results left to right with `reduce`.
    ///
    /// `reduce` must be associative; the parallel path combines adjacent
    /// chunks, never reordering them.
    pub fn map_reduce<T, R, M, F>(self, items: &[T], identity: R, map: M, reduce: F) -> R
    where
        T: Sync,
        R: Send + Sync + Clone,
        M: Fn(&T) -> R + Sync + Send,
        F: Fn(R, R) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel && items.len() > 1 {
            use rayon::prelude::*;
            return items
                .par_iter()
                .map(&map)
                .fold(|| identity.clone(), &reduce)
                .reduce(|| identity.clone(), &reduce);
        }
        items.iter().map(map).fold(identity, reduce)
    }

    /// Maps every item, keeping input order.
    pub fn map<T, R, M>(self, items: &[T], map: M) -> Vec<R>
    where
        T: Sync,
        R: Send,
        M: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel && items.len() > 1 {
            use rayon::prelude::*;
            return items.par_iter().map(map).collect();
        }
        items.iter().map(map).collect()
    }

    /// Runs two closures, possibly concurrently.
    pub fn join<A, B, RA, RB>(self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return rayon::join(a, b);
        }
        (a(), b())
    }
}
