// Copyright 2026 Geoscope Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Execution strategy for the data-parallel loops of the pipeline.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] maps over rayon's
//! global pool. Without it every variant runs sequentially, so callers never
//! need their own `cfg` branches.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
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

    /// Order-preserving map.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving fallible map; returns the first error in input order
    /// when running sequentially, and some error when running in parallel.
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Map over `0..n`.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Map with at most `limit` items in flight at once. Used for calls into
    /// rate-limited backends.
    pub fn map_bounded<T, R, F>(self, limit: usize, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        let limit = limit.max(1);
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel && limit > 1 {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(limit).build() {
                Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => log::warn!("falling back to sequential execution: {e}"),
            }
        }
        items.iter().map(f).collect()
    }
}

/// Adapter that serializes calls into a backend which cannot be shared
/// across threads. The pipeline's backend traits are implemented for
/// `Serialized<B>` whenever `B` implements the matching `Local*` trait.
#[derive(Debug, Default)]
pub struct Serialized<B>(std::sync::Mutex<B>);

impl<B> Serialized<B> {
    pub fn new(backend: B) -> Self {
        Serialized(std::sync::Mutex::new(backend))
    }

    pub(crate) fn lock(&self) -> std::sync::MutexGuard<'_, B> {
        // a panic inside a previous call leaves the backend usable
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn map_preserves_order_in_both_modes() {
        let xs: Vec<u64> = (0..1000).collect();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let ys = exec.map(&xs, |x| x * 2);
            assert_eq!(ys, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
            assert_eq!(exec.map_range(10, |i| i), (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn try_map_reports_error() {
        let xs = [1, 2, 3];
        let r: Result<Vec<i32>, String> =
            Exec::Sequential.try_map(&xs, |&x| if x == 2 { Err("two".into()) } else { Ok(x) });
        assert_eq!(r.unwrap_err(), "two");
    }

    #[test]
    fn bounded_map_respects_ceiling() {
        let in_flight = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let xs: Vec<usize> = (0..64).collect();
        let out = Exec::Parallel.map_bounded(3, &xs, |&x| {
            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(1));
            in_flight.fetch_sub(1, Ordering::SeqCst);
            x + 1
        });
        assert_eq!(out[63], 64);
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}
