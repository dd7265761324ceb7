//! Fixed-size worker pool used by every parallel executor.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Thread placement requested for the workers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binding {
    None,
    /// Worker `k` pinned to the `k`-th allowed CPU (wrapping around).
    Close,
}

pub struct WorkerPool {
    pool: rayon::ThreadPool,
    workers: usize,
    pinned: bool,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self> {
        Self::with_binding(workers, Binding::None)
    }

    /// Pinning is best effort; [`WorkerPool::binding`] reports what happened.
    pub fn with_binding(workers: usize, binding: Binding) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidConfig("worker count must be at least 1".into()));
        }
        let pin_ok = Arc::new(AtomicBool::new(binding == Binding::Close));
        let mut builder = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|k| format!("tilefuse-worker-{k}"));
        if binding == Binding::Close {
            let cpus = allowed_cpus();
            let pin_ok = Arc::clone(&pin_ok);
            builder = builder.start_handler(move |k| {
                let pinned = !cpus.is_empty() && pin_current_thread(cpus[k % cpus.len()]);
                if !pinned {
                    pin_ok.store(false, Ordering::Relaxed);
                }
            });
        }
        let pool = builder.build().map_err(|e| Error::Pool(e.to_string()))?;
        // Every worker has run its start handler once it has run a broadcast.
        pool.broadcast(|_| ());
        Ok(Self {
            pool,
            workers,
            pinned: pin_ok.load(Ordering::Relaxed),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Binding actually in effect: `"close"` or `"none"`.
    pub fn binding(&self) -> Binding {
        if self.pinned {
            Binding::Close
        } else {
            Binding::None
        }
    }

    pub fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        self.pool.install(op)
    }
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool")
            .field("workers", &self.workers)
            .field("binding", &self.binding())
            .finish()
    }
}

/// Logical CPUs available to this process.
pub fn available_cpus() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(target_os = "linux")]
fn allowed_cpus() -> Vec<usize> {
    // SAFETY: cpu_set_t is plain data; sched_getaffinity fills it for the calling thread.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return Vec::new();
        }
        (0..libc::CPU_SETSIZE as usize).filter(|&c| libc::CPU_ISSET(c, &set)).collect()
    }
}

#[cfg(target_os = "linux")]
fn pin_current_thread(cpu: usize) -> bool {
    // SAFETY: as above; the set only names a CPU from the allowed mask.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

#[cfg(not(target_os = "linux"))]
fn allowed_cpus() -> Vec<usize> {
    Vec::new()
}

#[cfg(not(target_os = "linux"))]
fn pin_current_thread(_cpu: usize) -> bool {
    false
}
