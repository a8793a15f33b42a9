//! Software floating point operation counters.
//!
//! Kernels add analytic operation counts (one per add, multiply or
//! divide) once per call. Counting is off unless explicitly enabled.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    /// Matrix-free operator application outside smoothers and transfer.
    Operator,
    /// Residual evaluations `b - A x` inside smoothers and the V-cycle.
    Residual,
    /// Fast diagonalization solves including gather, scatter and relaxation.
    LocalSolver,
    /// Construction of local solvers (1D matrices and eigenproblems).
    SmootherSetup,
    /// Prolongation and restriction.
    Transfer,
    /// Coarse grid solve.
    Coarse,
    /// Vector updates and inner products of the Krylov method.
    Krylov,
}

impl Kernel {
    pub const ALL: [Kernel; 7] = [
        Kernel::Operator,
        Kernel::Residual,
        Kernel::LocalSolver,
        Kernel::SmootherSetup,
        Kernel::Transfer,
        Kernel::Coarse,
        Kernel::Krylov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Operator => "operator",
            Kernel::Residual => "residual",
            Kernel::LocalSolver => "local_solvers",
            Kernel::SmootherSetup => "smoother_setup",
            Kernel::Transfer => "transfer",
            Kernel::Coarse => "coarse",
            Kernel::Krylov => "krylov",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Default)]
pub struct FlopCounter {
    enabled: AtomicBool,
    counts: [AtomicU64; 7],
}

impl FlopCounter {
    pub fn new(enabled: bool) -> Self {
        let c = Self::default();
        c.enabled.store(enabled, Ordering::Relaxed);
        c
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled.load(Ordering::Relaxed)
    }

    pub fn set_enabled(&self, on: bool) {
        self.enabled.store(on, Ordering::Relaxed);
    }

    #[inline]
    pub fn add(&self, kernel: Kernel, n: u64) {
        if self.is_enabled() {
            self.counts[kernel.slot()].fetch_add(n, Ordering::Relaxed);
        }
    }

    pub fn get(&self, kernel: Kernel) -> u64 {
        self.counts[kernel.slot()].load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        Kernel::ALL.iter().map(|&k| self.get(k)).sum()
    }

    pub fn reset(&self) {
        for c in &self.counts {
            c.store(0, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> FlopSnapshot {
        FlopSnapshot(Kernel::ALL.map(|k| self.get(k)))
    }

    /// Map from kernel name to count.
    pub fn query(&self) -> BTreeMap<&'static str, u64> {
        Kernel::ALL
            .iter()
            .map(|&k| (k.name(), self.get(k)))
            .collect()
    }
}

/// Counter values at one point in time; differences give per-phase counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopSnapshot([u64; 7]);

impl FlopSnapshot {
    pub fn get(&self, kernel: Kernel) -> u64 {
        self.0[kernel.slot()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn since(&self, earlier: &FlopSnapshot) -> FlopSnapshot {
        let mut out = [0u64; 7];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] - earlier.0[i];
        }
        FlopSnapshot(out)
    }
}
