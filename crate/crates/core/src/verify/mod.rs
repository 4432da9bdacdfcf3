//! Oracles and certification sweeps.
//!
//! Every sweep draws sample `i` from its own random stream (see
//! [`sampling::sample_rng`]), evaluates it independently and merges the
//! per-sample tallies in index order, so reports do not depend on the number
//! of worker threads.

pub mod bounds;
pub mod fd;
pub mod sampling;
pub mod sweeps;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypgeom::HypError;
use crate::laplacian::LaplacianError;
use crate::mesh::MeshError;

pub use bounds::{
    lemma52_scan, prop31_bruteforce, t1_t2_polynomial, theorem1_constants, verify_prop24,
    verify_theorem1, verify_theorem2, BoundConstants, Lemma52Result, Prop31Result,
    SubstitutedCoords, Theorem2Spec,
};
pub use fd::{fd_angle_jacobian, fd_curvature_jacobian};
pub use sweeps::{identities_suite, jacobians_suite, spd_suite, JacobianSpec};

/// Stored violations per report; the count keeps growing past this.
pub const MAX_STORED_VIOLATIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Hyp(#[from] HypError),
    #[error(transparent)]
    Laplacian(#[from] LaplacianError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample: u64,
    pub quantity: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub suite: String,
    pub seed: u64,
    pub samples: u64,
    pub sups: BTreeMap<String, f64>,
    pub infs: BTreeMap<String, f64>,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
    /// Seconds; the only field that differs between identical runs.
    pub wall_time: f64,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    pub fn sup(&self, name: &str) -> f64 {
        self.sups.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn inf(&self, name: &str) -> f64 {
        self.infs.get(name).copied().unwrap_or(f64::NAN)
    }

    /// Joins labelled reports into one; every quantity becomes `label.quantity`.
    pub fn combine(suite: &str, seed: u64, parts: Vec<(String, SweepReport)>) -> SweepReport {
        let mut out = SweepReport {
            suite: suite.to_string(),
            seed,
            samples: 0,
            sups: BTreeMap::new(),
            infs: BTreeMap::new(),
            violation_count: 0,
            violations: Vec::new(),
            wall_time: 0.0,
        };
        for (label, rep) in parts {
            out.samples += rep.samples;
            out.violation_count += rep.violation_count;
            out.wall_time += rep.wall_time;
            for (k, v) in rep.sups {
                out.sups.insert(format!("{label}.{k}"), v);
            }
            for (k, v) in rep.infs {
                out.infs.insert(format!("{label}.{k}"), v);
            }
            for v in rep.violations {
                if out.violations.len() < MAX_STORED_VIOLATIONS {
                    out.violations.push(Violation {
                        quantity: format!("{label}.{}", v.quantity),
                        ..v
                    });
                }
            }
        }
        out
    }
}

/// Running extremes and violations for one sample or a merged sweep.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    sups: BTreeMap<String, f64>,
    infs: BTreeMap<String, f64>,
    violation_count: u64,
    violations: Vec<Violation>,
}

impl Tally {
    pub fn observe(&mut self, name: &str, value: f64) {
        if value.is_nan() {
            return;
        }
        let sup = self.sups.entry(name.to_string()).or_insert(value);
        *sup = sup.max(value);
        let inf = self.infs.entry(name.to_string()).or_insert(value);
        *inf = inf.min(value);
    }

    pub fn violate(&mut self, sample: u64, quantity: &str, value: f64, bound: f64) {
        self.violation_count += 1;
        if self.violations.len() < MAX_STORED_VIOLATIONS {
            self.violations.push(Violation {
                sample,
                quantity: quantity.to_string(),
                value,
                bound,
            });
        }
    }

    /// Records `value` and flags it unless `value <= bound`.
    pub fn at_most(&mut self, sample: u64, name: &str, value: f64, bound: f64) {
        self.observe(name, value);
        if !(value <= bound) {
            self.violate(sample, name, value, bound);
        }
    }

    /// Records `value` and flags it unless `value >= bound`.
    pub fn at_least(&mut self, sample: u64, name: &str, value: f64, bound: f64) {
        self.observe(name, value);
        if !(value >= bound) {
            self.violate(sample, name, value, bound);
        }
    }

    /// Records `value` and flags it unless `lo < value < hi`.
    pub fn strictly_between(&mut self, sample: u64, name: &str, value: f64, lo: f64, hi: f64) {
        self.observe(name, value);
        if !(value > lo) {
            self.violate(sample, name, value, lo);
        }
        if !(value < hi) {
            self.violate(sample, name, value, hi);
        }
    }

    pub fn merge(&mut self, other: Tally) {
        for (k, v) in other.sups {
            let e = self.sups.entry(k).or_insert(v);
            *e = e.max(v);
        }
        for (k, v) in other.infs {
            let e = self.infs.entry(k).or_insert(v);
            *e = e.min(v);
        }
        self.violation_count += other.violation_count;
        for v in other.violations {
            if self.violations.len() < MAX_STORED_VIOLATIONS {
                self.violations.push(v);
            }
        }
    }

    pub fn into_report(self, suite: &str, seed: u64, samples: u64, started: Instant) -> SweepReport {
        SweepReport {
            suite: suite.to_string(),
            seed,
            samples,
            sups: self.sups,
            infs: self.infs,
            violation_count: self.violation_count,
            violations: self.violations,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }
}

/// Evaluates `f` for sample indices `0..count` (in parallel) and merges in index order.
pub fn run_indexed<F>(count: u64, f: F) -> Tally
where
    F: Fn(u64) -> Tally + Sync + Send,
{
    let parts: Vec<Tally> = (0..count).into_par_iter().map(f).collect();
    let mut total = Tally::default();
    for part in parts {
        total.merge(part);
    }
    total
}
