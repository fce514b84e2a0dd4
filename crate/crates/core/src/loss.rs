//! Per-sample losses over the threshold `lambda` and their step-function
//! curves.
//!
//! FNR loss only shrinks as the prediction set grows. FDR loss has no fixed
//! direction: enlarging the set usually lowers precision, and the `max(|C|, 1)`
//! guard scores the empty set at 1. [`LossKind::FdrMonotonized`] replaces the
//! raw FDR loss by its running maximum over `[0, lambda]`, the smallest
//! non-decreasing function that dominates it, which is what risk control
//! needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{includes, intersect_count, CalibrationRecord, DefectMask, PredictionSet};
use crate::lambda_grid::{normalized_bits, LambdaGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    NonIncreasing,
    NonDecreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTag {
    Fnr,
    Fdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Missed defect pixels over defect pixels; non-increasing in lambda.
    Fnr,
    /// Raw false-discovery loss `1 - |C ∩ y| / max(|C|, 1)`; no direction.
    Fdr,
    /// Running maximum of the FDR loss; non-decreasing in lambda.
    FdrMonotonized,
}

impl LossKind {
    pub fn tag(self) -> LossTag {
        match self {
            LossKind::Fnr => LossTag::Fnr,
            LossKind::Fdr | LossKind::FdrMonotonized => LossTag::Fdr,
        }
    }

    /// Declared monotonicity in lambda; `None` for the raw FDR loss.
    pub fn direction(self) -> Option<Monotonicity> {
        match self {
            LossKind::Fnr => Some(Monotonicity::NonIncreasing),
            LossKind::Fdr => None,
            LossKind::FdrMonotonized => Some(Monotonicity::NonDecreasing),
        }
    }

    pub fn monotonized(self) -> Self {
        match self {
            LossKind::Fdr => LossKind::FdrMonotonized,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Fnr => "fnr",
            LossKind::Fdr => "fdr",
            LossKind::FdrMonotonized => "fdr_monotonized",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[inline]
pub(crate) fn fdr_from_counts(hits: usize, size: usize) -> f64 {
    1.0 - hits as f64 / size.max(1) as f64
}

#[inline]
pub(crate) fn fnr_from_counts(hits: usize, defects: usize) -> f64 {
    if defects == 0 {
        0.0
    } else {
        (defects - hits) as f64 / defects as f64
    }
}

fn check_pair(set: &PredictionSet, mask: &DefectMask) -> Result<usize> {
    intersect_count(set, mask)
}

/// `1 - |set ∩ mask| / max(|set|, 1)`.
pub fn fdr_loss(set: &PredictionSet, mask: &DefectMask) -> Result<f64> {
    let hits = check_pair(set, mask)?;
    Ok(fdr_from_counts(hits, set.size()))
}

/// `|mask \ set| / |mask|`, or 0 for an empty mask.
pub fn fnr_loss(set: &PredictionSet, mask: &DefectMask) -> Result<f64> {
    let hits = check_pair(set, mask)?;
    Ok(fnr_from_counts(hits, mask.defect_count()))
}

/// A loss sampled on a strictly increasing lambda grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    lambdas: Vec<f64>,
    losses: Vec<f64>,
}

impl LossCurve {
    pub fn new(lambdas: Vec<f64>, losses: Vec<f64>) -> Result<Self> {
        crate::lambda_grid::validate(&lambdas)?;
        if lambdas.len() != losses.len() {
            return Err(Error::LengthMismatch {
                expected: lambdas.len(),
                found: losses.len(),
            });
        }
        if let Some(v) = losses.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("loss {v} outside [0, 1]")));
        }
        Ok(Self { lambdas, losses })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

/// Smallest curve that is monotone in `direction` and dominates `curve`.
pub fn monotonize(curve: &LossCurve, direction: Monotonicity) -> LossCurve {
    let mut losses = curve.losses.clone();
    match direction {
        Monotonicity::NonDecreasing => {
            for i in 1..losses.len() {
                losses[i] = losses[i].max(losses[i - 1]);
            }
        }
        Monotonicity::NonIncreasing => {
            for i in (0..losses.len().saturating_sub(1)).rev() {
                losses[i] = losses[i].max(losses[i + 1]);
            }
        }
    }
    LossCurve {
        lambdas: curve.lambdas.clone(),
        losses,
    }
}

/// Evaluates `kind` for `record` at every point of `grid`.
pub fn loss_curve(record: &CalibrationRecord, kind: LossKind, grid: &LambdaGrid) -> LossCurve {
    let scored = ScoredRecord::new(record);
    LossCurve {
        lambdas: grid.values().to_vec(),
        losses: scored.losses_on(kind, grid),
    }
}

/// A record reduced to its distinct probability levels (descending) with
/// cumulative set sizes and hit counts, so that any loss at any lambda is a
/// binary search away.
#[derive(Debug, Clone)]
pub struct ScoredRecord {
    levels: Vec<f32>,
    // cum_size[k] / cum_hits[k]: set size and |C ∩ y| once the top k levels are in.
    cum_size: Vec<usize>,
    cum_hits: Vec<usize>,
    defects: usize,
    // Running max of the FDR loss from the lambda = 0 state onward.
    fdr_envelope: Vec<f64>,
}

impl ScoredRecord {
    pub fn new(record: &CalibrationRecord) -> Self {
        let mask = record.mask();
        let mut keys: Vec<u32> = record
            .map()
            .values()
            .iter()
            .enumerate()
            .map(|(i, &p)| normalized_bits(p) << 1 | u32::from(mask.bit(i)))
            .collect();
        keys.sort_unstable_by(|a, b| b.cmp(a));

        let mut levels = Vec::new();
        let mut cum_size = vec![0];
        let mut cum_hits = vec![0];
        let (mut size, mut hits) = (0usize, 0usize);
        let mut i = 0;
        while i < keys.len() {
            let level = keys[i] >> 1;
            while i < keys.len() && keys[i] >> 1 == level {
                size += 1;
                hits += (keys[i] & 1) as usize;
                i += 1;
            }
            levels.push(f32::from_bits(level));
            cum_size.push(size);
            cum_hits.push(hits);
        }

        let start = levels.partition_point(|&p| includes(p, 0.0));
        let mut fdr_envelope = vec![f64::NAN; levels.len() + 1];
        let mut running = f64::NEG_INFINITY;
        for k in start..=levels.len() {
            running = running.max(fdr_from_counts(cum_hits[k], cum_size[k]));
            fdr_envelope[k] = running;
        }

        Self {
            levels,
            cum_size,
            cum_hits,
            defects: mask.defect_count(),
            fdr_envelope,
        }
    }

    /// Number of probability levels admitted at `lambda`.
    #[inline]
    fn state(&self, lambda: f64) -> usize {
        self.levels.partition_point(|&p| includes(p, lambda))
    }

    #[inline]
    fn loss_in_state(&self, kind: LossKind, k: usize) -> f64 {
        match kind {
            LossKind::Fnr => fnr_from_counts(self.cum_hits[k], self.defects),
            LossKind::Fdr => fdr_from_counts(self.cum_hits[k], self.cum_size[k]),
            LossKind::FdrMonotonized => self.fdr_envelope[k],
        }
    }

    pub fn loss_at(&self, kind: LossKind, lambda: f64) -> f64 {
        self.loss_in_state(kind, self.state(lambda))
    }

    pub fn set_size_at(&self, lambda: f64) -> usize {
        self.cum_size[self.state(lambda)]
    }

    pub fn defect_count(&self) -> usize {
        self.defects
    }

    /// Losses at every grid point, in one merge pass over levels and grid.
    pub fn losses_on(&self, kind: LossKind, grid: &LambdaGrid) -> Vec<f64> {
        let mut k = 0;
        grid.values()
            .iter()
            .map(|&lambda| {
                while k < self.levels.len() && includes(self.levels[k], lambda) {
                    k += 1;
                }
                self.loss_in_state(kind, k)
            })
            .collect()
    }
}
