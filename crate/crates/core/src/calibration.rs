//! Threshold selection with a finite-sample bound on expected loss.
//!
//! Given `n` calibration records and a risk level `alpha`, the selected
//! threshold is an extreme grid point `lambda` whose empirical risk satisfies
//! `n * L_n(lambda) + 1 <= alpha * (n + 1)`. For a loss bounded by 1 that is
//! monotone in lambda, and exchangeable calibration/test samples, this bounds
//! the expected loss of a fresh sample by `alpha`.
//!
//! Losses that shrink with lambda (FNR) take the smallest feasible lambda.
//! Losses that grow with lambda (monotonized FDR) take the largest, which is
//! the same rule after substituting `lambda -> 1 - lambda`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_prediction_set, CalibrationRecord};
use crate::lambda_grid::{breakpoint, GridSpec, LambdaGrid};
use crate::loss::{fdr_loss, fnr_loss, monotonize, LossCurve, LossKind, Monotonicity, ScoredRecord};

// Records scored per parallel batch before their curves are folded into the
// running sum in record order.
const BATCH: usize = 64;

/// User-chosen bound on expected loss, `0 < alpha <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidRiskLevel(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<RiskLevel> for f64 {
    fn from(value: RiskLevel) -> f64 {
        value.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    GridScan,
    BinarySearch,
    ExactBreakpoints,
}

/// Result of a successful calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub kind: LossKind,
    pub alpha: RiskLevel,
    pub lambda_hat: f64,
    /// Index of `lambda_hat` in the search grid.
    pub lambda_index: usize,
    pub empirical_risk_at_lambda_hat: f64,
    /// `(alpha (n + 1) - 1) / n`.
    pub adjusted_target: f64,
    pub n_calibration: usize,
    pub search_mode: SearchMode,
    pub grid: GridSpec,
}

impl RiskProfile {
    /// `n L_n(lambda_hat) + 1 <= alpha (n + 1)`, evaluated exactly as written.
    pub fn precondition_holds(&self) -> bool {
        precondition_holds(self.empirical_risk_at_lambda_hat, self.alpha, self.n_calibration)
    }
}

/// `(alpha (n + 1) - 1) / n`. Negative values mean no threshold can qualify.
pub fn crc_bound(alpha: RiskLevel, n: usize) -> f64 {
    let n = n as f64;
    (alpha.0 * (n + 1.0) - 1.0) / n
}

pub fn precondition_holds(risk: f64, alpha: RiskLevel, n: usize) -> bool {
    n as f64 * risk + 1.0 <= alpha.0 * (n as f64 + 1.0)
}

fn is_feasible(risk: f64, alpha: RiskLevel, n: usize) -> bool {
    risk <= crc_bound(alpha, n) && precondition_holds(risk, alpha, n)
}

/// Smallest alpha for which a risk of `min_risk` over `n` records would pass.
pub fn minimal_feasible_alpha(min_risk: f64, n: usize) -> f64 {
    let n = n as f64;
    (n * min_risk + 1.0) / (n + 1.0)
}

fn infeasible(risks: &[f64], n: usize) -> Error {
    let min_risk = risks.iter().copied().fold(f64::INFINITY, f64::min);
    Error::CalibrationInfeasible {
        min_feasible_alpha: minimal_feasible_alpha(min_risk, n),
        min_risk,
    }
}

/// Mean loss over `records` at `lambda`, summed in record order.
pub fn empirical_risk(records: &[CalibrationRecord], lambda: f64, kind: LossKind) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidLambda(lambda));
    }
    let losses: Vec<f64> = records
        .par_iter()
        .map(|r| ScoredRecord::new(r).loss_at(kind, lambda))
        .collect();
    Ok(mean_in_order(&losses))
}

pub(crate) fn mean_in_order(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    sum / values.len() as f64
}

pub fn score_records(records: &[CalibrationRecord]) -> Vec<ScoredRecord> {
    records.par_iter().map(ScoredRecord::new).collect()
}

/// Empirical risk `L_n` tabulated over a whole grid.
#[derive(Debug, Clone)]
pub struct RiskCurve {
    kind: LossKind,
    grid: LambdaGrid,
    risks: Vec<f64>,
    n: usize,
}

impl RiskCurve {
    pub fn new(scored: &[ScoredRecord], kind: LossKind, grid: &LambdaGrid) -> Result<Self> {
        if scored.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let mut sums = vec![0.0; grid.len()];
        for batch in scored.chunks(BATCH) {
            let curves: Vec<Vec<f64>> = batch.par_iter().map(|s| s.losses_on(kind, grid)).collect();
            for curve in &curves {
                for (acc, l) in sums.iter_mut().zip(curve) {
                    *acc += l;
                }
            }
        }
        let n = scored.len();
        let risks = sums.into_iter().map(|s| s / n as f64).collect();
        Ok(Self {
            kind,
            grid: grid.clone(),
            risks,
            n,
        })
    }

    pub fn from_records(records: &[CalibrationRecord], kind: LossKind, grid: &LambdaGrid) -> Result<Self> {
        Self::new(&score_records(records), kind, grid)
    }

    pub fn risks(&self) -> &[f64] {
        &self.risks
    }

    pub fn grid(&self) -> &LambdaGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Selects `lambda_hat` by a full scan of the tabulated risks.
    pub fn select(&self, alpha: RiskLevel, mode: SearchMode) -> Result<RiskProfile> {
        let feasible = |t: usize| is_feasible(self.risks[t], alpha, self.n);
        let index = match self.kind.direction() {
            Some(Monotonicity::NonDecreasing) => (0..self.risks.len()).rev().find(|&t| feasible(t)),
            _ => (0..self.risks.len()).find(|&t| feasible(t)),
        }
        .ok_or_else(|| infeasible(&self.risks, self.n))?;
        Ok(self.profile(alpha, index, mode))
    }

    fn profile(&self, alpha: RiskLevel, index: usize, mode: SearchMode) -> RiskProfile {
        RiskProfile {
            kind: self.kind,
            alpha,
            lambda_hat: self.grid.get(index),
            lambda_index: index,
            empirical_risk_at_lambda_hat: self.risks[index],
            adjusted_target: crc_bound(alpha, self.n),
            n_calibration: self.n,
            search_mode: mode,
            grid: self.grid.spec(),
        }
    }
}

/// Selects `lambda_hat` on `grid` (or on the records' exact breakpoints).
///
/// Binary search is only used when the loss declares a direction; the raw
/// FDR loss silently falls back to a grid scan, which takes the smallest
/// feasible lambda.
pub fn calibrate(
    records: &[CalibrationRecord],
    kind: LossKind,
    alpha: RiskLevel,
    grid: &LambdaGrid,
    mode: SearchMode,
) -> Result<RiskProfile> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let scored = score_records(records);
    match (mode, kind.direction()) {
        (SearchMode::BinarySearch, Some(direction)) => binary_search(&scored, kind, direction, alpha, grid),
        (SearchMode::ExactBreakpoints, _) => {
            let exact = LambdaGrid::exact_breakpoints(records);
            RiskCurve::new(&scored, kind, &exact)?.select(alpha, SearchMode::ExactBreakpoints)
        }
        _ => RiskCurve::new(&scored, kind, grid)?.select(alpha, SearchMode::GridScan),
    }
}

fn binary_search(
    scored: &[ScoredRecord],
    kind: LossKind,
    direction: Monotonicity,
    alpha: RiskLevel,
    grid: &LambdaGrid,
) -> Result<RiskProfile> {
    let n = scored.len();
    let risk_at = |t: usize| {
        let lambda = grid.get(t);
        let losses: Vec<f64> = scored.par_iter().map(|s| s.loss_at(kind, lambda)).collect();
        mean_in_order(&losses)
    };
    let last = grid.len() - 1;
    // Feasibility is a suffix of the grid for non-increasing risk and a
    // prefix for non-decreasing risk; probe the best endpoint first.
    let (best, worst) = match direction {
        Monotonicity::NonIncreasing => (last, 0),
        Monotonicity::NonDecreasing => (0, last),
    };
    let best_risk = risk_at(best);
    if !is_feasible(best_risk, alpha, n) {
        return Err(infeasible(&[best_risk], n));
    }
    let mut found = (best, best_risk);
    let (mut lo, mut hi) = if best > worst { (worst, best) } else { (best, worst) };
    match direction {
        Monotonicity::NonIncreasing => {
            // smallest feasible index in [lo, hi]; hi feasible
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                let r = risk_at(mid);
                if is_feasible(r, alpha, n) {
                    hi = mid;
                    found = (mid, r);
                } else {
                    lo = mid + 1;
                }
            }
        }
        Monotonicity::NonDecreasing => {
            // largest feasible index in [lo, hi]; lo feasible
            while lo < hi {
                let mid = lo + (hi - lo).div_ceil(2);
                let r = risk_at(mid);
                if is_feasible(r, alpha, n) {
                    lo = mid;
                    found = (mid, r);
                } else {
                    hi = mid - 1;
                }
            }
        }
    }
    let (index, risk) = found;
    Ok(RiskProfile {
        kind,
        alpha,
        lambda_hat: grid.get(index),
        lambda_index: index,
        empirical_risk_at_lambda_hat: risk,
        adjusted_target: crc_bound(alpha, n),
        n_calibration: n,
        search_mode: SearchMode::BinarySearch,
        grid: grid.spec(),
    })
}

/// Reference implementation: every loss comes from a materialized
/// prediction set, every grid point is scanned, and nothing assumes
/// monotonicity of the empirical risk.
pub fn calibrate_oracle(
    records: &[CalibrationRecord],
    kind: LossKind,
    alpha: RiskLevel,
    grid: &LambdaGrid,
) -> Result<RiskProfile> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let curves: Vec<Vec<f64>> = records
        .par_iter()
        .map(|r| oracle_curve(r, kind, grid))
        .collect::<Result<_>>()?;
    let n = records.len();
    let risks: Vec<f64> = (0..grid.len())
        .map(|t| {
            let mut sum = 0.0;
            for c in &curves {
                sum += c[t];
            }
            sum / n as f64
        })
        .collect();
    let feasible: Vec<usize> = (0..grid.len()).filter(|&t| is_feasible(risks[t], alpha, n)).collect();
    let index = match kind.direction() {
        Some(Monotonicity::NonDecreasing) => feasible.iter().max(),
        _ => feasible.iter().min(),
    }
    .copied()
    .ok_or_else(|| infeasible(&risks, n))?;
    Ok(RiskProfile {
        kind,
        alpha,
        lambda_hat: grid.get(index),
        lambda_index: index,
        empirical_risk_at_lambda_hat: risks[index],
        adjusted_target: crc_bound(alpha, n),
        n_calibration: n,
        search_mode: SearchMode::GridScan,
        grid: grid.spec(),
    })
}

fn oracle_curve(record: &CalibrationRecord, kind: LossKind, grid: &LambdaGrid) -> Result<Vec<f64>> {
    let raw_at = |lambda: f64, kind: LossKind| -> Result<f64> {
        let set = build_prediction_set(record.map(), lambda)?;
        match kind {
            LossKind::Fnr => fnr_loss(&set, record.mask()),
            _ => fdr_loss(&set, record.mask()),
        }
    };
    if kind != LossKind::FdrMonotonized {
        return grid.values().iter().map(|&l| raw_at(l, kind)).collect();
    }
    // The running max must see every set the record can produce below each
    // grid point, so evaluate on the union of its breakpoints and the grid.
    let mut lambdas: Vec<f64> = record
        .map()
        .values()
        .iter()
        .map(|&p| breakpoint(p))
        .chain(grid.values().iter().copied())
        .collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let raw = lambdas
        .iter()
        .map(|&l| raw_at(l, LossKind::Fdr))
        .collect::<Result<Vec<_>>>()?;
    let envelope = monotonize(&LossCurve::new(lambdas.clone(), raw)?, Monotonicity::NonDecreasing);
    Ok(grid
        .values()
        .iter()
        .map(|l| {
            let i = lambdas
                .binary_search_by(|x| x.total_cmp(l))
                .expect("grid point present");
            envelope.losses()[i]
        })
        .collect())
}
