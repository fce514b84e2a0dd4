//! Test-side metrics and experiment protocols: risk and set size at a
//! calibrated threshold, alpha sweeps, split-ratio ablation and Monte Carlo
//! auditing of the expected-risk guarantee.
//!
//! All protocols are deterministic functions of their inputs and seeds.
//! Parallel work is collected in index order, so thread count never changes
//! a result.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{mean_in_order, score_records, RiskCurve, RiskLevel, SearchMode};
use crate::error::{Error, Result};
use crate::grid::{build_prediction_set, CalibrationRecord};
use crate::lambda_grid::LambdaGrid;
use crate::loss::{LossKind, ScoredRecord};
use crate::synthetic::{derive_seed, generate_dataset, GeneratorParams};

/// Mean per-record loss at `lambda_hat`.
pub fn test_risk(test_records: &[CalibrationRecord], lambda_hat: f64, kind: LossKind) -> Result<f64> {
    if test_records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if !(0.0..=1.0).contains(&lambda_hat) {
        return Err(Error::InvalidLambda(lambda_hat));
    }
    let losses: Vec<f64> = test_records
        .par_iter()
        .map(|r| ScoredRecord::new(r).loss_at(kind, lambda_hat))
        .collect();
    Ok(mean_in_order(&losses))
}

/// Mean prediction-set cardinality at `lambda_hat`.
pub fn mean_predset_size(test_records: &[CalibrationRecord], lambda_hat: f64) -> Result<f64> {
    if test_records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let sizes: Vec<f64> = test_records
        .par_iter()
        .map(|r| build_prediction_set(r.map(), lambda_hat).map(|s| s.size() as f64))
        .collect::<Result<_>>()?;
    Ok(mean_in_order(&sizes))
}

fn scored_risk(scored: &[ScoredRecord], lambda: f64, kind: LossKind) -> f64 {
    let losses: Vec<f64> = scored.iter().map(|s| s.loss_at(kind, lambda)).collect();
    mean_in_order(&losses)
}

fn scored_size(scored: &[ScoredRecord], lambda: f64) -> f64 {
    let sizes: Vec<f64> = scored.iter().map(|s| s.set_size_at(lambda) as f64).collect();
    mean_in_order(&sizes)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::SequenceLengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewObservations(xs.len()));
    }
    let mx = mean_in_order(xs);
    let my = mean_in_order(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Calibration-set size for a split: `ceil(ratio * n)`, requiring both sides
/// non-empty.
pub fn calibration_size(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidSplit { ratio, n });
    }
    // absorb representation error such as 0.3 * 10 = 3.0000000000000004
    let n_cal = (ratio * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_cal == 0 || n_cal >= n {
        return Err(Error::InvalidSplit { ratio, n });
    }
    Ok(n_cal)
}

/// Uniform random permutation of `0..n`, cut into calibration and test.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_cal = calibration_size(n, ratio)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_cal);
    Ok((order, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub status: RowStatus,
    pub lambda_hat: Option<f64>,
    pub calibration_risk: Option<f64>,
    pub empirical_test_risk: Option<f64>,
    pub mean_predset_size: Option<f64>,
    pub min_feasible_alpha: Option<f64>,
    pub n_calibration: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kind: LossKind,
    pub split_ratio: f64,
    pub seed: u64,
    pub grid: LambdaGrid,
    /// `ExactBreakpoints` replaces `grid` by the calibration records'
    /// breakpoints; the other modes scan `grid`.
    pub search_mode: SearchMode,
}

/// One seeded calibration/test split, calibrated once per alpha.
///
/// The split depends on the seed only, so every alpha sees the same data and
/// rows differ only through the selected threshold.
pub fn sweep(records: &[CalibrationRecord], alphas: &[RiskLevel], config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("alpha list is empty".into()));
    }
    let (cal_idx, test_idx) = split_indices(records.len(), config.split_ratio, config.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    let (cal, test) = (pick(&cal_idx), pick(&test_idx));
    let grid = match config.search_mode {
        SearchMode::ExactBreakpoints => LambdaGrid::exact_breakpoints(&cal),
        _ => config.grid.clone(),
    };
    let curve = RiskCurve::new(&score_records(&cal), config.kind, &grid)?;
    let scored_test = score_records(&test);

    Ok(alphas
        .iter()
        .map(|&alpha| {
            let mut row = SweepRow {
                alpha: alpha.value(),
                status: RowStatus::Ok,
                lambda_hat: None,
                calibration_risk: None,
                empirical_test_risk: None,
                mean_predset_size: None,
                min_feasible_alpha: None,
                n_calibration: cal.len(),
                n_test: test.len(),
                seed: config.seed,
            };
            match curve.select(alpha, config.search_mode) {
                Ok(profile) => {
                    let lambda = profile.lambda_hat;
                    row.lambda_hat = Some(lambda);
                    row.calibration_risk = Some(profile.empirical_risk_at_lambda_hat);
                    row.empirical_test_risk = Some(scored_risk(&scored_test, lambda, config.kind));
                    row.mean_predset_size = Some(scored_size(&scored_test, lambda));
                }
                Err(Error::CalibrationInfeasible { min_feasible_alpha, .. }) => {
                    row.status = RowStatus::Infeasible;
                    row.min_feasible_alpha = Some(min_feasible_alpha);
                }
                Err(e) => unreachable!("selection on a built curve only fails as infeasible: {e}"),
            }
            row
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStatus {
    Pass,
    Fail,
    Infeasible,
}

/// One (split ratio, alpha) cell aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub split_ratio: f64,
    pub alpha: f64,
    pub n_calibration: usize,
    pub n_test: usize,
    pub seeds: usize,
    pub feasible_seeds: usize,
    pub mean_lambda_hat: Option<f64>,
    pub mean_test_risk: Option<f64>,
    pub status: ControlStatus,
}

/// Split-ratio ablation: for every ratio and seed, one [`sweep`] over
/// `alphas`; rows average the feasible seeds and pass iff the mean test
/// risk is at most alpha.
pub fn ablate_splits(
    records: &[CalibrationRecord],
    ratios: &[f64],
    alphas: &[RiskLevel],
    seeds: &[u64],
    kind: LossKind,
    grid: &LambdaGrid,
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(ratios.len() * alphas.len());
    for &ratio in ratios {
        let per_seed: Vec<Vec<SweepRow>> = seeds
            .iter()
            .map(|&seed| {
                let config = SweepConfig {
                    kind,
                    split_ratio: ratio,
                    seed,
                    grid: grid.clone(),
                    search_mode: SearchMode::GridScan,
                };
                sweep(records, alphas, &config)
            })
            .collect::<Result<_>>()?;
        for (a, &alpha) in alphas.iter().enumerate() {
            let feasible: Vec<&SweepRow> = per_seed
                .iter()
                .map(|rows| &rows[a])
                .filter(|r| r.status == RowStatus::Ok)
                .collect();
            let mean_of = |f: fn(&SweepRow) -> Option<f64>| {
                let v: Vec<f64> = feasible.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| mean_in_order(&v))
            };
            let mean_test_risk = mean_of(|r| r.empirical_test_risk);
            let status = match mean_test_risk {
                None => ControlStatus::Infeasible,
                Some(risk) if risk <= alpha.value() => ControlStatus::Pass,
                Some(_) => ControlStatus::Fail,
            };
            let first = &per_seed[0][a];
            rows.push(AblationRow {
                split_ratio: ratio,
                alpha: alpha.value(),
                n_calibration: first.n_calibration,
                n_test: first.n_test,
                seeds: seeds.len(),
                feasible_seeds: feasible.len(),
                mean_lambda_hat: mean_of(|r| r.lambda_hat),
                mean_test_risk,
                status,
            });
        }
    }
    Ok(rows)
}

/// Monte Carlo audit of the expected-risk bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub alpha: f64,
    pub kind: LossKind,
    pub trials: usize,
    pub n_calibration: usize,
    pub n_test: usize,
    pub mean_test_risk: f64,
    /// Standard error of `mean_test_risk` across trials (0 for one trial).
    pub std_error: f64,
    /// Fraction of trials whose mean test risk exceeded alpha. Diagnostic
    /// only: the bound holds in expectation, not per trial.
    pub violation_fraction: f64,
    pub mean_lambda_hat: f64,
    pub per_trial_risks: Vec<f64>,
    pub per_trial_lambda_hats: Vec<f64>,
    pub per_trial_calibration_risks: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GuaranteeConfig {
    pub generator: GeneratorParams,
    pub kind: LossKind,
    pub n_calibration: usize,
    pub n_test: usize,
    pub trials: usize,
    pub seed: u64,
    pub grid: LambdaGrid,
}

impl GuaranteeConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.n_calibration == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "trials, n_calibration and n_test must all be at least 1".into(),
            ));
        }
        self.generator.validate()
    }
}

// (lambda_hat, calibration risk, test risk) or the minimal feasible alpha.
type TrialOutcome = std::result::Result<(f64, f64, f64), (f64, f64)>;

fn run_trial(config: &GuaranteeConfig, alphas: &[RiskLevel], trial: u64) -> Result<Vec<TrialOutcome>> {
    let n = config.n_calibration + config.n_test;
    let data = generate_dataset(&config.generator, n, derive_seed(config.seed, trial))?;
    let mut scored = score_records(&data);
    drop(data);
    let test = scored.split_off(config.n_calibration);
    let curve = RiskCurve::new(&scored, config.kind, &config.grid)?;
    Ok(alphas
        .iter()
        .map(|&alpha| match curve.select(alpha, SearchMode::GridScan) {
            Ok(p) => Ok((
                p.lambda_hat,
                p.empirical_risk_at_lambda_hat,
                scored_risk(&test, p.lambda_hat, config.kind),
            )),
            Err(Error::CalibrationInfeasible {
                min_feasible_alpha,
                min_risk,
            }) => Err((min_feasible_alpha, min_risk)),
            Err(e) => unreachable!("selection on a built curve only fails as infeasible: {e}"),
        })
        .collect())
}

/// Audits several alphas on the same trials. Each trial draws a fresh
/// dataset from `derive_seed(seed, trial)`, uses its first `n_calibration`
/// samples to calibrate and the rest to measure test risk.
pub fn validate_guarantee_alphas(
    config: &GuaranteeConfig,
    alphas: &[RiskLevel],
) -> Result<Vec<Result<GuaranteeReport>>> {
    config.validate()?;
    let outcomes: Vec<Vec<TrialOutcome>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, alphas, t))
        .collect::<Result<_>>()?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| summarize(config, alpha, outcomes.iter().map(|o| o[a])))
        .collect())
}

pub fn validate_guarantee(config: &GuaranteeConfig, alpha: RiskLevel) -> Result<GuaranteeReport> {
    validate_guarantee_alphas(config, &[alpha])?
        .pop()
        .expect("one report per alpha")
}

fn summarize(
    config: &GuaranteeConfig,
    alpha: RiskLevel,
    outcomes: impl Iterator<Item = TrialOutcome>,
) -> Result<GuaranteeReport> {
    let mut lambdas = Vec::new();
    let mut cal_risks = Vec::new();
    let mut risks = Vec::new();
    let mut worst: Option<(f64, f64)> = None;
    for outcome in outcomes {
        match outcome {
            Ok((l, c, r)) => {
                lambdas.push(l);
                cal_risks.push(c);
                risks.push(r);
            }
            Err((a, m)) => {
                if worst.is_none_or(|(wa, _)| a > wa) {
                    worst = Some((a, m));
                }
            }
        }
    }
    if let Some((min_feasible_alpha, min_risk)) = worst {
        return Err(Error::CalibrationInfeasible {
            min_feasible_alpha,
            min_risk,
        });
    }
    let trials = risks.len();
    let mean = mean_in_order(&risks);
    let std_error = if trials > 1 {
        let mut ss = 0.0;
        for r in &risks {
            ss += (r - mean).powi(2);
        }
        (ss / (trials - 1) as f64).sqrt() / (trials as f64).sqrt()
    } else {
        0.0
    };
    let violations = risks.iter().filter(|&&r| r > alpha.value()).count();
    Ok(GuaranteeReport {
        alpha: alpha.value(),
        kind: config.kind,
        trials,
        n_calibration: config.n_calibration,
        n_test: config.n_test,
        mean_test_risk: mean,
        std_error,
        violation_fraction: violations as f64 / trials as f64,
        mean_lambda_hat: mean_in_order(&lambdas),
        per_trial_risks: risks,
        per_trial_lambda_hats: lambdas,
        per_trial_calibration_risks: cal_risks,
    })
}

/// Test risk and set size of a fixed threshold over a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub lambda: f64,
    pub kind: LossKind,
    pub n_records: usize,
    pub test_risk: f64,
    pub mean_predset_size: f64,
}

pub fn evaluate(records: &[CalibrationRecord], lambda: f64, kind: LossKind) -> Result<EvaluationSummary> {
    Ok(EvaluationSummary {
        lambda,
        kind,
        n_records: records.len(),
        test_risk: test_risk(records, lambda, kind)?,
        mean_predset_size: mean_predset_size(records, lambda)?,
    })
}
