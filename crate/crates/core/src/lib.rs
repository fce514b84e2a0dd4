//! Conformal risk control for pixel-wise defect segmentation.
//!
//! Turns uncalibrated probability maps into prediction sets whose expected
//! false negative rate (or monotonized false discovery rate) on exchangeable
//! test data is at most a chosen level `alpha`, and audits that bound by
//! Monte Carlo simulation on synthetic data.
//!
//! ```
//! use riskseg::{calibrate, generate_dataset, GeneratorParams, LambdaGrid, LossKind, RiskLevel, SearchMode};
//!
//! let records = generate_dataset(&GeneratorParams { height: 16, width: 16, ..Default::default() }, 50, 7)?;
//! let grid = LambdaGrid::uniform(1000)?;
//! let alpha = RiskLevel::new(0.2)?;
//! let profile = calibrate(&records, LossKind::Fnr, alpha, &grid, SearchMode::BinarySearch)?;
//! assert!(profile.precondition_holds());
//! # Ok::<(), riskseg::Error>(())
//! ```

pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod io;
pub mod lambda_grid;
pub mod loss;
pub mod synthetic;

pub use calibration::{
    calibrate, calibrate_oracle, crc_bound, empirical_risk, minimal_feasible_alpha, precondition_holds, score_records,
    RiskCurve, RiskLevel, RiskProfile, SearchMode,
};
pub use error::{Error, FormatError, Result};
pub use evaluation::{
    ablate_splits, calibration_size, evaluate, mean_predset_size, pearson, split_indices, sweep, test_risk,
    validate_guarantee, validate_guarantee_alphas, AblationRow, ControlStatus, EvaluationSummary, GuaranteeConfig,
    GuaranteeReport, RowStatus, SweepConfig, SweepRow,
};
pub use grid::{
    build_prediction_set, defect_coverage_ratio, includes, intersect_count, CalibrationRecord, DefectMask,
    PredictionSet, ProbabilityMap,
};
pub use lambda_grid::{GridSpec, LambdaGrid, DEFAULT_GRID_STEPS};
pub use loss::{fdr_loss, fnr_loss, loss_curve, monotonize, LossCurve, LossKind, LossTag, Monotonicity, ScoredRecord};
pub use synthetic::{derive_seed, generate_dataset, generate_sample, GeneratorParams, SeedPolicy, StreamSeed};
