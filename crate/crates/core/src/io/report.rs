//! Run reports and their deterministic CSV / JSON renderings.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64`. Field order is fixed by the struct definitions.

use std::io::{self, Write};
use std::path::Path;

use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::calibration::{precondition_holds, RiskLevel, RiskProfile, SearchMode};
use crate::error::{Error, Result};
use crate::evaluation::{AblationRow, EvaluationSummary, GuaranteeReport, RowStatus, SweepRow};
use crate::lambda_grid::GridSpec;
use crate::loss::LossKind;
use crate::synthetic::GeneratorParams;

pub const TOOL_NAME: &str = "riskseg";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` selects CSV; anything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// Echo of every parameter that influenced a run.
#[derive(Debug, Clone, Default, PartialEq, SerializeDerive, Deserialize)]
pub struct RunParameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alphas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub split_ratios: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_calibration: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorParams>,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: RunParameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<RiskProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablation: Vec<AblationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guarantee: Option<GuaranteeReport>,
    /// Only filled when timing is requested; it would otherwise break
    /// byte-identical reruns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<f64>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, parameters: RunParameters) -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.into(),
            parameters,
            profile: None,
            evaluation: None,
            sweep: Vec::new(),
            ablation: Vec::new(),
            guarantee: None,
            duration_seconds: None,
        }
    }

    /// Re-checks `n L_n(lambda_hat) + 1 <= alpha (n + 1)` for every
    /// threshold the report carries.
    pub fn check_precondition(&self) -> Result<()> {
        if let Some(p) = &self.profile {
            if !p.precondition_holds() {
                return Err(Error::PreconditionViolated {
                    lambda_hat: p.lambda_hat,
                });
            }
        }
        for row in self.sweep.iter().filter(|r| r.status == RowStatus::Ok) {
            let (lambda_hat, risk) = (
                row.lambda_hat.unwrap_or(f64::NAN),
                row.calibration_risk.unwrap_or(f64::NAN),
            );
            if !holds(risk, row.alpha, row.n_calibration) {
                return Err(Error::PreconditionViolated { lambda_hat });
            }
        }
        if let Some(g) = &self.guarantee {
            for (lambda_hat, risk) in g.per_trial_lambda_hats.iter().zip(&g.per_trial_calibration_risks) {
                if !holds(*risk, g.alpha, g.n_calibration) {
                    return Err(Error::PreconditionViolated {
                        lambda_hat: *lambda_hat,
                    });
                }
            }
        }
        Ok(())
    }
}

fn holds(risk: f64, alpha: f64, n: usize) -> bool {
    RiskLevel::new(alpha).is_ok_and(|a| precondition_holds(risk, a, n))
}

/// Pretty JSON with every float rendered as `{:.16e}`.
struct Sig17Formatter<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17Formatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn report_to_json(report: &RunReport) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter(PrettyFormatter::new()));
    report.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// One table per report: sweep rows, else ablation rows, else per-trial
/// guarantee rows, else the calibration profile, else the evaluation.
pub fn report_to_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    if !report.sweep.is_empty() {
        w.write_record([
            "alpha",
            "status",
            "lambda_hat",
            "calibration_risk",
            "empirical_test_risk",
            "mean_predset_size",
            "min_feasible_alpha",
            "n_calibration",
            "n_test",
            "seed",
        ])?;
        for r in &report.sweep {
            w.write_record([
                real(r.alpha),
                label(&r.status),
                opt(r.lambda_hat),
                opt(r.calibration_risk),
                opt(r.empirical_test_risk),
                opt(r.mean_predset_size),
                opt(r.min_feasible_alpha),
                r.n_calibration.to_string(),
                r.n_test.to_string(),
                r.seed.to_string(),
            ])?;
        }
    } else if !report.ablation.is_empty() {
        w.write_record([
            "split_ratio",
            "alpha",
            "n_calibration",
            "n_test",
            "seeds",
            "feasible_seeds",
            "mean_lambda_hat",
            "mean_test_risk",
            "status",
        ])?;
        for r in &report.ablation {
            w.write_record([
                real(r.split_ratio),
                real(r.alpha),
                r.n_calibration.to_string(),
                r.n_test.to_string(),
                r.seeds.to_string(),
                r.feasible_seeds.to_string(),
                opt(r.mean_lambda_hat),
                opt(r.mean_test_risk),
                label(&r.status),
            ])?;
        }
    } else if let Some(g) = &report.guarantee {
        w.write_record(["trial", "alpha", "lambda_hat", "calibration_risk", "test_risk"])?;
        for (t, ((l, c), r)) in g
            .per_trial_lambda_hats
            .iter()
            .zip(&g.per_trial_calibration_risks)
            .zip(&g.per_trial_risks)
            .enumerate()
        {
            w.write_record([t.to_string(), real(g.alpha), real(*l), real(*c), real(*r)])?;
        }
    } else if let Some(p) = &report.profile {
        w.write_record([
            "loss",
            "alpha",
            "lambda_hat",
            "lambda_index",
            "empirical_risk_at_lambda_hat",
            "adjusted_target",
            "n_calibration",
            "search_mode",
        ])?;
        w.write_record([
            p.kind.to_string(),
            real(p.alpha.value()),
            real(p.lambda_hat),
            p.lambda_index.to_string(),
            real(p.empirical_risk_at_lambda_hat),
            real(p.adjusted_target),
            p.n_calibration.to_string(),
            label(&p.search_mode),
        ])?;
    } else if let Some(e) = &report.evaluation {
        w.write_record(["loss", "lambda", "n_records", "test_risk", "mean_predset_size"])?;
        w.write_record([
            e.kind.to_string(),
            real(e.lambda),
            e.n_records.to_string(),
            real(e.test_risk),
            real(e.mean_predset_size),
        ])?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| Error::Io(io::Error::other(e.to_string())))
}

/// Serializes `report` after re-checking its thresholds.
pub fn render_report(report: &RunReport, format: ReportFormat) -> Result<Vec<u8>> {
    report.check_precondition()?;
    match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Csv => report_to_csv(report),
    }
}

pub fn write_report(report: &RunReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let bytes = render_report(report, format)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
