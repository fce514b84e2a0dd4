use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{includes, CalibrationRecord};

/// Default number of uniform steps (1001 grid points, spacing 1e-3).
pub const DEFAULT_GRID_STEPS: usize = 1000;

/// How a [`LambdaGrid`] was produced; echoed into run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum GridSpec {
    Uniform { steps: usize },
    Explicit { points: usize },
    Breakpoints { points: usize },
}

/// Strictly increasing sequence of thresholds inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
    spec: GridSpec,
}

impl LambdaGrid {
    /// `steps + 1` points `t / steps` for `t = 0..=steps`.
    pub fn uniform(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("uniform grid needs at least one step".into()));
        }
        let values = (0..=steps).map(|t| t as f64 / steps as f64).collect();
        Ok(Self {
            values,
            spec: GridSpec::Uniform { steps },
        })
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate(&values)?;
        let points = values.len();
        Ok(Self {
            values,
            spec: GridSpec::Explicit { points },
        })
    }

    /// Every threshold at which some record's prediction set changes, plus
    /// the endpoints 0 and 1. Empirical risk is a step function that is
    /// constant between consecutive points of this grid.
    pub fn exact_breakpoints(records: &[CalibrationRecord]) -> Self {
        let mut bits: Vec<u32> = records
            .iter()
            .flat_map(|r| r.map().values().iter().map(|&p| normalized_bits(p)))
            .collect();
        bits.sort_unstable();
        bits.dedup();
        let mut values: Vec<f64> = bits
            .into_iter()
            .map(|b| breakpoint(f32::from_bits(b)))
            .chain([0.0, 1.0])
            .collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let points = values.len();
        Self {
            values,
            spec: GridSpec::Breakpoints { points },
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }
}

pub(crate) fn validate(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidGrid(format!("value {v} outside [0, 1]")));
    }
    if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid(format!(
            "not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

pub(crate) fn normalized_bits(p: f32) -> u32 {
    // -0.0 and 0.0 are the same probability
    if p == 0.0 {
        0
    } else {
        p.to_bits()
    }
}

/// Smallest `lambda` in `[0, 1]` at which a pixel of probability `p` enters
/// the prediction set.
pub fn breakpoint(p: f32) -> f64 {
    let mut lambda = (1.0 - f64::from(p)).clamp(0.0, 1.0);
    while !includes(p, lambda) && lambda < 1.0 {
        lambda = lambda.next_up();
    }
    while lambda > 0.0 && includes(p, lambda.next_down().max(0.0)) {
        lambda = lambda.next_down().max(0.0);
    }
    lambda
}
