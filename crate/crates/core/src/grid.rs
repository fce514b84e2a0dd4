//! Pixel-grid data model: probability maps, ground-truth masks and the
//! threshold-induced prediction sets built from them.
//!
//! Pixels are addressed row-major with 0-based `(row, col)` coordinates.
//! Masks and prediction sets are stored as packed bits with a cached
//! cardinality, so full-resolution industrial frames stay cheap to hold.

use crate::error::{Error, Result};

/// Pixel-inclusion rule for threshold `lambda`: a pixel with probability `p`
/// belongs to the prediction set iff `p >= 1 - lambda`.
///
/// Every code path that decides membership goes through this predicate so the
/// boundary tie (`p == 1 - lambda`, which is included) is resolved identically.
#[inline]
pub fn includes(probability: f32, lambda: f64) -> bool {
    f64::from(probability) >= 1.0 - lambda
}

fn check_dims(height: usize, width: usize) -> Result<usize> {
    if height == 0 || width == 0 {
        return Err(Error::EmptyGrid { height, width });
    }
    height.checked_mul(width).ok_or(Error::EmptyGrid { height, width })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// Dense `height x width` grid of defect probabilities.
///
/// Values are held as IEEE binary32, the same precision as the on-disk map
/// format, and are guaranteed finite and inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        let len = check_dims(height, width)?;
        if values.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                found: values.len(),
            });
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteProbability { index });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ProbabilityOutOfRange {
                    index,
                    value: f64::from(v),
                });
            }
        }
        Ok(Self { height, width, values })
    }

    /// Builds a map from `f64` probabilities, rounding each to binary32.
    pub fn from_f64(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteProbability { index });
        }
        if let Some(index) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ProbabilityOutOfRange {
                index,
                value: values[index],
            });
        }
        Self::new(height, width, values.iter().map(|&v| v as f32).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }
}

/// Packed row-major bit grid with a cached population count.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitGrid {
    height: usize,
    width: usize,
    words: Vec<u64>,
    ones: usize,
}

impl BitGrid {
    fn from_iter(height: usize, width: usize, bits: impl IntoIterator<Item = bool>) -> Self {
        let len = height * width;
        let mut words = vec![0u64; len.div_ceil(64)];
        let mut ones = 0;
        let mut seen = 0;
        for (i, bit) in bits.into_iter().take(len).enumerate() {
            if bit {
                words[i / 64] |= 1 << (i % 64);
                ones += 1;
            }
            seen += 1;
        }
        debug_assert_eq!(seen, len);
        Self {
            height,
            width,
            words,
            ones,
        }
    }

    #[inline]
    fn get(&self, index: usize) -> bool {
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    fn intersection_count(&self, other: &BitGrid) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.height * self.width).map(move |i| self.get(i))
    }

    fn debug_check(&self) {
        debug_assert_eq!(
            self.words.iter().map(|w| w.count_ones() as usize).sum::<usize>(),
            self.ones
        );
    }
}

/// Binary ground-truth mask; a set bit marks a defect pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefectMask {
    bits: BitGrid,
}

impl DefectMask {
    pub fn new(height: usize, width: usize, bits: &[bool]) -> Result<Self> {
        let len = check_dims(height, width)?;
        if bits.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                found: bits.len(),
            });
        }
        Ok(Self {
            bits: BitGrid::from_iter(height, width, bits.iter().copied()),
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        check_dims(height, width)?;
        let bits = (0..height).flat_map(|r| (0..width).map(move |c| (r, c)));
        Ok(Self {
            bits: BitGrid::from_iter(height, width, bits.map(|(r, c)| f(r, c))),
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::from_fn(height, width, |_, _| false)
    }

    pub fn height(&self) -> usize {
        self.bits.height
    }

    pub fn width(&self) -> usize {
        self.bits.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.bits.height, self.bits.width)
    }

    pub fn len(&self) -> usize {
        self.bits.height * self.bits.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of defect pixels.
    pub fn defect_count(&self) -> usize {
        self.bits.debug_check();
        self.bits.ones
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits.get(row * self.bits.width + col)
    }

    /// Defect flag by row-major index.
    pub fn bit(&self, index: usize) -> bool {
        self.bits.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter()
    }
}

/// Pixels admitted at threshold `lambda`, as a packed mask plus its size.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    bits: BitGrid,
    lambda: f64,
}

impl PredictionSet {
    pub fn size(&self) -> usize {
        self.bits.debug_check();
        self.bits.ones
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.bits.height, self.bits.width)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.bits.get(row * self.bits.width + col)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter()
    }

    /// True when every pixel of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &PredictionSet) -> bool {
        self.dims() == other.dims() && self.bits.words.iter().zip(&other.bits.words).all(|(a, b)| a & !b == 0)
    }
}

/// One labelled sample: the model's probability map and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub id: String,
    map: ProbabilityMap,
    mask: DefectMask,
}

impl CalibrationRecord {
    pub fn new(id: impl Into<String>, map: ProbabilityMap, mask: DefectMask) -> Result<Self> {
        if map.dims() != mask.dims() {
            return Err(Error::DimensionMismatch {
                left: map.dims(),
                right: mask.dims(),
            });
        }
        Ok(Self {
            id: id.into(),
            map,
            mask,
        })
    }

    pub fn map(&self) -> &ProbabilityMap {
        &self.map
    }

    pub fn mask(&self) -> &DefectMask {
        &self.mask
    }

    pub fn dims(&self) -> (usize, usize) {
        self.map.dims()
    }
}

/// Builds the prediction set `{(j, k) : map[j, k] >= 1 - lambda}`.
pub fn build_prediction_set(map: &ProbabilityMap, lambda: f64) -> Result<PredictionSet> {
    check_lambda(lambda)?;
    let bits = BitGrid::from_iter(map.height, map.width, map.values.iter().map(|&p| includes(p, lambda)));
    Ok(PredictionSet { bits, lambda })
}

/// `|set ∩ mask|`.
pub fn intersect_count(set: &PredictionSet, mask: &DefectMask) -> Result<usize> {
    if set.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            left: set.dims(),
            right: mask.dims(),
        });
    }
    Ok(set.bits.intersection_count(&mask.bits))
}

/// Mean over records of the fraction of pixels marked defective.
pub fn defect_coverage_ratio(records: &[CalibrationRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let total: f64 = records
        .iter()
        .map(|r| r.mask.defect_count() as f64 / r.mask.len() as f64)
        .sum();
    Ok(total / records.len() as f64)
}
