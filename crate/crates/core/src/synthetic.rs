//! Exchangeable synthetic stand-in for a segmentation model's output.
//!
//! Each sample's ground truth is a union of disks; its probability map is
//! `clamp(background + (signal - background) * mask + N(0, noise_sigma^2))`.
//! Every sample is a pure function of the parameters and its stream seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CalibrationRecord, DefectMask, ProbabilityMap};

/// How the per-sample random stream is derived from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// ChaCha8 keyed by the master seed, with the sample index as stream id.
    Stream,
    /// ChaCha8 keyed by a SplitMix64 mix of master seed and sample index.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of disks per sample.
    pub blob_count: (u32, u32),
    /// Inclusive range of disk radii, in pixels.
    pub blob_radius: (f64, f64),
    pub signal: f64,
    pub noise_sigma: f64,
    pub background: f64,
    pub seed_policy: SeedPolicy,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            blob_count: (1, 3),
            blob_radius: (3.0, 8.0),
            signal: 0.9,
            noise_sigma: 0.15,
            background: 0.1,
            seed_policy: SeedPolicy::Stream,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.height == 0 || self.width == 0 {
            return bad("height and width must be at least 1");
        }
        if self.blob_count.0 > self.blob_count.1 {
            return bad("blob count range is inverted");
        }
        let (rmin, rmax) = self.blob_radius;
        if !(rmin.is_finite() && rmax.is_finite() && rmin > 0.0 && rmin <= rmax) {
            return bad("blob radius range must satisfy 0 < min <= max");
        }
        if !(self.signal > 0.0 && self.signal <= 1.0) {
            return bad("signal must lie in (0, 1]");
        }
        if !(self.background >= 0.0 && self.background < 1.0) {
            return bad("background must lie in [0, 1)");
        }
        if self.signal <= self.background {
            return bad("signal must exceed background");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise sigma must be finite and non-negative");
        }
        Ok(())
    }

    /// Expected defect fraction for a single fully-contained disk per sample
    /// with radius uniform on `blob_radius`.
    pub fn expected_single_disk_coverage(&self) -> f64 {
        let (a, b) = self.blob_radius;
        std::f64::consts::PI * (a * a + a * b + b * b) / 3.0 / (self.height * self.width) as f64
    }
}

/// Identifies the random stream of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed {
    pub master: u64,
    pub index: u64,
}

impl StreamSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    fn rng(self, policy: SeedPolicy) -> ChaCha8Rng {
        match policy {
            SeedPolicy::Stream => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.master);
                rng.set_stream(self.index);
                rng
            }
            SeedPolicy::Mixed => ChaCha8Rng::seed_from_u64(derive_seed(self.master, self.index)),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `index` under `seed`; used for trials, splits and datasets.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

fn centre(rng: &mut ChaCha8Rng, extent: usize, radius: f64) -> f64 {
    let extent = extent as f64;
    if extent > 2.0 * radius {
        rng.random_range(radius..=extent - radius)
    } else {
        extent / 2.0
    }
}

pub fn generate_sample(params: &GeneratorParams, seed: StreamSeed) -> Result<CalibrationRecord> {
    params.validate()?;
    let mut rng = seed.rng(params.seed_policy);
    let (h, w) = (params.height, params.width);

    let count = rng.random_range(params.blob_count.0..=params.blob_count.1);
    let disks: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let r = rng.random_range(params.blob_radius.0..=params.blob_radius.1);
            let cy = centre(&mut rng, h, r);
            let cx = centre(&mut rng, w, r);
            (cy, cx, r)
        })
        .collect();
    let mask = DefectMask::from_fn(h, w, |row, col| {
        let (y, x) = (row as f64 + 0.5, col as f64 + 0.5);
        disks
            .iter()
            .any(|&(cy, cx, r)| (y - cy).powi(2) + (x - cx).powi(2) <= r * r)
    })?;

    let lift = params.signal - params.background;
    let values: Vec<f64> = mask
        .iter()
        .map(|defect| {
            let base = params.background + if defect { lift } else { 0.0 };
            let noise = if params.noise_sigma > 0.0 {
                params.noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            (base + noise).clamp(0.0, 1.0)
        })
        .collect();
    let map = ProbabilityMap::from_f64(h, w, &values)?;
    CalibrationRecord::new(format!("sample-{:06}", seed.index), map, mask)
}

/// `n` independent samples; sample `i` uses stream `(master_seed, i)`.
pub fn generate_dataset(params: &GeneratorParams, n: usize, master_seed: u64) -> Result<Vec<CalibrationRecord>> {
    params.validate()?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| generate_sample(params, StreamSeed::new(master_seed, i)))
        .collect()
}
