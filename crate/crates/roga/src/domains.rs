//! Synthetic multi-domain binary-classification datasets with controllable
//! domain-specific structure, the leave-one-domain-out protocol, and a
//! within-epoch batch sampler.
//!
//! Every generator is a pure function of its descriptor: the same
//! descriptor reproduces the dataset bit-for-bit. Per-domain random streams
//! are derived by the caller as `base_seed ⊕ domain_id` (see
//! [`crate::rng`]); generators receive the already-derived stream seed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DomainBatch, Matrix};
use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Everything needed to regenerate a domain dataset bitwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorDescriptor {
    /// Two interleaved half-circles, rotated per domain.
    RotatedMoons {
        domain_id: u32,
        /// Rotation of the whole layout, radians.
        angle: f64,
        n: usize,
        noise_sd: f64,
        seed: u64,
        standardized: bool,
    },
    /// Gaussian blobs with one domain-invariant coordinate and one
    /// spurious coordinate whose predictive sign is domain-specific.
    SpuriousBlobs {
        domain_id: u32,
        core_sep: f64,
        spur_strength: f64,
        spur_sign: i8,
        n: usize,
        d_noise: usize,
        seed: u64,
        standardized: bool,
    },
}

impl GeneratorDescriptor {
    pub fn domain_id(&self) -> u32 {
        match *self {
            GeneratorDescriptor::RotatedMoons { domain_id, .. } => domain_id,
            GeneratorDescriptor::SpuriousBlobs { domain_id, .. } => domain_id,
        }
    }
}

/// A fully materialized domain dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    features: Matrix,
    labels: Vec<u8>,
    domain_id: u32,
    descriptor: GeneratorDescriptor,
}

impl DomainDataset {
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn domain_id(&self) -> u32 {
        self.domain_id
    }

    pub fn descriptor(&self) -> &GeneratorDescriptor {
        &self.descriptor
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The whole dataset as one batch (for evaluation).
    pub fn to_batch(&self) -> DomainBatch {
        DomainBatch::new(self.features.clone(), self.labels.clone(), self.domain_id)
            .expect("dataset is a valid batch")
    }

    /// A batch holding the given example indices, in order.
    pub fn batch_of(&self, indices: &[usize]) -> DomainBatch {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        DomainBatch::new(self.features.select_rows(indices), labels, self.domain_id)
            .expect("selected rows form a valid batch")
    }
}

/// The classic two-interleaved-half-circles layout, rotated by `angle`,
/// labels by half-circle membership, isotropic Gaussian feature noise of
/// standard deviation `noise_sd` added after rotation.
///
/// Canonical (angle 0) layout: label 0 on the upper unit half-circle
/// centered at the origin; label 1 on the lower half-circle centered at
/// `(1, 0.5)`. Points are evenly spaced along each arc; labels balance to
/// within one example of `n/2`.
pub fn make_rotated_moons(
    angle: f64,
    n: usize,
    noise_sd: f64,
    seed: u64,
    domain_id: u32,
) -> Result<DomainDataset> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, got {n}")));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::InvalidInput(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    if !angle.is_finite() {
        return Err(Error::InvalidInput("angle must be finite".into()));
    }

    let n_outer = n.div_ceil(2);
    let n_inner = n / 2;
    let mut rng = Rng64::new(seed);
    let (cos_a, sin_a) = (angle.cos(), angle.sin());

    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    let arc = |k: usize, m: usize| {
        if m <= 1 {
            0.0
        } else {
            std::f64::consts::PI * k as f64 / (m - 1) as f64
        }
    };
    for k in 0..n_outer {
        let t = arc(k, n_outer);
        let (x, y) = (t.cos(), t.sin());
        let (rx, ry) = (x * cos_a - y * sin_a, x * sin_a + y * cos_a);
        data.push(rx + noise_sd * rng.next_normal());
        data.push(ry + noise_sd * rng.next_normal());
        labels.push(0);
    }
    for k in 0..n_inner {
        let t = arc(k, n_inner);
        let (x, y) = (1.0 - t.cos(), 0.5 - t.sin());
        let (rx, ry) = (x * cos_a - y * sin_a, x * sin_a + y * cos_a);
        data.push(rx + noise_sd * rng.next_normal());
        data.push(ry + noise_sd * rng.next_normal());
        labels.push(1);
    }

    Ok(DomainDataset {
        features: Matrix::new(n, 2, data)?,
        labels,
        domain_id,
        descriptor: GeneratorDescriptor::RotatedMoons {
            domain_id,
            angle,
            n,
            noise_sd,
            seed,
            standardized: false,
        },
    })
}

/// Gaussian blob pair where feature 0 is domain-invariant
/// (`core_sep·(2y−1)` plus unit noise), feature 1 is spurious
/// (`spur_sign·spur_strength·(2y−1)` plus unit noise, with the sign chosen
/// per domain), and `d_noise` further coordinates are pure unit noise.
/// A model that leans on feature 1 fails on a domain with the opposite
/// sign.
pub fn make_spurious_blobs(
    core_sep: f64,
    spur_strength: f64,
    spur_sign: i8,
    n: usize,
    d_noise: usize,
    seed: u64,
    domain_id: u32,
) -> Result<DomainDataset> {
    if !(core_sep.is_finite() && core_sep > 0.0) {
        return Err(Error::InvalidInput(format!("core_sep must be > 0, got {core_sep}")));
    }
    if !(spur_strength.is_finite() && spur_strength >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "spur_strength must be >= 0 (direction lives in spur_sign), got {spur_strength}"
        )));
    }
    if spur_sign != 1 && spur_sign != -1 {
        return Err(Error::InvalidInput(format!("spur_sign must be ±1, got {spur_sign}")));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, got {n}")));
    }

    let d = 2 + d_noise;
    let mut rng = Rng64::new(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let s = f64::from(2 * i32::from(y) - 1);
        data.push(core_sep * s + rng.next_normal());
        data.push(f64::from(spur_sign) * spur_strength * s + rng.next_normal());
        for _ in 0..d_noise {
            data.push(rng.next_normal());
        }
        labels.push(y);
    }

    Ok(DomainDataset {
        features: Matrix::new(n, d, data)?,
        labels,
        domain_id,
        descriptor: GeneratorDescriptor::SpuriousBlobs {
            domain_id,
            core_sep,
            spur_strength,
            spur_sign,
            n,
            d_noise,
            seed,
            standardized: false,
        },
    })
}

/// Rescales every feature to zero mean, unit variance over this dataset.
/// Features whose standard deviation is below `1e-12` are centered but not
/// rescaled. Idempotent: an already-standardized dataset is returned
/// unchanged so the descriptor keeps describing the data bitwise.
pub fn standardize(ds: &DomainDataset) -> DomainDataset {
    let already = match ds.descriptor {
        GeneratorDescriptor::RotatedMoons { standardized, .. } => standardized,
        GeneratorDescriptor::SpuriousBlobs { standardized, .. } => standardized,
    };
    if already {
        return ds.clone();
    }

    let n = ds.features.rows();
    let d = ds.features.cols();
    let mut out = ds.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| ds.features.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| {
                let c = ds.features.get(i, j) - mean;
                c * c
            })
            .sum::<f64>()
            / n as f64;
        let sd = var.sqrt();
        let scale = if sd < 1e-12 { 1.0 } else { sd };
        for i in 0..n {
            let v = (ds.features.get(i, j) - mean) / scale;
            out.features.data_mut()[i * d + j] = v;
        }
    }
    match &mut out.descriptor {
        GeneratorDescriptor::RotatedMoons { standardized, .. } => *standardized = true,
        GeneratorDescriptor::SpuriousBlobs { standardized, .. } => *standardized = true,
    }
    out
}

/// Rebuilds the dataset a descriptor describes, bit-for-bit.
pub fn regenerate(descriptor: &GeneratorDescriptor) -> Result<DomainDataset> {
    let (raw, standardized) = match *descriptor {
        GeneratorDescriptor::RotatedMoons {
            domain_id,
            angle,
            n,
            noise_sd,
            seed,
            standardized,
        } => (make_rotated_moons(angle, n, noise_sd, seed, domain_id)?, standardized),
        GeneratorDescriptor::SpuriousBlobs {
            domain_id,
            core_sep,
            spur_strength,
            spur_sign,
            n,
            d_noise,
            seed,
            standardized,
        } => (
            make_spurious_blobs(core_sep, spur_strength, spur_sign, n, d_noise, seed, domain_id)?,
            standardized,
        ),
    };
    Ok(if standardized { standardize(&raw) } else { raw })
}

/// Which domains train and which one is held out for evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub train_domain_ids: Vec<u32>,
    pub held_out_domain_id: u32,
}

impl SplitPlan {
    pub fn validate(&self, available: &[u32]) -> Result<()> {
        if self.train_domain_ids.len() < 2 {
            return Err(Error::Config(format!(
                "split needs at least 2 training domains, got {}",
                self.train_domain_ids.len()
            )));
        }
        if self.train_domain_ids.contains(&self.held_out_domain_id) {
            return Err(Error::Config(format!(
                "held-out domain {} appears in the training set",
                self.held_out_domain_id
            )));
        }
        let mut seen = Vec::new();
        for id in self.train_domain_ids.iter().chain([&self.held_out_domain_id]) {
            if !available.contains(id) {
                return Err(Error::Config(format!("split references unknown domain {id}")));
            }
            if seen.contains(id) {
                return Err(Error::Config(format!("split repeats domain {id}")));
            }
            seen.push(*id);
        }
        Ok(())
    }
}

/// One split per domain, each holding out exactly that domain and training
/// on all the others. Domain ids are `0..domain_count`.
pub fn leave_one_out_splits(domain_count: usize) -> Result<Vec<SplitPlan>> {
    if domain_count < 3 {
        return Err(Error::InvalidInput(format!(
            "leave-one-domain-out needs at least 3 domains, got {domain_count}"
        )));
    }
    Ok((0..domain_count as u32)
        .map(|held| SplitPlan {
            train_domain_ids: (0..domain_count as u32).filter(|&i| i != held).collect(),
            held_out_domain_id: held,
        })
        .collect())
}

/// Draws one batch per domain, sampling without replacement within an
/// epoch pass over each domain: indices are consumed from a per-domain
/// permutation that is reshuffled whenever fewer than `batch_size` remain.
#[derive(Debug)]
pub struct BatchSampler<'a> {
    datasets: &'a [DomainDataset],
    batch_size: usize,
    orders: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    rng: Rng64,
}

impl<'a> BatchSampler<'a> {
    pub fn new(datasets: &'a [DomainDataset], batch_size: usize, rng: Rng64) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::Config("no domains to sample from".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for ds in datasets {
            if batch_size > ds.len() {
                return Err(Error::Config(format!(
                    "batch_size {} exceeds domain {} size {}",
                    batch_size,
                    ds.domain_id(),
                    ds.len()
                )));
            }
        }
        let orders = datasets.iter().map(|ds| (0..ds.len()).collect()).collect();
        let cursors = datasets.iter().map(|ds| ds.len()).collect(); // force reshuffle on first draw
        Ok(Self { datasets, batch_size, orders, cursors, rng })
    }

    /// One batch per domain, in the order the datasets were supplied.
    pub fn next_batches(&mut self) -> Vec<DomainBatch> {
        let mut batches = Vec::with_capacity(self.datasets.len());
        for (i, ds) in self.datasets.iter().enumerate() {
            if self.cursors[i] + self.batch_size > ds.len() {
                self.rng.shuffle(&mut self.orders[i]);
                self.cursors[i] = 0;
            }
            let lo = self.cursors[i];
            self.cursors[i] += self.batch_size;
            batches.push(ds.batch_of(&self.orders[i][lo..lo + self.batch_size]));
        }
        batches
    }
}

/// Writes a dataset as CSV with header `f0..f{d-1},label,domain_id`.
/// Floats use Rust's shortest round-trip formatting, so reading the file
/// back reproduces the features bit-for-bit.
pub fn write_dataset_csv(ds: &DomainDataset, path: &Path) -> Result<()> {
    let d = ds.features().cols();
    let mut out = String::new();
    for j in 0..d {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label,domain_id\n");
    for i in 0..ds.len() {
        for j in 0..d {
            let _ = write!(out, "{},", ds.features().get(i, j));
        }
        let _ = writeln!(out, "{},{}", ds.labels()[i], ds.domain_id());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a dataset CSV written by [`write_dataset_csv`] back into a batch.
pub fn read_dataset_csv(path: &Path) -> Result<DomainBatch> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty dataset file", path.display())))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[columns.len() - 2] != "label" || columns[columns.len() - 1] != "domain_id" {
        return Err(Error::InvalidInput(format!(
            "{}: expected header f0..f{{d-1}},label,domain_id",
            path.display()
        )));
    }
    let d = columns.len() - 2;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut domain_id = 0u32;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::InvalidInput(format!(
                "{}:{}: expected {} fields, got {}",
                path.display(),
                lineno + 2,
                d + 2,
                fields.len()
            )));
        }
        for f in &fields[..d] {
            data.push(f.parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}:{}: bad feature {f:?}: {e}", path.display(), lineno + 2))
            })?);
        }
        labels.push(fields[d].parse::<u8>().map_err(|e| {
            Error::InvalidInput(format!("{}:{}: bad label: {e}", path.display(), lineno + 2))
        })?);
        domain_id = fields[d + 1].parse::<u32>().map_err(|e| {
            Error::InvalidInput(format!("{}:{}: bad domain_id: {e}", path.display(), lineno + 2))
        })?;
    }
    let rows = labels.len();
    DomainBatch::new(Matrix::new(rows, d, data)?, labels, domain_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balance(labels: &[u8]) -> (usize, usize) {
        let ones = labels.iter().filter(|&&y| y == 1).count();
        (labels.len() - ones, ones)
    }

    #[test]
    fn moons_canonical_layout_without_noise() {
        let ds = make_rotated_moons(0.0, 40, 0.0, 7, 0).unwrap();
        for i in 0..ds.len() {
            let (x, y) = (ds.features().get(i, 0), ds.features().get(i, 1));
            if ds.labels()[i] == 0 {
                assert!((x * x + y * y - 1.0).abs() < 1e-12, "outer point off circle");
                assert!(y >= -1e-12);
            } else {
                let (cx, cy) = (x - 1.0, y - 0.5);
                assert!((cx * cx + cy * cy - 1.0).abs() < 1e-12, "inner point off circle");
                assert!(y <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn moons_same_seed_bitwise_identical() {
        let a = make_rotated_moons(0.7, 101, 0.3, 5, 2).unwrap();
        let b = make_rotated_moons(0.7, 101, 0.3, 5, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moons_rotation_by_pi_flips_means() {
        let a = make_rotated_moons(0.0, 100, 0.0, 1, 0).unwrap();
        let b = make_rotated_moons(std::f64::consts::PI, 100, 0.0, 1, 0).unwrap();
        for j in 0..2 {
            let mean = |ds: &DomainDataset| {
                (0..ds.len()).map(|i| ds.features().get(i, j)).sum::<f64>() / ds.len() as f64
            };
            assert!((mean(&a) + mean(&b)).abs() < 1e-9);
        }
    }

    #[test]
    fn moons_labels_balanced() {
        for n in [10, 11, 2, 3] {
            let ds = make_rotated_moons(0.2, n, 0.1, 3, 0).unwrap();
            let (zeros, ones) = balance(ds.labels());
            assert!(zeros.abs_diff(ones) <= 1, "n={n}: {zeros}/{ones}");
        }
    }

    #[test]
    fn blobs_spurious_strength_zero_decorrelates_feature_one() {
        let ds = make_spurious_blobs(2.0, 0.0, 1, 2000, 0, 11, 0).unwrap();
        let n = ds.len() as f64;
        let mean_f1 = (0..ds.len()).map(|i| ds.features().get(i, 1)).sum::<f64>() / n;
        let mean_y = ds.labels().iter().map(|&y| f64::from(y)).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_f = 0.0;
        let mut var_y = 0.0;
        for i in 0..ds.len() {
            let cf = ds.features().get(i, 1) - mean_f1;
            let cy = f64::from(ds.labels()[i]) - mean_y;
            cov += cf * cy;
            var_f += cf * cf;
            var_y += cy * cy;
        }
        let corr = cov / (var_f.sqrt() * var_y.sqrt());
        assert!(corr.abs() <= 0.1, "corr {corr}");
    }

    #[test]
    fn blobs_sign_flip_negates_feature_one_correlation() {
        let corr_of = |sign: i8| {
            let ds = make_spurious_blobs(1.0, 2.0, sign, 2000, 0, 13, 0).unwrap();
            let n = ds.len() as f64;
            let mean_f1 = (0..ds.len()).map(|i| ds.features().get(i, 1)).sum::<f64>() / n;
            let mean_y = 0.5;
            let mut cov = 0.0;
            for i in 0..ds.len() {
                cov += (ds.features().get(i, 1) - mean_f1) * (f64::from(ds.labels()[i]) - mean_y);
            }
            cov
        };
        let plus = corr_of(1);
        let minus = corr_of(-1);
        assert!(plus > 0.0 && minus < 0.0);
    }

    #[test]
    fn blobs_core_feature_alone_classifies_well() {
        // Sign of feature 0 is the Bayes rule for this construction; the
        // Gaussian overlap at core_sep = 2 gives accuracy Φ(2) ≈ 0.977.
        let ds = make_spurious_blobs(2.0, 3.0, 1, 2000, 4, 17, 0).unwrap();
        let correct = (0..ds.len())
            .filter(|&i| (ds.features().get(i, 0) >= 0.0) == (ds.labels()[i] == 1))
            .count();
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc > 0.9, "probe accuracy {acc}");
    }

    #[test]
    fn blobs_class_conditional_mean_gap() {
        let core_sep = 1.5;
        let ds = make_spurious_blobs(core_sep, 3.0, 1, 4000, 2, 23, 0).unwrap();
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for i in 0..ds.len() {
            let y = ds.labels()[i] as usize;
            sums[y] += ds.features().get(i, 0);
            counts[y] += 1;
        }
        let gap = sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64;
        assert!((gap - 2.0 * core_sep).abs() <= 0.05 * 2.0 * core_sep, "gap {gap}");
    }

    #[test]
    fn blobs_rejects_bad_arguments() {
        assert!(make_spurious_blobs(0.0, 1.0, 1, 10, 0, 1, 0).is_err());
        assert!(make_spurious_blobs(1.0, -1.0, 1, 10, 0, 1, 0).is_err());
        assert!(make_spurious_blobs(1.0, 1.0, 0, 10, 0, 1, 0).is_err());
        assert!(make_spurious_blobs(1.0, 1.0, 1, 1, 0, 1, 0).is_err());
    }

    #[test]
    fn standardize_zero_mean_unit_variance() {
        let ds = make_spurious_blobs(1.0, 3.0, 1, 500, 3, 29, 0).unwrap();
        let std = standardize(&ds);
        let n = std.len() as f64;
        for j in 0..std.features().cols() {
            let mean = (0..std.len()).map(|i| std.features().get(i, j)).sum::<f64>() / n;
            let var = (0..std.len())
                .map(|i| (std.features().get(i, j) - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!(mean.abs() < 1e-12, "feature {j} mean {mean}");
            assert!((var - 1.0).abs() < 1e-9, "feature {j} var {var}");
        }
        // Idempotent.
        assert_eq!(standardize(&std), std);
    }

    #[test]
    fn descriptors_regenerate_bitwise() {
        let raw = make_rotated_moons(1.1, 64, 0.2, 31, 3).unwrap();
        assert_eq!(regenerate(raw.descriptor()).unwrap(), raw);
        let std = standardize(&make_spurious_blobs(1.0, 3.0, -1, 128, 8, 37, 2).unwrap());
        assert_eq!(regenerate(std.descriptor()).unwrap(), std);
    }

    #[test]
    fn leave_one_out_covers_every_domain() {
        let plans = leave_one_out_splits(4).unwrap();
        assert_eq!(plans.len(), 4);
        let mut held: Vec<u32> = plans.iter().map(|p| p.held_out_domain_id).collect();
        held.sort_unstable();
        assert_eq!(held, vec![0, 1, 2, 3]);
        for p in &plans {
            assert_eq!(p.train_domain_ids.len(), 3);
            assert!(!p.train_domain_ids.contains(&p.held_out_domain_id));
        }
        assert!(leave_one_out_splits(2).is_err());
    }

    #[test]
    fn split_plan_validation() {
        let ok = SplitPlan { train_domain_ids: vec![0, 1, 2], held_out_domain_id: 3 };
        assert!(ok.validate(&[0, 1, 2, 3]).is_ok());
        let overlap = SplitPlan { train_domain_ids: vec![0, 1], held_out_domain_id: 1 };
        assert!(overlap.validate(&[0, 1, 2]).is_err());
        let unknown = SplitPlan { train_domain_ids: vec![0, 9], held_out_domain_id: 1 };
        assert!(unknown.validate(&[0, 1, 2]).is_err());
        let too_few = SplitPlan { train_domain_ids: vec![0], held_out_domain_id: 1 };
        assert!(too_few.validate(&[0, 1]).is_err());
    }

    fn tiny_datasets(sizes: &[usize]) -> Vec<DomainDataset> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| make_spurious_blobs(1.0, 1.0, 1, n, 0, 41 + i as u64, i as u32).unwrap())
            .collect()
    }

    #[test]
    fn sampler_full_batch_is_permutation() {
        let ds = tiny_datasets(&[10]);
        let mut sampler = BatchSampler::new(&ds, 10, Rng64::new(1)).unwrap();
        let batch = &sampler.next_batches()[0];
        // Same multiset of rows as the dataset.
        let mut seen: Vec<Vec<u64>> = (0..batch.len())
            .map(|i| batch.features().row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut expect: Vec<Vec<u64>> = (0..ds[0].len())
            .map(|i| ds[0].features().row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        seen.sort();
        expect.sort();
        assert_eq!(seen, expect);
    }

    #[test]
    fn sampler_is_deterministic() {
        let ds = tiny_datasets(&[16, 16]);
        let mut a = BatchSampler::new(&ds, 4, Rng64::new(5)).unwrap();
        let mut b = BatchSampler::new(&ds, 4, Rng64::new(5)).unwrap();
        for _ in 0..10 {
            assert_eq!(a.next_batches(), b.next_batches());
        }
    }

    #[test]
    fn sampler_visits_every_index_once_per_epoch() {
        let ds = tiny_datasets(&[12, 12]);
        let mut sampler = BatchSampler::new(&ds, 4, Rng64::new(6)).unwrap();
        for _epoch in 0..3 {
            let mut seen: Vec<Vec<u64>> = vec![Vec::new(); 2];
            for _step in 0..3 {
                for (d, batch) in sampler.next_batches().iter().enumerate() {
                    for i in 0..batch.len() {
                        seen[d].push(
                            batch.features().row(i)[0].to_bits() ^ batch.features().row(i)[1].to_bits(),
                        );
                    }
                }
            }
            for (d, s) in seen.iter_mut().enumerate() {
                s.sort_unstable();
                let mut expect: Vec<u64> = (0..ds[d].len())
                    .map(|i| ds[d].features().row(i)[0].to_bits() ^ ds[d].features().row(i)[1].to_bits())
                    .collect();
                expect.sort_unstable();
                assert_eq!(*s, expect, "domain {d} not covered exactly once");
            }
        }
    }

    #[test]
    fn sampler_rejects_oversized_batch() {
        let ds = tiny_datasets(&[8]);
        let err = BatchSampler::new(&ds, 9, Rng64::new(1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('9') && msg.contains('8'), "{msg}");
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let ds = standardize(&make_spurious_blobs(1.0, 3.0, -1, 50, 3, 43, 7).unwrap());
        let path = dir.path().join("domain_7.csv");
        write_dataset_csv(&ds, &path).unwrap();
        let batch = read_dataset_csv(&path).unwrap();
        assert_eq!(batch.features(), ds.features());
        assert_eq!(batch.labels(), ds.labels());
        assert_eq!(batch.domain_id(), 7);
    }

    #[test]
    fn csv_reader_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,label,domain_id\nx,0,0\n").unwrap();
        assert!(read_dataset_csv(&path).is_err());
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(read_dataset_csv(&path).is_err());
    }
}
