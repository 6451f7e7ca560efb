//! Exact sampling from a Bingham distribution by rejection from an
//! angular central Gaussian (ACG) envelope, after Kent, Ganeiber and
//! Mardia.
//!
//! In the frame of `D` write `aᵢ = −λᵢ ≥ 0`. Proposals are normalized
//! Gaussian vectors with covariance `diag(b / (b + 2aᵢ))`, where `b` solves
//! `Σ 1/(b + 2aᵢ) = 1`; with `t = Σ aᵢ yᵢ²` a proposal is accepted with
//! probability `exp(−t) (1 + 2t/b)² / M`, `M = exp(−(4 − b)/2) (4/b)²`.
//!
//! Randomness comes from ChaCha8 seeded with the 64-bit user seed. Draws are
//! produced in fixed-size blocks, block `k` on stream `k`, so a batch does
//! not depend on how many threads produced it.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::BinghamParams;
use crate::error::{BinghamError, Result};
use crate::quaternion::{delta_q, UnitQuaternion};

/// Accepted draws per random stream.
pub const BLOCK_SIZE: usize = 4096;

/// Proposals after which the acceptance rate is checked.
pub const ENVELOPE_WINDOW: u64 = 100_000;

/// Minimum acceptance rate tolerated over [`ENVELOPE_WINDOW`] proposals.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// Number of equal-width bins over `[0, π]` in [`delta_q_stats`].
pub const HISTOGRAM_BINS: usize = 36;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    /// Unit quaternions on the hemisphere `w ≥ 0`.
    pub quaternions: Vec<UnitQuaternion>,
    pub acceptance_rate: f64,
    pub seed: u64,
}

/// Envelope constants for one distribution.
#[derive(Debug, Clone)]
pub struct BinghamSampler {
    d: Matrix4<f64>,
    neg_lambda: Vector4<f64>,
    proposal_scale: Vector4<f64>,
    b: f64,
    ln_m: f64,
}

/// Root of `Σ 1/(b − 2λᵢ) = 1` on `(0, 4]` for canonical `λ`.
pub fn envelope_b(lambda: &Vector4<f64>) -> f64 {
    let excess = |b: f64| lambda.iter().map(|l| 1.0 / (b - 2.0 * l)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0f64, 4.0f64);
    if excess(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl BinghamSampler {
    pub fn new(p: &BinghamParams) -> Self {
        let b = envelope_b(p.lambda());
        BinghamSampler {
            d: *p.d(),
            neg_lambda: -p.lambda(),
            proposal_scale: p.lambda().map(|l| (b / (b - 2.0 * l)).sqrt()),
            b,
            ln_m: -(4.0 - b) / 2.0 + 2.0 * (4.0 / b).ln(),
        }
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Log of the rejection bound `M`.
    pub fn ln_bound(&self) -> f64 {
        self.ln_m
    }

    /// One accepted draw, returned on the canonical hemisphere, together
    /// with the number of proposals it took.
    fn draw(&self, rng: &mut ChaCha8Rng) -> (UnitQuaternion, u64) {
        let mut proposals = 0;
        loop {
            proposals += 1;
            let z = Vector4::from_fn(|i, _| self.proposal_scale[i] * rng.sample::<f64, _>(StandardNormal));
            let norm = z.norm();
            if !(norm > 0.0) {
                continue;
            }
            let y = z / norm;
            let t = y.component_mul(&y).dot(&self.neg_lambda);
            let log_ratio = -t + 2.0 * (1.0 + 2.0 * t / self.b).ln() - self.ln_m;
            let u: f64 = rng.random();
            if u.ln() < log_ratio {
                let q = UnitQuaternion::from_vector(&(self.d * y))
                    .expect("rotated unit vector has unit norm");
                return (q.canonical_hemisphere(), proposals);
            }
        }
    }

    fn block(&self, seed: u64, stream: u64, count: usize) -> Result<(Vec<UnitQuaternion>, u64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut out = Vec::with_capacity(count);
        let mut proposals = 0u64;
        let mut checked = false;
        while out.len() < count {
            let (q, k) = self.draw(&mut rng);
            proposals += k;
            out.push(q);
            if !checked && proposals >= ENVELOPE_WINDOW {
                checked = true;
                let rate = out.len() as f64 / proposals as f64;
                if rate < MIN_ACCEPTANCE {
                    return Err(BinghamError::EnvelopeFailure { rate, proposals });
                }
            }
        }
        Ok((out, proposals))
    }

    /// `n` independent draws; identical for identical `(n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(BinghamError::invalid("sample count must be at least 1"));
        }
        let blocks: Vec<(u64, usize)> = (0..n.div_ceil(BLOCK_SIZE))
            .map(|k| (k as u64, BLOCK_SIZE.min(n - k * BLOCK_SIZE)))
            .collect();
        let parts = blocks
            .par_iter()
            .map(|&(stream, count)| self.block(seed, stream, count))
            .collect::<Result<Vec<_>>>()?;
        let proposals: u64 = parts.iter().map(|(_, p)| p).sum();
        let quaternions: Vec<UnitQuaternion> = parts.into_iter().flat_map(|(q, _)| q).collect();
        Ok(SampleBatch {
            acceptance_rate: quaternions.len() as f64 / proposals as f64,
            quaternions,
            seed,
        })
    }
}

/// `n` draws from `p`.
pub fn sample(p: &BinghamParams, n: usize, seed: u64) -> Result<SampleBatch> {
    BinghamSampler::new(p).sample(n, seed)
}

/// `n` points uniform on S³ from normalized Gaussian vectors.
pub fn sample_uniform(n: usize, seed: u64) -> Vec<UnitQuaternion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(q) = UnitQuaternion::from_vector(&v) {
            out.push(q);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins on `[0, π]`; the last bin is closed.
    pub fn angles(values: &[f64], bins: usize) -> Self {
        let width = PI / bins as f64;
        let mut counts = vec![0u64; bins];
        for v in values {
            let k = ((v / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram {
            bin_edges: (0..=bins).map(|k| k as f64 * width).collect(),
            counts,
        }
    }

    /// Index of the most populated bin; ties go to the smaller angle.
    pub fn peak(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|c| *c == max).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaQStats {
    pub mean: f64,
    pub std_error: f64,
    pub histogram: Histogram,
}

/// Summarizes `ΔQ(s, q_gt)` over a batch of samples.
pub fn delta_q_summary(samples: &[UnitQuaternion], q_gt: &UnitQuaternion) -> DeltaQStats {
    let angles: Vec<f64> = samples.iter().map(|s| delta_q(s, q_gt)).collect();
    let n = angles.len() as f64;
    let mean = angles.iter().sum::<f64>() / n;
    let var = angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    DeltaQStats {
        mean,
        std_error: (var / n).sqrt(),
        histogram: Histogram::angles(&angles, HISTOGRAM_BINS),
    }
}

/// Mean and histogram of `ΔQ` between `n` draws from `p` and `q_gt`.
pub fn delta_q_stats(
    p: &BinghamParams,
    q_gt: &UnitQuaternion,
    n: usize,
    seed: u64,
) -> Result<DeltaQStats> {
    let batch = sample(p, n, seed)?;
    Ok(delta_q_summary(&batch.quaternions, q_gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::mode;
    use crate::quaternion::Quaternion;

    fn params(l: [f64; 4]) -> BinghamParams {
        BinghamParams::with_lambda(Vector4::from(l)).unwrap()
    }

    #[test]
    fn envelope_root() {
        assert_eq!(envelope_b(&Vector4::zeros()), 4.0);
        let l = Vector4::new(0.0, -5.0, -20.0, -40.0);
        let b = envelope_b(&l);
        let sum: f64 = l.iter().map(|v| 1.0 / (b - 2.0 * v)).sum();
        assert!((sum - 1.0).abs() < 1e-12 && b > 0.0 && b < 4.0);
    }

    #[test]
    fn bound_dominates_target() {
        // exp(−t)(1 + 2t/b)² ≤ M on t ≥ 0
        let s = BinghamSampler::new(&params([0.0, -3.0, -9.0, -50.0]));
        for k in 0..2000 {
            let t = k as f64 * 0.05;
            let lr = -t + 2.0 * (1.0 + 2.0 * t / s.b()).ln() - s.ln_bound();
            assert!(lr <= 1e-12, "t = {t}: {lr}");
        }
    }

    #[test]
    fn deterministic_and_canonical() {
        let p = params([0.0, -2.0, -4.0, -8.0]);
        let a = sample(&p, 5000, 7).unwrap();
        let b = sample(&p, 5000, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.quaternions, sample(&p, 5000, 8).unwrap().quaternions);
        assert_eq!(a.quaternions.len(), 5000);
        for q in &a.quaternions {
            assert!((q.quaternion().norm() - 1.0).abs() < 1e-9);
            assert!(q.quaternion().w >= 0.0);
        }
        assert!(a.acceptance_rate > 0.1 && a.acceptance_rate <= 1.0);
    }

    #[test]
    fn prefix_is_stable_across_sizes() {
        let p = params([0.0, -1.0, -1.0, -6.0]);
        let small = sample(&p, 100, 3).unwrap();
        let big = sample(&p, 9000, 3).unwrap();
        assert_eq!(small.quaternions[..], big.quaternions[..100]);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(sample(&BinghamParams::uniform(), 0, 0).is_err());
    }

    #[test]
    fn uniform_scatter_is_isotropic() {
        let batch = sample(&BinghamParams::uniform(), 100_000, 11).unwrap();
        let n = batch.quaternions.len() as f64;
        for i in 0..4 {
            for j in 0..4 {
                let vals: Vec<f64> = batch
                    .quaternions
                    .iter()
                    .map(|q| q.to_vector()[i] * q.to_vector()[j])
                    .collect();
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let expect = if i == j { 0.25 } else { 0.0 };
                assert!((mean - expect).abs() < 3.0 * (var / n).sqrt() + 1e-12, "({i},{j}) {mean}");
            }
        }
    }

    #[test]
    fn concentrated_histogram_peaks_low() {
        let p = params([0.0, -200.0, -200.0, -200.0]);
        let stats = delta_q_stats(&p, &mode(&p), 20_000, 1).unwrap();
        assert!(stats.mean < 0.2, "{}", stats.mean);
        assert_eq!(stats.histogram.bin_edges.len(), HISTOGRAM_BINS + 1);
        assert_eq!(stats.histogram.counts.iter().sum::<u64>(), 20_000);
        // ΔQ has a 3-D volume factor, so the density vanishes at zero and
        // peaks near 2√2/√(−2λ); it falls in the first bin once λ ≲ −700.
        let p = params([0.0, -1000.0, -1200.0, -1500.0]);
        let stats = delta_q_stats(&p, &mode(&p), 20_000, 2).unwrap();
        assert_eq!(stats.histogram.peak(), 0);
    }

    #[test]
    fn sharper_means_closer() {
        let sharp = params([0.0, -50.0, -50.0, -50.0]);
        let broad = params([0.0, -5.0, -5.0, -5.0]);
        let a = delta_q_stats(&sharp, &mode(&sharp), 10_000, 4).unwrap();
        let b = delta_q_stats(&broad, &mode(&broad), 10_000, 4).unwrap();
        assert!(a.mean < b.mean);
    }

    #[test]
    fn hemisphere_preserves_rotation() {
        let q = Quaternion::new(-0.3, 0.5, -0.1, 0.8).normalize().unwrap();
        let c = q.canonical_hemisphere();
        assert_eq!(c.canonical_hemisphere(), c);
        assert!((c.to_rotation_matrix() - q.to_rotation_matrix()).amax() < 1e-15);
    }
}
