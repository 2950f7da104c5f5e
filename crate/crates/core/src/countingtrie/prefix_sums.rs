//! Binary-tree (dyadic) mechanism for all prefix sums of `k` sequences.

use crate::candidates::Noise;
use crate::error::{invalid_param, Error, Result};
use crate::mechanisms::{
    floor_log2, gaussian_tail, sum_laplace_tail, NoiseSource, PrivacyBudget,
};

/// Noisy prefix sums of every input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSums {
    /// `sums[i][m - 1]` estimates `seqs[i][0] + … + seqs[i][m - 1]`.
    pub sums: Vec<Vec<f64>>,
    /// Padded length (a power of two).
    pub t: usize,
    /// `⌊log₂ T⌋ + 1`, the number of dyadic levels.
    pub levels: u32,
    pub noise: Noise,
    /// Max error over all prefix sums, holding with probability `1 - β`.
    pub bound: f64,
}

/// Smallest power of two `>= max(1, longest sequence)`.
pub fn padded_length(seqs: &[Vec<i64>]) -> usize {
    seqs.iter().map(Vec::len).max().unwrap_or(0).max(1).next_power_of_two()
}

/// Disjoint dyadic intervals (1-based, inclusive) covering `[1, m]`, largest
/// first. At most `⌊log₂ T⌋ + 1` intervals.
pub fn dyadic_decomposition(m: usize, t: usize) -> Vec<(usize, usize)> {
    assert!(t.is_power_of_two() && m <= t);
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < m {
        let mut s = t;
        while pos % s != 0 || pos + s > m {
            s /= 2;
        }
        out.push((pos + 1, pos + s));
        pos += s;
    }
    out
}

/// Laplace scale `L(⌊log T⌋ + 1)/ε` of each dyadic interval sum.
pub fn laplace_prefix_scale(l1_total: f64, t: usize, epsilon: f64) -> f64 {
    l1_total * (floor_log2(t) + 1) as f64 / epsilon
}

/// `σ = ε⁻¹·√(2·L·Δ·(⌊log T⌋ + 1)·ln(2/δ))`.
pub fn gaussian_prefix_sigma(l1_total: f64, per_seq_cap: f64, t: usize, epsilon: f64, delta: f64) -> f64 {
    (2.0 * l1_total * per_seq_cap * (floor_log2(t) + 1) as f64 * (2.0 / delta).ln()).sqrt() / epsilon
}

fn release(
    seqs: &[Vec<i64>],
    t: usize,
    noise: Noise,
    source: &NoiseSource,
    stream_id: &str,
) -> Result<Vec<Vec<f64>>> {
    let levels = floor_log2(t) + 1;
    seqs.iter()
        .enumerate()
        .map(|(i, seq)| {
            let len = seq.len();
            let mut stream = source.keyed(stream_id, &(i as u64).to_le_bytes());
            // Noise for every dyadic interval inside [1, len], level by level.
            let mut noise_at: Vec<Vec<f64>> = Vec::with_capacity(levels as usize);
            for h in 0..levels {
                let size = t >> h;
                let count = len / size;
                let row = (0..count).map(|_| noise.draw(&mut stream)).collect::<Result<Vec<_>>>()?;
                noise_at.push(row);
            }
            let mut exact = vec![0i64; len + 1];
            for (j, x) in seq.iter().enumerate() {
                exact[j + 1] = exact[j] + x;
            }
            Ok((1..=len)
                .map(|m| {
                    dyadic_decomposition(m, t)
                        .into_iter()
                        .map(|(a, b)| {
                            let size = b - a + 1;
                            let h = floor_log2(t / size) as usize;
                            (exact[b] - exact[a - 1]) as f64 + noise_at[h][(a - 1) / size]
                        })
                        .sum()
                })
                .collect())
        })
        .collect()
}

/// Pure mechanism: Laplace noise on every dyadic interval. `l1_total` bounds
/// the summed L1 change of all sequences between neighbors.
pub fn binary_tree_prefix_sums(
    seqs: &[Vec<i64>],
    l1_total: f64,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    stream_id: &str,
) -> Result<PrefixSums> {
    let t = padded_length(seqs);
    let (noise, bound) = laplace_prefix_parameters(l1_total, seqs.len(), t, budget)?;
    Ok(PrefixSums {
        sums: release(seqs, t, noise, source, stream_id)?,
        t,
        levels: floor_log2(t) + 1,
        noise,
        bound,
    })
}

/// Noise and max-error bound of the pure mechanism on `k` sequences padded
/// to length `t`.
pub fn laplace_prefix_parameters(
    l1_total: f64,
    k: usize,
    t: usize,
    budget: &PrivacyBudget,
) -> Result<(Noise, f64)> {
    if l1_total.is_nan() || l1_total <= 0.0 {
        return Err(invalid_param("prefix-sum sensitivity must be positive"));
    }
    let levels = floor_log2(t) + 1;
    let scale = laplace_prefix_scale(l1_total, t, budget.epsilon);
    let beta = budget.beta / (k.max(1) * t) as f64;
    Ok((
        Noise::Laplace { scale },
        sum_laplace_tail(levels as usize, scale, beta)?,
    ))
}

/// Approximate mechanism: Gaussian noise on every dyadic interval. Each
/// sequence changes by at most `per_seq_cap` in L1, all of them by at most
/// `l1_total`.
pub fn binary_tree_prefix_sums_gaussian(
    seqs: &[Vec<i64>],
    l1_total: f64,
    per_seq_cap: f64,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    stream_id: &str,
) -> Result<PrefixSums> {
    let t = padded_length(seqs);
    let (noise, bound) = gaussian_prefix_parameters(l1_total, per_seq_cap, seqs.len(), t, budget)?;
    Ok(PrefixSums {
        sums: release(seqs, t, noise, source, stream_id)?,
        t,
        levels: floor_log2(t) + 1,
        noise,
        bound,
    })
}

/// Noise and max-error bound of the Gaussian mechanism on `k` sequences
/// padded to length `t`.
pub fn gaussian_prefix_parameters(
    l1_total: f64,
    per_seq_cap: f64,
    k: usize,
    t: usize,
    budget: &PrivacyBudget,
) -> Result<(Noise, f64)> {
    if !(l1_total > 0.0 && per_seq_cap > 0.0) {
        return Err(invalid_param("prefix-sum sensitivities must be positive"));
    }
    if budget.epsilon >= 1.0 {
        return Err(Error::GaussianEpsilonTooLarge(budget.epsilon));
    }
    if budget.delta.is_nan() || budget.delta <= 0.0 {
        return Err(invalid_param("gaussian prefix sums require delta > 0"));
    }
    let levels = floor_log2(t) + 1;
    let sigma = gaussian_prefix_sigma(l1_total, per_seq_cap, t, budget.epsilon, budget.delta);
    // A prefix sum adds at most `levels` independent draws.
    let bound = gaussian_tail(sigma * (levels as f64).sqrt(), k.max(1) * t, budget.beta)?;
    Ok((Noise::Gaussian { sigma }, bound))
}
