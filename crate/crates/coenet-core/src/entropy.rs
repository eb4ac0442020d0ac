//! Sub-population enrolment entropy with bootstrap confidence bands.
//!
//! For per-standard counts x_i with total x = Σ x_i, the normalized
//! entropy is S = −Σ_i (p_i ln p_i) / ln x with p_i = x_i / x. The
//! logarithm base cancels between numerator and denominator; natural logs
//! are used internally. Zero counts contribute nothing and are excluded.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::seeds;
use crate::types::{EnrolmentRecord, SliceSpec, StudentMeta, SubpopSelector};

#[derive(Debug, Clone, PartialEq)]
pub enum EntropyError {
    /// Entropy needs total enrolments ≥ 2 so ln(x) is nonzero.
    UndefinedTotal { total: f64 },
    /// Perturbation fraction must lie in [0, 1).
    InvalidPerturb { perturb: f64 },
}

impl fmt::Display for EntropyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropyError::UndefinedTotal { total } => write!(
                f,
                "entropy undefined for total enrolments {total} (needs at least 2)"
            ),
            EntropyError::InvalidPerturb { perturb } => {
                write!(f, "perturbation {perturb} outside [0, 1)")
            }
        }
    }
}

/// Per-standard enrolment counts for one sub-population over one slice.
/// Only standards with nonzero counts are stored; `support()` reports how
/// many standards carry enrolments.
#[derive(Debug, Clone, PartialEq)]
pub struct SubpopCounts {
    /// Sorted by standard id; counts strictly positive.
    pub counts: Vec<(String, u64)>,
}

impl SubpopCounts {
    pub fn from_counts(mut counts: Vec<(String, u64)>) -> SubpopCounts {
        counts.retain(|&(_, c)| c > 0);
        counts.sort();
        SubpopCounts { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    /// Number of standards with nonzero count (N⁺).
    pub fn support(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&(_, c)| c as f64).collect()
    }
}

/// Count enrolments per standard for the students matching `selector`
/// within `slice`, restricted to the standards of that slice's pruned
/// network. One deduplicated record = one enrolment.
pub fn subpop_counts(
    records: &[EnrolmentRecord],
    students: &[StudentMeta],
    selector: &SubpopSelector,
    slice: &SliceSpec,
    network_standards: &BTreeSet<String>,
) -> SubpopCounts {
    let matching: BTreeSet<&str> = students
        .iter()
        .filter(|s| slice.matches(s) && selector.matches(s))
        .map(|s| s.student_id.as_str())
        .collect();
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    for rec in records {
        if !matching.contains(rec.student_id.as_str()) {
            continue;
        }
        if !network_standards.contains(&rec.standard_id) {
            continue;
        }
        // Repeated years of the same standard count once.
        if seen.insert((rec.student_id.as_str(), rec.standard_id.as_str())) {
            *counts.entry(rec.standard_id.as_str()).or_insert(0) += 1;
        }
    }
    SubpopCounts {
        counts: counts
            .into_iter()
            .map(|(id, c)| (String::from(id), c))
            .collect(),
    }
}

/// Normalized entropy of real-valued counts. Counts must be non-negative
/// with total > 1.
pub fn entropy_of(values: &[f64]) -> Result<f64, EntropyError> {
    let total: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    if total <= 1.0 {
        return Err(EntropyError::UndefinedTotal { total });
    }
    let log_total = libm::log(total);
    let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    // Uniform closed form ln(m)/ln(total) avoids accumulation error, so the
    // equality S = ln N⁺ / ln x holds exactly at the upper extreme.
    if positive.windows(2).all(|w| w[0] == w[1]) {
        return Ok(libm::log(positive.len() as f64) / log_total);
    }
    let mut acc = 0.0;
    for &v in &positive {
        let p = v / total;
        acc -= p * libm::log(p);
    }
    Ok(acc / log_total)
}

/// Normalized entropy S^q of a sub-population's enrolment counts.
pub fn entropy(counts: &SubpopCounts) -> Result<f64, EntropyError> {
    entropy_of(&counts.values())
}

/// Point entropy plus bootstrap replicate distribution for one
/// sub-population. Reproducible for a fixed seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEstimate {
    pub point: f64,
    pub reps: u32,
    pub mean: f64,
    pub std: f64,
    /// 2.5th percentile of the replicate distribution.
    pub ci_low: f64,
    /// 97.5th percentile of the replicate distribution.
    pub ci_high: f64,
    pub perturb: f64,
    pub seed: u64,
}

/// Entropy of one bootstrap replicate: every count scaled by an
/// independent uniform factor in [1−perturb, 1+perturb], no rounding.
/// Depends only on (counts, perturb, seed, rep), so replicates may be
/// evaluated in any order or in parallel.
pub fn bootstrap_replicate(counts: &SubpopCounts, perturb: f64, seed: u64, rep: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::substream(seed, rep));
    let perturbed: Vec<f64> = counts
        .counts
        .iter()
        .map(|&(_, c)| {
            let factor = 1.0 + perturb * rng.gen_range(-1.0..=1.0);
            c as f64 * factor
        })
        .collect();
    let total: f64 = perturbed.iter().sum();
    // perturb < 1 and nonzero counts keep every replicate total positive.
    assert!(total > 0.0, "bootstrap replicate lost all mass");
    entropy_of(&perturbed).expect("replicate total stays above 1")
}

/// Summarize replicate entropies into an estimate. Percentiles use linear
/// interpolation on the sorted replicates.
pub fn summarize_replicates(
    point: f64,
    mut replicates: Vec<f64>,
    perturb: f64,
    seed: u64,
) -> EntropyEstimate {
    let n = replicates.len();
    if n == 0 {
        return EntropyEstimate {
            point,
            reps: 0,
            mean: point,
            std: 0.0,
            ci_low: point,
            ci_high: point,
            perturb,
            seed,
        };
    }
    let nf = n as f64;
    let degenerate = replicates.windows(2).all(|w| w[0] == w[1]);
    let mean = if degenerate {
        replicates[0]
    } else {
        replicates.iter().sum::<f64>() / nf
    };
    let std = if degenerate {
        0.0
    } else if n > 1 {
        let var = replicates.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
        libm::sqrt(var)
    } else {
        0.0
    };
    replicates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let percentile = |p: f64| -> f64 {
        if n == 1 {
            return replicates[0];
        }
        let pos = p * (nf - 1.0);
        let lo = libm::floor(pos) as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        replicates[lo] * (1.0 - frac) + replicates[hi] * frac
    };
    EntropyEstimate {
        point,
        reps: n as u32,
        mean,
        std,
        ci_low: percentile(0.025),
        ci_high: percentile(0.975),
        perturb,
        seed,
    }
}

/// Bootstrap the entropy of `counts`: `reps` replicates, each perturbing
/// all counts by independent uniform factors within ±perturb.
pub fn bootstrap_entropy(
    counts: &SubpopCounts,
    reps: u32,
    perturb: f64,
    seed: u64,
) -> Result<EntropyEstimate, EntropyError> {
    if !(0.0..1.0).contains(&perturb) {
        return Err(EntropyError::InvalidPerturb { perturb });
    }
    let point = entropy(counts)?;
    let replicates: Vec<f64> = (0..reps)
        .map(|rep| bootstrap_replicate(counts, perturb, seed, u64::from(rep)))
        .collect();
    Ok(summarize_replicates(point, replicates, perturb, seed))
}
