//! Exact and Monte-Carlo evaluation of the likelihood ratios of the hard
//! instances, their recursions, and the martingale diagnostic matrices
//! K, H, kappa and the Doob statistic.
//!
//! Every exact engine reduces to the same Gaussian-moment structure: by
//! Isserlis' theorem the likelihood ratio of a length-t transcript is a sum
//! over partial matchings of {1..t} of products of pairwise coefficients
//! c_{ij}. The engines differ only in how c_{ij} is computed. Evaluation is
//! by dynamic programming over subsets (bitmasks), with a literal
//! matching-sum enumeration kept as an independent oracle.

mod goe;
mod martingale;
mod mc;
mod multiblock;
mod offdiag;

pub use goe::{
    exact_likelihood_goe, goe_pairwise_moment, h_matrix_goe, k_matrix_goe,
    matching_sum_likelihood_goe, GoeLikelihoodContext,
};
pub use martingale::{
    doob_statistic, martingale_step_expectation, simulate_null_k_trace, DoobSummary,
    MartingaleTrace, StepContext,
};
pub use mc::{
    mc_likelihood, truncation_correction, truncation_correction_with_se, McEstimate, McFamily,
};
pub use multiblock::{exact_likelihood_multiblock, MultiblockLikelihood};
pub use offdiag::{
    exact_likelihood_offdiag, ginibre_pairwise_moment, k_matrix_offdiag, kappa_bruteforce,
    kappa_vector_relaxation_max, OffdiagLikelihoodContext, PairTranscript,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::Transcript;

/// Provenance record for one likelihood evaluation, for experiment logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LikelihoodRecord {
    /// FNV-1a hash of the serialized transcript.
    pub transcript_hash: String,
    /// e.g. "exact-dp", "matching-sum", "mc", "mc-truncated".
    pub method: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LikelihoodRecord {
    pub fn new(
        transcript: &Transcript,
        method: impl Into<String>,
        value: f64,
        stderr: Option<f64>,
        budget: usize,
        seed: Option<u64>,
    ) -> Self {
        Self {
            transcript_hash: transcript_hash(transcript),
            method: method.into(),
            value,
            stderr,
            budget,
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// 64-bit FNV-1a over the serialized transcript, hex-encoded.
pub fn transcript_hash(transcript: &Transcript) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in transcript.to_json_lines().as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Transcript-length budgets for the exponential-cost engines.
#[derive(Debug, Clone, Copy)]
pub struct EngineBudget {
    /// Subset-DP limit (about 10^6 subsets at 20).
    pub exact_len: usize,
    /// Literal matching-sum limit (double-factorial growth).
    pub matching_len: usize,
    /// Sign-vertex enumeration limit for kappa (2^t vertices).
    pub kappa_len: usize,
}

impl Default for EngineBudget {
    fn default() -> Self {
        Self {
            exact_len: 20,
            matching_len: 10,
            kappa_len: 22,
        }
    }
}

impl EngineBudget {
    pub(crate) fn check(&self, what: &'static str, requested: usize, budget: usize) -> Result<()> {
        if requested > budget {
            return Err(Error::BudgetExceeded {
                what,
                requested,
                budget,
            });
        }
        Ok(())
    }
}

/// Symmetric pairwise-coefficient matrix for one transcript; c[i][j] is the
/// Isserlis weight of pairing steps i and j. The diagonal is never read.
#[derive(Debug, Clone)]
pub(crate) struct PairwiseCoefficients {
    len: usize,
    c: Vec<f64>,
}

impl PairwiseCoefficients {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            c: vec![0.0; len * len],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.c[i * self.len + j] = value;
        self.c[j * self.len + i] = value;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.len + j]
    }
}

/// Fills the full bitmask memo: memo[S] is the matching-sum restricted to
/// the steps in S. Recursion on the highest element m of S:
/// memo[S] = memo[S \ m] + sum_{i in S \ m} c[i][m] * memo[S \ {i, m}].
pub(crate) fn subset_dp(coeffs: &PairwiseCoefficients) -> Vec<f64> {
    let t = coeffs.len();
    let full = 1usize << t;
    let mut memo = vec![0.0; full];
    memo[0] = 1.0;
    for mask in 1..full {
        let m = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
        let rest = mask & !(1 << m);
        let mut acc = memo[rest];
        let mut scan = rest;
        while scan != 0 {
            let i = scan.trailing_zeros() as usize;
            scan &= scan - 1;
            acc += coeffs.get(i, m) * memo[rest & !(1 << i)];
        }
        memo[mask] = acc;
    }
    memo
}

/// Literal enumeration of all partial matchings; the reference oracle for
/// the subset DP. Cost grows like the telephone numbers, so keep t small.
pub(crate) fn matching_sum(coeffs: &PairwiseCoefficients) -> f64 {
    fn recurse(coeffs: &PairwiseCoefficients, mask: usize) -> f64 {
        if mask == 0 {
            return 1.0;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        // leave i unmatched
        let mut acc = recurse(coeffs, rest);
        // or pair i with any j
        let mut scan = rest;
        while scan != 0 {
            let j = scan.trailing_zeros() as usize;
            scan &= scan - 1;
            acc += coeffs.get(i, j) * recurse(coeffs, rest & !(1 << j));
        }
        acc
    }
    recurse(coeffs, (1usize << coeffs.len()) - 1)
}
