//! Monte-Carlo likelihood estimation over ensemble draws, with optional
//! conditioning on the truncation event, and the truncation correction.
//!
//! Sampling parallelizes over fixed-size shards with per-shard derived rng
//! streams and a deterministic shard-order reduction, so estimates do not
//! depend on the thread count.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::ensembles::{
    ginibre_event, goe_star_event, sample_ginibre, sample_goe, trace_center, TruncationPolicy,
};
use crate::error::{Error, Result};
use crate::measurement::{BlockPartition, Transcript};
use crate::rng::derive_rng;
use crate::states::DiagonalSpectrum;

const SHARD_SIZE: usize = 8192;
/// Above this transcript length, per-draw products accumulate in log space.
const LOG_SPACE_LEN: usize = 30;

/// Which ensemble the Monte-Carlo engine integrates over.
pub enum McFamily<'a> {
    Goe {
        a: &'a DiagonalSpectrum,
        eps: f64,
    },
    Offdiag {
        a: &'a DiagonalSpectrum,
        b: &'a DiagonalSpectrum,
        eps: f64,
    },
    Multiblock {
        partition: &'a BlockPartition,
        blocks: &'a [(DiagonalSpectrum, f64)],
        /// Op-norm slack factor theta for the per-block truncation event.
        theta: f64,
    },
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    /// (P[U] estimate, standard error): acceptance probability of the
    /// truncation event, measured from the rejection attempts. Only set
    /// when `truncated` was requested.
    pub p_event: Option<(f64, f64)>,
}

struct ShardStats {
    count: usize,
    mean: f64,
    m2: f64,
    raw_attempts: usize,
}

/// Outcome vector in either real or complex form. Real transcripts keep
/// the cheap path; complex ones (which the exact engines reject) are the
/// Monte-Carlo engine's responsibility.
enum StepVector {
    Real(DVector<f64>),
    Complex(DVector<Complex64>),
}

impl StepVector {
    fn from_complex(v: &DVector<Complex64>) -> Self {
        let max_imag = v.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if max_imag <= 1e-12 {
            StepVector::Real(v.map(|c| c.re))
        } else {
            StepVector::Complex(v.clone())
        }
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        match self {
            StepVector::Real(v) => {
                StepVector::Real(DVector::from_iterator(range.len(), range.map(|i| v[i])))
            }
            StepVector::Complex(v) => {
                StepVector::Complex(DVector::from_iterator(range.len(), range.map(|i| v[i])))
            }
        }
    }

    fn norm(&self) -> f64 {
        match self {
            StepVector::Real(v) => v.norm(),
            StepVector::Complex(v) => v.norm(),
        }
    }

    fn quad_diag(&self, a: &DiagonalSpectrum) -> f64 {
        match self {
            StepVector::Real(v) => v.iter().zip(a.values()).map(|(x, w)| x * x * w).sum(),
            StepVector::Complex(v) => v
                .iter()
                .zip(a.values())
                .map(|(x, w)| x.norm_sqr() * w)
                .sum(),
        }
    }

    /// x^+ M x for real symmetric M; real for complex x as well.
    fn quad_form(&self, m: &DMatrix<f64>) -> f64 {
        match self {
            StepVector::Real(v) => (v.transpose() * m * v)[(0, 0)],
            StepVector::Complex(v) => {
                let mut acc = 0.0;
                for j in 0..v.len() {
                    let mut col = Complex64::new(0.0, 0.0);
                    for i in 0..v.len() {
                        col += v[i].conj() * m[(i, j)];
                    }
                    acc += (col * v[j]).re;
                }
                acc
            }
        }
    }

    /// Re(x^+ G y) for real G; the physically correct cross-term factor.
    fn bilinear_re(&self, g: &DMatrix<f64>, other: &StepVector) -> f64 {
        match (self, other) {
            (StepVector::Real(x), StepVector::Real(y)) => (x.transpose() * g * y)[(0, 0)],
            _ => {
                let x = self.as_complex();
                let y = other.as_complex();
                let mut acc = 0.0;
                for j in 0..y.len() {
                    let mut col = Complex64::new(0.0, 0.0);
                    for i in 0..x.len() {
                        col += x[i].conj() * g[(i, j)];
                    }
                    acc += (col * y[j]).re;
                }
                acc
            }
        }
    }

    fn as_complex(&self) -> DVector<Complex64> {
        match self {
            StepVector::Real(v) => v.map(|x| Complex64::new(x, 0.0)),
            StepVector::Complex(v) => v.clone(),
        }
    }
}

/// Per-step data prepared once per transcript.
enum Prepared {
    Goe {
        d: usize,
        eps: f64,
        vectors: Vec<StepVector>,
        denoms: Vec<f64>,
        crude_bound: bool,
    },
    Offdiag {
        d1: usize,
        d2: usize,
        eps: f64,
        pairs: Vec<(StepVector, StepVector)>,
        denoms: Vec<f64>,
        crude_bound: bool,
    },
    Multiblock {
        block_dims: Vec<usize>,
        eps: Vec<f64>,
        policies: Vec<TruncationPolicy>,
        /// (block, restricted vector, denominator) per step.
        steps: Vec<(usize, StepVector, f64)>,
        crude_bound: bool,
    },
}

impl Prepared {
    fn len(&self) -> usize {
        match self {
            Prepared::Goe { vectors, .. } => vectors.len(),
            Prepared::Offdiag { pairs, .. } => pairs.len(),
            Prepared::Multiblock { steps, .. } => steps.len(),
        }
    }

    /// One sampled product. Returns (value, raw attempts consumed).
    fn sample(
        &self,
        truncated: bool,
        policy: &TruncationPolicy,
        rng: &mut impl rand::Rng,
    ) -> Result<(f64, usize)> {
        match self {
            Prepared::Goe {
                d,
                eps,
                vectors,
                denoms,
                crude_bound,
            } => {
                let (m, attempts) = draw_goe(*d, truncated, policy, rng)?;
                let factors = vectors
                    .iter()
                    .zip(denoms)
                    .map(|(z, q)| 1.0 + eps * z.quad_form(&m) / q);
                Ok((
                    product(factors, vectors.len(), truncated && *crude_bound),
                    attempts,
                ))
            }
            Prepared::Offdiag {
                d1,
                d2,
                eps,
                pairs,
                denoms,
                crude_bound,
            } => {
                let (g, attempts) = draw_ginibre(*d1, *d2, truncated, policy, rng)?;
                let scale = 2.0 * eps / *d2 as f64;
                let factors = pairs
                    .iter()
                    .zip(denoms)
                    .map(|((z, w), q)| 1.0 + scale * z.bilinear_re(&g, w) / q);
                Ok((
                    product(factors, pairs.len(), truncated && *crude_bound),
                    attempts,
                ))
            }
            Prepared::Multiblock {
                block_dims,
                eps,
                policies,
                steps,
                crude_bound,
            } => {
                let mut attempts_total = 0;
                let mut matrices = Vec::with_capacity(block_dims.len());
                for (d_nu, pol) in block_dims.iter().zip(policies) {
                    let (m, attempts) = draw_goe(*d_nu, truncated, pol, rng)?;
                    attempts_total += attempts;
                    matrices.push(m);
                }
                let factors = steps
                    .iter()
                    .map(|(nu, z, q)| 1.0 + eps[*nu] * z.quad_form(&matrices[*nu]) / q);
                Ok((
                    product(factors, steps.len(), truncated && *crude_bound),
                    attempts_total,
                ))
            }
        }
    }
}

fn draw_goe(
    d: usize,
    truncated: bool,
    policy: &TruncationPolicy,
    rng: &mut impl rand::Rng,
) -> Result<(DMatrix<f64>, usize)> {
    if !truncated {
        return Ok((trace_center(sample_goe(d, rng)), 1));
    }
    for attempt in 1..=policy.max_attempts {
        let m = trace_center(sample_goe(d, rng));
        if goe_star_event(&m, policy) {
            return Ok((m, attempt));
        }
    }
    Err(Error::TruncationExhausted {
        attempts: policy.max_attempts,
    })
}

fn draw_ginibre(
    d1: usize,
    d2: usize,
    truncated: bool,
    policy: &TruncationPolicy,
    rng: &mut impl rand::Rng,
) -> Result<(DMatrix<f64>, usize)> {
    if !truncated {
        return Ok((sample_ginibre(d1, d2, rng), 1));
    }
    for attempt in 1..=policy.max_attempts {
        let g = sample_ginibre(d1, d2, rng);
        if ginibre_event(&g, policy) {
            return Ok((g, attempt));
        }
    }
    Err(Error::TruncationExhausted {
        attempts: policy.max_attempts,
    })
}

/// Product of factors, in log space for long transcripts. Under the
/// truncation event with admissible parameters every factor lies in
/// [1/2, 3/2], so the product must lie in [(1/2)^t, (3/2)^t].
fn product(factors: impl Iterator<Item = f64>, t: usize, assert_crude: bool) -> f64 {
    let value = if t > LOG_SPACE_LEN {
        let mut log_abs = 0.0;
        let mut sign = 1.0;
        for f in factors {
            if f == 0.0 {
                return 0.0;
            }
            sign *= f.signum();
            log_abs += f.abs().ln();
        }
        sign * log_abs.exp()
    } else {
        factors.product()
    };
    if assert_crude {
        let lo = 0.5f64.powi(t as i32);
        let hi = 1.5f64.powi(t as i32);
        assert!(
            value >= lo && value <= hi,
            "truncated per-sample product {value} outside [{lo}, {hi}]"
        );
    }
    value
}

fn prepare(transcript: &Transcript, family: &McFamily) -> Result<Prepared> {
    match family {
        McFamily::Goe { a, eps } => {
            let d = a.len();
            let mut vectors = Vec::with_capacity(transcript.len());
            let mut denoms = Vec::with_capacity(transcript.len());
            for step in transcript.steps() {
                if step.vector.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: step.vector.len(),
                    });
                }
                let v = StepVector::from_complex(&step.vector);
                denoms.push(v.quad_diag(a));
                vectors.push(v);
            }
            // |eps q / denom| <= eps * cap / denom; factors provably in
            // [1/2, 3/2] when that is at most 1/2 for every step
            let crude_bound = denoms.iter().all(|&q| eps.abs() * 3.0 / q <= 0.5 + 1e-12);
            Ok(Prepared::Goe {
                d,
                eps: *eps,
                vectors,
                denoms,
                crude_bound,
            })
        }
        McFamily::Offdiag { a, b, eps } => {
            let d1 = a.len();
            let d2 = b.len();
            let mut pairs = Vec::with_capacity(transcript.len());
            let mut denoms = Vec::with_capacity(transcript.len());
            for step in transcript.steps() {
                if step.vector.len() != d1 + d2 {
                    return Err(Error::DimensionMismatch {
                        expected: d1 + d2,
                        got: step.vector.len(),
                    });
                }
                let full = StepVector::from_complex(&step.vector);
                let z = full.slice(0..d1);
                let w = full.slice(d1..d1 + d2);
                denoms.push(z.quad_diag(a) + w.quad_diag(b));
                pairs.push((z, w));
            }
            let crude_bound = pairs.iter().zip(&denoms).all(|((z, w), q)| {
                (2.0 * eps / d2 as f64) * 3.0 * z.norm() * w.norm() / q <= 0.5 + 1e-12
            });
            Ok(Prepared::Offdiag {
                d1,
                d2,
                eps: *eps,
                pairs,
                denoms,
                crude_bound,
            })
        }
        McFamily::Multiblock {
            partition,
            blocks,
            theta,
        } => {
            let m = blocks.len() as f64;
            let mut steps = Vec::with_capacity(transcript.len());
            for (idx, raw) in transcript.steps().iter().enumerate() {
                if raw.vector.len() != partition.total_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: partition.total_dim(),
                        got: raw.vector.len(),
                    });
                }
                let nu = match raw.block {
                    Some(nu) if nu < blocks.len() => nu,
                    _ => partition
                        .support_block(&raw.vector)
                        .ok_or(Error::MixedBlockSupport { step: idx })?,
                };
                let restricted = StepVector::from_complex(&raw.vector).slice(partition.range(nu));
                let q = restricted.quad_diag(&blocks[nu].0);
                steps.push((nu, restricted, q));
            }
            let base = TruncationPolicy::goe_star();
            let policies: Vec<TruncationPolicy> = blocks
                .iter()
                .map(|(a, _)| base.with_op_slack(theta * (m.ln() / a.len() as f64).sqrt()))
                .collect();
            let crude_bound = steps.iter().all(|(nu, _, q)| {
                blocks[*nu].1.abs() * policies[*nu].op_norm_cap / q <= 0.5 + 1e-12
            });
            Ok(Prepared::Multiblock {
                block_dims: blocks.iter().map(|(a, _)| a.len()).collect(),
                eps: blocks.iter().map(|(_, e)| *e).collect(),
                policies,
                steps,
                crude_bound,
            })
        }
    }
}

/// Monte-Carlo estimate of the likelihood ratio over ensemble draws.
///
/// `truncated` conditions the draws on the truncation event (the estimate
/// is then of the conditioned integral L*); untruncated draws estimate the
/// plain Gaussian surrogate L. `seed` fixes all shard streams.
pub fn mc_likelihood(
    transcript: &Transcript,
    family: &McFamily,
    samples: usize,
    truncated: bool,
    policy: &TruncationPolicy,
    seed: u64,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter {
            name: "samples",
            message: "must be >= 1".to_string(),
        });
    }
    policy.validate()?;
    let prepared = prepare(transcript, family)?;
    let shards: Vec<(usize, usize)> = (0..samples.div_ceil(SHARD_SIZE))
        .map(|s| (s, SHARD_SIZE.min(samples - s * SHARD_SIZE)))
        .collect();
    let shard_results: Vec<Result<ShardStats>> = shards
        .par_iter()
        .map(|&(shard_idx, count)| {
            let mut rng = derive_rng(seed, shard_idx as u64 + 1);
            let mut stats = ShardStats {
                count: 0,
                mean: 0.0,
                m2: 0.0,
                raw_attempts: 0,
            };
            for _ in 0..count {
                let (value, attempts) = prepared.sample(truncated, policy, &mut rng)?;
                stats.count += 1;
                stats.raw_attempts += attempts;
                let delta = value - stats.mean;
                stats.mean += delta / stats.count as f64;
                stats.m2 += delta * (value - stats.mean);
            }
            Ok(stats)
        })
        .collect();

    // deterministic reduction in shard order
    let mut total = ShardStats {
        count: 0,
        mean: 0.0,
        m2: 0.0,
        raw_attempts: 0,
    };
    for res in shard_results {
        let s = res?;
        if s.count == 0 {
            continue;
        }
        let n1 = total.count as f64;
        let n2 = s.count as f64;
        let delta = s.mean - total.mean;
        let n = n1 + n2;
        total.mean += delta * n2 / n;
        total.m2 += s.m2 + delta * delta * n1 * n2 / n;
        total.count += s.count;
        total.raw_attempts += s.raw_attempts;
    }
    let n = total.count as f64;
    let stderr = if total.count > 1 {
        (total.m2 / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let p_event = if truncated {
        let p = n / total.raw_attempts as f64;
        let se = (p * (1.0 - p) / total.raw_attempts as f64).sqrt();
        Some((p, se))
    } else {
        None
    };
    let _ = prepared.len();
    Ok(McEstimate {
        estimate: total.mean,
        stderr,
        samples: total.count,
        p_event,
    })
}

/// L*(x) = L-bar(x) / P[U]: undoes the conditioning of a truncated mean.
pub fn truncation_correction(l_bar: f64, p_u: f64) -> Result<f64> {
    if !(p_u > 0.0 && p_u <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p_u",
            message: format!("{p_u} outside (0, 1]"),
        });
    }
    Ok(l_bar / p_u)
}

/// Truncation correction with first-order error propagation.
pub fn truncation_correction_with_se(
    l_bar: f64,
    se_l: f64,
    p_u: f64,
    se_p: f64,
) -> Result<(f64, f64)> {
    let value = truncation_correction(l_bar, p_u)?;
    let se = ((se_l / p_u).powi(2) + (l_bar * se_p / (p_u * p_u)).powi(2)).sqrt();
    Ok((value, se))
}
