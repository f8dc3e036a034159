//! Exact likelihood engine for the flat-spectrum (trace-centered GOE)
//! instance, plus the K and H diagnostic matrices.
//!
//! For a transcript of unit vectors z_1..z_t, the untruncated likelihood
//! surrogate is
//!   L(z) = E_M prod_i (1 + eps z_i^T M z_i / z_i^T A z_i),
//! which Isserlis' theorem turns into a matching sum with pairwise weights
//!   c_{ij} = (2 eps^2 / d^2) (d <z_i, z_j>^2 - 1)
//!            / ((z_i^T A z_i)(z_j^T A z_j)).

use nalgebra::{DMatrix, DVector};

use super::{matching_sum, subset_dp, EngineBudget, PairwiseCoefficients};
use crate::error::{Error, Result};
use crate::measurement::Transcript;
use crate::states::DiagonalSpectrum;

fn check_unit(name: &'static str, v: &DVector<f64>) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name,
            message: format!("expected unit vector, got norm {n}"),
        });
    }
    Ok(())
}

pub(crate) fn quad_form_diag(a: &DiagonalSpectrum, v: &DVector<f64>) -> f64 {
    v.iter().zip(a.values()).map(|(x, w)| x * x * w).sum()
}

/// Pairwise moment of the trace-centered GOE ensemble divided by the
/// quadratic forms: (2/d^2)(d <x,y>^2 - 1) / ((x^T A x)(y^T A y)).
///
/// With A = I this is exactly E[(x^T M x)(y^T M y)] for M ~ GOE*(d).
pub fn goe_pairwise_moment(
    x: &DVector<f64>,
    y: &DVector<f64>,
    a: &DiagonalSpectrum,
) -> Result<f64> {
    let d = a.len();
    if x.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len().max(y.len()),
        });
    }
    check_unit("x", x)?;
    check_unit("y", y)?;
    let dd = d as f64;
    let ip = x.dot(y);
    Ok(2.0 / (dd * dd) * (dd * ip * ip - 1.0) / (quad_form_diag(a, x) * quad_form_diag(a, y)))
}

/// Bound transcript with precomputed pairwise coefficients and the full
/// subset-DP memo; leave-one-out values are free once built.
pub struct GoeLikelihoodContext {
    vectors: Vec<DVector<f64>>,
    quad_forms: Vec<f64>,
    a: DiagonalSpectrum,
    eps: f64,
    coeffs: PairwiseCoefficients,
    memo: Vec<f64>,
}

impl GoeLikelihoodContext {
    pub fn new(
        vectors: Vec<DVector<f64>>,
        a: &DiagonalSpectrum,
        eps: f64,
        budget: &EngineBudget,
    ) -> Result<Self> {
        let t = vectors.len();
        budget.check("transcript length (subset DP)", t, budget.exact_len)?;
        let d = a.len();
        let dd = d as f64;
        let mut quad_forms = Vec::with_capacity(t);
        for v in &vectors {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            check_unit("transcript vector", v)?;
            quad_forms.push(quad_form_diag(a, v));
        }
        let scale = 2.0 * eps * eps / (dd * dd);
        let mut coeffs = PairwiseCoefficients::new(t);
        for i in 0..t {
            for j in (i + 1)..t {
                let ip = vectors[i].dot(&vectors[j]);
                coeffs.set(
                    i,
                    j,
                    scale * (dd * ip * ip - 1.0) / (quad_forms[i] * quad_forms[j]),
                );
            }
        }
        let memo = subset_dp(&coeffs);
        Ok(Self {
            vectors: vectors.to_vec(),
            quad_forms,
            a: a.clone(),
            eps,
            coeffs,
            memo,
        })
    }

    /// Builds the context from a transcript; rejects complex vectors.
    pub fn from_transcript(
        transcript: &Transcript,
        a: &DiagonalSpectrum,
        eps: f64,
        budget: &EngineBudget,
    ) -> Result<Self> {
        Self::new(transcript.real_vectors()?, a, eps, budget)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// L of the full transcript.
    pub fn likelihood(&self) -> f64 {
        self.memo[self.full_mask()]
    }

    /// L of the sub-transcript given by a bitmask over steps.
    pub fn subset_likelihood(&self, mask: usize) -> f64 {
        self.memo[mask]
    }

    /// L(z_{~i}): the transcript with step i removed.
    pub fn leave_one_out(&self, i: usize) -> f64 {
        self.memo[self.full_mask() & !(1 << i)]
    }

    fn full_mask(&self) -> usize {
        (1usize << self.vectors.len()) - 1
    }

    /// Matching-sum evaluation of the same transcript; the oracle path.
    pub fn matching_sum_likelihood(&self, budget: &EngineBudget) -> Result<f64> {
        budget.check(
            "transcript length (matching sum)",
            self.len(),
            budget.matching_len,
        )?;
        Ok(matching_sum(&self.coeffs))
    }

    /// One-step extension ratio L(z, x) / L(z) for a new unit outcome x,
    /// computed from the memo without rebuilding:
    /// ratio = 1 + sum_i c_{i,new} L(z_{~i}) / L(z).
    pub fn step_ratio(&self, x: &DVector<f64>) -> Result<f64> {
        let d = self.a.len();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        check_unit("x", x)?;
        let dd = d as f64;
        let qx = quad_form_diag(&self.a, x);
        let scale = 2.0 * self.eps * self.eps / (dd * dd);
        let l_full = self.likelihood();
        let mut acc = 0.0;
        for i in 0..self.len() {
            let ip = self.vectors[i].dot(x);
            let c = scale * (dd * ip * ip - 1.0) / (self.quad_forms[i] * qx);
            acc += c * self.leave_one_out(i);
        }
        Ok(1.0 + acc / l_full)
    }

    pub fn spectrum(&self) -> &DiagonalSpectrum {
        &self.a
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    /// H(z) = sum_i (d z_i z_i^T - I)/(z_i^T A z_i) * L(z_{~i})/L(z).
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let d = self.a.len();
        let l_full = self.likelihood();
        weighted_k_sum(&self.vectors, &self.quad_forms, d, |i| {
            self.leave_one_out(i) / l_full
        })
    }

    /// K(z) = sum_i (d z_i z_i^T - I)/(z_i^T A z_i).
    pub fn k_matrix(&self) -> DMatrix<f64> {
        let d = self.a.len();
        weighted_k_sum(&self.vectors, &self.quad_forms, d, |_| 1.0)
    }
}

fn weighted_k_sum(
    vectors: &[DVector<f64>],
    quad_forms: &[f64],
    d: usize,
    weight: impl Fn(usize) -> f64,
) -> DMatrix<f64> {
    let dd = d as f64;
    let mut k = DMatrix::<f64>::zeros(d, d);
    for (idx, v) in vectors.iter().enumerate() {
        let w = weight(idx) / quad_forms[idx];
        for i in 0..d {
            for j in 0..d {
                k[(i, j)] += w * (dd * v[i] * v[j] - if i == j { 1.0 } else { 0.0 });
            }
        }
    }
    k
}

/// Exact L via subset DP with the default budget.
pub fn exact_likelihood_goe(
    transcript: &Transcript,
    a: &DiagonalSpectrum,
    eps: f64,
) -> Result<f64> {
    Ok(
        GoeLikelihoodContext::from_transcript(transcript, a, eps, &EngineBudget::default())?
            .likelihood(),
    )
}

/// Literal matching-sum evaluation; the reference oracle for the DP.
pub fn matching_sum_likelihood_goe(
    transcript: &Transcript,
    a: &DiagonalSpectrum,
    eps: f64,
) -> Result<f64> {
    let budget = EngineBudget::default();
    GoeLikelihoodContext::from_transcript(transcript, a, eps, &budget)?
        .matching_sum_likelihood(&budget)
}

/// K matrix of a transcript of real unit vectors.
pub fn k_matrix_goe(transcript: &Transcript, a: &DiagonalSpectrum) -> Result<DMatrix<f64>> {
    let vectors = transcript.real_vectors()?;
    let mut quad_forms = Vec::with_capacity(vectors.len());
    for v in &vectors {
        if v.len() != a.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: v.len(),
            });
        }
        check_unit("transcript vector", v)?;
        quad_forms.push(quad_form_diag(a, v));
    }
    Ok(weighted_k_sum(&vectors, &quad_forms, a.len(), |_| 1.0))
}

/// H matrix via the subset-DP memo (shares leave-one-out likelihoods with
/// the exact engine).
pub fn h_matrix_goe(
    transcript: &Transcript,
    a: &DiagonalSpectrum,
    eps: f64,
) -> Result<DMatrix<f64>> {
    Ok(
        GoeLikelihoodContext::from_transcript(transcript, a, eps, &EngineBudget::default())?
            .h_matrix(),
    )
}
