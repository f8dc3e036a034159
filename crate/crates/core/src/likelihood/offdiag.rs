//! Exact likelihood engine for the off-diagonal (truncated Ginibre)
//! instance, the rectangular K matrix, and the sign-supremum kappa.
//!
//! Transcript steps are pairs (z_i, w_i) with z in R^{d1}, w in R^{d2} and
//! ||z||^2 + ||w||^2 = 1. The likelihood factor of a step is
//!   1 + (2 eps / d2) z^T G w / (z^T A z + w^T B w),
//! and the Isserlis pairing weight of steps i, j is
//!   k_{ij} = (4 eps^2 / (d1 d2^2)) <z_i,z_j><w_i,w_j> / (D_i D_j).

use nalgebra::{DMatrix, DVector};

use super::{matching_sum, subset_dp, EngineBudget, PairwiseCoefficients};
use crate::error::{Error, Result};
use crate::measurement::Transcript;
use crate::states::DiagonalSpectrum;

/// Transcript of (z, w) pairs for the two-block instance.
#[derive(Debug, Clone)]
pub struct PairTranscript {
    pub z: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
}

impl PairTranscript {
    pub fn new(z: Vec<DVector<f64>>, w: Vec<DVector<f64>>) -> Result<Self> {
        if z.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                got: w.len(),
            });
        }
        for (zi, wi) in z.iter().zip(&w) {
            let joint = zi.norm_squared() + wi.norm_squared();
            if (joint - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter {
                    name: "pair",
                    message: format!("||z||^2 + ||w||^2 = {joint} != 1"),
                });
            }
        }
        Ok(Self { z, w })
    }

    /// Splits a transcript over C^{d1+d2} into real (z, w) pairs.
    pub fn from_transcript(transcript: &Transcript, d1: usize, d2: usize) -> Result<Self> {
        let vectors = transcript.real_vectors()?;
        let mut z = Vec::with_capacity(vectors.len());
        let mut w = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != d1 + d2 {
                return Err(Error::DimensionMismatch {
                    expected: d1 + d2,
                    got: v.len(),
                });
            }
            z.push(DVector::from_iterator(d1, v.iter().take(d1).cloned()));
            w.push(DVector::from_iterator(d2, v.iter().skip(d1).cloned()));
        }
        Self::new(z, w)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Raw Ginibre pairwise moment E[(x^T G y)(z^T G w)] = (1/d1)<x,z><y,w>.
pub fn ginibre_pairwise_moment(
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
    d1: usize,
) -> f64 {
    x.dot(z) * y.dot(w) / d1 as f64
}

fn quad_diag(a: &DiagonalSpectrum, v: &DVector<f64>) -> f64 {
    v.iter().zip(a.values()).map(|(x, w)| x * x * w).sum()
}

/// Bound pair transcript with pairwise coefficients and the subset-DP memo.
pub struct OffdiagLikelihoodContext {
    pairs: PairTranscript,
    denoms: Vec<f64>,
    a: DiagonalSpectrum,
    b: DiagonalSpectrum,
    eps: f64,
    coeffs: PairwiseCoefficients,
    memo: Vec<f64>,
}

impl OffdiagLikelihoodContext {
    pub fn new(
        pairs: PairTranscript,
        a: &DiagonalSpectrum,
        b: &DiagonalSpectrum,
        eps: f64,
        budget: &EngineBudget,
    ) -> Result<Self> {
        let t = pairs.len();
        budget.check("transcript length (subset DP)", t, budget.exact_len)?;
        let d1 = a.len();
        let d2 = b.len();
        let mut denoms = Vec::with_capacity(t);
        for (z, w) in pairs.z.iter().zip(&pairs.w) {
            if z.len() != d1 || w.len() != d2 {
                return Err(Error::DimensionMismatch {
                    expected: d1 + d2,
                    got: z.len() + w.len(),
                });
            }
            denoms.push(quad_diag(a, z) + quad_diag(b, w));
        }
        let scale = 4.0 * eps * eps / (d1 as f64 * (d2 * d2) as f64);
        let mut coeffs = PairwiseCoefficients::new(t);
        for i in 0..t {
            for j in (i + 1)..t {
                let ip = pairs.z[i].dot(&pairs.z[j]) * pairs.w[i].dot(&pairs.w[j]);
                coeffs.set(i, j, scale * ip / (denoms[i] * denoms[j]));
            }
        }
        let memo = subset_dp(&coeffs);
        Ok(Self {
            pairs,
            denoms,
            a: a.clone(),
            b: b.clone(),
            eps,
            coeffs,
            memo,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn likelihood(&self) -> f64 {
        self.memo[self.full_mask()]
    }

    pub fn leave_one_out(&self, i: usize) -> f64 {
        self.memo[self.full_mask() & !(1 << i)]
    }

    fn full_mask(&self) -> usize {
        (1usize << self.pairs.len()) - 1
    }

    pub fn matching_sum_likelihood(&self, budget: &EngineBudget) -> Result<f64> {
        budget.check(
            "transcript length (matching sum)",
            self.len(),
            budget.matching_len,
        )?;
        Ok(matching_sum(&self.coeffs))
    }

    /// One-step extension ratio L((z,w),(z',w')) / L((z,w)).
    pub fn step_ratio(&self, z_new: &DVector<f64>, w_new: &DVector<f64>) -> Result<f64> {
        let d1 = self.a.len();
        let d2 = self.b.len();
        if z_new.len() != d1 || w_new.len() != d2 {
            return Err(Error::DimensionMismatch {
                expected: d1 + d2,
                got: z_new.len() + w_new.len(),
            });
        }
        let denom_new = quad_diag(&self.a, z_new) + quad_diag(&self.b, w_new);
        let scale = 4.0 * self.eps * self.eps / (d1 as f64 * (d2 * d2) as f64);
        let l_full = self.likelihood();
        let mut acc = 0.0;
        for i in 0..self.len() {
            let ip = self.pairs.z[i].dot(z_new) * self.pairs.w[i].dot(w_new);
            acc += scale * ip / (self.denoms[i] * denom_new) * self.leave_one_out(i);
        }
        Ok(1.0 + acc / l_full)
    }

    pub fn spectrum_a(&self) -> &DiagonalSpectrum {
        &self.a
    }

    pub fn spectrum_b(&self) -> &DiagonalSpectrum {
        &self.b
    }

    /// H((z,w)) = sum_i z_i w_i^T / D_i * L_{~i}/L; a d1 x d2 matrix.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let l_full = self.likelihood();
        self.weighted_sum(|i| self.leave_one_out(i) / l_full)
    }

    /// K((z,w)) = sum_i z_i w_i^T / D_i.
    pub fn k_matrix(&self) -> DMatrix<f64> {
        self.weighted_sum(|_| 1.0)
    }

    fn weighted_sum(&self, weight: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let d1 = self.a.len();
        let d2 = self.b.len();
        let mut k = DMatrix::<f64>::zeros(d1, d2);
        for idx in 0..self.len() {
            let w = weight(idx) / self.denoms[idx];
            for i in 0..d1 {
                for j in 0..d2 {
                    k[(i, j)] += w * self.pairs.z[idx][i] * self.pairs.w[idx][j];
                }
            }
        }
        k
    }
}

/// Exact off-diagonal likelihood with the default budget.
pub fn exact_likelihood_offdiag(
    pairs: &PairTranscript,
    a: &DiagonalSpectrum,
    b: &DiagonalSpectrum,
    eps: f64,
) -> Result<f64> {
    Ok(
        OffdiagLikelihoodContext::new(pairs.clone(), a, b, eps, &EngineBudget::default())?
            .likelihood(),
    )
}

/// K((z,w)) = sum_i z_i w_i^T / (z_i^T A z_i + w_i^T B w_i).
pub fn k_matrix_offdiag(
    pairs: &PairTranscript,
    a: &DiagonalSpectrum,
    b: &DiagonalSpectrum,
) -> Result<DMatrix<f64>> {
    let mut k = DMatrix::<f64>::zeros(a.len(), b.len());
    for (z, w) in pairs.z.iter().zip(&pairs.w) {
        if z.len() != a.len() || w.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len() + b.len(),
                got: z.len() + w.len(),
            });
        }
        let denom = quad_diag(a, z) + quad_diag(b, w);
        for i in 0..a.len() {
            for j in 0..b.len() {
                k[(i, j)] += z[i] * w[j] / denom;
            }
        }
    }
    Ok(k)
}

/// Per-step matrices N_i = z_i w_i^T ||z_i|| ||w_i|| / D_i^2 entering kappa.
fn kappa_terms(
    pairs: &PairTranscript,
    a: &DiagonalSpectrum,
    b: &DiagonalSpectrum,
) -> Vec<DMatrix<f64>> {
    pairs
        .z
        .iter()
        .zip(&pairs.w)
        .map(|(z, w)| {
            let denom = quad_diag(a, z) + quad_diag(b, w);
            let scale = z.norm() * w.norm() / (denom * denom);
            let mut n = DMatrix::<f64>::zeros(z.len(), w.len());
            for i in 0..z.len() {
                for j in 0..w.len() {
                    n[(i, j)] = scale * z[i] * w[j];
                }
            }
            n
        })
        .collect()
}

/// kappa((z,w)) = sup over b in [-1,1]^t of ||sum_i b_i N_i||_F, computed
/// exactly by enumerating sign vertices (the objective is convex in b, so
/// the box supremum is attained at a vertex). Gray-code order keeps each
/// vertex update O(d1 d2).
pub fn kappa_bruteforce(
    pairs: &PairTranscript,
    a: &DiagonalSpectrum,
    b: &DiagonalSpectrum,
    budget: &EngineBudget,
) -> Result<f64> {
    let t = pairs.len();
    budget.check("transcript length (kappa vertices)", t, budget.kappa_len)?;
    let terms = kappa_terms(pairs, a, b);
    if t == 0 {
        return Ok(0.0);
    }
    // start at the all-plus vertex
    let mut signs = vec![1.0f64; t];
    let mut s = DMatrix::<f64>::zeros(a.len(), b.len());
    for n in &terms {
        s += n;
    }
    let mut best = s.norm_squared();
    for code in 1..(1usize << t) {
        let flip = code.trailing_zeros() as usize;
        let delta = -2.0 * signs[flip];
        signs[flip] = -signs[flip];
        s.zip_apply(&terms[flip], |acc, n| *acc += delta * n);
        best = best.max(s.norm_squared());
    }
    Ok(best.sqrt())
}

/// The vector-relaxation side of the Grothendieck reduction:
/// max over sign vertices c of || sum_i c_i z_i ||z_i|| ||w_i||^2 / D_i^2 ||_2.
/// The reduction bounds kappa^2 by twice the square of this maximum.
pub fn kappa_vector_relaxation_max(
    pairs: &PairTranscript,
    a: &DiagonalSpectrum,
    b: &DiagonalSpectrum,
    budget: &EngineBudget,
) -> Result<f64> {
    let t = pairs.len();
    budget.check("transcript length (kappa vertices)", t, budget.kappa_len)?;
    if t == 0 {
        return Ok(0.0);
    }
    let terms: Vec<DVector<f64>> = pairs
        .z
        .iter()
        .zip(&pairs.w)
        .map(|(z, w)| {
            let denom = quad_diag(a, z) + quad_diag(b, w);
            z * (z.norm() * w.norm_squared() / (denom * denom))
        })
        .collect();
    let mut signs = vec![1.0f64; t];
    let mut s = DVector::<f64>::zeros(a.len());
    for v in &terms {
        s += v;
    }
    let mut best = s.norm_squared();
    for code in 1..(1usize << t) {
        let flip = code.trailing_zeros() as usize;
        let delta = -2.0 * signs[flip];
        signs[flip] = -signs[flip];
        s.zip_apply(&terms[flip], |acc, v| *acc += delta * v);
        best = best.max(s.norm_squared());
    }
    Ok(best.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn random_pair(d1: usize, d2: usize, rng: &mut impl rand::Rng) -> (DVector<f64>, DVector<f64>) {
        let z: DVector<f64> =
            DVector::from_iterator(d1, (0..d1).map(|_| StandardNormal.sample(rng)));
        let w: DVector<f64> =
            DVector::from_iterator(d2, (0..d2).map(|_| StandardNormal.sample(rng)));
        let n = (z.norm_squared() + w.norm_squared()).sqrt();
        (z.unscale(n), w.unscale(n))
    }

    fn random_pairs(t: usize, d1: usize, d2: usize, rng: &mut impl rand::Rng) -> PairTranscript {
        let mut zs = Vec::new();
        let mut ws = Vec::new();
        for _ in 0..t {
            let (z, w) = random_pair(d1, d2, rng);
            zs.push(z);
            ws.push(w);
        }
        PairTranscript::new(zs, ws).unwrap()
    }

    #[test]
    fn empty_is_one() {
        let a = DiagonalSpectrum::flat(4, 0.05);
        let b = DiagonalSpectrum::flat(4, 0.2);
        let pairs = PairTranscript::new(vec![], vec![]).unwrap();
        assert_eq!(exact_likelihood_offdiag(&pairs, &a, &b, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn sign_flip_forces_negative_coefficient() {
        // two steps with w2 = -w1, z2 = z1: L = 1 + k12 with k12 < 0
        let d1 = 4;
        let d2 = 3;
        let a = DiagonalSpectrum::flat(d1, 0.1);
        let b = DiagonalSpectrum::flat(d2, 0.2);
        let mut rng = derive_rng(71, 0);
        let (z, w) = random_pair(d1, d2, &mut rng);
        let pairs =
            PairTranscript::new(vec![z.clone(), z.clone()], vec![w.clone(), -w.clone()]).unwrap();
        let eps = 0.05;
        let l = exact_likelihood_offdiag(&pairs, &a, &b, eps).unwrap();
        let denom = quad_diag(&a, &z) + quad_diag(&b, &w);
        let k12 = 4.0 * eps * eps / (d1 as f64 * (d2 * d2) as f64)
            * (z.norm_squared() * (-w.norm_squared()))
            / (denom * denom);
        assert!(k12 < 0.0);
        assert!((l - (1.0 + k12)).abs() < 1e-15);
    }

    #[test]
    fn dp_matches_matching_sum() {
        let mut rng = derive_rng(72, 0);
        let a = DiagonalSpectrum::flat(6, 0.08);
        let b = DiagonalSpectrum::flat(4, 0.13);
        let budget = EngineBudget::default();
        for _ in 0..50 {
            let t = 2 + (rng.next_u64() % 8) as usize;
            let pairs = random_pairs(t, 6, 4, &mut rng);
            let ctx = OffdiagLikelihoodContext::new(pairs, &a, &b, 0.05, &budget).unwrap();
            let dp = ctx.likelihood();
            let brute = ctx.matching_sum_likelihood(&budget).unwrap();
            assert!(((dp - brute) / dp.abs().max(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn ginibre_moment_matches_monte_carlo() {
        let (d1, d2) = (8, 4);
        let mut rng = derive_rng(73, 0);
        let (x, y) = random_pair(d1, d2, &mut rng);
        let (z, w) = random_pair(d1, d2, &mut rng);
        let exact = ginibre_pairwise_moment(&x, &y, &z, &w, d1);
        let samples = 200_000;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for k in 1..=samples {
            let g = crate::ensembles::sample_ginibre(d1, d2, &mut rng);
            let v = (x.transpose() * &g * &y)[(0, 0)] * (z.transpose() * &g * &w)[(0, 0)];
            let delta = v - mean;
            mean += delta / k as f64;
            m2 += delta * (v - mean);
        }
        let se = (m2 / (samples as f64 - 1.0) / samples as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "exact {exact} mc {mean} se {se}"
        );
    }

    #[test]
    fn offdiag_h_equals_k_at_zero_eps_and_single_step() {
        let mut rng = derive_rng(78, 0);
        let a = DiagonalSpectrum::flat(5, 0.1);
        let b = DiagonalSpectrum::flat(3, 0.5 / 3.0);
        let budget = EngineBudget::default();
        let pairs = random_pairs(6, 5, 3, &mut rng);
        let ctx = OffdiagLikelihoodContext::new(pairs.clone(), &a, &b, 0.0, &budget).unwrap();
        assert_eq!(ctx.h_matrix(), ctx.k_matrix());

        let single =
            PairTranscript::new(vec![pairs.z[0].clone()], vec![pairs.w[0].clone()]).unwrap();
        let ctx1 = OffdiagLikelihoodContext::new(single, &a, &b, 0.05, &budget).unwrap();
        assert_eq!(ctx1.h_matrix(), ctx1.k_matrix());

        // at nonzero eps, H - K is controlled by the leave-one-out ratios
        let ctx = OffdiagLikelihoodContext::new(pairs, &a, &b, 0.05, &budget).unwrap();
        let l = ctx.likelihood();
        let max_dev = (0..ctx.len())
            .map(|i| (ctx.leave_one_out(i) / l - 1.0).abs())
            .fold(0.0, f64::max);
        let term_frob_sum: f64 = (0..ctx.len())
            .map(|i| {
                let k1 = OffdiagLikelihoodContext::new(
                    PairTranscript::new(vec![ctx_pair_z(&ctx, i)], vec![ctx_pair_w(&ctx, i)])
                        .unwrap(),
                    &a,
                    &b,
                    0.0,
                    &budget,
                )
                .unwrap()
                .k_matrix();
                k1.norm()
            })
            .sum();
        let diff = (ctx.h_matrix() - ctx.k_matrix()).norm();
        assert!(diff <= max_dev * term_frob_sum + 1e-12);
    }

    fn ctx_pair_z(ctx: &OffdiagLikelihoodContext, i: usize) -> DVector<f64> {
        ctx.pairs.z[i].clone()
    }

    fn ctx_pair_w(ctx: &OffdiagLikelihoodContext, i: usize) -> DVector<f64> {
        ctx.pairs.w[i].clone()
    }

    #[test]
    fn kappa_single_step() {
        // t = 1: kappa = ||z||^2 ||w||^2 / D^2
        let d1 = 5;
        let d2 = 3;
        let a = DiagonalSpectrum::flat(d1, 0.12);
        let b = DiagonalSpectrum::flat(d2, 0.14);
        let mut rng = derive_rng(74, 0);
        let (z, w) = random_pair(d1, d2, &mut rng);
        let pairs = PairTranscript::new(vec![z.clone()], vec![w.clone()]).unwrap();
        let kappa = kappa_bruteforce(&pairs, &a, &b, &EngineBudget::default()).unwrap();
        let denom = quad_diag(&a, &z) + quad_diag(&b, &w);
        let expected = z.norm_squared() * w.norm_squared() / (denom * denom);
        assert!((kappa - expected).abs() < 1e-12);
    }

    #[test]
    fn appendix_transcript_separates_k_and_kappa() {
        // alternating (z, w), (z, -w) with ||z||^2 = b/(a+b), ||w||^2 = a/(a+b)
        // at a = b = 0.1, t = 4: K = 0, kappa = t/(4ab) = 100
        let d1 = 4;
        let d2 = 4;
        let (a_val, b_val) = (0.1, 0.1);
        let a = DiagonalSpectrum::flat(d1, a_val);
        let b = DiagonalSpectrum::flat(d2, b_val);
        let mut z = DVector::zeros(d1);
        z[0] = (b_val / (a_val + b_val)).sqrt();
        let mut w = DVector::zeros(d2);
        w[0] = (a_val / (a_val + b_val)).sqrt();
        let t = 4;
        let zs = vec![z.clone(); t];
        let ws = (0..t)
            .map(|i| if i % 2 == 0 { w.clone() } else { -w.clone() })
            .collect();
        let pairs = PairTranscript::new(zs, ws).unwrap();
        let k = k_matrix_offdiag(&pairs, &a, &b).unwrap();
        assert!(k.norm() < 1e-12, "K should vanish, got {}", k.norm());
        let kappa = kappa_bruteforce(&pairs, &a, &b, &EngineBudget::default()).unwrap();
        assert!((kappa - 100.0).abs() < 1e-9, "kappa = {kappa}");
    }

    #[test]
    fn kappa_vertex_dominates_interior_points() {
        // the convex objective attains its box max at a vertex
        let mut rng = derive_rng(75, 0);
        let a = DiagonalSpectrum::flat(5, 0.1);
        let b = DiagonalSpectrum::flat(3, 0.5 / 3.0);
        let pairs = random_pairs(7, 5, 3, &mut rng);
        let kappa = kappa_bruteforce(&pairs, &a, &b, &EngineBudget::default()).unwrap();
        let terms = kappa_terms(&pairs, &a, &b);
        use rand::RngExt;
        for _ in 0..10_000 {
            let mut s = DMatrix::<f64>::zeros(5, 3);
            for n in &terms {
                s += n * rng.random_range(-1.0..1.0);
            }
            assert!(s.norm() <= kappa + 1e-12);
        }
    }

    #[test]
    fn grothendieck_direction_on_random_transcripts() {
        // kappa^2 <= 2 * (vector-relaxation vertex max)^2
        let mut rng = derive_rng(76, 0);
        let a = DiagonalSpectrum::flat(6, 0.05);
        let b = DiagonalSpectrum::flat(4, 0.175);
        let budget = EngineBudget::default();
        for _ in 0..50 {
            let t = 1 + (rng.next_u64() % 10) as usize;
            let pairs = random_pairs(t, 6, 4, &mut rng);
            let kappa = kappa_bruteforce(&pairs, &a, &b, &budget).unwrap();
            let relax = kappa_vector_relaxation_max(&pairs, &a, &b, &budget).unwrap();
            assert!(
                kappa * kappa <= 2.0 * relax * relax + 1e-9,
                "kappa^2 = {} vs 2 relax^2 = {}",
                kappa * kappa,
                2.0 * relax * relax
            );
        }
    }

    #[test]
    fn kappa_budget_enforced() {
        let a = DiagonalSpectrum::flat(2, 0.25);
        let b = DiagonalSpectrum::flat(2, 0.25);
        let mut rng = derive_rng(77, 0);
        let pairs = random_pairs(5, 2, 2, &mut rng);
        let budget = EngineBudget {
            kappa_len: 4,
            ..Default::default()
        };
        assert!(matches!(
            kappa_bruteforce(&pairs, &a, &b, &budget),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
