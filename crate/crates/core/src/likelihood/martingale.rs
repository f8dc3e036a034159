//! Martingale diagnostics: the one-step conditional expectation of the
//! likelihood-ratio martingale, null-trajectory K traces, and the Doob
//! running-supremum statistic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::goe::{quad_form_diag, GoeLikelihoodContext};
use super::multiblock::MultiblockLikelihood;
use super::offdiag::OffdiagLikelihoodContext;
use crate::error::{Error, Result};
use crate::measurement::{outcome_distribution, sample_index, validate_povm, Povm, Strategy};
use crate::states::{DensityMatrix, DiagonalSpectrum};

/// Which prefix context a martingale step extends.
pub enum StepContext<'a> {
    Goe(&'a GoeLikelihoodContext),
    Offdiag(&'a OffdiagLikelihoodContext),
    Multiblock(&'a MultiblockLikelihood),
}

/// Exact conditional expectation E[Phi_t / Phi_{t-1} | F_{t-1}] for one
/// POVM: the sum over outcomes of p0(outcome) * (L(child)/L(prefix)).
/// The martingale property makes this exactly 1 for every complete POVM.
pub fn martingale_step_expectation(ctx: &StepContext, povm: &Povm) -> Result<f64> {
    let validation = validate_povm(povm);
    if !validation.ok {
        return Err(Error::InvalidPovm(format!(
            "completeness residual {:e}",
            validation.frobenius_residual
        )));
    }
    let d = povm.dim() as f64;
    let mut acc = 0.0;
    for el in povm.elements() {
        let max_imag = el.vector.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if max_imag > 1e-12 {
            return Err(Error::ComplexInput { max_imag });
        }
        let x = el.vector.map(|c| c.re);
        let (p0, ratio) = match ctx {
            StepContext::Goe(goe) => {
                // null state A/d: p0 = omega d x^T (A/d) x = omega x^T A x
                let p0 = el.weight * quad_form_diag(goe.spectrum(), &x);
                (p0, goe.step_ratio(&x)?)
            }
            StepContext::Offdiag(off) => {
                let d1 = off_spectrum_a(off).len();
                let z = DVector::from_iterator(d1, x.iter().take(d1).cloned());
                let w = DVector::from_iterator(x.len() - d1, x.iter().skip(d1).cloned());
                let p0 = el.weight
                    * d
                    * (quad_form_diag(off_spectrum_a(off), &z)
                        + quad_form_diag(off_spectrum_b(off), &w));
                (p0, off.step_ratio(&z, &w)?)
            }
            StepContext::Multiblock(mb) => {
                let nu = mb
                    .partition()
                    .support_block(&el.vector)
                    .ok_or(Error::MixedBlockSupport { step: usize::MAX })?;
                let range = mb.partition().range(nu);
                let restricted = DVector::from_iterator(range.len(), range.map(|i| x[i]));
                // null state diag(A_1..A_m)/d: p0 = omega x^T A_nu x
                let p0 = el.weight * quad_form_diag(&mb.specs()[nu].0, &restricted);
                (p0, mb.step_ratio(&x)?)
            }
        };
        acc += p0 * ratio;
    }
    Ok(acc)
}

fn off_spectrum_a(ctx: &OffdiagLikelihoodContext) -> &DiagonalSpectrum {
    ctx.spectrum_a()
}

fn off_spectrum_b(ctx: &OffdiagLikelihoodContext) -> &DiagonalSpectrum {
    ctx.spectrum_b()
}

/// One null trajectory's K-matrix record.
#[derive(Debug, Clone)]
pub struct MartingaleTrace {
    pub d: usize,
    pub n: usize,
    /// ||K_t||_F^2 after each step.
    pub k_frob_sq_path: Vec<f64>,
    /// Running supremum sup_{1<=s<=t} ||K_s||_F^2 at the final step.
    pub sup_k_frob_sq: f64,
    pub final_k_frob_sq: f64,
    /// Phi_t = L(x_{<=t}) per step, when a DP budget was granted.
    pub phi_path: Option<Vec<f64>>,
}

/// Simulates one trajectory under the null state A/d and records the
/// running Frobenius norm of K_t = sum (d x x^T - I)/(x^T A x).
///
/// `phi_eps` additionally records the likelihood-ratio path Phi_t at the
/// given eps via the subset DP (needs n within the exact budget).
pub fn simulate_null_k_trace(
    a: &DiagonalSpectrum,
    strategy: &mut dyn Strategy,
    n: usize,
    phi_eps: Option<f64>,
    rng: &mut impl Rng,
) -> Result<MartingaleTrace> {
    let d = a.len();
    let dd = d as f64;
    let spectrum_state = DiagonalSpectrum::new(a.values().iter().map(|v| v / dd).collect())?;
    let rho0 = DensityMatrix::from_diagonal(&spectrum_state)?;
    let mut transcript = crate::measurement::Transcript::new();
    let mut k = DMatrix::<f64>::zeros(d, d);
    let mut k_frob_sq_path = Vec::with_capacity(n);
    let mut sup = 0.0f64;
    for _ in 0..n {
        let povm = strategy.next_povm(&transcript);
        let probs = outcome_distribution(&povm, &rho0)?;
        let idx = sample_index(&probs, rng);
        let el = &povm.elements()[idx];
        let max_imag = el.vector.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if max_imag > 1e-12 {
            return Err(Error::ComplexInput { max_imag });
        }
        let x = el.vector.map(|c| c.re);
        let q = quad_form_diag(a, &x);
        for i in 0..d {
            for j in 0..d {
                k[(i, j)] += (dd * x[i] * x[j] - if i == j { 1.0 } else { 0.0 }) / q;
            }
        }
        let frob_sq = k.norm_squared();
        sup = sup.max(frob_sq);
        k_frob_sq_path.push(frob_sq);
        transcript.push(crate::measurement::TranscriptStep {
            vector: el.vector.clone(),
            weight: el.weight,
            povm_id: povm.id().to_string(),
            outcome_index: idx,
            log_prob: probs[idx].ln(),
            block: None,
        });
    }
    let phi_path = match phi_eps {
        Some(eps) => {
            let ctx = GoeLikelihoodContext::from_transcript(
                &transcript,
                a,
                eps,
                &super::EngineBudget::default(),
            )?;
            Some(
                (1..=n)
                    .map(|t| ctx.subset_likelihood((1usize << t) - 1))
                    .collect(),
            )
        }
        None => None,
    };
    Ok(MartingaleTrace {
        d,
        n,
        sup_k_frob_sq: sup,
        final_k_frob_sq: k_frob_sq_path.last().copied().unwrap_or(0.0),
        k_frob_sq_path,
        phi_path,
    })
}

/// Summary of sup_t ||K_t||_F^2 over null trajectories, against the
/// explicit chain bound 8 n d (d - 1) (Doob L^2 factor 4 times the
/// step-variance bound 2 n d (d - 1)).
#[derive(Debug, Clone)]
pub struct DoobSummary {
    pub trajectories: usize,
    pub d: usize,
    pub n: usize,
    pub mean_sup: f64,
    pub mean_final: f64,
    pub q50_sup: f64,
    pub q90_sup: f64,
    pub max_sup: f64,
    /// 8 n d (d - 1).
    pub bound: f64,
}

pub fn doob_statistic(traces: &[MartingaleTrace]) -> Result<DoobSummary> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("traces"));
    }
    let d = traces[0].d;
    let n = traces[0].n;
    if traces.iter().any(|t| t.d != d || t.n != n) {
        return Err(Error::InvalidParameter {
            name: "traces",
            message: "mixed (d, n) in one summary".to_string(),
        });
    }
    let mut sups: Vec<f64> = traces.iter().map(|t| t.sup_k_frob_sq).collect();
    sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean_sup = sups.iter().sum::<f64>() / sups.len() as f64;
    let mean_final = traces.iter().map(|t| t.final_k_frob_sq).sum::<f64>() / traces.len() as f64;
    let quantile = |q: f64| sups[(q * (sups.len() - 1) as f64).round() as usize];
    Ok(DoobSummary {
        trajectories: traces.len(),
        d,
        n,
        mean_sup,
        mean_final,
        q50_sup: quantile(0.5),
        q90_sup: quantile(0.9),
        max_sup: *sups.last().unwrap(),
        bound: 8.0 * n as f64 * d as f64 * (d as f64 - 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::EngineBudget;
    use crate::measurement::{haar_basis_povm, standard_basis_povm, StandardBasisStrategy};
    use crate::rng::derive_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_units(t: usize, d: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
        (0..t)
            .map(|_| {
                let v = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
                let n = v.norm();
                v.unscale(n)
            })
            .collect()
    }

    #[test]
    fn goe_step_expectation_is_one() {
        let d = 8;
        let a = DiagonalSpectrum::flat(d, 1.0);
        let mut rng = derive_rng(101, 0);
        for trial in 0..20 {
            let t = 1 + trial % 8;
            let ctx = GoeLikelihoodContext::new(
                random_units(t, d, &mut rng),
                &a,
                1.0 / 12.0,
                &EngineBudget::default(),
            )
            .unwrap();
            let povm = if trial % 2 == 0 {
                standard_basis_povm(d)
            } else {
                haar_basis_povm(d, &mut rng)
            };
            let e = martingale_step_expectation(&StepContext::Goe(&ctx), &povm).unwrap();
            assert!((e - 1.0).abs() <= 1e-10, "deviation {}", (e - 1.0).abs());
        }
    }

    #[test]
    fn zero_eps_step_expectation_exactly_one() {
        let d = 6;
        let a = DiagonalSpectrum::flat(d, 1.0);
        let mut rng = derive_rng(102, 0);
        let ctx = GoeLikelihoodContext::new(
            random_units(4, d, &mut rng),
            &a,
            0.0,
            &EngineBudget::default(),
        )
        .unwrap();
        let povm = haar_basis_povm(d, &mut rng);
        let e = martingale_step_expectation(&StepContext::Goe(&ctx), &povm).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_step_sup_is_d_d_minus_one() {
        // standard basis, A = I: ||d e e^T - I||_F^2 = d(d-1) every time
        let d = 8;
        let a = DiagonalSpectrum::flat(d, 1.0);
        let mut rng = derive_rng(103, 0);
        for _ in 0..10 {
            let mut strategy = StandardBasisStrategy::new(d);
            let trace = simulate_null_k_trace(&a, &mut strategy, 1, None, &mut rng).unwrap();
            assert!((trace.sup_k_frob_sq - (d * (d - 1)) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn doob_mean_sup_below_chain_bound() {
        let d = 8;
        let n = 50;
        let a = DiagonalSpectrum::flat(d, 1.0);
        let traces: Vec<_> = (0..200)
            .map(|i| {
                let mut rng = derive_rng(104, i);
                let mut strategy = StandardBasisStrategy::new(d);
                simulate_null_k_trace(&a, &mut strategy, n, None, &mut rng).unwrap()
            })
            .collect();
        let summary = doob_statistic(&traces).unwrap();
        assert!(
            summary.mean_sup <= summary.bound,
            "{} > {}",
            summary.mean_sup,
            summary.bound
        );
        // E||K_n||_F^2 = n d (d-1) exactly for A = I, any POVM sequence
        let expect_final = (n * d * (d - 1)) as f64;
        assert!(
            (summary.mean_final - expect_final).abs() < 0.2 * expect_final,
            "mean final {} vs {}",
            summary.mean_final,
            expect_final
        );
    }

    #[test]
    fn incremental_k_matches_direct_recomputation_at_checkpoint() {
        let d = 6;
        let a = DiagonalSpectrum::flat(d, 1.0);
        let mut rng = derive_rng(105, 0);
        let mut strategy = crate::measurement::HaarBasisStrategy::new(d, derive_rng(105, 1));
        let n = 12;
        let trace = simulate_null_k_trace(&a, &mut strategy, n, Some(0.05), &mut rng).unwrap();
        // phi path starts at L(x_{<=1}) = 1 and stays positive
        let phi = trace.phi_path.as_ref().unwrap();
        assert_eq!(phi.len(), n);
        assert!((phi[0] - 1.0).abs() < 1e-15);
        assert!(phi.iter().all(|&v| v > 0.0));
        // running sup is the max of the path
        let max_path = trace.k_frob_sq_path.iter().cloned().fold(0.0, f64::max);
        assert_eq!(trace.sup_k_frob_sq, max_path);
    }

    #[test]
    fn empty_doob_is_error() {
        assert!(doob_statistic(&[]).is_err());
    }
}
