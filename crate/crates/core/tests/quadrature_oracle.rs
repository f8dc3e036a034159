//! Independent Gauss-Hermite quadrature oracle for the exact likelihood
//! engines.
//!
//! At d = 2 a trace-centered GOE matrix has two free coordinates,
//! M = [[u, v], [v, -u]] with u, v independent N(0, 1/2), so the
//! likelihood is a two-dimensional Gaussian integral of a polynomial of
//! degree t in each variable; tensor Gauss-Hermite quadrature with more
//! than t/2 nodes per axis evaluates it exactly. The same works for the
//! off-diagonal engine with a 2 x 1 Ginibre block. Neither path shares
//! anything with the matching-sum machinery being checked.

use nalgebra::{DMatrix, DVector};
use qcert_core::likelihood::{
    EngineBudget, GoeLikelihoodContext, OffdiagLikelihoodContext, PairTranscript,
};
use qcert_core::rng::derive_rng;
use qcert_core::states::DiagonalSpectrum;
use rand_distr::{Distribution, StandardNormal};

/// Gauss-Hermite nodes and weights for weight e^{-x^2} via Golub-Welsch:
/// the Jacobi matrix is tridiagonal with off-diagonal sqrt(k/2).
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (node, std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// E[f(X)] for X ~ N(0, sigma^2) by substitution x = sqrt(2) sigma t.
fn gaussian_nodes(n: usize, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_hermite(n);
    let scale = std::f64::consts::SQRT_2 * sigma;
    let norm = 1.0 / std::f64::consts::PI.sqrt();
    (
        nodes.iter().map(|t| scale * t).collect(),
        weights.iter().map(|w| w * norm).collect(),
    )
}

fn unit(d: usize, rng: &mut impl rand::Rng) -> DVector<f64> {
    let v = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
    let n = v.norm();
    v.unscale(n)
}

#[test]
fn gauss_hermite_integrates_moments() {
    // E[X^2] = sigma^2 and E[X^4] = 3 sigma^4 for X ~ N(0, sigma^2)
    let sigma = 0.7;
    let (nodes, weights) = gaussian_nodes(6, sigma);
    let m2: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x * x).sum();
    let m4: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x.powi(4)).sum();
    assert!((m2 - sigma * sigma).abs() < 1e-14);
    assert!((m4 - 3.0 * sigma.powi(4)).abs() < 1e-13);
}

#[test]
fn goe_likelihood_matches_two_dimensional_quadrature() {
    // d = 2: M = G - (Tr G / 2) I = [[u, v], [v, -u]],
    // u = (G11 - G22)/2 ~ N(0, 1/2), v = G12 ~ N(0, 1/2), independent
    let d = 2;
    let eps = 1.0 / 12.0;
    let budget = EngineBudget::default();
    let mut rng = derive_rng(7100, 0);
    for trial in 0..50 {
        let t = 1 + trial % 6;
        let a_vals = if trial % 2 == 0 {
            vec![1.0, 1.0]
        } else {
            vec![0.8, 1.2]
        };
        let a = DiagonalSpectrum::new(a_vals).unwrap();
        let vectors: Vec<DVector<f64>> = (0..t).map(|_| unit(d, &mut rng)).collect();
        let dp = GoeLikelihoodContext::new(vectors.clone(), &a, eps, &budget)
            .unwrap()
            .likelihood();

        let sigma = (0.5f64).sqrt();
        let (nodes, weights) = gaussian_nodes(t + 2, sigma);
        let mut integral = 0.0;
        for (u, wu) in nodes.iter().zip(&weights) {
            for (v, wv) in nodes.iter().zip(&weights) {
                let mut product = 1.0;
                for z in &vectors {
                    let quad = u * (z[0] * z[0] - z[1] * z[1]) + 2.0 * v * z[0] * z[1];
                    let denom = a.values()[0] * z[0] * z[0] + a.values()[1] * z[1] * z[1];
                    product *= 1.0 + eps * quad / denom;
                }
                integral += wu * wv * product;
            }
        }
        assert!(
            (dp - integral).abs() <= 1e-12 * dp.abs().max(1.0),
            "t={t}: dp {dp} vs quadrature {integral}"
        );
    }
}

#[test]
fn offdiag_likelihood_matches_quadrature() {
    // d1 = 2, d2 = 1: G is a 2-vector with i.i.d. N(0, 1/2) entries
    let (d1, d2) = (2usize, 1usize);
    let eps = 0.04;
    let budget = EngineBudget::default();
    let mut rng = derive_rng(7200, 0);
    for trial in 0..50 {
        let t = 1 + trial % 6;
        let a = DiagonalSpectrum::new(vec![0.2, 0.3]).unwrap();
        let b = DiagonalSpectrum::new(vec![0.5]).unwrap();
        let mut zs = Vec::new();
        let mut ws = Vec::new();
        for _ in 0..t {
            let full = unit(d1 + d2, &mut rng);
            zs.push(DVector::from_vec(vec![full[0], full[1]]));
            ws.push(DVector::from_vec(vec![full[2]]));
        }
        let pairs = PairTranscript::new(zs.clone(), ws.clone()).unwrap();
        let dp = OffdiagLikelihoodContext::new(pairs, &a, &b, eps, &budget)
            .unwrap()
            .likelihood();

        let sigma = (0.5f64).sqrt(); // entries N(0, 1/d1)
        let (nodes, weights) = gaussian_nodes(t + 2, sigma);
        let mut integral = 0.0;
        for (g1, w1) in nodes.iter().zip(&weights) {
            for (g2, w2) in nodes.iter().zip(&weights) {
                let mut product = 1.0;
                for (z, w) in zs.iter().zip(&ws) {
                    let bilinear = (z[0] * g1 + z[1] * g2) * w[0];
                    let denom = 0.2 * z[0] * z[0] + 0.3 * z[1] * z[1] + 0.5 * w[0] * w[0];
                    product *= 1.0 + 2.0 * eps / d2 as f64 * bilinear / denom;
                }
                integral += w1 * w2 * product;
            }
        }
        assert!(
            (dp - integral).abs() <= 1e-12 * dp.abs().max(1.0),
            "t={t}: dp {dp} vs quadrature {integral}"
        );
    }
}

#[test]
fn goe_pairwise_moment_matches_quadrature_at_d2() {
    // E[(x^T M x)(y^T M y)] for the d = 2 parametrization
    let d = 2;
    let a = DiagonalSpectrum::flat(d, 1.0);
    let mut rng = derive_rng(7300, 0);
    for _ in 0..20 {
        let x = unit(d, &mut rng);
        let y = unit(d, &mut rng);
        let exact = qcert_core::likelihood::goe_pairwise_moment(&x, &y, &a).unwrap();
        let sigma = (0.5f64).sqrt();
        let (nodes, weights) = gaussian_nodes(4, sigma);
        let mut integral = 0.0;
        for (u, wu) in nodes.iter().zip(&weights) {
            for (v, wv) in nodes.iter().zip(&weights) {
                let qx = u * (x[0] * x[0] - x[1] * x[1]) + 2.0 * v * x[0] * x[1];
                let qy = u * (y[0] * y[0] - y[1] * y[1]) + 2.0 * v * y[0] * y[1];
                integral += wu * wv * qx * qy;
            }
        }
        assert!(
            (exact - integral).abs() < 1e-14,
            "exact {exact} vs quadrature {integral}"
        );
    }
}
