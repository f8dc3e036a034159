//! Instance-optimal copy-complexity calculator: dyadic eigenvalue
//! bucketing with mass removal, perturbation tuning, and closed-form
//! lower-bound values for each hard-instance family.
//!
//! All asymptotic constants are replaced by unit constants and reported
//! alongside results; downstream comparisons are scaling checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{fidelity_mm_quasinorm, DiagonalSpectrum};

/// Mass-removal scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketScheme {
    /// Remove every bucket whose total mass is below eps.
    Simple,
    /// Remove the smallest entries summing to at most eps, the buckets of
    /// mass at most 2 eps / log2(d/eps), and a tail sorted by
    /// sigma_i / d_j(i)^2.
    Refined,
}

/// One dyadic bucket S_j = { i : 2^{-j-1} < sigma_i <= 2^{-j} }.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bucket {
    pub j: u32,
    pub indices: Vec<usize>,
    pub surviving: Vec<usize>,
    pub total_mass: f64,
    pub surviving_mass: f64,
}

impl Bucket {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn surviving_size(&self) -> usize {
        self.surviving.len()
    }
}

/// Result of bucketing and mass removal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketDecomposition {
    pub scheme: BucketScheme,
    pub eps: f64,
    pub dim: usize,
    pub buckets: BTreeMap<u32, Bucket>,
    /// Buckets with at least one surviving index.
    pub surviving_buckets: Vec<u32>,
    pub removed_indices: Vec<usize>,
    pub removed_mass: f64,
    /// removed_mass / eps; the achieved removal constant.
    pub removal_constant: f64,
    /// Zeroed, unnormalized spectrum.
    pub sigma_prime: DiagonalSpectrum,
    /// Normalized spectrum sigma' / Tr(sigma').
    pub sigma_star: DiagonalSpectrum,
    /// Rank of sigma* (nonzero entries of sigma').
    pub d_eff: usize,
}

/// The unique j >= 0 with 2^{-j-1} < value <= 2^{-j}, for value in (0, 1].
pub fn bucket_index(value: f64) -> Result<u32> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "sigma_i",
            message: format!("{value} outside (0, 1]"),
        });
    }
    let mut j = (-value.log2()).floor() as i64;
    if j < 0 {
        j = 0;
    }
    // repair roundoff at dyadic boundaries
    loop {
        let hi = 0.5f64.powi(j as i32);
        let lo = 0.5 * hi;
        if value > hi {
            j -= 1;
        } else if value <= lo {
            j += 1;
        } else {
            return Ok(j as u32);
        }
    }
}

fn log2_d_over_eps(d: usize, eps: f64) -> f64 {
    (d as f64 / eps).log2()
}

/// Buckets the spectrum and removes light mass per the chosen scheme.
pub fn bucket(
    sigma: &DiagonalSpectrum,
    eps: f64,
    scheme: BucketScheme,
) -> Result<BucketDecomposition> {
    bucket_with_tail_constant(sigma, eps, scheme, 1.0)
}

/// As [`bucket`], exposing the refined scheme's tail-mass constant.
pub fn bucket_with_tail_constant(
    sigma: &DiagonalSpectrum,
    eps: f64,
    scheme: BucketScheme,
    tail_constant: f64,
) -> Result<BucketDecomposition> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            message: format!("{eps} outside (0, 1)"),
        });
    }
    let d = sigma.len();
    if sigma.max() > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter {
            name: "sigma",
            message: format!("entries must lie in [0, 1], max is {}", sigma.max()),
        });
    }
    let values = sigma.values();
    let mut buckets: BTreeMap<u32, Bucket> = BTreeMap::new();
    let mut index_bucket = vec![None; d];
    for (i, &v) in values.iter().enumerate() {
        if v <= 0.0 {
            continue; // zeros carry no bucket
        }
        let j = bucket_index(v)?;
        index_bucket[i] = Some(j);
        let b = buckets.entry(j).or_insert(Bucket {
            j,
            indices: Vec::new(),
            surviving: Vec::new(),
            total_mass: 0.0,
            surviving_mass: 0.0,
        });
        b.indices.push(i);
        b.total_mass += v;
    }
    if buckets.is_empty() {
        return Err(Error::AllMassRemoved);
    }

    let mut removed = vec![false; d];
    match scheme {
        BucketScheme::Simple => {
            for b in buckets.values() {
                if b.total_mass < eps {
                    for &i in &b.indices {
                        removed[i] = true;
                    }
                }
            }
        }
        BucketScheme::Refined => {
            // S_light^1: the largest set of smallest entries with mass <= eps
            let mut order: Vec<usize> = (0..d).filter(|&i| values[i] > 0.0).collect();
            order.sort_by(|&x, &y| values[x].partial_cmp(&values[y]).unwrap().then(x.cmp(&y)));
            let mut acc = 0.0;
            for &i in &order {
                if acc + values[i] > eps {
                    break;
                }
                acc += values[i];
                removed[i] = true;
            }
            // S_light^2: buckets of mass at most 2 eps / log2(d/eps)
            let light_cut = 2.0 * eps / log2_d_over_eps(d, eps);
            for b in buckets.values() {
                if b.total_mass <= light_cut {
                    for &i in &b.indices {
                        removed[i] = true;
                    }
                }
            }
            // S_tail: survivors sorted by sigma_i / d_j^2 (ties by index),
            // longest prefix of mass at most tail_constant * eps
            let mut survivors: Vec<usize> =
                (0..d).filter(|&i| values[i] > 0.0 && !removed[i]).collect();
            survivors.sort_by(|&x, &y| {
                let dx = buckets[&index_bucket[x].unwrap()].indices.len() as f64;
                let dy = buckets[&index_bucket[y].unwrap()].indices.len() as f64;
                let kx = values[x] / (dx * dx);
                let ky = values[y] / (dy * dy);
                kx.partial_cmp(&ky).unwrap().then(x.cmp(&y))
            });
            let mut acc = 0.0;
            for &i in &survivors {
                if acc + values[i] > tail_constant * eps {
                    break;
                }
                acc += values[i];
                removed[i] = true;
            }
        }
    }

    let mut sigma_prime_vals = values.to_vec();
    let mut removed_indices = Vec::new();
    let mut removed_mass = 0.0;
    for i in 0..d {
        if removed[i] {
            removed_mass += values[i];
            sigma_prime_vals[i] = 0.0;
            removed_indices.push(i);
        }
    }
    for b in buckets.values_mut() {
        b.surviving = b.indices.iter().cloned().filter(|&i| !removed[i]).collect();
        b.surviving_mass = b.surviving.iter().map(|&i| values[i]).sum();
    }
    let surviving_buckets: Vec<u32> = buckets
        .values()
        .filter(|b| !b.surviving.is_empty())
        .map(|b| b.j)
        .collect();
    if surviving_buckets.is_empty() {
        return Err(Error::AllMassRemoved);
    }
    if scheme == BucketScheme::Simple {
        // every surviving bucket holds mass >= eps, so there are at most
        // ceil(log2(d/eps)) + 1 of them
        let cap = log2_d_over_eps(d, eps).ceil() as usize + 1;
        debug_assert!(surviving_buckets.len() <= cap);
    }
    let trace: f64 = sigma_prime_vals.iter().sum();
    let sigma_prime = DiagonalSpectrum::new(sigma_prime_vals.clone())?;
    let sigma_star = DiagonalSpectrum::new(sigma_prime_vals.iter().map(|v| v / trace).collect())?;
    let d_eff = sigma_prime.values().iter().filter(|&&v| v > 0.0).count();
    Ok(BucketDecomposition {
        scheme,
        eps,
        dim: d,
        buckets,
        surviving_buckets,
        removed_indices,
        removed_mass,
        removal_constant: removed_mass / eps,
        sigma_prime,
        sigma_star,
        d_eff,
    })
}

/// Instance-optimal bound: (d sqrt(d_eff) / eps^2) * F(sigma*, I/d), with
/// the lower bound removing mass at scale eps and the upper at eps^2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub scheme: BucketScheme,
    pub dim: usize,
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
    pub d_eff_lower: usize,
    pub d_eff_upper: usize,
    pub fidelity_lower: f64,
    pub fidelity_upper: f64,
    pub removed_mass_lower: f64,
    pub removed_mass_upper: f64,
    /// Mass-removal scales used for the two sides (default eps and eps^2).
    pub removal_scale_lower: f64,
    pub removal_scale_upper: f64,
}

pub fn instance_optimal_bound(
    sigma: &DiagonalSpectrum,
    eps: f64,
    scheme: BucketScheme,
) -> Result<BoundReport> {
    instance_optimal_bound_with_scales(sigma, eps, scheme, eps, eps * eps)
}

/// The two mass-removal scales are parameters: the asymptotically natural
/// choices are eps for the lower side and eps^2 for the upper, but the
/// constants in front are a modeling choice, so callers can move them.
pub fn instance_optimal_bound_with_scales(
    sigma: &DiagonalSpectrum,
    eps: f64,
    scheme: BucketScheme,
    removal_scale_lower: f64,
    removal_scale_upper: f64,
) -> Result<BoundReport> {
    let d = sigma.len() as f64;
    let side = |scale: f64| -> Result<(f64, usize, f64, f64)> {
        let decomp = bucket(sigma, scale, scheme)?;
        let fidelity = fidelity_mm_quasinorm(&decomp.sigma_prime)?;
        let value = d * (decomp.d_eff as f64).sqrt() / (eps * eps) * fidelity;
        Ok((value, decomp.d_eff, fidelity, decomp.removed_mass))
    };
    let (lower, d_eff_lower, fidelity_lower, removed_mass_lower) = side(removal_scale_lower)?;
    let (upper, d_eff_upper, fidelity_upper, removed_mass_upper) = side(removal_scale_upper)?;
    Ok(BoundReport {
        scheme,
        dim: sigma.len(),
        eps,
        lower,
        upper,
        d_eff_lower,
        d_eff_upper,
        fidelity_lower,
        fidelity_upper,
        removed_mass_lower,
        removed_mass_upper,
        removal_scale_lower,
        removal_scale_upper,
    })
}

/// Per-bucket perturbation plan: eps_j = d * min(2^{-j-1}/alpha_j,
/// zeta 2^{-2(j+1)/3} d_j^{2/3}) with zeta solving the normalization
/// sum_j d_j min(...) = eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub zeta: f64,
    pub eps_j: BTreeMap<u32, f64>,
    pub alpha_j: BTreeMap<u32, f64>,
    /// |sum_j d_j min(cap_j, zeta slope_j) - eps|.
    pub residual: f64,
    /// zeta * sum_j 2^{-2j/3} d_j^{5/3} / eps; the achieved constant in
    /// the zeta upper-bound sanity inequality.
    pub sanity_constant: f64,
}

pub fn tune_perturbations(decomp: &BucketDecomposition, eps: f64) -> Result<PerturbationPlan> {
    if decomp.surviving_buckets.is_empty() {
        return Err(Error::AllMassRemoved);
    }
    if eps <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "eps",
            message: format!("{eps} <= 0"),
        });
    }
    let m = decomp.surviving_buckets.len() as f64;
    struct Term {
        j: u32,
        d_j: f64,
        cap: f64,
        slope: f64,
        alpha: f64,
    }
    let terms: Vec<Term> = decomp
        .surviving_buckets
        .iter()
        .map(|&j| {
            let d_j = decomp.buckets[&j].surviving_size() as f64;
            let alpha = 12.0 + (m.ln() / d_j).sqrt();
            Term {
                j,
                d_j,
                cap: 0.5f64.powi(j as i32 + 1) / alpha,
                slope: (0.5f64.powi(j as i32 + 1)).powf(2.0 / 3.0) * d_j.powf(2.0 / 3.0),
                alpha,
            }
        })
        .collect();
    let total = |zeta: f64| -> f64 {
        terms
            .iter()
            .map(|t| t.d_j * t.cap.min(zeta * t.slope))
            .sum()
    };
    let feasible_max: f64 = terms.iter().map(|t| t.d_j * t.cap).sum();
    if eps > feasible_max * (1.0 + 1e-12) {
        return Err(Error::NonBracketing { eps, feasible_max });
    }
    // the map is nondecreasing in zeta and saturates at feasible_max
    let hi0 = terms.iter().map(|t| t.cap / t.slope).fold(0.0f64, f64::max);
    let mut lo = 0.0f64;
    let mut hi = hi0.max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let zeta = 0.5 * (lo + hi);
    let residual = (total(zeta) - eps).abs();
    let d = decomp.dim as f64;
    let mut eps_j = BTreeMap::new();
    let mut alpha_j = BTreeMap::new();
    for t in &terms {
        eps_j.insert(t.j, d * t.cap.min(zeta * t.slope));
        alpha_j.insert(t.j, t.alpha);
    }
    let sanity_sum: f64 = terms
        .iter()
        .map(|t| 0.5f64.powf(2.0 * t.j as f64 / 3.0) * t.d_j.powf(5.0 / 3.0))
        .sum();
    Ok(PerturbationPlan {
        zeta,
        eps_j,
        alpha_j,
        residual,
        sanity_constant: zeta * sanity_sum / eps,
    })
}

/// Closed-form family lower bounds with unit constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BoundFamily {
    /// d^{3/2} / eps^2.
    Mixedness { d: usize, eps: f64 },
    /// sqrt(d1) d2 / eps^2.
    OffDiagonal { d1: usize, d2: usize, eps: f64 },
    /// sqrt(d) / eps^2.
    ClassicalPaninski { d: usize, eps: f64 },
    /// (1/m) min_nu sqrt(d_nu) d^2 / (eps_nu^2 2^{j_nu}); blocks are
    /// (d_nu, eps_nu, j_nu) and d is the total dimension.
    MultiBlock {
        d: usize,
        blocks: Vec<(usize, f64, u32)>,
    },
}

pub fn family_lower_bounds(family: &BoundFamily) -> Result<f64> {
    let positive = |name: &'static str, v: f64| -> Result<()> {
        if v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                message: format!("{v} must be > 0"),
            })
        }
    };
    match family {
        BoundFamily::Mixedness { d, eps } => {
            positive("eps", *eps)?;
            positive("d", *d as f64)?;
            Ok((*d as f64).powf(1.5) / (eps * eps))
        }
        BoundFamily::OffDiagonal { d1, d2, eps } => {
            positive("eps", *eps)?;
            if d1 < d2 {
                return Err(Error::InvalidParameter {
                    name: "d1",
                    message: format!("need d1 >= d2, got {d1} < {d2}"),
                });
            }
            Ok((*d1 as f64).sqrt() * *d2 as f64 / (eps * eps))
        }
        BoundFamily::ClassicalPaninski { d, eps } => {
            positive("eps", *eps)?;
            positive("d", *d as f64)?;
            Ok((*d as f64).sqrt() / (eps * eps))
        }
        BoundFamily::MultiBlock { d, blocks } => {
            if blocks.is_empty() {
                return Err(Error::EmptyInput("blocks"));
            }
            let m = blocks.len() as f64;
            let dd = *d as f64;
            let mut min = f64::INFINITY;
            for (d_nu, eps_nu, j_nu) in blocks {
                positive("eps_nu", *eps_nu)?;
                positive("d_nu", *d_nu as f64)?;
                let v =
                    (*d_nu as f64).sqrt() * dd * dd / (eps_nu * eps_nu * 2.0f64.powi(*j_nu as i32));
                min = min.min(v);
            }
            Ok(min / m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::RngExt;

    #[test]
    fn bucket_membership_is_exact() {
        let mut rng = derive_rng(111, 0);
        for _ in 0..50 {
            let d = rng.random_range(2..40usize);
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(1e-6..1.0f64)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s.max(1.0));
            let spectrum = DiagonalSpectrum::new(v.clone()).unwrap();
            let decomp = bucket(&spectrum, 0.05, BucketScheme::Simple).unwrap();
            for b in decomp.buckets.values() {
                let hi = 0.5f64.powi(b.j as i32);
                let lo = 0.5 * hi;
                for &i in &b.indices {
                    assert!(v[i] > lo && v[i] <= hi, "sigma {} in bucket {}", v[i], b.j);
                }
            }
            // partition of the support
            let in_buckets: usize = decomp.buckets.values().map(|b| b.indices.len()).sum();
            assert_eq!(in_buckets, v.iter().filter(|&&x| x > 0.0).count());
        }
    }

    #[test]
    fn bucket_index_handles_dyadic_boundaries() {
        assert_eq!(bucket_index(1.0).unwrap(), 0);
        assert_eq!(bucket_index(0.5).unwrap(), 1);
        assert_eq!(bucket_index(0.500000001).unwrap(), 0);
        assert_eq!(bucket_index(0.25).unwrap(), 2);
        assert_eq!(bucket_index(0.2).unwrap(), 2);
        assert!(bucket_index(0.0).is_err());
        assert!(bucket_index(1.5).is_err());
    }

    #[test]
    fn flat_spectrum_single_bucket() {
        for d in [4usize, 8, 16, 5, 12] {
            let sigma = DiagonalSpectrum::flat(d, 1.0 / d as f64);
            let decomp = bucket(&sigma, 0.1, BucketScheme::Simple).unwrap();
            assert_eq!(decomp.buckets.len(), 1);
            let j = *decomp.buckets.keys().next().unwrap();
            assert_eq!(j, (d as f64).log2().floor() as u32);
            assert!(decomp.removed_indices.is_empty());
            assert_eq!(decomp.d_eff, d);
            assert!((decomp.sigma_star.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn top_heavy_spectrum_removes_tail() {
        let d = 16;
        let delta = 0.01;
        let mut v = vec![delta / (d as f64 - 1.0); d];
        v[0] = 1.0 - delta;
        let sigma = DiagonalSpectrum::new(v).unwrap();
        let decomp = bucket(&sigma, 0.05, BucketScheme::Simple).unwrap();
        assert_eq!(decomp.d_eff, 1);
        assert!((decomp.removed_mass - delta).abs() < 1e-12);
    }

    #[test]
    fn removed_mass_accounting() {
        let mut rng = derive_rng(112, 0);
        for _ in 0..50 {
            let d = rng.random_range(4..48usize);
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(1e-7..1.0f64)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            let sigma = DiagonalSpectrum::new(v).unwrap();
            let eps = rng.random_range(0.01..0.3);

            let simple = bucket(&sigma, eps, BucketScheme::Simple).unwrap();
            let removed_buckets = simple
                .buckets
                .values()
                .filter(|b| b.surviving.is_empty())
                .count();
            assert!(simple.removed_mass <= eps * removed_buckets as f64 + 1e-12);
            let cap = ((d as f64 / eps).log2().ceil()) as usize + 1;
            assert!(simple.surviving_buckets.len() <= cap);

            if let Ok(refined) = bucket(&sigma, eps, BucketScheme::Refined) {
                // recorded removal constant covers the actual removal
                assert!(refined.removed_mass <= refined.removal_constant * eps + 1e-12);
                assert!((refined.sigma_star.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_mass_removed_is_distinct_error() {
        let sigma = DiagonalSpectrum::new(vec![0.001, 0.001]).unwrap();
        assert!(matches!(
            bucket(&sigma, 0.9, BucketScheme::Simple),
            Err(Error::AllMassRemoved)
        ));
    }

    #[test]
    fn bound_anchors() {
        // flat: lower = upper = d^{3/2}/eps^2
        let d = 4;
        let sigma = DiagonalSpectrum::flat(d, 0.25);
        let report = instance_optimal_bound(&sigma, 0.1, BucketScheme::Simple).unwrap();
        assert!((report.lower - 800.0).abs() < 1e-9);
        assert!((report.upper - 800.0).abs() < 1e-9);
        assert_eq!(report.d_eff_lower, d);

        // pure state: 1/eps^2
        let pure = DiagonalSpectrum::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let report = instance_optimal_bound(&pure, 0.1, BucketScheme::Simple).unwrap();
        assert!((report.lower - 100.0).abs() < 1e-10);
        assert!((report.upper - 100.0).abs() < 1e-10);
    }

    #[test]
    fn bound_matches_quasinorm_formula_on_multiscale_spectrum() {
        // well-separated buckets; small eps keeps everything
        let mut v = vec![0.4, 0.4];
        v.extend(vec![0.024; 8]);
        let sigma = DiagonalSpectrum::new(v).unwrap();
        let eps = 0.001;
        let report = instance_optimal_bound(&sigma, eps, BucketScheme::Simple).unwrap();
        let d = sigma.len() as f64;
        let expected = d * (report.d_eff_lower as f64).sqrt() / (eps * eps)
            * (crate::states::schatten_quasinorm(&sigma, 0.5).unwrap() / (d * sigma.sum()));
        assert!((report.lower - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn tune_single_bucket_closed_form() {
        let d = 16;
        let sigma = DiagonalSpectrum::flat(d, 1.0 / d as f64);
        let eps = 0.003;
        let decomp = bucket(&sigma, eps, BucketScheme::Simple).unwrap();
        let plan = tune_perturbations(&decomp, eps).unwrap();
        let j = decomp.surviving_buckets[0];
        // below the cap regime: zeta = eps * 2^{2(j+1)/3} / d_j^{5/3}
        let expected = eps * 2.0f64.powf(2.0 * (j as f64 + 1.0) / 3.0) / (d as f64).powf(5.0 / 3.0);
        assert!(
            (plan.zeta - expected).abs() < 1e-9 * expected,
            "zeta {} vs {}",
            plan.zeta,
            expected
        );
        assert!(plan.residual <= 1e-9 * eps);
    }

    #[test]
    fn tune_zeta_monotone_in_eps() {
        let sigma =
            DiagonalSpectrum::new(vec![0.3, 0.3, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05]).unwrap();
        let decomp = bucket(&sigma, 0.002, BucketScheme::Simple).unwrap();
        let z1 = tune_perturbations(&decomp, 0.002).unwrap().zeta;
        let z2 = tune_perturbations(&decomp, 0.004).unwrap().zeta;
        assert!(z2 >= z1);
    }

    #[test]
    fn tune_caps_and_sanity() {
        let mut rng = derive_rng(113, 0);
        for _ in 0..50 {
            let n_buckets = rng.random_range(2..5usize);
            let mut v = Vec::new();
            for b in 0..n_buckets {
                let d_j = rng.random_range(2..20usize);
                let scale = 0.5f64.powi(b as i32 + 2);
                for _ in 0..d_j {
                    v.push(rng.random_range((0.55 * scale)..(0.95 * scale)));
                }
            }
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            let sigma = DiagonalSpectrum::new(v).unwrap();
            let eps = 0.01;
            let decomp = bucket(&sigma, eps, BucketScheme::Simple).unwrap();
            match tune_perturbations(&decomp, eps) {
                Ok(plan) => {
                    assert!(plan.residual <= 1e-9 * eps);
                    for (&j, &e) in &plan.eps_j {
                        let cap = decomp.dim as f64 * 0.5f64.powi(j as i32 + 1) / plan.alpha_j[&j];
                        assert!(e <= cap + 1e-12, "eps_j {} above cap {}", e, cap);
                    }
                    assert!(plan.sanity_constant <= 10.0, "C = {}", plan.sanity_constant);
                }
                Err(Error::NonBracketing { feasible_max, .. }) => {
                    assert!(feasible_max < eps);
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn non_bracketing_reports_feasible_maximum() {
        let sigma = DiagonalSpectrum::new(vec![0.5, 0.5]).unwrap();
        let decomp = bucket(&sigma, 0.05, BucketScheme::Simple).unwrap();
        // eps far above what the caps allow
        match tune_perturbations(&decomp, 0.9) {
            Err(Error::NonBracketing { feasible_max, .. }) => {
                assert!(feasible_max > 0.0 && feasible_max < 0.9);
            }
            other => panic!("expected NonBracketing, got {other:?}"),
        }
    }

    #[test]
    fn family_bound_values() {
        let v = family_lower_bounds(&BoundFamily::Mixedness {
            d: 64,
            eps: 1.0 / 12.0,
        })
        .unwrap();
        assert!((v - 73728.0).abs() < 1e-9);

        // off-diagonal with d1 = d2 = d recovers the mixedness exponent
        let d = 16usize;
        let eps = 0.05;
        let off = family_lower_bounds(&BoundFamily::OffDiagonal { d1: d, d2: d, eps }).unwrap();
        let mixed = family_lower_bounds(&BoundFamily::Mixedness { d, eps }).unwrap();
        assert!((off - mixed).abs() < 1e-9);

        let v = family_lower_bounds(&BoundFamily::ClassicalPaninski { d: 64, eps: 0.5 }).unwrap();
        assert!((v - 32.0).abs() < 1e-12);

        // single-block multiblock at the flat-spectrum scale j = log2 d
        // reduces to the mixedness value
        let j = (d as f64).log2() as u32;
        let mb = family_lower_bounds(&BoundFamily::MultiBlock {
            d,
            blocks: vec![(d, eps, j)],
        })
        .unwrap();
        assert!((mb - mixed).abs() < 1e-9 * mixed);
    }

    #[test]
    fn bound_report_serializes() {
        let sigma = DiagonalSpectrum::flat(8, 0.125);
        let report = instance_optimal_bound(&sigma, 0.1, BucketScheme::Simple).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        let back: BoundReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.lower, report.lower);
    }
}
