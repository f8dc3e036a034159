//! Samplers for the random-matrix ensembles and constructors for the hard
//! instances behind the lower bounds: trace-centered GOE perturbations of a
//! near-flat spectrum, truncated Ginibre off-diagonal perturbations,
//! block-diagonal multi-scale perturbations, the classical permuted-sign
//! instance, and padding.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{trace_norm_distance, DensityMatrix, DiagonalSpectrum};

/// Rejection-sampling policy for truncated ensembles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Accept only samples with operator norm at most this cap.
    pub op_norm_cap: f64,
    /// Accept only samples whose (embedded) trace norm is at least
    /// `trace_norm_floor_fraction * d`.
    pub trace_norm_floor_fraction: f64,
    pub max_attempts: usize,
}

impl TruncationPolicy {
    /// GOE* policy: op norm <= 3, trace norm >= d/12.
    pub fn goe_star() -> Self {
        Self {
            op_norm_cap: 3.0,
            trace_norm_floor_fraction: 1.0 / 12.0,
            max_attempts: 1000,
        }
    }

    /// Ginibre policy: largest singular value <= 3, Hermitian-embedding
    /// trace norm >= d2/3.
    pub fn ginibre() -> Self {
        Self {
            op_norm_cap: 3.0,
            trace_norm_floor_fraction: 1.0 / 3.0,
            max_attempts: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.op_norm_cap <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "op_norm_cap",
                message: format!("{} must be > 0", self.op_norm_cap),
            });
        }
        if !(self.trace_norm_floor_fraction > 0.0 && self.trace_norm_floor_fraction < 1.0) {
            return Err(Error::InvalidParameter {
                name: "trace_norm_floor_fraction",
                message: format!("{} outside (0, 1)", self.trace_norm_floor_fraction),
            });
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidParameter {
                name: "max_attempts",
                message: "must be >= 1".to_string(),
            });
        }
        Ok(())
    }

    /// Same caps with extra operator-norm slack (multi-block instances).
    pub fn with_op_slack(&self, slack: f64) -> Self {
        Self {
            op_norm_cap: self.op_norm_cap + slack,
            ..self.clone()
        }
    }
}

/// Which hard-instance family a [`HardInstance`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceKind {
    Mixedness,
    OffDiagonal,
    MultiBlock,
    ClassicalPaninski,
    Padded,
}

/// A sampled point-vs-mixture distinguishing task: the deterministic null
/// state, one sampled alternative state, and the sampled perturbation.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub kind: InstanceKind,
    pub null_state: DensityMatrix,
    pub alt_state: DensityMatrix,
    /// Perturbation scale(s): one entry per block for MultiBlock, one
    /// entry otherwise.
    pub eps: Vec<f64>,
    /// Sampled perturbation matrices (M-bar, G-bar, {M-bar_nu}) or the
    /// signed diagonal for the classical instance.
    pub perturbations: Vec<DMatrix<f64>>,
    /// ||alt - null||_1, computed at construction.
    pub separation: f64,
    /// Guaranteed lower bound on the separation for this family.
    pub declared_separation: f64,
    /// Rejection-sampling attempts consumed per perturbation.
    pub attempts: Vec<usize>,
    /// Set when a parameter constraint was relaxed for desk-scale demos.
    pub forced: bool,
    /// Family parameters used by the likelihood engines.
    pub params: InstanceParams,
}

/// Family-specific parameters carried alongside the states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InstanceParams {
    Mixedness {
        a: DiagonalSpectrum,
    },
    OffDiagonal {
        a: DiagonalSpectrum,
        b: DiagonalSpectrum,
        /// a_{d1} and b_{d2}: the smallest entries of A and B.
        a_min: f64,
        b_min: f64,
    },
    MultiBlock {
        blocks: Vec<MultiBlockSpec>,
    },
    ClassicalPaninski {
        a: DiagonalSpectrum,
        /// Signs s_i in {-1, 0, +1} after the permutation.
        signs: Vec<i8>,
    },
    Padded {
        weight: f64,
        inner_kind: InstanceKind,
    },
}

/// One block of a multi-block instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiBlockSpec {
    pub a: DiagonalSpectrum,
    pub eps: f64,
    pub scale_j: u32,
}

#[derive(Serialize, Deserialize)]
struct HardInstanceJson {
    kind: InstanceKind,
    eps: Vec<f64>,
    perturbations: Vec<Vec<Vec<f64>>>,
    separation: f64,
    declared_separation: f64,
    attempts: Vec<usize>,
    forced: bool,
    params: InstanceParams,
    null_state: String,
    alt_state: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl HardInstance {
    pub fn dim(&self) -> usize {
        self.null_state.dim()
    }

    pub fn to_json(&self, seed: Option<u64>) -> String {
        let perturbations = self
            .perturbations
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect()
            })
            .collect();
        serde_json::to_string(&HardInstanceJson {
            kind: self.kind,
            eps: self.eps.clone(),
            perturbations,
            separation: self.separation,
            declared_separation: self.declared_separation,
            attempts: self.attempts.clone(),
            forced: self.forced,
            params: self.params.clone(),
            null_state: self.null_state.to_json(),
            alt_state: self.alt_state.to_json(),
            seed,
        })
        .expect("serializable")
    }

    /// Deserializes and revalidates every invariant (states, separation).
    pub fn from_json(text: &str) -> Result<Self> {
        let j: HardInstanceJson = serde_json::from_str(text)?;
        let null_state = DensityMatrix::from_json(&j.null_state)?;
        let alt_state = DensityMatrix::from_json(&j.alt_state)?;
        let separation = trace_norm_distance(&null_state, &alt_state)?;
        if (separation - j.separation).abs() > 1e-8 {
            return Err(Error::InvalidParameter {
                name: "separation",
                message: format!("recorded {} but recomputed {}", j.separation, separation),
            });
        }
        if separation + 1e-9 < j.declared_separation {
            return Err(Error::InvalidParameter {
                name: "declared_separation",
                message: format!(
                    "separation {} below declared {}",
                    separation, j.declared_separation
                ),
            });
        }
        let perturbations = j
            .perturbations
            .into_iter()
            .map(|rows| {
                let r = rows.len();
                let c = if r == 0 { 0 } else { rows[0].len() };
                DMatrix::from_fn(r, c, |i, k| rows[i][k])
            })
            .collect();
        Ok(Self {
            kind: j.kind,
            null_state,
            alt_state,
            eps: j.eps,
            perturbations,
            separation,
            declared_separation: j.declared_separation,
            attempts: j.attempts,
            forced: j.forced,
            params: j.params,
        })
    }
}

/// Samples G ~ GOE(d): symmetric, off-diagonal N(0, 1/d), diagonal N(0, 2/d).
pub fn sample_goe(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::zeros(d, d);
    let off = (1.0 / d as f64).sqrt();
    let diag = (2.0 / d as f64).sqrt();
    for i in 0..d {
        let z: f64 = StandardNormal.sample(rng);
        g[(i, i)] = diag * z;
        for j in (i + 1)..d {
            let z: f64 = StandardNormal.sample(rng);
            g[(i, j)] = off * z;
            g[(j, i)] = g[(i, j)];
        }
    }
    g
}

/// Trace-centers a GOE draw: M = G - (Tr G / d) I.
pub fn trace_center(mut g: DMatrix<f64>) -> DMatrix<f64> {
    let shift = g.trace() / g.nrows() as f64;
    for i in 0..g.nrows() {
        g[(i, i)] -= shift;
    }
    g
}

/// Whether M passes the GOE* truncation event of `policy`.
pub fn goe_star_event(m: &DMatrix<f64>, policy: &TruncationPolicy) -> bool {
    let d = m.nrows();
    let eigs = m.clone().symmetric_eigen().eigenvalues;
    let op = eigs.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()));
    let nuc: f64 = eigs.iter().map(|l| l.abs()).sum();
    op <= policy.op_norm_cap && nuc >= policy.trace_norm_floor_fraction * d as f64
}

/// Rejection-samples a truncated trace-centered GOE matrix M-bar with
/// Tr = 0, ||M||_op <= cap, ||M||_1 >= floor * d. Returns the sample and
/// the number of attempts consumed.
pub fn sample_goe_star_truncated(
    d: usize,
    policy: &TruncationPolicy,
    rng: &mut impl Rng,
) -> Result<(DMatrix<f64>, usize)> {
    policy.validate()?;
    if d < 2 {
        return Err(Error::InvalidParameter {
            name: "d",
            message: "trace-centered GOE needs d >= 2".to_string(),
        });
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

/// Samples G ~ Gin(d1, d2): i.i.d. entries N(0, 1/d1).
pub fn sample_ginibre(d1: usize, d2: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let scale = (1.0 / d1 as f64).sqrt();
    let data: Vec<f64> = (0..d1 * d2)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    DMatrix::from_vec(d1, d2, data)
}

/// Whether G passes the Ginibre truncation event: largest singular value
/// at most the cap and 2 * (sum of singular values) >= floor * d2. The
/// latter is the trace norm of the Hermitian embedding [[0, G], [G^+, 0]].
pub fn ginibre_event(g: &DMatrix<f64>, policy: &TruncationPolicy) -> bool {
    let svd = g.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let ssum: f64 = svd.singular_values.iter().sum();
    let d2 = g.ncols();
    smax <= policy.op_norm_cap && 2.0 * ssum >= policy.trace_norm_floor_fraction * d2 as f64
}

/// Rejection-samples a truncated d1 x d2 Ginibre matrix.
pub fn sample_ginibre_truncated(
    d1: usize,
    d2: usize,
    policy: &TruncationPolicy,
    rng: &mut impl Rng,
) -> Result<(DMatrix<f64>, usize)> {
    policy.validate()?;
    if d2 < 1 || d1 < d2 {
        return Err(Error::InvalidParameter {
            name: "d1/d2",
            message: format!("need d1 >= d2 >= 1, got {d1}, {d2}"),
        });
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

fn check_balanced(name: &'static str, a: &DiagonalSpectrum) -> Result<()> {
    if a.min() <= 0.0 {
        return Err(Error::InvalidParameter {
            name,
            message: "entries must be positive".to_string(),
        });
    }
    if 2.0 * a.min() < a.max() - 1e-12 {
        return Err(Error::InvalidParameter {
            name,
            message: format!("needs 2*min >= max, got min {} max {}", a.min(), a.max()),
        });
    }
    Ok(())
}

/// Builds the flat-spectrum instance: H0 = A/d vs H1 = (A + eps M-bar)/d
/// with M-bar a truncated trace-centered GOE matrix.
pub fn build_mixedness_instance(
    a: &DiagonalSpectrum,
    eps: f64,
    policy: &TruncationPolicy,
    rng: &mut impl Rng,
) -> Result<HardInstance> {
    let d = a.len();
    check_balanced("A", a)?;
    if (a.sum() - d as f64).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "A",
            message: format!("Tr(A) = {} != d = {}", a.sum(), d),
        });
    }
    if !(0.0..=1.0 / 12.0 + 1e-15).contains(&eps) {
        return Err(Error::InvalidParameter {
            name: "eps",
            message: format!("{eps} outside [0, 1/12]"),
        });
    }
    let (m, attempts) = sample_goe_star_truncated(d, policy, rng)?;
    let dd = d as f64;
    let null_mat = DMatrix::from_fn(d, d, |i, j| if i == j { a.values()[i] / dd } else { 0.0 });
    let alt_mat = DMatrix::from_fn(d, d, |i, j| {
        (if i == j { a.values()[i] } else { 0.0 }) / dd + eps * m[(i, j)] / dd
    });
    let null_state = DensityMatrix::from_real(&null_mat)?;
    let alt_state = DensityMatrix::from_real(&alt_mat)?;
    let separation = trace_norm_distance(&null_state, &alt_state)?;
    Ok(HardInstance {
        kind: InstanceKind::Mixedness,
        null_state,
        alt_state,
        eps: vec![eps],
        perturbations: vec![m],
        separation,
        declared_separation: eps * policy.trace_norm_floor_fraction,
        attempts: vec![attempts],
        forced: false,
        params: InstanceParams::Mixedness { a: a.clone() },
    })
}

/// Builds the off-diagonal instance: H0 = diag(A, B) vs H1 with blocks
/// (eps/d2) G-bar in the corners, G-bar a truncated Ginibre matrix.
///
/// `force` relaxes the admissible-regime eps cap d2 sqrt(ab)/(1e6 ln(1/a))
/// to d2 sqrt(ab)/10 for desk-scale demos and flags the instance.
pub fn build_offdiag_instance(
    a: &DiagonalSpectrum,
    b: &DiagonalSpectrum,
    eps: f64,
    force: bool,
    policy: &TruncationPolicy,
    rng: &mut impl Rng,
) -> Result<HardInstance> {
    let d1 = a.len();
    let d2 = b.len();
    check_balanced("A", a)?;
    check_balanced("B", b)?;
    if d1 < d2 {
        return Err(Error::InvalidParameter {
            name: "d1",
            message: format!("need d1 >= d2, got {d1} < {d2}"),
        });
    }
    if (a.sum() + b.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "trace",
            message: format!("Tr(A) + Tr(B) = {} != 1", a.sum() + b.sum()),
        });
    }
    let a_min = a.min();
    let b_min = b.min();
    if d1 as f64 * a_min.sqrt() > d2 as f64 * b_min.sqrt() + 1e-12 {
        return Err(Error::InvalidParameter {
            name: "d1_sqrt_a",
            message: format!(
                "need d1 sqrt(a) <= d2 sqrt(b), got {} > {}",
                d1 as f64 * a_min.sqrt(),
                d2 as f64 * b_min.sqrt()
            ),
        });
    }
    let cap = if force {
        d2 as f64 * (a_min * b_min).sqrt() / 10.0
    } else {
        d2 as f64 * (a_min * b_min).sqrt() / (1e6 * (1.0 / a_min).ln())
    };
    if eps < 0.0 || eps > cap + 1e-15 {
        return Err(Error::InvalidParameter {
            name: "eps",
            message: format!("{eps} exceeds the admissible cap {cap:e} (force = {force})"),
        });
    }
    let (g, attempts) = sample_ginibre_truncated(d1, d2, policy, rng)?;
    let d = d1 + d2;
    let mut null_mat = DMatrix::<f64>::zeros(d, d);
    for i in 0..d1 {
        null_mat[(i, i)] = a.values()[i];
    }
    for j in 0..d2 {
        null_mat[(d1 + j, d1 + j)] = b.values()[j];
    }
    let mut alt_mat = null_mat.clone();
    let scale = eps / d2 as f64;
    for i in 0..d1 {
        for j in 0..d2 {
            alt_mat[(i, d1 + j)] = scale * g[(i, j)];
            alt_mat[(d1 + j, i)] = scale * g[(i, j)];
        }
    }
    let null_state = DensityMatrix::from_real(&null_mat)?;
    let alt_state = DensityMatrix::from_real(&alt_mat)?;
    let separation = trace_norm_distance(&null_state, &alt_state)?;
    Ok(HardInstance {
        kind: InstanceKind::OffDiagonal,
        null_state,
        alt_state,
        eps: vec![eps],
        perturbations: vec![g],
        separation,
        declared_separation: eps * policy.trace_norm_floor_fraction,
        attempts: vec![attempts],
        forced: force,
        params: InstanceParams::OffDiagonal {
            a: a.clone(),
            b: b.clone(),
            a_min,
            b_min,
        },
    })
}

/// Builds the multi-block instance: per-block GOE* perturbations at
/// per-block scales eps_nu, with blocks living at dyadic state scales
/// 2^{-j_nu}. The per-block truncation event widens the op-norm cap by
/// theta * sqrt(ln(m)/d_nu).
///
/// With a single block this draws from exactly the same distribution as
/// `build_mixedness_instance` (same seed, same matrix).
pub fn build_multiblock_instance(
    blocks: &[(DiagonalSpectrum, f64, u32)],
    theta: f64,
    policy: &TruncationPolicy,
    rng: &mut impl Rng,
) -> Result<HardInstance> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput("blocks"));
    }
    let m_count = blocks.len() as f64;
    let d: usize = blocks.iter().map(|(a, _, _)| a.len()).sum();
    let dd = d as f64;
    let total_trace: f64 = blocks.iter().map(|(a, _, _)| a.sum()).sum();
    if (total_trace - dd).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "blocks",
            message: format!("total trace {} != d = {}", total_trace, d),
        });
    }
    for (nu, (a, eps, j)) in blocks.iter().enumerate() {
        let lo = dd * 0.5f64.powi(*j as i32 + 1);
        let hi = dd * 0.5f64.powi(*j as i32);
        if a.min() <= lo || a.max() > hi + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "block_scale",
                message: format!(
                    "block {nu}: entries [{}, {}] outside the dyadic band ({lo}, {hi}] for j = {j}",
                    a.min(),
                    a.max()
                ),
            });
        }
        let alpha = 12.0 + theta * ((m_count.ln()) / a.len() as f64).sqrt();
        let cap = dd * 0.5f64.powi(*j as i32) / alpha;
        if *eps < 0.0 || *eps > cap + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "eps_nu",
                message: format!("block {nu}: eps {} exceeds cap {}", eps, cap),
            });
        }
    }
    let mut null_mat = DMatrix::<f64>::zeros(d, d);
    let mut alt_mat = DMatrix::<f64>::zeros(d, d);
    let mut perturbations = Vec::with_capacity(blocks.len());
    let mut attempts_all = Vec::with_capacity(blocks.len());
    let mut eps_all = Vec::with_capacity(blocks.len());
    let mut specs = Vec::with_capacity(blocks.len());
    let mut offset = 0usize;
    let mut declared = 0.0;
    for (a, eps, j) in blocks {
        let d_nu = a.len();
        let slack = theta * (m_count.ln() / d_nu as f64).sqrt();
        let block_policy = policy.with_op_slack(slack);
        let (m, attempts) = sample_goe_star_truncated(d_nu, &block_policy, rng)?;
        for i in 0..d_nu {
            null_mat[(offset + i, offset + i)] = a.values()[i] / dd;
            for k in 0..d_nu {
                alt_mat[(offset + i, offset + k)] =
                    (if i == k { a.values()[i] } else { 0.0 } + eps * m[(i, k)]) / dd;
            }
        }
        declared += eps * policy.trace_norm_floor_fraction * d_nu as f64 / dd;
        perturbations.push(m);
        attempts_all.push(attempts);
        eps_all.push(*eps);
        specs.push(MultiBlockSpec {
            a: a.clone(),
            eps: *eps,
            scale_j: *j,
        });
        offset += d_nu;
    }
    let null_state = DensityMatrix::from_real(&null_mat)?;
    let alt_state = DensityMatrix::from_real(&alt_mat)?;
    let separation = trace_norm_distance(&null_state, &alt_state)?;
    Ok(HardInstance {
        kind: InstanceKind::MultiBlock,
        null_state,
        alt_state,
        eps: eps_all,
        perturbations,
        separation,
        declared_separation: declared,
        attempts: attempts_all,
        forced: false,
        params: InstanceParams::MultiBlock { blocks: specs },
    })
}

/// Classical permuted-sign instance: H1 = (A + eps P Z P^T)/d with Z the
/// balanced sign diagonal (trailing 0 when d is odd) and P a uniformly
/// random permutation of the first 2*floor(d/2) coordinates.
pub fn build_classical_paninski_instance(
    a: &DiagonalSpectrum,
    eps: f64,
    rng: &mut impl Rng,
) -> Result<HardInstance> {
    let d = a.len();
    if (a.sum() - d as f64).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "A",
            message: format!("Tr(A) = {} != d = {}", a.sum(), d),
        });
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter {
            name: "eps",
            message: format!("{eps} outside [0, 1)"),
        });
    }
    if a.min() < eps {
        return Err(Error::NotPsd {
            min_eigenvalue: (a.min() - eps) / d as f64,
        });
    }
    let half = d / 2;
    let mut signs: Vec<i8> = vec![0; d];
    for (i, s) in signs.iter_mut().enumerate().take(2 * half) {
        *s = if i < half { 1 } else { -1 };
    }
    // permute only the first 2*floor(d/2) coordinates; an odd trailing
    // zero slot stays fixed
    signs[..2 * half].shuffle(rng);
    let dd = d as f64;
    let null_mat = DMatrix::from_fn(d, d, |i, j| if i == j { a.values()[i] / dd } else { 0.0 });
    let alt_mat = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            (a.values()[i] + eps * signs[i] as f64) / dd
        } else {
            0.0
        }
    });
    let pert = DMatrix::from_fn(d, d, |i, j| if i == j { signs[i] as f64 } else { 0.0 });
    let null_state = DensityMatrix::from_real(&null_mat)?;
    let alt_state = DensityMatrix::from_real(&alt_mat)?;
    let separation = trace_norm_distance(&null_state, &alt_state)?;
    Ok(HardInstance {
        kind: InstanceKind::ClassicalPaninski,
        null_state,
        alt_state,
        eps: vec![eps],
        perturbations: vec![pert],
        separation,
        declared_separation: eps * (2 * half) as f64 / dd,
        attempts: vec![1],
        forced: false,
        params: InstanceParams::ClassicalPaninski {
            a: a.clone(),
            signs,
        },
    })
}

/// Embeds an instance as a weighted top-left block alongside a fixed block
/// P shared by both hypotheses; the separation scales by `weight`.
pub fn pad_instance(
    inner: &HardInstance,
    p: &DiagonalSpectrum,
    weight: f64,
) -> Result<HardInstance> {
    if !(weight > 0.0 && weight <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "weight",
            message: format!("{weight} outside (0, 1]"),
        });
    }
    let pad_dim = if weight == 1.0 && p.sum() == 0.0 {
        0
    } else {
        p.len()
    };
    if (p.values()[..pad_dim].iter().sum::<f64>() - (1.0 - weight)).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "P",
            message: format!("Tr(P) = {} != 1 - weight = {}", p.sum(), 1.0 - weight),
        });
    }
    let d_inner = inner.dim();
    let d = d_inner + pad_dim;
    let embed = |state: &DensityMatrix| -> Result<DensityMatrix> {
        let mut m = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for i in 0..d_inner {
            for j in 0..d_inner {
                m[(i, j)] = state.entries()[(i, j)] * Complex64::new(weight, 0.0);
            }
        }
        for k in 0..pad_dim {
            m[(d_inner + k, d_inner + k)] = Complex64::new(p.values()[k], 0.0);
        }
        DensityMatrix::new(m)
    };
    let null_state = embed(&inner.null_state)?;
    let alt_state = embed(&inner.alt_state)?;
    let separation = trace_norm_distance(&null_state, &alt_state)?;
    Ok(HardInstance {
        kind: InstanceKind::Padded,
        null_state,
        alt_state,
        eps: inner.eps.clone(),
        perturbations: inner.perturbations.clone(),
        separation,
        declared_separation: weight * inner.declared_separation,
        attempts: inner.attempts.clone(),
        forced: inner.forced,
        params: InstanceParams::Padded {
            weight,
            inner_kind: inner.kind,
        },
    })
}
