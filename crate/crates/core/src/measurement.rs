//! The learning-tree formalism: rank-1 POVMs, adaptive strategies,
//! transcript simulation under a given state, and exact per-step outcome
//! distributions.
//!
//! A rank-1 POVM is a finite list {omega_x d . x x^+} with unit vectors x;
//! measuring rho yields outcome x with probability omega_x d x^+ rho x.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::DensityMatrix;

/// Completeness residual tolerance: ||sum omega d x x^+ - I||_F.
pub const COMPLETENESS_TOL: f64 = 1e-8;
/// Unit-norm tolerance for stored vectors.
pub const UNIT_TOL: f64 = 1e-10;
/// Probabilities below this are floored to zero before sampling.
pub const PROB_FLOOR: f64 = 1e-15;

/// One rank-1 POVM element: weight omega >= 0 and a unit vector.
#[derive(Debug, Clone)]
pub struct PovmElement {
    pub weight: f64,
    pub vector: DVector<Complex64>,
}

/// A rank-1 POVM over C^d.
#[derive(Debug, Clone)]
pub struct Povm {
    dim: usize,
    id: String,
    elements: Vec<PovmElement>,
}

/// Validation report for a POVM; reports rather than throws.
#[derive(Debug, Clone)]
pub struct PovmValidation {
    pub ok: bool,
    pub frobenius_residual: f64,
    pub negative_weights: usize,
    pub non_unit_vectors: usize,
}

impl Povm {
    /// From (weight, unit vector) pairs. Vectors are checked for unit norm.
    pub fn from_weighted_units(
        dim: usize,
        id: impl Into<String>,
        elements: Vec<(f64, DVector<Complex64>)>,
    ) -> Result<Self> {
        for (w, v) in &elements {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if *w < 0.0 {
                return Err(Error::InvalidPovm(format!("negative weight {w}")));
            }
            if (v.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidPovm(format!("vector norm {} != 1", v.norm())));
            }
        }
        Ok(Self {
            dim,
            id: id.into(),
            elements: elements
                .into_iter()
                .map(|(weight, vector)| PovmElement { weight, vector })
                .collect(),
        })
    }

    /// From raw (unnormalized) vectors v with implicit omega = ||v||^2 / d
    /// and x = v / ||v||. Zero vectors are dropped.
    pub fn from_raw_vectors(
        dim: usize,
        id: impl Into<String>,
        vectors: Vec<DVector<Complex64>>,
    ) -> Result<Self> {
        let d = dim as f64;
        let mut elements = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            let n = v.norm();
            if n == 0.0 {
                continue;
            }
            elements.push((n * n / d, v.unscale(n)));
        }
        Self::from_weighted_units(dim, id, elements)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn elements(&self) -> &[PovmElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Serializes the POVM with its element vectors.
    pub fn to_json(&self) -> String {
        let j = PovmJson {
            dim: self.dim,
            id: self.id.clone(),
            elements: self
                .elements
                .iter()
                .map(|el| PovmElementJson {
                    weight: el.weight,
                    re: el.vector.iter().map(|c| c.re).collect(),
                    im: el.vector.iter().map(|c| c.im).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&j).expect("serializable")
    }

    /// Deserializes and re-checks weights and unit norms; completeness is
    /// reported by [`validate_povm`], not enforced here.
    pub fn from_json(text: &str) -> Result<Self> {
        let j: PovmJson = serde_json::from_str(text)?;
        let elements = j
            .elements
            .into_iter()
            .map(|el| {
                let v = DVector::from_iterator(
                    el.re.len(),
                    el.re
                        .iter()
                        .zip(&el.im)
                        .map(|(&r, &i)| Complex64::new(r, i)),
                );
                (el.weight, v)
            })
            .collect();
        Self::from_weighted_units(j.dim, j.id, elements)
    }
}

#[derive(Serialize, Deserialize)]
struct PovmJson {
    dim: usize,
    id: String,
    elements: Vec<PovmElementJson>,
}

#[derive(Serialize, Deserialize)]
struct PovmElementJson {
    weight: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Checks completeness sum omega_x d x x^+ = I_d and weight positivity.
pub fn validate_povm(povm: &Povm) -> PovmValidation {
    let d = povm.dim();
    let mut acc = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    let mut negative_weights = 0;
    let mut non_unit_vectors = 0;
    for el in povm.elements() {
        if el.weight < 0.0 {
            negative_weights += 1;
        }
        if (el.vector.norm() - 1.0).abs() > UNIT_TOL {
            non_unit_vectors += 1;
        }
        let scale = Complex64::new(el.weight * d as f64, 0.0);
        // acc += omega d x x^+
        for i in 0..d {
            for j in 0..d {
                acc[(i, j)] += scale * el.vector[i] * el.vector[j].conj();
            }
        }
    }
    for i in 0..d {
        acc[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    let frobenius_residual = acc.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    PovmValidation {
        ok: frobenius_residual <= COMPLETENESS_TOL
            && negative_weights == 0
            && non_unit_vectors == 0,
        frobenius_residual,
        negative_weights,
        non_unit_vectors,
    }
}

/// Exact outcome distribution: p(x) = omega_x d x^+ rho x, clamped at 0.
pub fn outcome_distribution(povm: &Povm, rho: &DensityMatrix) -> Result<Vec<f64>> {
    if povm.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: povm.dim(),
        });
    }
    let d = povm.dim() as f64;
    let mut probs: Vec<f64> = povm
        .elements()
        .iter()
        .map(|el| el.weight * d * rho.quadratic_form(&el.vector))
        .collect();
    let mut sum = 0.0;
    for p in probs.iter_mut() {
        if *p < 0.0 {
            if *p < -1e-12 {
                return Err(Error::InvalidPovm(format!(
                    "outcome probability {p} < -1e-12"
                )));
            }
            *p = 0.0;
        }
        sum += *p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidPovm(format!(
            "outcome probabilities sum to {sum}"
        )));
    }
    Ok(probs)
}

/// One measurement record along a root-to-leaf path.
#[derive(Debug, Clone)]
pub struct TranscriptStep {
    pub vector: DVector<Complex64>,
    pub weight: f64,
    pub povm_id: String,
    pub outcome_index: usize,
    /// log(omega d x^+ rho x) under the simulation state.
    pub log_prob: f64,
    /// Block tag nu(x) when the outcome is supported on a single block.
    pub block: Option<usize>,
}

/// Ordered sequence of measurement outcomes with per-step metadata.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    steps: Vec<TranscriptStep>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepJson {
    povm_id: String,
    outcome_index: usize,
    weight: f64,
    log_prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    block: Option<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Transcript {
    pub fn new() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn push(&mut self, step: TranscriptStep) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[TranscriptStep] {
        &self.steps
    }

    /// Sum of per-step log-probabilities under the simulation state.
    pub fn log_p0(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }

    /// Recomputes log p0 against a state; the replay oracle.
    pub fn replay_log_p0(&self, rho: &DensityMatrix) -> Result<f64> {
        let d = rho.dim() as f64;
        let mut acc = 0.0;
        for step in &self.steps {
            if step.vector.len() != rho.dim() {
                return Err(Error::DimensionMismatch {
                    expected: rho.dim(),
                    got: step.vector.len(),
                });
            }
            acc += (step.weight * d * rho.quadratic_form(&step.vector)).ln();
        }
        Ok(acc)
    }

    /// Maximum |imaginary part| across all outcome vectors.
    pub fn max_imag(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| s.vector.iter())
            .map(|c| c.im.abs())
            .fold(0.0, f64::max)
    }

    /// Real parts of the outcome vectors; errors if any entry is
    /// meaningfully complex (1e-12). Exact likelihood engines use this.
    pub fn real_vectors(&self) -> Result<Vec<DVector<f64>>> {
        let max_imag = self.max_imag();
        if max_imag > 1e-12 {
            return Err(Error::ComplexInput { max_imag });
        }
        Ok(self.steps.iter().map(|s| s.vector.map(|c| c.re)).collect())
    }

    /// Serializes as JSON lines, one step per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let j = StepJson {
                povm_id: s.povm_id.clone(),
                outcome_index: s.outcome_index,
                weight: s.weight,
                log_prob: s.log_prob,
                block: s.block,
                re: s.vector.iter().map(|c| c.re).collect(),
                im: s.vector.iter().map(|c| c.im).collect(),
            };
            out.push_str(&serde_json::to_string(&j).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let j: StepJson = serde_json::from_str(line)?;
            let vector = DVector::from_iterator(
                j.re.len(),
                j.re.iter()
                    .zip(j.im.iter())
                    .map(|(&r, &i)| Complex64::new(r, i)),
            );
            steps.push(TranscriptStep {
                vector,
                weight: j.weight,
                povm_id: j.povm_id,
                outcome_index: j.outcome_index,
                log_prob: j.log_prob,
                block: j.block,
            });
        }
        Ok(Self { steps })
    }
}

/// An adaptive measurement strategy: produces the next POVM given the
/// history. Implementations may hold internal state (own rng, running
/// statistics); each trajectory owns its strategy instance.
pub trait Strategy {
    fn next_povm(&mut self, history: &Transcript) -> Povm;
}

/// Measures in the standard basis every step.
pub struct StandardBasisStrategy {
    dim: usize,
}

impl StandardBasisStrategy {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Strategy for StandardBasisStrategy {
    fn next_povm(&mut self, _history: &Transcript) -> Povm {
        standard_basis_povm(self.dim)
    }
}

/// Measures in a fresh Haar-random orthogonal basis every step.
pub struct HaarBasisStrategy<R: Rng> {
    dim: usize,
    rng: R,
}

impl<R: Rng> HaarBasisStrategy<R> {
    pub fn new(dim: usize, rng: R) -> Self {
        Self { dim, rng }
    }
}

impl<R: Rng> Strategy for HaarBasisStrategy<R> {
    fn next_povm(&mut self, _history: &Transcript) -> Povm {
        haar_basis_povm(self.dim, &mut self.rng)
    }
}

/// Adaptive strategy that measures in the eigenbasis of the running
/// K-matrix sum((d x x^+ - I)/(x^+ A x)) of the transcript so far.
pub struct KEigenbasisStrategy {
    dim: usize,
    diag_a: Vec<f64>,
}

impl KEigenbasisStrategy {
    pub fn new(dim: usize, diag_a: Vec<f64>) -> Self {
        Self { dim, diag_a }
    }
}

impl Strategy for KEigenbasisStrategy {
    fn next_povm(&mut self, history: &Transcript) -> Povm {
        let d = self.dim;
        if history.is_empty() {
            return standard_basis_povm(d);
        }
        let mut k = DMatrix::<f64>::zeros(d, d);
        for step in history.steps() {
            let x = step.vector.map(|c| c.re);
            let denom: f64 = x.iter().zip(&self.diag_a).map(|(v, a)| v * v * a).sum();
            for i in 0..d {
                for j in 0..d {
                    k[(i, j)] += (d as f64 * x[i] * x[j] - if i == j { 1.0 } else { 0.0 }) / denom;
                }
            }
        }
        let eig = k.symmetric_eigen();
        let elements = (0..d)
            .map(|c| {
                let col = eig.eigenvectors.column(c);
                (
                    1.0 / d as f64,
                    DVector::from_iterator(d, col.iter().map(|&v| Complex64::new(v, 0.0))),
                )
            })
            .collect();
        Povm::from_weighted_units(d, "k-eigenbasis", elements).expect("orthonormal basis")
    }
}

/// Standard basis POVM {(1/d, e_i)}.
pub fn standard_basis_povm(dim: usize) -> Povm {
    let elements = (0..dim)
        .map(|i| {
            let mut v = DVector::from_element(dim, Complex64::new(0.0, 0.0));
            v[i] = Complex64::new(1.0, 0.0);
            (1.0 / dim as f64, v)
        })
        .collect();
    Povm::from_weighted_units(dim, "standard-basis", elements).expect("basis is complete")
}

/// Haar-random orthogonal basis POVM, from QR of a real Gaussian matrix
/// with the R diagonal sign-fixed. Real outputs keep the exact likelihood
/// engines applicable.
pub fn haar_basis_povm(dim: usize, rng: &mut impl Rng) -> Povm {
    let q = haar_orthogonal(dim, rng);
    let elements = (0..dim)
        .map(|c| {
            let col = q.column(c);
            (
                1.0 / dim as f64,
                DVector::from_iterator(dim, col.iter().map(|&v| Complex64::new(v, 0.0))),
            )
        })
        .collect();
    Povm::from_weighted_units(dim, "haar-basis", elements).expect("basis is complete")
}

/// Haar-distributed orthogonal matrix (QR with sign correction).
pub fn haar_orthogonal(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let data: Vec<f64> = (0..dim * dim).map(|_| StandardNormal.sample(rng)).collect();
    let g = DMatrix::from_vec(dim, dim, data);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Simulates an n-step transcript of `strategy` measuring copies of `rho`.
///
/// The i-th outcome is drawn from `outcome_distribution` of the POVM the
/// strategy returns for the current prefix; reproducible from the rng.
pub fn simulate_transcript(
    strategy: &mut dyn Strategy,
    rho: &DensityMatrix,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Transcript> {
    let mut transcript = Transcript::new();
    for _ in 0..n {
        let povm = strategy.next_povm(&transcript);
        let validation = validate_povm(&povm);
        if !validation.ok {
            return Err(Error::InvalidPovm(format!(
                "strategy returned invalid POVM `{}`: residual {:e}, {} negative weights, {} non-unit vectors",
                povm.id(),
                validation.frobenius_residual,
                validation.negative_weights,
                validation.non_unit_vectors
            )));
        }
        let probs = outcome_distribution(&povm, rho)?;
        let idx = sample_index(&probs, rng);
        let el = &povm.elements()[idx];
        transcript.push(TranscriptStep {
            vector: el.vector.clone(),
            weight: el.weight,
            povm_id: povm.id().to_string(),
            outcome_index: idx,
            log_prob: (el.weight * rho.dim() as f64 * rho.quadratic_form(&el.vector)).ln(),
            block: None,
        });
    }
    Ok(transcript)
}

/// Inverse-CDF sampling; probabilities below `PROB_FLOOR` are floored to 0
/// and the vector renormalized.
pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let floored: Vec<f64> = probs
        .iter()
        .map(|&p| if p < PROB_FLOOR { 0.0 } else { p })
        .collect();
    let total: f64 = floored.iter().sum();
    let u: f64 = rng.random_range(0.0..1.0) * total;
    let mut acc = 0.0;
    for (i, &p) in floored.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    floored
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Partition of the index set [0, d) into contiguous blocks, given by
/// block sizes.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidParameter {
                name: "sizes",
                message: "blocks must be nonempty".to_string(),
            });
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self { sizes, offsets })
    }

    pub fn total_dim(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block] + self.sizes[block]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Block on which `v` is supported, if its mass outside every other
    /// block is below 1e-12 in norm.
    pub fn support_block(&self, v: &DVector<Complex64>) -> Option<usize> {
        let total: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        for b in 0..self.num_blocks() {
            let inside: f64 = self.range(b).map(|i| v[i].norm_sqr()).sum();
            if total - inside <= 1e-24 * total.max(1.0) {
                return Some(b);
            }
        }
        None
    }
}

/// Maps a POVM to a block-respecting one: every input element (omega, x) is
/// split into per-block elements with weight omega ||x_b||^2 and direction
/// x_b / ||x_b||. Returns the new POVM and a map from new outcome indices
/// to (original outcome index, block); for every block-diagonal rho the
/// pushforward of the new outcome distribution equals the old one.
pub fn block_restrict_povm(
    povm: &Povm,
    partition: &BlockPartition,
) -> Result<(Povm, Vec<(usize, usize)>)> {
    if partition.total_dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim(),
            got: partition.total_dim(),
        });
    }
    let mut elements = Vec::new();
    let mut origin = Vec::new();
    for (orig_idx, el) in povm.elements().iter().enumerate() {
        for b in 0..partition.num_blocks() {
            let range = partition.range(b);
            let mass: f64 = range.clone().map(|i| el.vector[i].norm_sqr()).sum();
            if mass <= 0.0 {
                continue;
            }
            let mut v = DVector::from_element(povm.dim(), Complex64::new(0.0, 0.0));
            let scale = mass.sqrt();
            for i in range {
                v[i] = el.vector[i] / scale;
            }
            elements.push((el.weight * mass, v));
            origin.push((orig_idx, b));
        }
    }
    let restricted = Povm::from_weighted_units(
        povm.dim(),
        format!("{}|block-restricted", povm.id()),
        elements,
    )?;
    Ok((restricted, origin))
}
