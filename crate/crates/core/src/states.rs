//! Core linear-algebra types and state functionals: density matrices,
//! diagonal spectra, trace distance, fidelity and Schatten quasi-norms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hermiticity residual tolerance for [`DensityMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Unit-trace tolerance.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue (absorbs eigensolver roundoff).
pub const PSD_TOL: f64 = -1e-9;

/// A complex Hermitian PSD trace-1 matrix; the states rho, sigma, rho_mm.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: DMatrix<Complex64>,
}

/// Real nonnegative eigenvalue vector. Also used for the diagonal matrices
/// A, B of the hard instances, which carry trace d rather than trace 1, so
/// normalization is checked where a spectrum is used as a state, not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalSpectrum {
    #[serde(rename = "diag")]
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    sorted: bool,
}

/// Serialized form of a density matrix: separate real and imaginary parts.
#[derive(Debug, Serialize, Deserialize)]
struct DensityMatrixJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

/// Replaces X by (X + X^+)/2. Absorbs roundoff before eigendecomposition.
pub fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrized
/// first so callers can pass matrices that are Hermitian up to roundoff.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let eig = hermitize(m).symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positive semidefiniteness.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        let dim = entries.nrows();
        if dim == 0 || entries.ncols() != dim {
            return Err(Error::InvalidParameter {
                name: "entries",
                message: format!(
                    "expected square nonempty matrix, got {}x{}",
                    dim,
                    entries.ncols()
                ),
            });
        }
        let residual = (&entries - entries.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::NotUnitTrace { trace: trace.re });
        }
        let entries = hermitize(&entries);
        let eigs = hermitian_eigenvalues(&entries);
        let min_eigenvalue = eigs[0];
        if min_eigenvalue < PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(Self { dim, entries })
    }

    /// The maximally mixed state I_d / d.
    pub fn maximally_mixed(dim: usize) -> Self {
        let entries =
            DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Self { dim, entries }
    }

    /// Diagonal state from a probability vector (must sum to 1).
    pub fn from_diagonal(spectrum: &DiagonalSpectrum) -> Result<Self> {
        let entries = DMatrix::from_diagonal(&DVector::from_iterator(
            spectrum.len(),
            spectrum.values().iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        Self::new(entries)
    }

    /// Builds a state from a real symmetric matrix (validated like `new`).
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Quadratic form x^+ rho x (real part; exact for Hermitian rho).
    pub fn quadratic_form(&self, x: &DVector<Complex64>) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.dim {
            let mut col = Complex64::new(0.0, 0.0);
            for i in 0..self.dim {
                col += x[i].conj() * self.entries[(i, j)];
            }
            acc += col * x[j];
        }
        acc.re
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    pub fn to_json(&self) -> String {
        let (re, im) = split_re_im(&self.entries);
        serde_json::to_string(&DensityMatrixJson {
            dim: self.dim,
            re,
            im,
        })
        .expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: DensityMatrixJson = serde_json::from_str(s)?;
        if j.re.len() != j.dim || j.im.len() != j.dim {
            return Err(Error::DimensionMismatch {
                expected: j.dim,
                got: j.re.len(),
            });
        }
        let mut m = DMatrix::from_element(j.dim, j.dim, Complex64::new(0.0, 0.0));
        for (i, (rr, ri)) in j.re.iter().zip(j.im.iter()).enumerate() {
            if rr.len() != j.dim || ri.len() != j.dim {
                return Err(Error::DimensionMismatch {
                    expected: j.dim,
                    got: rr.len(),
                });
            }
            for k in 0..j.dim {
                m[(i, k)] = Complex64::new(rr[k], ri[k]);
            }
        }
        Self::new(m)
    }
}

fn split_re_im(m: &DMatrix<Complex64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = m.nrows();
    let mut re = vec![vec![0.0; n]; n];
    let mut im = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            re[i][j] = m[(i, j)].re;
            im[i][j] = m[(i, j)].im;
        }
    }
    (re, im)
}

impl DiagonalSpectrum {
    /// Entries must be nonnegative (tiny negative roundoff is clamped to 0).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("spectrum"));
        }
        let mut clamped = values;
        for v in clamped.iter_mut() {
            if *v < 0.0 {
                if *v < PSD_TOL {
                    return Err(Error::NotPsd { min_eigenvalue: *v });
                }
                *v = 0.0;
            }
        }
        let sorted = clamped.windows(2).all(|w| w[0] >= w[1]);
        Ok(Self {
            values: clamped,
            sorted,
        })
    }

    /// Flat spectrum of d entries equal to `value`.
    pub fn flat(dim: usize, value: f64) -> Self {
        Self {
            values: vec![value; dim],
            sorted: true,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_sorted_descending(&self) -> bool {
        self.sorted
    }

    /// Checks the sub-normalized-state invariant: sum <= 1 + 1e-10.
    pub fn check_subnormalized(&self) -> Result<()> {
        let s = self.sum();
        if s > 1.0 + 1e-10 {
            return Err(Error::InvalidParameter {
                name: "spectrum",
                message: format!("sum {} exceeds 1", s),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let parsed: DiagonalSpectrum = serde_json::from_str(s)?;
        Self::new(parsed.values)
    }
}

/// Trace-norm distance ||rho - sigma||_1 = sum of |eigenvalues| of the
/// difference.
pub fn trace_norm_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let diff = rho.entries() - sigma.entries();
    Ok(hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum())
}

/// Fidelity F(rho, sigma) = (Tr sqrt(rho^{1/2} sigma rho^{1/2}))^2.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let sqrt_rho = psd_sqrt(rho.entries())?;
    let inner = &sqrt_rho * sigma.entries() * &sqrt_rho;
    let eigs = hermitian_eigenvalues(&inner);
    let tr: f64 = eigs.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok((tr * tr).min(1.0 + 1e-9))
}

/// PSD square root via eigendecomposition; negative roundoff eigenvalues
/// are clamped to 0.
fn psd_sqrt(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let eig = hermitize(m).symmetric_eigen();
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min < PSD_TOL {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let mut d = DMatrix::from_element(m.nrows(), m.nrows(), Complex64::new(0.0, 0.0));
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        d[(i, i)] = Complex64::new(l.max(0.0).sqrt(), 0.0);
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Fidelity against the maximally mixed state, in closed form:
/// F(sigma_hat, I_d/d) = (1/d) ||sigma||_{1/2} / Tr(sigma), where
/// sigma_hat = sigma / Tr(sigma).
///
/// Since ||c.sigma||_{1/2} = c ||sigma||_{1/2}, dividing by the trace once
/// is what normalizes sigma; the identity is pinned against the general
/// eigendecomposition path by `fidelity_cross_check_against_general_path`.
pub fn fidelity_mm_quasinorm(sigma: &DiagonalSpectrum) -> Result<f64> {
    let d = sigma.len() as f64;
    let tr = sigma.sum();
    if tr <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma",
            message: "zero matrix has no normalized state".to_string(),
        });
    }
    let half = schatten_quasinorm(sigma, 0.5)?;
    Ok(half / (d * tr))
}

/// Matrix variant of [`fidelity_mm_quasinorm`]: eigendecomposes a Hermitian
/// PSD matrix and applies the spectral formula.
pub fn fidelity_mm_quasinorm_matrix(sigma: &DMatrix<Complex64>) -> Result<f64> {
    let eigs = hermitian_eigenvalues(sigma);
    if eigs[0] < PSD_TOL {
        return Err(Error::NotPsd {
            min_eigenvalue: eigs[0],
        });
    }
    fidelity_mm_quasinorm(&DiagonalSpectrum::new(
        eigs.iter().map(|&l| l.max(0.0)).collect(),
    )?)
}

/// Schatten quasi-norm ||sigma||_p = (sum sigma_i^p)^{1/p} for p in (0, 1].
pub fn schatten_quasinorm(sigma: &DiagonalSpectrum, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            message: format!("p = {} outside (0, 1]", p),
        });
    }
    let s: f64 = sigma.values().iter().map(|&v| v.max(0.0).powf(p)).sum();
    Ok(s.powf(1.0 / p))
}
