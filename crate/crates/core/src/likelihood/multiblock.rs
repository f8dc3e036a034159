//! Per-block exact likelihood for the multi-block instance.
//!
//! With block-respecting POVMs every outcome vector is supported on one
//! block, the per-block likelihoods factorize, and each factor is the GOE
//! engine run on the block components with the block's own (A_nu, eps_nu).

use nalgebra::DVector;

use super::goe::GoeLikelihoodContext;
use super::EngineBudget;
use crate::error::{Error, Result};
use crate::measurement::{BlockPartition, Transcript};
use crate::states::DiagonalSpectrum;

/// Factorized multi-block likelihood: one GOE context per visited block.
pub struct MultiblockLikelihood {
    partition: BlockPartition,
    specs: Vec<(DiagonalSpectrum, f64)>,
    contexts: Vec<Option<GoeLikelihoodContext>>,
}

impl MultiblockLikelihood {
    /// `blocks` pairs each block's diagonal A_nu (at the A-scale, entries
    /// of d * state eigenvalues) with its perturbation scale eps_nu.
    pub fn new(
        transcript: &Transcript,
        partition: &BlockPartition,
        blocks: &[(DiagonalSpectrum, f64)],
        budget: &EngineBudget,
    ) -> Result<Self> {
        if blocks.len() != partition.num_blocks() {
            return Err(Error::DimensionMismatch {
                expected: partition.num_blocks(),
                got: blocks.len(),
            });
        }
        for (nu, (a, _)) in blocks.iter().enumerate() {
            if a.len() != partition.sizes()[nu] {
                return Err(Error::DimensionMismatch {
                    expected: partition.sizes()[nu],
                    got: a.len(),
                });
            }
        }
        let vectors = transcript.real_vectors()?;
        let mut per_block: Vec<Vec<DVector<f64>>> = vec![Vec::new(); blocks.len()];
        for (step, (full, raw_step)) in vectors.iter().zip(transcript.steps()).enumerate() {
            if full.len() != partition.total_dim() {
                return Err(Error::DimensionMismatch {
                    expected: partition.total_dim(),
                    got: full.len(),
                });
            }
            let complex_view = &raw_step.vector;
            let nu = match raw_step.block {
                Some(nu) if nu < blocks.len() => nu,
                _ => partition
                    .support_block(complex_view)
                    .ok_or(Error::MixedBlockSupport { step })?,
            };
            let range = partition.range(nu);
            let restricted = DVector::from_iterator(range.len(), range.map(|i| full[i]));
            per_block[nu].push(restricted);
        }
        let mut contexts = Vec::with_capacity(blocks.len());
        for (nu, vectors_nu) in per_block.into_iter().enumerate() {
            if vectors_nu.is_empty() {
                contexts.push(None);
            } else {
                contexts.push(Some(GoeLikelihoodContext::new(
                    vectors_nu,
                    &blocks[nu].0,
                    blocks[nu].1,
                    budget,
                )?));
            }
        }
        Ok(Self {
            partition: partition.clone(),
            specs: blocks.to_vec(),
            contexts,
        })
    }

    /// Per-block L_nu values; blocks with no outcomes contribute 1.
    pub fn per_block(&self) -> Vec<f64> {
        self.contexts
            .iter()
            .map(|c| c.as_ref().map_or(1.0, |ctx| ctx.likelihood()))
            .collect()
    }

    /// Product over blocks.
    pub fn likelihood(&self) -> f64 {
        self.per_block().iter().product()
    }

    /// One-step extension ratio for a new outcome supported on one block:
    /// only that block's factor moves.
    pub fn step_ratio(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.partition.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.partition.total_dim(),
                got: x.len(),
            });
        }
        let complex = x.map(|v| num_complex::Complex64::new(v, 0.0));
        let nu = self
            .partition
            .support_block(&complex)
            .ok_or(Error::MixedBlockSupport { step: usize::MAX })?;
        let range = self.partition.range(nu);
        let restricted = DVector::from_iterator(range.len(), range.map(|i| x[i]));
        match &self.contexts[nu] {
            Some(ctx) => ctx.step_ratio(&restricted),
            // no prior outcomes in this block: single-step L_nu is 1
            None => Ok(1.0),
        }
    }

    pub fn specs(&self) -> &[(DiagonalSpectrum, f64)] {
        &self.specs
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }
}

/// Per-block likelihoods and their product, with the default budget.
pub fn exact_likelihood_multiblock(
    transcript: &Transcript,
    partition: &BlockPartition,
    blocks: &[(DiagonalSpectrum, f64)],
) -> Result<(Vec<f64>, f64)> {
    let ml = MultiblockLikelihood::new(transcript, partition, blocks, &EngineBudget::default())?;
    Ok((ml.per_block(), ml.likelihood()))
}
