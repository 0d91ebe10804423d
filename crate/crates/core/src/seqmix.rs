//! Sequences of gated mixtures over a partition of the dimensions.
//!
//! Dimensions are split into consecutive intervals. Block `ℓ` holds a latent
//! `h_ℓ` whose prior is a softmax gate on every dimension before the block,
//! and K_ℓ components whose conditionals may use all earlier dimensions. The
//! latents interleave with the observables, so `P(x)` is an exact product of
//! per-block log-sum-exps and the posterior factorizes over blocks.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{check_permutation, DataKind, Dataset, EncodingMeta};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, log_weighted_sum_exp};
use crate::mixture::{
    draw_categorical, init_product_mixture_range, run_block_em, BlockSpec, ComponentSet, EmOptions,
    PriorFit, SharingMode, TrainingWarning,
};
use crate::solvers::{GateWeights, SolverConfig};

/// Interval boundaries `0 = d₀ < d₁ < … < d_L = D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    boundaries: Vec<usize>,
}

impl Partition {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(Error::invalid("a partition starts at 0 and has at least one interval"));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("partition boundaries must be strictly increasing"));
        }
        Ok(Self { boundaries })
    }

    /// One block holding every dimension.
    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![0, dim])
    }

    /// One block per dimension.
    pub fn per_dimension(dim: usize) -> Result<Self> {
        Self::new((0..=dim).collect())
    }

    /// Splits a `rows×cols` image into `block_rows×block_cols` tiles.
    ///
    /// Returns the partition of the reordered dimensions and the column
    /// order: tiles in raster order, pixels in raster order within each
    /// tile. `order[i]` is the raster index of reordered dimension `i`.
    pub fn grid(rows: usize, cols: usize, block_rows: usize, block_cols: usize) -> Result<(Self, Vec<usize>)> {
        if block_rows == 0 || block_cols == 0 || !rows.is_multiple_of(block_rows) || !cols.is_multiple_of(block_cols) {
            return Err(Error::invalid(format!(
                "a {rows}x{cols} grid cannot be tiled by {block_rows}x{block_cols} blocks"
            )));
        }
        let mut order = Vec::with_capacity(rows * cols);
        let mut boundaries = vec![0];
        for tr in 0..rows / block_rows {
            for tc in 0..cols / block_cols {
                for r in 0..block_rows {
                    for c in 0..block_cols {
                        order.push((tr * block_rows + r) * cols + tc * block_cols + c);
                    }
                }
                boundaries.push(order.len());
            }
        }
        Ok((Self::new(boundaries)?, order))
    }

    /// Parses `"d1,d2,…,D"` (a leading 0 is optional) or
    /// `"grid RxC into rxc"`. The second value is the column order for grid
    /// forms.
    pub fn parse(text: &str) -> Result<(Self, Option<Vec<usize>>)> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("grid") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let dims = |s: &str| -> Result<(usize, usize)> {
                let (a, b) = s
                    .split_once('x')
                    .ok_or_else(|| Error::invalid(format!("expected RxC, found `{s}`")))?;
                let num = |v: &str| v.parse::<usize>().map_err(|_| Error::invalid(format!("bad size `{v}`")));
                Ok((num(a)?, num(b)?))
            };
            return match parts.as_slice() {
                [whole, "into", tile] => {
                    let (r, c) = dims(whole)?;
                    let (br, bc) = dims(tile)?;
                    let (p, order) = Self::grid(r, c, br, bc)?;
                    Ok((p, Some(order)))
                }
                _ => Err(Error::invalid("grid partitions read `grid RxC into rxc`")),
            };
        }
        let mut b: Vec<usize> = text
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad partition boundary `{v}`")))
            })
            .collect::<Result<_>>()?;
        if b.first() != Some(&0) {
            b.insert(0, 0);
        }
        Ok((Self::new(b)?, None))
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Number of blocks L.
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        *self.boundaries.last().expect("nonempty partition")
    }

    pub fn block(&self, l: usize) -> Range<usize> {
        self.boundaries[l]..self.boundaries[l + 1]
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.boundaries.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// The gate and components of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBlock {
    pub gate: GateWeights,
    pub components: ComponentSet,
}

impl SequenceBlock {
    pub fn k(&self) -> usize {
        self.components.k()
    }

    /// Log gate probabilities and block log-likelihoods of every component.
    fn terms(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gate = self.gate.log_probs(x);
        let comp = (0..self.k()).map(|k| self.components.loglik(x, k)).collect();
        (gate, comp)
    }

    fn loglik(&self, x: &[f64]) -> f64 {
        let (gate, comp) = self.terms(x);
        let probs: Vec<f64> = gate.iter().map(|g| g.exp()).collect();
        log_weighted_sum_exp(&comp, &probs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    partition: Partition,
    blocks: Vec<SequenceBlock>,
    meta: Option<EncodingMeta>,
    order: Option<Vec<usize>>,
}

impl SequenceModel {
    pub fn new(partition: Partition, blocks: Vec<SequenceBlock>, meta: Option<EncodingMeta>) -> Result<Self> {
        if blocks.len() != partition.len() {
            return Err(Error::invalid(format!(
                "partition has {} blocks, model has {}",
                partition.len(),
                blocks.len()
            )));
        }
        let kind = blocks[0].components.kind();
        for (l, b) in blocks.iter().enumerate() {
            let range = partition.block(l);
            if b.components.start() != range.start || b.components.end() != range.end {
                return Err(Error::invalid(format!("block {l} does not cover its interval")));
            }
            if b.components.kind() != kind {
                return Err(Error::invalid("all blocks must share the data kind"));
            }
            if b.gate.len() != b.k() {
                return Err(Error::invalid(format!("block {l} gate has the wrong number of classes")));
            }
            if b.gate.max_index().is_some_and(|j| j >= range.start) {
                return Err(Error::invalid(format!(
                    "block {l} gate references a dimension inside or after the block"
                )));
            }
        }
        if let Some(m) = &meta {
            if m.dim() != partition.dim() {
                return Err(Error::Dimension {
                    expected: partition.dim(),
                    got: m.dim(),
                });
            }
        }
        Ok(Self {
            partition,
            blocks,
            meta,
            order: None,
        })
    }

    /// Records the column order the model was trained in (see
    /// [`Partition::grid`]); callers reorder raw data with it.
    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        check_permutation(&order, self.dim())?;
        self.order = Some(order);
        Ok(self)
    }

    pub fn order(&self) -> Option<&[usize]> {
        self.order.as_deref()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn blocks(&self) -> &[SequenceBlock] {
        &self.blocks
    }

    pub fn kind(&self) -> DataKind {
        self.blocks[0].components.kind()
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn meta(&self) -> Option<&EncodingMeta> {
        self.meta.as_ref()
    }

    pub fn ks(&self) -> Vec<usize> {
        self.blocks.iter().map(SequenceBlock::k).collect()
    }

    pub fn nnz(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.components.nnz() + b.gate.classes().iter().map(|c| c.nnz()).sum::<usize>())
            .sum()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Exact `log P(x)`: a sum over blocks of log-sum-exps over that block's
    /// latent.
    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.blocks.iter().map(|b| b.loglik(x)).sum())
    }

    pub fn loglik_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: data.dim(),
            });
        }
        (0..data.n())
            .into_par_iter()
            .map(|i| self.loglik(&data.row(i)))
            .collect()
    }

    /// `log P(h, x)` for one latent configuration.
    pub fn log_joint(&self, x: &[f64], h: &[usize]) -> Result<f64> {
        self.check_dim(x)?;
        if h.len() != self.blocks.len() || h.iter().zip(&self.blocks).any(|(h, b)| *h >= b.k()) {
            return Err(Error::invalid("latent configuration does not match the blocks"));
        }
        Ok(self
            .blocks
            .iter()
            .zip(h)
            .map(|(b, &k)| b.gate.log_probs(x)[k] + b.components.loglik(x, k))
            .sum())
    }

    /// Per-block posteriors `P(h_ℓ | x)`; the joint posterior is their
    /// product.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(x)?;
        Ok(self
            .blocks
            .iter()
            .map(|b| {
                let (gate, comp) = b.terms(x);
                let joint: Vec<f64> = gate.iter().zip(&comp).map(|(g, c)| g + c).collect();
                let z = log_sum_exp(&joint);
                joint.into_iter().map(|v| (v - z).exp()).collect()
            })
            .collect())
    }

    /// Ancestral sample with its latents: each block draws `h_ℓ` from the
    /// gate on the dimensions generated so far, then its own dimensions.
    pub fn sample_with_latents(&self, seed: u64) -> (Vec<usize>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<usize>, Vec<f64>) {
        let mut x = Vec::with_capacity(self.dim());
        let mut latents = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let probs: Vec<f64> = b.gate.log_probs(&x).into_iter().map(f64::exp).collect();
            let h = draw_categorical(&probs, rng);
            b.components.sample_into(&mut x, h, rng);
            latents.push(h);
        }
        (latents, x)
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        self.sample_with_latents(seed).1
    }
}

/// Component count and sharing mode of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockConfig {
    pub k: usize,
    pub mode: SharingMode,
}

#[derive(Debug, Clone)]
pub struct SequenceFit {
    pub model: SequenceModel,
    /// Per-block EM objective traces.
    pub traces: Vec<Vec<f64>>,
    pub warnings: Vec<TrainingWarning>,
}

/// Trains every block independently (in parallel) by EM. Block `ℓ` is
/// initialized by a product mixture on its own dimensions with seed
/// `seed + ℓ`; its gate is refit on the responsibilities in every M-step.
pub fn fit_sequence(
    train: &Dataset,
    partition: &Partition,
    blocks: &[BlockConfig],
    cfg: &SolverConfig,
    seed: u64,
) -> Result<SequenceFit> {
    fit_sequence_with(train, partition, blocks, cfg, seed, &EmOptions::default())
}

pub fn fit_sequence_with(
    train: &Dataset,
    partition: &Partition,
    blocks: &[BlockConfig],
    cfg: &SolverConfig,
    seed: u64,
    opts: &EmOptions,
) -> Result<SequenceFit> {
    cfg.validate()?;
    if partition.dim() != train.dim() {
        return Err(Error::Dimension {
            expected: train.dim(),
            got: partition.dim(),
        });
    }
    if blocks.len() != partition.len() {
        return Err(Error::invalid(format!(
            "{} block configurations for {} blocks",
            blocks.len(),
            partition.len()
        )));
    }
    let fits: Vec<_> = (0..partition.len())
        .into_par_iter()
        .map(|l| {
            let range = partition.block(l);
            let bc = blocks[l];
            let run = || -> Result<_> {
                let init = init_product_mixture_range(train, range.clone(), bc.k, seed.wrapping_add(l as u64), Some(l))?;
                let spec = BlockSpec {
                    start: range.start,
                    end: range.end,
                    k: bc.k,
                    mode: bc.mode,
                    // the first block's gate has no inputs: plain mixing weights
                    gated: range.start > 0,
                    block: Some(l),
                };
                let mut fit = run_block_em(train, spec, cfg, init.responsibilities, opts)?;
                let mut warnings = init.warnings;
                warnings.append(&mut fit.warnings);
                Ok((fit, warnings))
            };
            run().map_err(|e| match e {
                Error::InvalidArgument(_) | Error::Dimension { .. } => e,
                other => Error::Training(format!("block {l}: {other}")),
            })
        })
        .collect::<Result<_>>()?;
    let mut out_blocks = Vec::with_capacity(fits.len());
    let mut traces = Vec::with_capacity(fits.len());
    let mut warnings = Vec::new();
    for (fit, mut w) in fits {
        let gate = match fit.prior {
            PriorFit::Mixing(m) => GateWeights::from_probabilities(&m),
            PriorFit::Gate(g) => g,
        };
        out_blocks.push(SequenceBlock {
            gate,
            components: fit.components,
        });
        traces.push(fit.trace);
        warnings.append(&mut w);
    }
    Ok(SequenceFit {
        model: SequenceModel::new(partition.clone(), out_blocks, train.meta().cloned())?,
        traces,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0, 3, 3]).is_err());
        assert!(Partition::new(vec![1, 3]).is_err());
        let p = Partition::new(vec![0, 2, 5]).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.block(1), 2..5);
        assert_eq!(p.to_string(), "0,2,5");
    }

    #[test]
    fn grid_is_block_major() {
        let (p, order) = Partition::grid(4, 4, 2, 2).unwrap();
        assert_eq!(p.boundaries(), &[0, 4, 8, 12, 16]);
        assert_eq!(&order[..8], &[0, 1, 4, 5, 2, 3, 6, 7]);
        assert!(Partition::grid(5, 4, 2, 2).is_err());
    }

    #[test]
    fn parse_forms() {
        let (p, o) = Partition::parse("3, 8").unwrap();
        assert_eq!(p.boundaries(), &[0, 3, 8]);
        assert!(o.is_none());
        let (q, o) = Partition::parse("grid 28x28 into 14x14").unwrap();
        assert_eq!(q.len(), 4);
        assert_eq!(o.unwrap().len(), 784);
        assert!(Partition::parse("grid 28x28 14x14").is_err());
        assert!(Partition::parse("a,b").is_err());
    }
}
