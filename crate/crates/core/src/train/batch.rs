use rayon::prelude::*;

use super::loss::{docking_loss_grad, pretrain_loss_grad, LossBreakdown};
use super::TrainError;
use crate::model::Weights;
use crate::seqcodec::{ParallelSequence, Vocabulary};
use crate::Scalar;

/// Sequences per parallel work item. Fixed so the reduction order, and hence
/// the result, does not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy)]
pub enum Objective<'v> {
    /// Cross-entropy plus `alpha` times coordinate MSE.
    Pretrain { alpha: f64 },
    /// Ligand coordinate MSE only.
    Docking { vocab: &'v Vocabulary },
}

/// Loss and gradient summed over sequences; divide by `count` for the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSum<T> {
    pub loss: LossBreakdown,
    pub grad: Vec<T>,
    pub count: usize,
}

impl<T: Scalar> GradSum<T> {
    pub fn zeros(n: usize) -> Self {
        GradSum { loss: LossBreakdown::default(), grad: vec![T::zero(); n], count: 0 }
    }

    pub fn merge(&mut self, o: &GradSum<T>) {
        self.loss.add(&o.loss);
        for (a, &b) in self.grad.iter_mut().zip(&o.grad) {
            *a += b;
        }
        self.count += o.count;
    }

    /// Mean loss and mean gradient.
    pub fn into_mean(mut self) -> (LossBreakdown, Vec<T>) {
        let inv = T::of(1.0 / self.count.max(1) as f64);
        self.grad.iter_mut().for_each(|g| *g *= inv);
        (self.loss.mean_over(self.count), self.grad)
    }
}

fn one<T: Scalar>(
    w: &Weights<T>,
    seq: &ParallelSequence,
    obj: Objective<'_>,
    dropout_seed: u64,
    acc: &mut GradSum<T>,
) -> Result<(), TrainError> {
    let nums: Vec<T> = seq.numbers.iter().map(|&x| T::of(x)).collect();
    let session = w.trace_training(&seq.tokens, &nums, dropout_seed)?;
    let out = session.output();
    let (loss, g) = match obj {
        Objective::Pretrain { alpha } => pretrain_loss_grad(&out, seq, alpha)?,
        Objective::Docking { vocab } => docking_loss_grad(&out, seq, vocab)?,
    };
    session.backward(&g.dlogits, &g.dnumbers, &mut acc.grad)?;
    acc.loss.add(&loss);
    acc.count += 1;
    Ok(())
}

/// Sums per-sequence losses and gradients over `seqs`. `seeds[i]` drives the
/// dropout masks of `seqs[i]`.
pub fn gradient_sum<T: Scalar>(
    w: &Weights<T>,
    seqs: &[&ParallelSequence],
    seeds: &[u64],
    obj: Objective<'_>,
) -> Result<GradSum<T>, TrainError> {
    assert_eq!(seqs.len(), seeds.len());
    let n = w.params.len();
    let parts: Vec<Result<GradSum<T>, TrainError>> = seqs
        .par_chunks(CHUNK)
        .zip(seeds.par_chunks(CHUNK))
        .map(|(ss, ks)| {
            let mut acc = GradSum::zeros(n);
            for (s, &k) in ss.iter().zip(ks) {
                one(w, s, obj, k, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = GradSum::zeros(n);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Mean loss and gradient of a single batch.
pub fn batch_gradient<T: Scalar>(
    w: &Weights<T>,
    seqs: &[&ParallelSequence],
    obj: Objective<'_>,
) -> Result<(LossBreakdown, Vec<T>), TrainError> {
    let seeds = vec![0; seqs.len()];
    Ok(gradient_sum(w, seqs, &seeds, obj)?.into_mean())
}

/// Mean gradient over `seqs`, computed as `accum_steps` sequential
/// micro-batches whose sums are combined.
pub fn accumulated_gradient<T: Scalar>(
    w: &Weights<T>,
    seqs: &[&ParallelSequence],
    seeds: &[u64],
    micro_batch: usize,
    obj: Objective<'_>,
) -> Result<(LossBreakdown, Vec<T>), TrainError> {
    let mut total = GradSum::zeros(w.params.len());
    for (ss, ks) in seqs.chunks(micro_batch.max(1)).zip(seeds.chunks(micro_batch.max(1))) {
        total.merge(&gradient_sum(w, ss, ks, obj)?);
    }
    Ok(total.into_mean())
}
