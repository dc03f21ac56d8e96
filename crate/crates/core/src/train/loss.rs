use serde::Serialize;

use super::TrainError;
use crate::model::{log_prob, softmax, ForwardOutput};
use crate::seqcodec::{is_coord_id, layout, ParallelSequence, Vocabulary};
use crate::Scalar;

/// Loss components. For a batch these are means over sequences and the
/// target counts are totals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub mse: f64,
    pub total: f64,
    pub n_token_targets: usize,
    pub n_coord_targets: usize,
}

impl LossBreakdown {
    pub fn add(&mut self, o: &LossBreakdown) {
        self.ce += o.ce;
        self.mse += o.mse;
        self.total += o.total;
        self.n_token_targets += o.n_token_targets;
        self.n_coord_targets += o.n_coord_targets;
    }

    /// Divides the loss values (not the counts) by `n`.
    pub fn mean_over(mut self, n: usize) -> LossBreakdown {
        let n = n.max(1) as f64;
        self.ce /= n;
        self.mse /= n;
        self.total /= n;
        self
    }
}

/// Upstream gradients of a per-sequence loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub dlogits: Vec<T>,
    pub dnumbers: Vec<T>,
}

fn check_aligned<T: Scalar>(out: &ForwardOutput<T>, target: &ParallelSequence) -> Result<(), TrainError> {
    if out.len() != target.len() {
        return Err(TrainError::Shape(format!(
            "output has {} positions, target has {}",
            out.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Next-token cross-entropy over every target plus `alpha` times the
/// squared error of number predictions whose target is a coordinate.
///
/// Output position `t` is scored against target position `t + 1`.
pub fn pretrain_loss_grad<T: Scalar>(
    out: &ForwardOutput<T>,
    target: &ParallelSequence,
    alpha: f64,
) -> Result<(LossBreakdown, LossGrad<T>), TrainError> {
    check_aligned(out, target)?;
    let n = target.len();
    if n < 2 {
        return Err(TrainError::NoTargets);
    }
    let v = out.vocab_size;
    let n_tok = n - 1;
    let coord: Vec<usize> = (0..n_tok).filter(|&t| is_coord_id(target.tokens[t + 1])).collect();
    let mut dlogits = vec![T::zero(); n * v];
    let mut dnumbers = vec![T::zero(); n];
    let mut ce = 0.0;
    let inv_tok = T::of(1.0 / n_tok as f64);
    for t in 0..n_tok {
        let row = out.logits_at(t);
        let k = target.tokens[t + 1] as usize;
        ce -= log_prob(row, k).as_f64();
        let p = softmax(row);
        let g = &mut dlogits[t * v..(t + 1) * v];
        for (gi, pi) in g.iter_mut().zip(p) {
            *gi = pi * inv_tok;
        }
        g[k] -= inv_tok;
    }
    ce /= n_tok as f64;
    let mut mse = 0.0;
    if !coord.is_empty() {
        let scale = 2.0 * alpha / coord.len() as f64;
        for &t in &coord {
            let r = out.numbers[t].as_f64() - target.numbers[t + 1];
            mse += r * r;
            dnumbers[t] = T::of(scale * r);
        }
        mse /= coord.len() as f64;
    }
    let b = LossBreakdown {
        ce,
        mse,
        total: ce + alpha * mse,
        n_token_targets: n_tok,
        n_coord_targets: coord.len(),
    };
    if !b.total.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    Ok((b, LossGrad { dlogits, dnumbers }))
}

pub fn pretrain_loss<T: Scalar>(
    out: &ForwardOutput<T>,
    target: &ParallelSequence,
    alpha: f64,
) -> Result<LossBreakdown, TrainError> {
    Ok(pretrain_loss_grad(out, target, alpha)?.0)
}

/// Squared error over ligand coordinate targets only.
pub fn docking_loss_grad<T: Scalar>(
    out: &ForwardOutput<T>,
    target: &ParallelSequence,
    vocab: &Vocabulary,
) -> Result<(LossBreakdown, LossGrad<T>), TrainError> {
    check_aligned(out, target)?;
    let span = layout(target, vocab)
        .map_err(|d| TrainError::Shape(d.to_string()))?
        .ligand
        .map(|l| l.coords)
        .filter(|c| !c.is_empty())
        .ok_or(TrainError::NoLigandCoordinates)?;
    let n = target.len();
    let mut dnumbers = vec![T::zero(); n];
    let scale = 2.0 / span.len() as f64;
    let mut mse = 0.0;
    for p in span.clone() {
        let r = out.numbers[p - 1].as_f64() - target.numbers[p];
        mse += r * r;
        dnumbers[p - 1] = T::of(scale * r);
    }
    mse /= span.len() as f64;
    if !mse.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    let b = LossBreakdown { ce: 0.0, mse, total: mse, n_token_targets: 0, n_coord_targets: span.len() };
    Ok((b, LossGrad { dlogits: vec![T::zero(); n * out.vocab_size], dnumbers }))
}

pub fn docking_loss<T: Scalar>(
    out: &ForwardOutput<T>,
    target: &ParallelSequence,
    vocab: &Vocabulary,
) -> Result<f64, TrainError> {
    Ok(docking_loss_grad(out, target, vocab)?.0.mse)
}
