//! Causal forward pass, one position at a time over a key/value cache, and
//! the matching reverse pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{
    add_into, affine, back_input, back_weight, dot, gelu, gelu_grad, layer_norm, layer_norm_back,
    softmax,
};
use super::weights::Weights;
use super::ModelError;
use crate::Scalar;

/// Per-position predictions for the next position.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub vocab_size: usize,
    /// `len × vocab_size`, row-major.
    pub logits: Vec<T>,
    pub numbers: Vec<T>,
}

impl<T: Scalar> ForwardOutput<T> {
    pub fn len(&self) -> usize {
        self.numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numbers.is_empty()
    }

    pub fn logits_at(&self, t: usize) -> &[T] {
        &self.logits[t * self.vocab_size..(t + 1) * self.vocab_size]
    }
}

#[derive(Default)]
struct BlockTrace<T> {
    ln1_xhat: Vec<T>,
    ln1_rstd: Vec<T>,
    ln1_out: Vec<T>,
    qkv: Vec<T>,
    /// Attention weights, position `t` holds `n_heads × (t + 1)` values.
    probs: Vec<T>,
    att: Vec<T>,
    proj_mask: Vec<T>,
    ln2_xhat: Vec<T>,
    ln2_rstd: Vec<T>,
    ln2_out: Vec<T>,
    fc_pre: Vec<T>,
    fc_act: Vec<T>,
    out_mask: Vec<T>,
}

/// Incremental forward state. Every pushed position is recorded, so the same
/// object serves as decoding cache and as the tape for [`Session::backward`].
pub struct Session<'w, T: Scalar> {
    w: &'w Weights<T>,
    dropout: Option<(T, ChaCha8Rng)>,
    tokens: Vec<u32>,
    scales: Vec<Option<T>>,
    emb_mask: Vec<T>,
    blocks: Vec<BlockTrace<T>>,
    lnf_xhat: Vec<T>,
    lnf_rstd: Vec<T>,
    hidden: Vec<T>,
    logits: Vec<T>,
    numbers: Vec<T>,
}

fn probs_base(t: usize, heads: usize) -> usize {
    heads * t * (t + 1) / 2
}

impl<'w, T: Scalar> Session<'w, T> {
    /// Inference session: dropout off.
    pub fn new(w: &'w Weights<T>) -> Self {
        Session {
            w,
            dropout: None,
            tokens: Vec::new(),
            scales: Vec::new(),
            emb_mask: Vec::new(),
            blocks: (0..w.config.n_layers).map(|_| BlockTrace::default()).collect(),
            lnf_xhat: Vec::new(),
            lnf_rstd: Vec::new(),
            hidden: Vec::new(),
            logits: Vec::new(),
            numbers: Vec::new(),
        }
    }

    /// Training session: dropout at the configured rate, masks drawn from `seed`.
    pub fn training(w: &'w Weights<T>, seed: u64) -> Self {
        let mut s = Session::new(w);
        if w.config.dropout > 0.0 {
            s.dropout = Some((T::of(w.config.dropout), ChaCha8Rng::seed_from_u64(seed)));
        }
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    /// Next-token logits predicted at position `t`.
    pub fn logits_at(&self, t: usize) -> &[T] {
        let v = self.w.config.vocab_size;
        &self.logits[t * v..(t + 1) * v]
    }

    /// Next-number prediction at position `t`.
    pub fn number_at(&self, t: usize) -> T {
        self.numbers[t]
    }

    pub fn last_logits(&self) -> Option<&[T]> {
        self.len().checked_sub(1).map(|t| self.logits_at(t))
    }

    pub fn last_number(&self) -> Option<T> {
        self.numbers.last().copied()
    }

    pub fn output(&self) -> ForwardOutput<T> {
        ForwardOutput {
            vocab_size: self.w.config.vocab_size,
            logits: self.logits.clone(),
            numbers: self.numbers.clone(),
        }
    }

    fn draw_mask(&mut self, n: usize) -> Vec<T> {
        match &mut self.dropout {
            None => Vec::new(),
            Some((p, rng)) => {
                let keep = T::one() / (T::one() - *p);
                let p = p.as_f64();
                (0..n).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect()
            }
        }
    }

    /// Appends one position. `number = None` feeds the bare token embedding.
    pub fn push(&mut self, token: u32, number: Option<T>) -> Result<(), ModelError> {
        let w = self.w;
        let c = &w.config;
        let t = self.len();
        if t >= c.max_len {
            return Err(ModelError::TooLong { len: t + 1, max_len: c.max_len });
        }
        if token as usize >= c.vocab_size {
            return Err(ModelError::UnknownToken { position: t, id: token });
        }
        if number.is_some_and(|n| !n.is_finite()) {
            return Err(ModelError::NonFinite(format!("input number at position {t}")));
        }
        let (d, heads, dh) = (c.d_model, c.n_heads, c.head_dim());
        let p = &w.params;
        let lay = &w.layout;

        let tok_row = &p[lay.wte + token as usize * d..][..d];
        let pos_row = &p[lay.wpe + t * d..][..d];
        let mut x: Vec<T> = match number {
            Some(n) => tok_row.iter().zip(pos_row).map(|(&e, &q)| n * e + q).collect(),
            None => tok_row.iter().zip(pos_row).map(|(&e, &q)| e + q).collect(),
        };
        let mask = self.draw_mask(d);
        apply_mask(&mut x, &mask);
        self.emb_mask.extend(mask);
        self.tokens.push(token);
        self.scales.push(number);

        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut xhat = vec![T::zero(); d];
        let mut h = vec![T::zero(); d];
        let mut qkv = vec![T::zero(); 3 * d];
        let mut att = vec![T::zero(); d];
        let mut proj = vec![T::zero(); d];
        let mut pre = vec![T::zero(); 4 * d];
        let mut out = vec![T::zero(); d];
        for l in 0..c.n_layers {
            let o = &lay.blocks[l];
            let rstd = layer_norm(&x, &p[o.ln1_g..][..d], &p[o.ln1_b..][..d], &mut xhat, &mut h);
            affine(&h, &p[o.attn_w..][..3 * d * d], &p[o.attn_b..][..3 * d], &mut qkv);
            let b = &mut self.blocks[l];
            b.ln1_xhat.extend_from_slice(&xhat);
            b.ln1_rstd.push(rstd);
            b.ln1_out.extend_from_slice(&h);
            b.qkv.extend_from_slice(&qkv);

            for hd in 0..heads {
                let q = &qkv[hd * dh..(hd + 1) * dh];
                let scores: Vec<T> = (0..=t)
                    .map(|s| dot(q, &b.qkv[s * 3 * d + d + hd * dh..][..dh]) * scale)
                    .collect();
                let pr = softmax(&scores);
                let a = &mut att[hd * dh..(hd + 1) * dh];
                a.fill(T::zero());
                for (s, &ps) in pr.iter().enumerate() {
                    let v = &b.qkv[s * 3 * d + 2 * d + hd * dh..][..dh];
                    for (ai, &vi) in a.iter_mut().zip(v) {
                        *ai += ps * vi;
                    }
                }
                b.probs.extend(pr);
            }
            b.att.extend_from_slice(&att);
            affine(&att, &p[o.proj_w..][..d * d], &p[o.proj_b..][..d], &mut proj);
            let mask = self.draw_mask(d);
            apply_mask(&mut proj, &mask);
            let b = &mut self.blocks[l];
            b.proj_mask.extend(mask);
            add_into(&mut x, &proj);

            let rstd = layer_norm(&x, &p[o.ln2_g..][..d], &p[o.ln2_b..][..d], &mut xhat, &mut h);
            affine(&h, &p[o.fc_w..][..4 * d * d], &p[o.fc_b..][..4 * d], &mut pre);
            let act: Vec<T> = pre.iter().map(|&v| gelu(v)).collect();
            affine(&act, &p[o.out_w..][..4 * d * d], &p[o.out_b..][..d], &mut out);
            b.ln2_xhat.extend_from_slice(&xhat);
            b.ln2_rstd.push(rstd);
            b.ln2_out.extend_from_slice(&h);
            b.fc_pre.extend_from_slice(&pre);
            b.fc_act.extend(act);
            let mask = self.draw_mask(d);
            apply_mask(&mut out, &mask);
            self.blocks[l].out_mask.extend(mask);
            add_into(&mut x, &out);
        }

        let rstd = layer_norm(&x, &p[lay.lnf_g..][..d], &p[lay.lnf_b..][..d], &mut xhat, &mut h);
        self.lnf_xhat.extend_from_slice(&xhat);
        self.lnf_rstd.push(rstd);
        let v = c.vocab_size;
        let mut logits = vec![T::zero(); v];
        affine(&h, &p[lay.head_tok..][..d * v], &vec![T::zero(); v], &mut logits);
        self.logits.extend(logits);
        self.numbers.push(dot(&h, &p[lay.head_num_w..][..d]) + p[lay.head_num_b]);
        self.hidden.extend(h);
        debug_assert_eq!(probs_base(t + 1, heads), self.blocks.first().map_or(0, |b| b.probs.len()));
        Ok(())
    }

    /// Accumulates parameter gradients into `grad` given upstream gradients
    /// of the logits (`len × vocab`) and number outputs (`len`).
    pub fn backward(&self, dlogits: &[T], dnumbers: &[T], grad: &mut [T]) -> Result<(), ModelError> {
        let c = &self.w.config;
        let (n, d, v, heads, dh) = (self.len(), c.d_model, c.vocab_size, c.n_heads, c.head_dim());
        if dlogits.len() != n * v || dnumbers.len() != n || grad.len() != self.w.params.len() {
            return Err(ModelError::Shape("gradient buffers do not match the session".into()));
        }
        if dlogits.iter().chain(dnumbers).any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite("upstream gradient".into()));
        }
        let p = &self.w.params;
        let lay = &self.w.layout;

        // heads and final norm
        let mut dx = vec![T::zero(); n * d];
        let mut dh_row = vec![T::zero(); d];
        for t in 0..n {
            let h = &self.hidden[t * d..(t + 1) * d];
            let dl = &dlogits[t * v..(t + 1) * v];
            let dn = dnumbers[t];
            dh_row.fill(T::zero());
            back_input(&p[lay.head_tok..][..d * v], dl, &mut dh_row);
            back_weight(h, dl, &mut grad[lay.head_tok..][..d * v]);
            for i in 0..d {
                dh_row[i] += p[lay.head_num_w + i] * dn;
                grad[lay.head_num_w + i] += h[i] * dn;
            }
            grad[lay.head_num_b] += dn;
            let (gg, rest) = grad[lay.lnf_g..].split_at_mut(d);
            layer_norm_back(
                &self.lnf_xhat[t * d..(t + 1) * d],
                self.lnf_rstd[t],
                &p[lay.lnf_g..][..d],
                &dh_row,
                &mut dx[t * d..(t + 1) * d],
                gg,
                &mut rest[lay.lnf_b - lay.lnf_g - d..][..d],
            );
        }

        let mut dbuf = vec![T::zero(); 4 * d];
        let mut dh_in = vec![T::zero(); d];
        for l in (0..c.n_layers).rev() {
            let o = &lay.blocks[l];
            let b = &self.blocks[l];
            // feed-forward sublayer
            for t in 0..n {
                let mut dout = dx[t * d..(t + 1) * d].to_vec();
                apply_mask(&mut dout, b.out_mask.get(t * d..(t + 1) * d).unwrap_or(&[]));
                add_into(&mut grad[o.out_b..][..d], &dout);
                back_weight(&b.fc_act[t * 4 * d..(t + 1) * 4 * d], &dout, &mut grad[o.out_w..][..4 * d * d]);
                dbuf.fill(T::zero());
                back_input(&p[o.out_w..][..4 * d * d], &dout, &mut dbuf);
                for (g, &z) in dbuf.iter_mut().zip(&b.fc_pre[t * 4 * d..(t + 1) * 4 * d]) {
                    *g *= gelu_grad(z);
                }
                add_into(&mut grad[o.fc_b..][..4 * d], &dbuf);
                back_weight(&b.ln2_out[t * d..(t + 1) * d], &dbuf, &mut grad[o.fc_w..][..4 * d * d]);
                dh_in.fill(T::zero());
                back_input(&p[o.fc_w..][..4 * d * d], &dbuf, &mut dh_in);
                let (gg, rest) = grad[o.ln2_g..].split_at_mut(d);
                layer_norm_back(
                    &b.ln2_xhat[t * d..(t + 1) * d],
                    b.ln2_rstd[t],
                    &p[o.ln2_g..][..d],
                    &dh_in,
                    &mut dx[t * d..(t + 1) * d],
                    gg,
                    &mut rest[o.ln2_b - o.ln2_g - d..][..d],
                );
            }
            // attention sublayer
            let mut datt = vec![T::zero(); n * d];
            for t in 0..n {
                let mut dproj = dx[t * d..(t + 1) * d].to_vec();
                apply_mask(&mut dproj, b.proj_mask.get(t * d..(t + 1) * d).unwrap_or(&[]));
                add_into(&mut grad[o.proj_b..][..d], &dproj);
                back_weight(&b.att[t * d..(t + 1) * d], &dproj, &mut grad[o.proj_w..][..d * d]);
                back_input(&p[o.proj_w..][..d * d], &dproj, &mut datt[t * d..(t + 1) * d]);
            }
            let scale = T::one() / T::of(dh as f64).sqrt();
            let mut dqkv = vec![T::zero(); n * 3 * d];
            for t in 0..n {
                for hd in 0..heads {
                    let pr = &b.probs[probs_base(t, heads) + hd * (t + 1)..][..t + 1];
                    let da = &datt[t * d + hd * dh..][..dh];
                    let q = &b.qkv[t * 3 * d + hd * dh..][..dh];
                    let dp: Vec<T> = (0..=t)
                        .map(|s| dot(da, &b.qkv[s * 3 * d + 2 * d + hd * dh..][..dh]))
                        .collect();
                    let mean = dot(pr, &dp);
                    for s in 0..=t {
                        let ds = pr[s] * (dp[s] - mean) * scale;
                        let k_at = s * 3 * d + d + hd * dh;
                        let v_at = s * 3 * d + 2 * d + hd * dh;
                        let q_at = t * 3 * d + hd * dh;
                        for i in 0..dh {
                            dqkv[q_at + i] += ds * b.qkv[k_at + i];
                            dqkv[k_at + i] += ds * q[i];
                            dqkv[v_at + i] += pr[s] * da[i];
                        }
                    }
                }
            }
            for t in 0..n {
                let g = &dqkv[t * 3 * d..(t + 1) * 3 * d];
                add_into(&mut grad[o.attn_b..][..3 * d], g);
                back_weight(&b.ln1_out[t * d..(t + 1) * d], g, &mut grad[o.attn_w..][..3 * d * d]);
                dh_in.fill(T::zero());
                back_input(&p[o.attn_w..][..3 * d * d], g, &mut dh_in);
                let (gg, rest) = grad[o.ln1_g..].split_at_mut(d);
                layer_norm_back(
                    &b.ln1_xhat[t * d..(t + 1) * d],
                    b.ln1_rstd[t],
                    &p[o.ln1_g..][..d],
                    &dh_in,
                    &mut dx[t * d..(t + 1) * d],
                    gg,
                    &mut rest[o.ln1_b - o.ln1_g - d..][..d],
                );
            }
        }

        // fused embedding
        for t in 0..n {
            let dx0 = &mut dx[t * d..(t + 1) * d];
            apply_mask(dx0, self.emb_mask.get(t * d..(t + 1) * d).unwrap_or(&[]));
            let s = self.scales[t].unwrap_or(T::one());
            let tok = lay.wte + self.tokens[t] as usize * d;
            for i in 0..d {
                grad[tok + i] += s * dx0[i];
                grad[lay.wpe + t * d + i] += dx0[i];
            }
        }
        Ok(())
    }
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &[T]) {
    for (v, &m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

impl<T: Scalar> Weights<T> {
    /// Runs the full causal forward over a fused token/number input.
    pub fn forward(&self, tokens: &[u32], numbers: &[T]) -> Result<ForwardOutput<T>, ModelError> {
        Ok(self.trace(tokens, numbers)?.output())
    }

    /// Forward with plain token embeddings (no number channel).
    pub fn forward_tokens(&self, tokens: &[u32]) -> Result<ForwardOutput<T>, ModelError> {
        let mut s = Session::new(self);
        for &t in tokens {
            s.push(t, None)?;
        }
        Ok(s.output())
    }

    /// Forward that keeps the tape for a later backward pass.
    pub fn trace(&self, tokens: &[u32], numbers: &[T]) -> Result<Session<'_, T>, ModelError> {
        self.trace_with(Session::new(self), tokens, numbers)
    }

    /// As [`Weights::trace`], with dropout active when configured.
    pub fn trace_training(&self, tokens: &[u32], numbers: &[T], seed: u64) -> Result<Session<'_, T>, ModelError> {
        self.trace_with(Session::training(self, seed), tokens, numbers)
    }

    fn trace_with<'a>(
        &'a self,
        mut s: Session<'a, T>,
        tokens: &[u32],
        numbers: &[T],
    ) -> Result<Session<'a, T>, ModelError> {
        if tokens.len() != numbers.len() {
            return Err(ModelError::Shape(format!(
                "{} tokens but {} numbers",
                tokens.len(),
                numbers.len()
            )));
        }
        if tokens.len() > self.config.max_len {
            return Err(ModelError::TooLong { len: tokens.len(), max_len: self.config.max_len });
        }
        for (&t, &x) in tokens.iter().zip(numbers) {
            s.push(t, Some(x))?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn cfg() -> ModelConfig {
        ModelConfig { n_layers: 2, n_heads: 2, d_model: 8, max_len: 12, vocab_size: 7, dropout: 0.0 }
    }

    #[test]
    fn shapes_and_softmax_rows() {
        let w = Weights::<f64>::init(&cfg(), 1).unwrap();
        let out = w.forward(&[0, 3, 8 % 7, 2], &[1.0, 1.0, 0.4, 1.0]).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.logits.len(), 28);
        for t in 0..4 {
            let s: f64 = softmax(out.logits_at(t)).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let w = Weights::<f64>::init(&cfg(), 1).unwrap();
        assert!(matches!(w.forward(&[9], &[1.0]), Err(ModelError::UnknownToken { position: 0, id: 9 })));
        assert!(matches!(w.forward(&[0; 13], &[1.0; 13]), Err(ModelError::TooLong { len: 13, .. })));
        assert!(matches!(w.forward(&[0, 1], &[1.0]), Err(ModelError::Shape(_))));
        assert!(matches!(w.forward(&[0], &[f64::NAN]), Err(ModelError::NonFinite(_))));
    }

    #[test]
    fn incremental_equals_full() {
        let w = Weights::<f32>::init(&cfg(), 3).unwrap();
        let toks = [1, 2, 3, 4, 5, 6];
        let nums = [1.0, 0.3, -0.2, 1.0, 0.9, 1.0];
        let full = w.forward(&toks, &nums).unwrap();
        let mut s = Session::new(&w);
        for (k, (&t, &x)) in toks.iter().zip(&nums).enumerate() {
            s.push(t, Some(x)).unwrap();
            assert_eq!(s.last_logits().unwrap(), full.logits_at(k));
            assert_eq!(s.last_number().unwrap(), full.numbers[k]);
        }
    }

    #[test]
    fn number_scales_token_embedding() {
        let w = Weights::<f64>::init(&cfg(), 5).unwrap();
        let mut a = Session::new(&w);
        a.push(3, Some(2.0)).unwrap();
        let mut b = Session::new(&w);
        b.push(3, Some(1.0)).unwrap();
        // a zero input number removes the token contribution entirely
        let mut z = Session::new(&w);
        z.push(3, Some(0.0)).unwrap();
        let mut z2 = Session::new(&w);
        z2.push(5, Some(0.0)).unwrap();
        assert_eq!(z.output(), z2.output());
        assert_ne!(a.output(), b.output());
    }

    fn finite_difference_check(dropout: f64) {
        let mut c = cfg();
        c.dropout = dropout;
        let w = Weights::<f64>::init(&c, 11).unwrap();
        let toks = [0u32, 4, 2, 6, 1];
        let nums = [1.0, 0.5, -0.7, 1.0, 0.2];
        let dl: Vec<f64> = (0..5 * 7).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let dn = [0.3, -1.0, 0.5, 0.25, 2.0];
        let loss = |w: &Weights<f64>| {
            let s = w.trace_training(&toks, &nums, 99).unwrap();
            let o = s.output();
            dot(&o.logits, &dl) + dot(&o.numbers, &dn)
        };
        let mut grad = w.zeros_like();
        w.trace_training(&toks, &nums, 99).unwrap().backward(&dl, &dn, &mut grad).unwrap();
        let mut worst: f64 = 0.0;
        for i in (0..w.params.len()).step_by(7) {
            let mut wp = w.clone();
            wp.params[i] += 1e-5;
            let mut wm = w.clone();
            wm.params[i] -= 1e-5;
            let fd = (loss(&wp) - loss(&wm)) / 2e-5;
            let err = (fd - grad[i]).abs() / (fd.abs() + grad[i].abs()).max(1e-6);
            worst = worst.max(err);
            assert!(err < 1e-5, "{:?}: fd {fd} vs {}", w.layout.locate(i), grad[i]);
        }
        assert!(worst < 1e-5);
    }

    #[test]
    fn backward_matches_finite_differences() {
        finite_difference_check(0.0);
    }

    #[test]
    fn backward_with_dropout_matches_finite_differences() {
        finite_difference_check(0.3);
    }
}
