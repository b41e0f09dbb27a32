use std::ops::Range;

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{FactBatch, Slot, N_EDGE_TYPES};
use super::loss::intra_view_loss_grad;
use super::nn::{affine, affine_backward, gelu, gelu_grad, LayerNorm, LnCache};
use crate::error::{Error, Result};
use crate::fact::Role;
use crate::params::{impl_params, uniform_array1, uniform_array2, zeros_like, Params};

/// Scale of the uniform initialization `U(-s, s)` used for every weight.
pub const INIT_SCALE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    /// Replace the attention stack by a plain embedding lookup: the mask
    /// state becomes the mask embedding plus the mean of the visible token
    /// embeddings.
    pub lookup_only: bool,
}

impl EncoderConfig {
    pub fn new(dim: usize, n_heads: usize, n_layers: usize) -> Self {
        EncoderConfig {
            dim,
            n_heads,
            n_layers,
            ffn_dim: 2 * dim,
            lookup_only: false,
        }
    }
}

/// Pre-norm transformer block whose attention is biased by edge type.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub norm1: LayerNorm,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    /// Per edge type, a `d`-vector whose head slices bias keys.
    pub edge_key: Array2<f64>,
    /// Per edge type, a `d`-vector whose head slices bias values.
    pub edge_value: Array2<f64>,
    pub norm2: LayerNorm,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}
impl_params!(AttentionLayer {
    norm1,
    wq,
    bq,
    wk,
    bk,
    wv,
    bv,
    wo,
    bo,
    edge_key,
    edge_value,
    norm2,
    w1,
    b1,
    w2,
    b2
});

impl AttentionLayer {
    fn new(d: usize, ffn: usize, rng: &mut impl Rng) -> Self {
        let s = INIT_SCALE;
        AttentionLayer {
            norm1: LayerNorm::new(d),
            wq: uniform_array2(d, d, s, rng),
            bq: Array1::zeros(d),
            wk: uniform_array2(d, d, s, rng),
            bk: Array1::zeros(d),
            wv: uniform_array2(d, d, s, rng),
            bv: Array1::zeros(d),
            wo: uniform_array2(d, d, s, rng),
            bo: Array1::zeros(d),
            edge_key: uniform_array2(N_EDGE_TYPES, d, s, rng),
            edge_value: uniform_array2(N_EDGE_TYPES, d, s, rng),
            norm2: LayerNorm::new(d),
            w1: uniform_array2(d, ffn, s, rng),
            b1: Array1::zeros(ffn),
            w2: uniform_array2(ffn, d, s, rng),
            b2: Array1::zeros(d),
        }
    }
}

/// MLP `d -> d` followed by the tied output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub norm: LayerNorm,
    pub token_bias: Array1<f64>,
}
impl_params!(PredictionHead { w, b, norm, token_bias });

/// One view's masked encoder: embedding table over the combined
/// entity+relation vocabulary, attention stack and prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub embedding: Array2<f64>,
    pub mask: Array1<f64>,
    pub layers: Vec<AttentionLayer>,
    pub final_norm: Option<LayerNorm>,
    pub head: PredictionHead,
}
impl_params!(Encoder {
    embedding,
    mask,
    layers,
    final_norm,
    head
});

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    alpha: Vec<f64>,
    o: Array2<f64>,
    ln2: LnCache,
    c: Array2<f64>,
    z: Array2<f64>,
    g: Array2<f64>,
}

struct HeadCache {
    h: Array2<f64>,
    z: Array2<f64>,
    ln: LnCache,
    u: Array2<f64>,
}

/// Intermediate values of one forward pass, needed by the backward pass.
pub struct ForwardPass {
    layers: Vec<LayerCache>,
    final_ln: Option<LnCache>,
    head: HeadCache,
    mask_rows: Vec<usize>,
    /// `B × |V|` logits, `-inf` outside each sample's role.
    pub logits: Array2<f64>,
    /// `(B·L) × d` contextual states.
    pub states: Array2<f64>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, vocab_size: usize, rng: &mut impl Rng) -> Self {
        assert!(config.dim.is_multiple_of(config.n_heads), "dim must be divisible by n_heads");
        let d = config.dim;
        let s = INIT_SCALE;
        let embedding = uniform_array2(vocab_size, d, s, rng);
        let mask = uniform_array1(d, s, rng);
        let (layers, final_norm) = if config.lookup_only {
            (Vec::new(), None)
        } else {
            (
                (0..config.n_layers)
                    .map(|_| AttentionLayer::new(d, config.ffn_dim, rng))
                    .collect(),
                Some(LayerNorm::new(d)),
            )
        };
        let head = PredictionHead {
            w: uniform_array2(d, d, s, rng),
            b: Array1::zeros(d),
            norm: LayerNorm::new(d),
            token_bias: Array1::zeros(vocab_size),
        };
        Encoder {
            config,
            embedding,
            mask,
            layers,
            final_norm,
            head,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    fn input(&self, batch: &FactBatch) -> Result<Array2<f64>> {
        let d = self.dim();
        let mut x = Array2::zeros((batch.slots.len(), d));
        for (r, slot) in batch.slots.iter().enumerate() {
            match *slot {
                Slot::Token(t) => {
                    if t >= self.vocab_size() {
                        return Err(Error::ShapeMismatch {
                            field: "embedding".to_string(),
                            expected: vec![t + 1, d],
                            found: vec![self.vocab_size(), d],
                        });
                    }
                    x.row_mut(r).assign(&self.embedding.row(t));
                }
                Slot::Mask => x.row_mut(r).assign(&self.mask),
                Slot::Pad => {}
            }
        }
        Ok(x)
    }

    /// Contextual states `B × L × d`.
    pub fn encode(&self, batch: &FactBatch) -> Result<Array3<f64>> {
        let pass = self.forward(batch)?;
        let (b, l, d) = (batch.batch_size, batch.max_len, self.dim());
        Ok(pass.states.into_shape_with_order((b, l, d)).expect("row-major states"))
    }

    /// Role-masked logits `B × |V|`.
    pub fn predict_masked(&self, batch: &FactBatch) -> Result<Array2<f64>> {
        Ok(self.forward(batch)?.logits)
    }

    pub fn role_ranges(&self, batch: &FactBatch, n_entities: usize) -> Vec<Range<usize>> {
        batch
            .roles
            .iter()
            .map(|r| match r {
                Role::Entity => 0..n_entities,
                Role::Relation => n_entities..self.vocab_size(),
            })
            .collect()
    }

    pub fn forward(&self, batch: &FactBatch) -> Result<ForwardPass> {
        self.forward_with(batch, None)
    }

    /// Forward pass; `n_entities` enables role masking of the logits.
    pub fn forward_with(&self, batch: &FactBatch, n_entities: Option<usize>) -> Result<ForwardPass> {
        let mask_rows = batch.mask_rows()?;
        let x0 = self.input(batch)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        let (states, final_ln) = if self.config.lookup_only {
            (self.lookup_states(batch, &x0, &mask_rows), None)
        } else {
            let mut x = x0;
            for layer in &self.layers {
                let (next, cache) = self.layer_forward(layer, batch, x);
                x = next;
                layers.push(cache);
            }
            let norm = self.final_norm.as_ref().expect("attention encoder has a final norm");
            let (y, c) = norm.forward(&x);
            (y, Some(c))
        };

        let d = self.dim();
        let mut h = Array2::zeros((batch.batch_size, d));
        for (b, &r) in mask_rows.iter().enumerate() {
            h.row_mut(b).assign(&states.row(r));
        }
        let z = affine(&h, &self.head.w, &self.head.b);
        let g = z.mapv(gelu);
        let (u, ln) = self.head.norm.forward(&g);
        let mut logits = u.dot(&self.embedding.t()) + &self.head.token_bias;
        let n_entities = n_entities.unwrap_or(self.vocab_size());
        for (b, role) in batch.roles.iter().enumerate() {
            let keep = match role {
                Role::Entity => 0..n_entities,
                Role::Relation => n_entities..self.vocab_size(),
            };
            for (i, v) in logits.row_mut(b).iter_mut().enumerate() {
                if !keep.contains(&i) {
                    *v = f64::NEG_INFINITY;
                }
            }
        }
        Ok(ForwardPass {
            layers,
            final_ln,
            head: HeadCache { h, z, ln, u },
            mask_rows,
            logits,
            states,
        })
    }

    fn lookup_states(&self, batch: &FactBatch, x0: &Array2<f64>, mask_rows: &[usize]) -> Array2<f64> {
        let mut states = x0.clone();
        let l = batch.max_len;
        for (b, &mr) in mask_rows.iter().enumerate() {
            let n = batch.lens[b];
            let mut row = self.mask.clone();
            if n > 1 {
                for i in (0..n).map(|i| b * l + i).filter(|&r| r != mr) {
                    row.scaled_add(1.0 / (n - 1) as f64, &x0.row(i));
                }
            }
            states.row_mut(mr).assign(&row);
        }
        states
    }

    fn layer_forward(&self, p: &AttentionLayer, batch: &FactBatch, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
        let (a, ln1) = p.norm1.forward(&x);
        let q = affine(&a, &p.wq, &p.bq);
        let k = affine(&a, &p.wk, &p.bk);
        let v = affine(&a, &p.wv, &p.bv);
        let (o, alpha) = self.attention(p, batch, &q, &k, &v);
        let x2 = x + affine(&o, &p.wo, &p.bo);
        let (c, ln2) = p.norm2.forward(&x2);
        let z = affine(&c, &p.w1, &p.b1);
        let g = z.mapv(gelu);
        let x3 = x2 + affine(&g, &p.w2, &p.b2);
        (
            x3,
            LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                alpha,
                o,
                ln2,
                c,
                z,
                g,
            },
        )
    }

    fn attention(
        &self,
        p: &AttentionLayer,
        batch: &FactBatch,
        q: &Array2<f64>,
        k: &Array2<f64>,
        v: &Array2<f64>,
    ) -> (Array2<f64>, Vec<f64>) {
        let (bsz, l, d, nh) = (batch.batch_size, batch.max_len, self.dim(), self.config.n_heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qs, ks, vs) = (q.as_slice().unwrap(), k.as_slice().unwrap(), v.as_slice().unwrap());
        let (ek, ev) = (p.edge_key.as_slice().unwrap(), p.edge_value.as_slice().unwrap());
        let mut o = Array2::zeros((bsz * l, d));
        let os = o.as_slice_mut().unwrap();
        let mut alpha = vec![0.0; bsz * nh * l * l];
        let mut logits = vec![0.0; l];
        for b in 0..bsz {
            let n = batch.lens[b];
            for h in 0..nh {
                let off = h * dh;
                for i in 0..n {
                    let ri = (b * l + i) * d + off;
                    let qi = &qs[ri..ri + dh];
                    let mut max = f64::NEG_INFINITY;
                    for (j, lg) in logits.iter_mut().enumerate().take(n) {
                        let t = batch.edges[(b * l + i) * l + j] as usize;
                        let kj = &ks[(b * l + j) * d + off..][..dh];
                        let e = &ek[t * d + off..][..dh];
                        let s: f64 = qi.iter().zip(kj).zip(e).map(|((q, k), e)| q * (k + e)).sum();
                        *lg = s * scale;
                        max = max.max(*lg);
                    }
                    let a = &mut alpha[((b * nh + h) * l + i) * l..][..n];
                    let mut z = 0.0;
                    for j in 0..n {
                        a[j] = (logits[j] - max).exp();
                        z += a[j];
                    }
                    let out = &mut os[ri..ri + dh];
                    for j in 0..n {
                        a[j] /= z;
                        let t = batch.edges[(b * l + i) * l + j] as usize;
                        let vj = &vs[(b * l + j) * d + off..][..dh];
                        let e = &ev[t * d + off..][..dh];
                        for c in 0..dh {
                            out[c] += a[j] * (vj[c] + e[c]);
                        }
                    }
                }
            }
        }
        (o, alpha)
    }

    /// Loss on `batch` and gradients of every encoder parameter.
    pub fn loss_and_grad(&self, batch: &FactBatch, n_entities: usize, epsilon: f64) -> Result<(f64, Encoder)> {
        let pass = self.forward_with(batch, Some(n_entities))?;
        let ranges = self.role_ranges(batch, n_entities);
        let (loss, dlogits) = intra_view_loss_grad(&pass.logits, &batch.targets, &ranges, epsilon);
        let grads = self.backward(batch, &pass, &dlogits);
        Ok((loss, grads))
    }

    pub fn loss(&self, batch: &FactBatch, n_entities: usize, epsilon: f64) -> Result<f64> {
        let pass = self.forward_with(batch, Some(n_entities))?;
        let ranges = self.role_ranges(batch, n_entities);
        Ok(super::loss::intra_view_loss(
            &pass.logits,
            &batch.targets,
            &ranges,
            epsilon,
        ))
    }

    /// Backpropagates `dlogits` (zero outside each role range).
    pub fn backward(&self, batch: &FactBatch, pass: &ForwardPass, dlogits: &Array2<f64>) -> Encoder {
        let mut grad = zeros_like(self);
        let hc = &pass.head;

        grad.head.token_bias += &dlogits.sum_axis(Axis(0));
        grad.embedding += &dlogits.t().dot(&hc.u);
        let du = dlogits.dot(&self.embedding);
        let dg = self.head.norm.backward(&hc.ln, &du, &mut grad.head.norm);
        let dz = &dg * &hc.z.mapv(gelu_grad);
        let dh = affine_backward(&hc.h, &self.head.w, &dz, &mut grad.head.w, &mut grad.head.b);

        let mut dstates = Array2::zeros(pass.states.raw_dim());
        for (b, &r) in pass.mask_rows.iter().enumerate() {
            let mut row = dstates.row_mut(r);
            row += &dh.row(b);
        }

        let dx0 = if self.config.lookup_only {
            let mut dx0 = dstates.clone();
            let l = batch.max_len;
            for (b, &mr) in pass.mask_rows.iter().enumerate() {
                let n = batch.lens[b];
                let dm = dstates.row(mr).to_owned();
                dx0.row_mut(mr).fill(0.0);
                grad.mask += &dm;
                if n > 1 {
                    for i in (0..n).map(|i| b * l + i).filter(|&r| r != mr) {
                        dx0.row_mut(i).scaled_add(1.0 / (n - 1) as f64, &dm);
                    }
                }
            }
            dx0
        } else {
            let norm = self.final_norm.as_ref().unwrap();
            let mut dx = norm.backward(
                pass.final_ln.as_ref().unwrap(),
                &dstates,
                grad.final_norm.as_mut().unwrap(),
            );
            for (li, layer) in self.layers.iter().enumerate().rev() {
                dx = self.layer_backward(layer, batch, &pass.layers[li], dx, &mut grad.layers[li]);
            }
            dx
        };

        for (r, slot) in batch.slots.iter().enumerate() {
            match *slot {
                Slot::Token(t) => {
                    let mut row = grad.embedding.row_mut(t);
                    row += &dx0.row(r);
                }
                Slot::Mask => grad.mask += &dx0.row(r),
                Slot::Pad => {}
            }
        }
        grad
    }

    fn layer_backward(
        &self,
        p: &AttentionLayer,
        batch: &FactBatch,
        c: &LayerCache,
        dx3: Array2<f64>,
        g: &mut AttentionLayer,
    ) -> Array2<f64> {
        let dgl = affine_backward(&c.g, &p.w2, &dx3, &mut g.w2, &mut g.b2);
        let dz = dgl * c.z.mapv(gelu_grad);
        let dc = affine_backward(&c.c, &p.w1, &dz, &mut g.w1, &mut g.b1);
        let dx2 = dx3 + p.norm2.backward(&c.ln2, &dc, &mut g.norm2);

        let do_ = affine_backward(&c.o, &p.wo, &dx2, &mut g.wo, &mut g.bo);
        let (dq, dk, dv) = self.attention_backward(p, batch, c, &do_, g);
        let mut da = affine_backward(&c.a, &p.wq, &dq, &mut g.wq, &mut g.bq);
        da += &affine_backward(&c.a, &p.wk, &dk, &mut g.wk, &mut g.bk);
        da += &affine_backward(&c.a, &p.wv, &dv, &mut g.wv, &mut g.bv);
        dx2 + p.norm1.backward(&c.ln1, &da, &mut g.norm1)
    }

    fn attention_backward(
        &self,
        p: &AttentionLayer,
        batch: &FactBatch,
        c: &LayerCache,
        do_: &Array2<f64>,
        g: &mut AttentionLayer,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let (bsz, l, d, nh) = (batch.batch_size, batch.max_len, self.dim(), self.config.n_heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qs, ks, vs) = (
            c.q.as_slice().unwrap(),
            c.k.as_slice().unwrap(),
            c.v.as_slice().unwrap(),
        );
        let (ek, ev) = (p.edge_key.as_slice().unwrap(), p.edge_value.as_slice().unwrap());
        let dos = do_.as_slice().unwrap();
        let mut dq = Array2::zeros((bsz * l, d));
        let mut dk = Array2::zeros((bsz * l, d));
        let mut dv = Array2::zeros((bsz * l, d));
        let (dqs, dks, dvs) = (
            dq.as_slice_mut().unwrap(),
            dk.as_slice_mut().unwrap(),
            dv.as_slice_mut().unwrap(),
        );
        let dek = g.edge_key.as_slice_mut().unwrap();
        let dev = g.edge_value.as_slice_mut().unwrap();
        let mut dalpha = vec![0.0; l];
        for b in 0..bsz {
            let n = batch.lens[b];
            for h in 0..nh {
                let off = h * dh;
                for i in 0..n {
                    let ri = (b * l + i) * d + off;
                    let doi = &dos[ri..ri + dh];
                    if doi.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let a = &c.alpha[((b * nh + h) * l + i) * l..][..n];
                    let mut dot = 0.0;
                    for j in 0..n {
                        let t = batch.edges[(b * l + i) * l + j] as usize;
                        let rj = (b * l + j) * d + off;
                        let mut s = 0.0;
                        for c in 0..dh {
                            s += doi[c] * (vs[rj + c] + ev[t * d + off + c]);
                            dvs[rj + c] += a[j] * doi[c];
                            dev[t * d + off + c] += a[j] * doi[c];
                        }
                        dalpha[j] = s;
                        dot += a[j] * s;
                    }
                    for j in 0..n {
                        let ds = a[j] * (dalpha[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let t = batch.edges[(b * l + i) * l + j] as usize;
                        let rj = (b * l + j) * d + off;
                        for c in 0..dh {
                            dqs[ri + c] += ds * (ks[rj + c] + ek[t * d + off + c]);
                            dks[rj + c] += ds * qs[ri + c];
                            dek[t * d + off + c] += ds * qs[ri + c];
                        }
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}

/// `p = mlp_out · tableᵀ + bias`, with `-inf` outside each row's range.
pub fn project_logits(
    mlp_out: &Array2<f64>,
    table: &Array2<f64>,
    bias: &Array1<f64>,
    ranges: &[Range<usize>],
) -> Array2<f64> {
    let mut logits = mlp_out.dot(&table.t()) + bias;
    for (b, range) in ranges.iter().enumerate() {
        for (i, v) in logits.row_mut(b).iter_mut().enumerate() {
            if !range.contains(&i) {
                *v = f64::NEG_INFINITY;
            }
        }
    }
    logits
}

impl Encoder {
    /// Number of scalar parameters.
    pub fn n_params(&self) -> usize {
        crate::params::count(self)
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, _, x| ok &= x.iter().all(|v| v.is_finite()));
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::graph::{generate_masked_samples, FactGraph, MaskedSample};
    use crate::fact::{HyperFact, IdFact};
    use crate::params::gradient_errors;
    use crate::rng::seeded;
    use crate::vocab::{TokenTable, Vocabulary};

    fn vocab() -> Vocabulary {
        Vocabulary::new(
            TokenTable::from_tokens((0..7).map(|i| format!("e{i}"))).unwrap(),
            TokenTable::from_tokens((0..4).map(|i| format!("r{i}"))).unwrap(),
        )
    }

    fn facts() -> Vec<IdFact> {
        vec![
            HyperFact::triple(0, 0, 1),
            HyperFact::with_qualifiers(2, 1, 3, vec![(2, 4), (3, 5)]),
            HyperFact::with_qualifiers(6, 2, 0, vec![(1, 1)]),
        ]
    }

    fn samples(v: &Vocabulary) -> Vec<MaskedSample> {
        facts().iter().flat_map(|f| generate_masked_samples(f, v)).collect()
    }

    fn encoder(lookup_only: bool, seed: u64) -> Encoder {
        let mut cfg = EncoderConfig::new(8, 2, 2);
        cfg.lookup_only = lookup_only;
        let mut enc = Encoder::new(cfg, vocab().size(), &mut seeded(seed, 0));
        // Larger weights than the training init so every path carries signal.
        enc.visit_mut("", &mut |_, _, x| {
            for (i, v) in x.iter_mut().enumerate() {
                *v += 0.3 * ((i as f64 * 0.7 + seed as f64).sin());
            }
        });
        enc
    }

    #[test]
    fn output_shapes() {
        let v = vocab();
        let batch = FactBatch::from_samples(&samples(&v));
        let enc = encoder(false, 1);
        let states = enc.encode(&batch).unwrap();
        assert_eq!(states.shape(), &[batch.batch_size, 7, 8]);
        let logits = enc.forward_with(&batch, Some(v.n_entities())).unwrap().logits;
        assert_eq!(logits.shape(), &[batch.batch_size, v.size()]);
        for (b, role) in batch.roles.iter().enumerate() {
            let range = v.role_range(*role);
            for i in 0..v.size() {
                assert_eq!(range.contains(&i), logits[[b, i]].is_finite());
            }
        }
    }

    #[test]
    fn padding_does_not_change_states() {
        let v = vocab();
        let s = samples(&v);
        let enc = encoder(false, 2);
        let tight = FactBatch::from_samples(&s[..3]);
        let padded = FactBatch::with_max_len(&s[..3], 9);
        let a = enc.encode(&tight).unwrap();
        let b = enc.encode(&padded).unwrap();
        for bi in 0..3 {
            for i in 0..3 {
                for c in 0..8 {
                    assert!((a[[bi, i, c]] - b[[bi, i, c]]).abs() < 1e-12);
                }
            }
        }
        let la = enc.predict_masked(&tight).unwrap();
        let lb = enc.predict_masked(&padded).unwrap();
        assert!(la.iter().zip(lb.iter()).all(|(x, y)| x == y || (x - y).abs() < 1e-12));
    }

    #[test]
    fn qualifier_order_is_irrelevant() {
        let v = vocab();
        let enc = encoder(false, 3);
        let f = HyperFact::with_qualifiers(2, 1, 3, vec![(2, 4), (3, 5)]);
        let g = HyperFact::with_qualifiers(2, 1, 3, vec![(3, 5), (2, 4)]);
        for (pf, pg) in [(0, 0), (1, 1), (2, 2), (3, 5), (4, 6), (5, 3), (6, 4)] {
            let a = FactBatch::from_samples(&[MaskedSample::new(FactGraph::from_fact(&f, &v), pf)]);
            let b = FactBatch::from_samples(&[MaskedSample::new(FactGraph::from_fact(&g, &v), pg)]);
            let la = enc.predict_masked(&a).unwrap();
            let lb = enc.predict_masked(&b).unwrap();
            assert!((la - lb).iter().all(|x| !x.is_finite() || x.abs() < 1e-12));
        }
    }

    #[test]
    fn samples_are_independent_within_a_batch() {
        let v = vocab();
        let s = samples(&v);
        let enc = encoder(false, 4);
        let all = enc.predict_masked(&FactBatch::from_samples(&s)).unwrap();
        for (b, sample) in s.iter().enumerate() {
            let one = enc
                .predict_masked(&FactBatch::with_max_len(std::slice::from_ref(sample), 7))
                .unwrap();
            for i in 0..v.size() {
                let (x, y) = (all[[b, i]], one[[0, i]]);
                assert!(x == y || (x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_mlp_projects_onto_table() {
        let table = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let u = Array2::from_shape_vec((1, 2), vec![0.5, -1.0]).unwrap();
        let bias = Array1::from(vec![0.0, 0.1, 0.0]);
        let logits = project_logits(&u, &table, &bias, &[0..2]);
        assert_eq!(logits[[0, 0]], 0.5);
        assert!((logits[[0, 1]] + 0.9).abs() < 1e-12);
        assert_eq!(logits[[0, 2]], f64::NEG_INFINITY);
    }

    fn check_gradients(lookup_only: bool) {
        let v = vocab();
        let batch = FactBatch::from_samples(&samples(&v));
        for seed in 0..2 {
            let enc = encoder(lookup_only, seed);
            let (_, grad) = enc.loss_and_grad(&batch, v.n_entities(), 0.1).unwrap();
            let errs = gradient_errors(&enc, &grad, 1e-5, &|e: &Encoder| {
                e.loss(&batch, v.n_entities(), 0.1).unwrap()
            });
            for (name, err) in errs {
                assert!(err < 1e-4, "{name}: {err}");
            }
        }
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        check_gradients(false);
    }

    #[test]
    fn lookup_gradients_match_finite_differences() {
        check_gradients(true);
    }

    #[test]
    fn bad_token_is_reported() {
        let v = vocab();
        let mut batch = FactBatch::from_samples(&samples(&v)[..1]);
        batch.slots[1] = Slot::Token(99);
        assert!(matches!(
            encoder(false, 0).forward(&batch),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
