use rand::Rng;

use super::attention::{xavier, AttentionParams};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug)]
pub(crate) struct LayerNormParams {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNormParams {
    fn new<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, d: usize) -> Self {
        Self {
            gamma: store.insert(format!("{prefix}.gamma"), Tensor::full(&[d], T::one())),
            beta: store.insert(format!("{prefix}.beta"), Tensor::zeros(&[d])),
        }
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, eps: T) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta, eps)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl FeedForward {
    fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, prefix: &str, d: usize, f: usize, rng: &mut R) -> Self {
        Self {
            w1: store.insert(format!("{prefix}.w1"), xavier(d, f, rng)),
            b1: store.insert(format!("{prefix}.b1"), Tensor::zeros(&[f])),
            w2: store.insert(format!("{prefix}.w2"), xavier(f, d, rng)),
            b2: store.insert(format!("{prefix}.b2"), Tensor::zeros(&[d])),
        }
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w1 = g.param(store, self.w1);
        let b1 = g.param(store, self.b1);
        let w2 = g.param(store, self.w2);
        let b2 = g.param(store, self.b2);
        let h = g.matmul(x, w1)?;
        let h = g.add_row(h, b1)?;
        let h = g.relu(h);
        let o = g.matmul(h, w2)?;
        g.add_row(o, b2)
    }
}

pub(crate) fn layer_norm_count(d: usize) -> usize {
    2 * d
}

pub(crate) fn feedforward_count(d: usize, f: usize) -> usize {
    2 * d * f + f + d
}

/// Self-attention and memory attention summed into one residual, then a
/// feed-forward sublayer; both post-norm.
#[derive(Clone, Debug)]
pub(crate) struct EncoderBlock {
    self_attn: AttentionParams,
    memory_attn: Option<AttentionParams>,
    norm1: LayerNormParams,
    ff: FeedForward,
    norm2: LayerNormParams,
}

impl EncoderBlock {
    pub(crate) fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        d: usize,
        heads: usize,
        ff: usize,
        memory_branch: bool,
        rng: &mut R,
    ) -> Self {
        Self {
            self_attn: AttentionParams::new(store, &format!("{prefix}.self_attn"), d, heads, rng),
            memory_attn: memory_branch
                .then(|| AttentionParams::new(store, &format!("{prefix}.memory_attn"), d, heads, rng)),
            norm1: LayerNormParams::new(store, &format!("{prefix}.norm1"), d),
            ff: FeedForward::new(store, &format!("{prefix}.ff"), d, ff, rng),
            norm2: LayerNormParams::new(store, &format!("{prefix}.norm2"), d),
        }
    }

    pub(crate) fn parameter_count(d: usize, f: usize, memory_branch: bool) -> usize {
        let attn = AttentionParams::parameter_count(d);
        attn * if memory_branch { 2 } else { 1 } + 2 * layer_norm_count(d) + feedforward_count(d, f)
    }

    /// `memory == None` means an empty memory: the memory term is skipped and
    /// contributes exactly nothing.
    pub(crate) fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        memory: Option<Var>,
        eps: T,
    ) -> Result<Var> {
        let attn = self.self_attn.forward(g, store, x, x, x, None)?;
        let mut residual = g.add(x, attn)?;
        if let (Some(mem), Some(mem_attn)) = (memory, &self.memory_attn) {
            let m = mem_attn.forward(g, store, x, mem, mem, None)?;
            residual = g.add(residual, m)?;
        }
        let h = self.norm1.forward(g, store, residual, eps)?;
        let f = self.ff.forward(g, store, h)?;
        let r2 = g.add(h, f)?;
        self.norm2.forward(g, store, r2, eps)
    }
}

/// Masked self-attention; cross-attention over the encoder output summed with
/// memory attention; feed-forward. Post-norm after each residual.
#[derive(Clone, Debug)]
pub(crate) struct DecoderBlock {
    self_attn: AttentionParams,
    cross_attn: AttentionParams,
    memory_attn: Option<AttentionParams>,
    norm1: LayerNormParams,
    norm2: LayerNormParams,
    ff: FeedForward,
    norm3: LayerNormParams,
}

impl DecoderBlock {
    pub(crate) fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        d: usize,
        heads: usize,
        ff: usize,
        memory_branch: bool,
        rng: &mut R,
    ) -> Self {
        Self {
            self_attn: AttentionParams::new(store, &format!("{prefix}.self_attn"), d, heads, rng),
            cross_attn: AttentionParams::new(store, &format!("{prefix}.cross_attn"), d, heads, rng),
            memory_attn: memory_branch
                .then(|| AttentionParams::new(store, &format!("{prefix}.memory_attn"), d, heads, rng)),
            norm1: LayerNormParams::new(store, &format!("{prefix}.norm1"), d),
            norm2: LayerNormParams::new(store, &format!("{prefix}.norm2"), d),
            ff: FeedForward::new(store, &format!("{prefix}.ff"), d, ff, rng),
            norm3: LayerNormParams::new(store, &format!("{prefix}.norm3"), d),
        }
    }

    pub(crate) fn parameter_count(d: usize, f: usize, memory_branch: bool) -> usize {
        let attn = AttentionParams::parameter_count(d);
        attn * if memory_branch { 3 } else { 2 } + 3 * layer_norm_count(d) + feedforward_count(d, f)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        y: Var,
        causal: &[bool],
        encoder_out: Var,
        memory: Option<Var>,
        eps: T,
    ) -> Result<Var> {
        let sa = self.self_attn.forward(g, store, y, y, y, Some(causal))?;
        let r1 = g.add(y, sa)?;
        let h1 = self.norm1.forward(g, store, r1, eps)?;
        let ca = self.cross_attn.forward(g, store, h1, encoder_out, encoder_out, None)?;
        let mut r2 = g.add(h1, ca)?;
        if let (Some(mem), Some(mem_attn)) = (memory, &self.memory_attn) {
            let m = mem_attn.forward(g, store, h1, mem, mem, None)?;
            r2 = g.add(r2, m)?;
        }
        let h2 = self.norm2.forward(g, store, r2, eps)?;
        let f = self.ff.forward(g, store, h2)?;
        let r3 = g.add(h2, f)?;
        self.norm3.forward(g, store, r3, eps)
    }
}
