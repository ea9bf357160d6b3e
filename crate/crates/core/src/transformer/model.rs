use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::xavier;
use super::config::ModelConfig;
use super::layers::{DecoderBlock, EncoderBlock};
use super::causal_mask;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Parameterized, Tensor, Var};

/// Sinusoidal position table, `len × d`.
pub(crate) fn sinusoidal_positions<T: Scalar>(len: usize, d: usize) -> Tensor<T> {
    let mut values = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * rate;
            values.push(T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![len, d], values).expect("positive extents")
}

pub(crate) fn embedding_init<T: Scalar>(vocab: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::uniform(&[vocab, d], 3f64.sqrt(), rng)
}

/// Encoder-decoder Transformer whose blocks carry an extra attention layer
/// over an external memory sequence.
#[derive(Clone, Debug)]
pub struct MemoryAugmentedTransformer<T: Scalar> {
    config: ModelConfig,
    params: ParamStore<T>,
    embedding: ParamId,
    memory_embedding: Option<ParamId>,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    output: ParamId,
    output_bias: ParamId,
    positions: Tensor<T>,
}

impl<T: Scalar> Parameterized<T> for MemoryAugmentedTransformer<T> {
    fn params(&self) -> &ParamStore<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }
}

impl<T: Scalar> MemoryAugmentedTransformer<T> {
    /// Builds a randomly initialised model; identical `(config, seed)` give
    /// identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (v, d, h, f) = (config.vocab_size, config.d_model, config.num_heads, config.ff_dim());
        let embedding = params.insert("embedding", embedding_init(v, d, &mut rng));
        let memory_embedding = (config.memory_branch && !config.shared_memory_embedding)
            .then(|| params.insert("memory_embedding", embedding_init(v, d, &mut rng)));
        let encoder = (0..config.num_layers)
            .map(|l| EncoderBlock::new(&mut params, &format!("encoder.{l}"), d, h, f, config.memory_branch, &mut rng))
            .collect();
        let decoder = (0..config.num_layers)
            .map(|l| DecoderBlock::new(&mut params, &format!("decoder.{l}"), d, h, f, config.memory_branch, &mut rng))
            .collect();
        let output = params.insert("output", xavier(d, v, &mut rng));
        let output_bias = params.insert("output_bias", Tensor::zeros(&[v]));
        let positions = sinusoidal_positions(config.max_seq_len.max(config.max_memory_len).max(1), d);
        Ok(Self {
            config,
            params,
            embedding,
            memory_embedding,
            encoder,
            decoder,
            output,
            output_bias,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// The same model with the memory-attention sublayers removed; every
    /// remaining tensor is copied by name.
    pub fn without_memory_branch(&self) -> Result<Self> {
        let config = ModelConfig {
            memory_branch: false,
            ..self.config.clone()
        };
        let mut out = Self::new(config, 0)?;
        for (name, t) in self.params.iter() {
            if let Some(slot) = out.params.by_name_mut(name) {
                *slot = t.clone();
            }
        }
        Ok(out)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Closed-form parameter count for a configuration.
    pub fn parameter_count(config: &ModelConfig) -> usize {
        let (v, d, f, l) = (config.vocab_size, config.d_model, config.ff_dim(), config.num_layers);
        let mem = config.memory_branch;
        let tables = if mem && !config.shared_memory_embedding { 2 } else { 1 };
        tables * v * d
            + l * EncoderBlock::parameter_count(d, f, mem)
            + l * DecoderBlock::parameter_count(d, f, mem)
            + d * v
            + v
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.config.vocab_size) {
            Some(&id) => Err(Error::Vocabulary {
                id,
                vocab_size: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn check_lengths(&self, input_ids: &[usize], memory_ids: &[usize]) -> Result<()> {
        if input_ids.is_empty() {
            return Err(Error::Length("input sequence is empty".into()));
        }
        if input_ids.len() > self.config.max_seq_len {
            return Err(Error::Length(format!(
                "input length {} exceeds max_seq_len {}",
                input_ids.len(),
                self.config.max_seq_len
            )));
        }
        if memory_ids.len() > self.config.max_memory_len {
            return Err(Error::Length(format!(
                "memory length {} exceeds max_memory_len {}",
                memory_ids.len(),
                self.config.max_memory_len
            )));
        }
        self.check_ids(input_ids)?;
        self.check_ids(memory_ids)
    }

    /// Adds positional encodings to an already-embedded `T×d` sequence.
    pub(crate) fn add_positions(&self, g: &mut Graph<T>, embedded: Var) -> Result<Var> {
        let (t, d) = g.value(embedded).dims2()?;
        if t > self.positions.shape()[0] {
            return Err(Error::Length(format!("sequence length {t} exceeds position table")));
        }
        let pe = Tensor::new(vec![t, d], self.positions.values()[..t * d].to_vec())?;
        let pe = g.constant(pe);
        g.add(embedded, pe)
    }

    fn embed_tokens(&self, g: &mut Graph<T>, ids: &[usize]) -> Result<Var> {
        let table = g.param(&self.params, self.embedding);
        let e = g.embedding(table, ids)?;
        self.add_positions(g, e)
    }

    /// Embeds memory tokens without positions. Empty memory, or a model
    /// without the memory branch, yields `None`.
    pub fn embed_memory(&self, g: &mut Graph<T>, memory_ids: &[usize]) -> Result<Option<Var>> {
        if memory_ids.is_empty() || !self.config.memory_branch {
            return Ok(None);
        }
        let table = g.param(&self.params, self.memory_embedding.unwrap_or(self.embedding));
        Ok(Some(g.embedding(table, memory_ids)?))
    }

    /// Runs the encoder stack on an embedded, position-encoded sequence.
    pub(crate) fn encode_embedded(&self, g: &mut Graph<T>, x: Var, memory: Option<Var>) -> Result<Var> {
        let eps = T::of(self.config.layer_norm_eps);
        let mut h = x;
        for block in &self.encoder {
            h = block.forward(g, &self.params, h, memory, eps)?;
        }
        Ok(h)
    }

    pub fn encode_graph(&self, g: &mut Graph<T>, input_ids: &[usize], memory: Option<Var>) -> Result<Var> {
        let x = self.embed_tokens(g, input_ids)?;
        self.encode_embedded(g, x, memory)
    }

    /// Decoder logits (`T×V`) for a target prefix that starts with `bos`.
    pub fn decode_graph(
        &self,
        g: &mut Graph<T>,
        prefix_ids: &[usize],
        encoder_out: Var,
        memory: Option<Var>,
    ) -> Result<Var> {
        if prefix_ids.first() != Some(&self.config.bos_id) {
            return Err(Error::Protocol("decoder prefix must start with bos".into()));
        }
        if prefix_ids.len() > self.config.max_seq_len {
            return Err(Error::Length(format!(
                "decoder prefix length {} exceeds max_seq_len {}",
                prefix_ids.len(),
                self.config.max_seq_len
            )));
        }
        self.check_ids(prefix_ids)?;
        let eps = T::of(self.config.layer_norm_eps);
        let causal = causal_mask(prefix_ids.len());
        let mut h = self.embed_tokens(g, prefix_ids)?;
        for block in &self.decoder {
            h = block.forward(g, &self.params, h, &causal, encoder_out, memory, eps)?;
        }
        let w = g.param(&self.params, self.output);
        let b = g.param(&self.params, self.output_bias);
        let logits = g.matmul(h, w)?;
        g.add_row(logits, b)
    }

    /// Teacher-forced logits for one `(input, memory, target prefix)` triple.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        input_ids: &[usize],
        memory_ids: &[usize],
        prefix_ids: &[usize],
    ) -> Result<Var> {
        self.check_lengths(input_ids, memory_ids)?;
        let memory = self.embed_memory(g, memory_ids)?;
        let enc = self.encode_graph(g, input_ids, memory)?;
        self.decode_graph(g, prefix_ids, enc, memory)
    }

    /// Encoder output for an input sequence and (possibly empty) memory.
    pub fn encode(&self, input_ids: &[usize], memory_ids: &[usize]) -> Result<Tensor<T>> {
        self.check_lengths(input_ids, memory_ids)?;
        let mut g = Graph::new();
        let memory = self.embed_memory(&mut g, memory_ids)?;
        let out = self.encode_graph(&mut g, input_ids, memory)?;
        Ok(g.value(out).clone())
    }

    /// Decoder logits given a precomputed encoder output.
    pub fn decode(&self, prefix_ids: &[usize], encoder_out: &Tensor<T>, memory_ids: &[usize]) -> Result<Tensor<T>> {
        let (_, d) = encoder_out.dims2()?;
        if d != self.config.d_model {
            return Err(Error::Dimension {
                op: "decode",
                lhs: encoder_out.shape().to_vec(),
                rhs: vec![self.config.d_model],
            });
        }
        if memory_ids.len() > self.config.max_memory_len {
            return Err(Error::Length("memory exceeds max_memory_len".into()));
        }
        self.check_ids(memory_ids)?;
        let mut g = Graph::new();
        let memory = self.embed_memory(&mut g, memory_ids)?;
        let enc = g.constant(encoder_out.clone());
        let logits = self.decode_graph(&mut g, prefix_ids, enc, memory)?;
        Ok(g.value(logits).clone())
    }

    /// Greedy decoding from `bos` until `eos` or `max_len` tokens. The result
    /// excludes `bos` and `eos`. Invalid inputs produce an empty sequence.
    pub fn generate(&self, input_ids: &[usize], memory_ids: &[usize], max_len: usize) -> Vec<usize> {
        self.try_generate(input_ids, memory_ids, max_len).unwrap_or_default()
    }

    pub fn try_generate(&self, input_ids: &[usize], memory_ids: &[usize], max_len: usize) -> Result<Vec<usize>> {
        self.check_lengths(input_ids, memory_ids)?;
        let max_len = max_len.min(self.config.max_seq_len);
        let mut g = Graph::new();
        let memory = self.embed_memory(&mut g, memory_ids)?;
        let enc = self.encode_graph(&mut g, input_ids, memory)?;
        let mut prefix = vec![self.config.bos_id];
        let mut out = Vec::new();
        while out.len() < max_len {
            let logits = self.decode_graph(&mut g, &prefix, enc, memory)?;
            let t = g.value(logits);
            let last = t.row(prefix.len() - 1);
            let next = argmax(last);
            if next == self.config.eos_id {
                break;
            }
            out.push(next);
            prefix.push(next);
        }
        Ok(out)
    }
}

/// Index of the first maximal entry.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
