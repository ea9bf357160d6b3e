use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Parameterized, Tensor, Var};
use crate::transformer::{embedding_init, sinusoidal_positions, Checkpoint, EncoderBlock, ModelConfig};

/// Largest deviation from 1 tolerated in a row of a fake distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// Expected embedding of each row of a `T×V` distribution under a `V×d`
/// table.
pub fn soft_embed<T: Scalar>(g: &mut Graph<T>, distributions: Var, table: Var) -> Result<Var> {
    let (_, v) = g.value(distributions).dims2()?;
    for (row, chunk) in g.value(distributions).values().chunks(v).enumerate() {
        let sum = chunk.iter().copied().sum::<T>().to_f64().unwrap_or(f64::NAN);
        if !((sum - 1.0).abs() <= DISTRIBUTION_TOLERANCE) {
            return Err(Error::Distribution { row, sum });
        }
    }
    g.matmul(distributions, table)
}

/// How a sequence reaches the discriminator.
#[derive(Clone, Copy, Debug)]
pub enum DiscriminatorInput<'a> {
    /// Real tokens, embedded by lookup.
    Tokens(&'a [usize]),
    /// Generator output distributions (`T×V`), embedded by [`soft_embed`].
    Distributions(Var),
}

/// Memory-augmented encoder, mean-pooled, then an affine map and a sigmoid.
#[derive(Clone, Debug)]
pub struct Discriminator<T: Scalar> {
    config: ModelConfig,
    params: ParamStore<T>,
    embedding: ParamId,
    encoder: Vec<EncoderBlock>,
    head: ParamId,
    head_bias: ParamId,
    positions: Tensor<T>,
}

impl<T: Scalar> Parameterized<T> for Discriminator<T> {
    fn params(&self) -> &ParamStore<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }
}

impl<T: Scalar> Discriminator<T> {
    /// Uses `vocab_size`, `d_model`, `num_heads`, `num_layers`, the length
    /// caps, `feedforward_dim` and `memory_branch` of the config. Memory
    /// tokens always share the token table.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (v, d, h, f) = (config.vocab_size, config.d_model, config.num_heads, config.ff_dim());
        let embedding = params.insert("embedding", embedding_init(v, d, &mut rng));
        let encoder = (0..config.num_layers)
            .map(|l| EncoderBlock::new(&mut params, &format!("encoder.{l}"), d, h, f, config.memory_branch, &mut rng))
            .collect();
        let limit = (6.0 / (d + 1) as f64).sqrt();
        let head = params.insert("head", Tensor::uniform(&[d, 1], limit, &mut rng));
        let head_bias = params.insert("head_bias", Tensor::zeros(&[1]));
        let positions = sinusoidal_positions(config.max_seq_len.max(1), d);
        Ok(Self {
            config,
            params,
            embedding,
            encoder,
            head,
            head_bias,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Zeroes the final affine map, making every score exactly 0.5.
    pub fn zero_head(&mut self) {
        for id in [self.head, self.head_bias] {
            self.params.get_mut(id).values_mut().iter_mut().for_each(|v| *v = T::zero());
        }
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

    /// Probability (a `1×1` node) that the sequence is real.
    pub fn score_graph(&self, g: &mut Graph<T>, input: DiscriminatorInput<'_>, memory_ids: &[usize]) -> Result<Var> {
        let table = g.param(&self.params, self.embedding);
        let x = match input {
            DiscriminatorInput::Tokens(ids) => {
                if ids.is_empty() {
                    return Err(Error::Length("discriminator input is empty".into()));
                }
                self.check_ids(ids)?;
                g.embedding(table, ids)?
            }
            DiscriminatorInput::Distributions(d) => {
                let (t, v) = g.value(d).dims2()?;
                if t == 0 {
                    return Err(Error::Length("discriminator input is empty".into()));
                }
                if v != self.config.vocab_size {
                    return Err(Error::Dimension {
                        op: "discriminator",
                        lhs: vec![t, v],
                        rhs: vec![self.config.vocab_size],
                    });
                }
                soft_embed(g, d, table)?
            }
        };
        let (t, d) = g.value(x).dims2()?;
        if t > self.config.max_seq_len {
            return Err(Error::Length(format!(
                "discriminator input length {t} exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }
        if memory_ids.len() > self.config.max_memory_len {
            return Err(Error::Length("memory exceeds max_memory_len".into()));
        }
        self.check_ids(memory_ids)?;
        let pe = g.constant(Tensor::new(vec![t, d], self.positions.values()[..t * d].to_vec())?);
        let mut h = g.add(x, pe)?;
        let memory = if memory_ids.is_empty() || !self.config.memory_branch {
            None
        } else {
            Some(g.embedding(table, memory_ids)?)
        };
        let eps = T::of(self.config.layer_norm_eps);
        for block in &self.encoder {
            h = block.forward(g, &self.params, h, memory, eps)?;
        }
        let pooled = g.mean_rows(h)?;
        let w = g.param(&self.params, self.head);
        let b = g.param(&self.params, self.head_bias);
        let logit = g.matmul(pooled, w)?;
        let logit = g.add_row(logit, b)?;
        Ok(g.sigmoid(logit))
    }

    /// Score of a token sequence.
    pub fn score(&self, ids: &[usize], memory_ids: &[usize]) -> Result<T> {
        let mut g = Graph::new();
        let s = self.score_graph(&mut g, DiscriminatorInput::Tokens(ids), memory_ids)?;
        g.value(s).values().first().copied().ok_or_else(|| Error::Shape("empty score".into()))
    }

    /// Score of a `T×V` distribution sequence.
    pub fn score_distributions(&self, distributions: &Tensor<T>, memory_ids: &[usize]) -> Result<T> {
        let mut g = Graph::new();
        let d = g.constant(distributions.clone());
        let s = self.score_graph(&mut g, DiscriminatorInput::Distributions(d), memory_ids)?;
        g.value(s).values().first().copied().ok_or_else(|| Error::Shape("empty score".into()))
    }

    pub fn to_checkpoint(&self, vocabulary: Vec<String>) -> Checkpoint {
        Checkpoint::capture("discriminator", &self.config, vocabulary, self)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != "discriminator" {
            return Err(Error::Compatibility(format!(
                "expected a discriminator checkpoint, found `{}`",
                ckpt.kind
            )));
        }
        let mut model = Self::new(ckpt.config.clone(), 0)?;
        model.params.load_records(&ckpt.parameters)?;
        Ok(model)
    }
}
