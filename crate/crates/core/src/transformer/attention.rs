use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

pub(crate) fn xavier<T: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(&[rows, cols], limit, rng)
}

/// Projection weights of one multi-head attention layer.
///
/// Query/key/value projections carry no bias; the output projection does.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub(crate) query: ParamId,
    pub(crate) key: ParamId,
    pub(crate) value: ParamId,
    pub(crate) output: ParamId,
    pub(crate) output_bias: ParamId,
    pub(crate) num_heads: usize,
}

/// Attention output plus the per-head weight matrices (`Tq×Tk` each).
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl AttentionParams {
    pub(crate) fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        d_model: usize,
        num_heads: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            query: store.insert(format!("{prefix}.query"), xavier(d_model, d_model, rng)),
            key: store.insert(format!("{prefix}.key"), xavier(d_model, d_model, rng)),
            value: store.insert(format!("{prefix}.value"), xavier(d_model, d_model, rng)),
            output: store.insert(format!("{prefix}.output"), xavier(d_model, d_model, rng)),
            output_bias: store.insert(format!("{prefix}.output_bias"), Tensor::zeros(&[d_model])),
            num_heads,
        }
    }

    pub(crate) fn parameter_count(d_model: usize) -> usize {
        4 * d_model * d_model + d_model
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        query: Var,
        key: Var,
        value: Var,
        visible: Option<&[bool]>,
    ) -> Result<Var> {
        Ok(self.forward_with_weights(g, store, query, key, value, visible)?.output)
    }

    /// Scaled dot-product attention per head, heads concatenated and
    /// projected. `visible[i*Tk + j] == false` hides key `j` from query `i`.
    pub fn forward_with_weights<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        query: Var,
        key: Var,
        value: Var,
        visible: Option<&[bool]>,
    ) -> Result<AttentionOutput> {
        let (tq, d) = g.value(query).dims2()?;
        let (tk, dk) = g.value(key).dims2()?;
        let (tv, dv) = g.value(value).dims2()?;
        if dk != d || dv != d || tv != tk {
            return Err(Error::Dimension {
                op: "multi_head_attention",
                lhs: vec![tq, d],
                rhs: vec![tk, dk],
            });
        }
        if let Some(mask) = visible {
            if mask.len() != tq * tk {
                return Err(Error::Dimension {
                    op: "attention mask",
                    lhs: vec![tq, tk],
                    rhs: vec![mask.len()],
                });
            }
        }
        let head_dim = d / self.num_heads;
        let scale = T::one() / T::of(head_dim as f64).sqrt();

        let wq = g.param(store, self.query);
        let wk = g.param(store, self.key);
        let wv = g.param(store, self.value);
        let wo = g.param(store, self.output);
        let bo = g.param(store, self.output_bias);
        let q = g.matmul(query, wq)?;
        let k = g.matmul(key, wk)?;
        let v = g.matmul(value, wv)?;

        let mut heads = Vec::with_capacity(self.num_heads);
        let mut weights = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let start = h * head_dim;
            let qh = g.slice_cols(q, start, head_dim)?;
            let kh = g.slice_cols(k, start, head_dim)?;
            let vh = g.slice_cols(v, start, head_dim)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let w = match visible {
                Some(mask) => g.masked_softmax(scores, mask)?,
                None => g.softmax(scores, 1)?,
            };
            heads.push(g.matmul(w, vh)?);
            weights.push(w);
        }
        let concat = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        let projected = g.matmul(concat, wo)?;
        let output = g.add_row(projected, bo)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// Lower-triangular visibility pattern for a length-`t` causal self-attention.
pub fn causal_mask(t: usize) -> Vec<bool> {
    (0..t * t).map(|k| k % t <= k / t).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize, heads: usize) -> (ParamStore<f64>, AttentionParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = AttentionParams::new(&mut store, "attn", d, heads, &mut rng);
        (store, p)
    }

    #[test]
    fn equal_scores_average_the_values() {
        let (mut store, p) = setup(4, 2);
        *store.get_mut(p.query) = Tensor::zeros(&[4, 4]).with_requires_grad();
        *store.get_mut(p.value) = Tensor::eye(4).with_requires_grad();
        *store.get_mut(p.output) = Tensor::eye(4).with_requires_grad();
        let mut g = Graph::new();
        let q = g.constant(Tensor::uniform(&[2, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(1)));
        let kv = g.constant(
            Tensor::from_rows(&[
                vec![1.0, 2.0, 3.0, 4.0],
                vec![-1.0, 0.0, 5.0, 2.0],
                vec![0.0, 4.0, 1.0, 0.0],
            ])
            .unwrap(),
        );
        let out = p.forward(&mut g, &store, q, kv, kv, None).unwrap();
        let expected = [0.0, 2.0, 3.0, 2.0];
        for row in 0..2 {
            for (j, e) in expected.iter().enumerate() {
                assert!((g.value(out).get(&[row, j]) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_key_gets_all_weight() {
        let (store, p) = setup(4, 2);
        let mut g = Graph::new();
        let q = g.constant(Tensor::uniform(&[3, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(2)));
        let kv = g.constant(Tensor::uniform(&[1, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(3)));
        let out = p.forward_with_weights(&mut g, &store, q, kv, kv, None).unwrap();
        for w in out.weights {
            assert!(g.value(w).values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn causal_mask_zeroes_future_positions() {
        let (store, p) = setup(4, 2);
        let mut g = Graph::new();
        let x = g.constant(Tensor::uniform(&[3, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(4)));
        let mask = causal_mask(3);
        let out = p.forward_with_weights(&mut g, &store, x, x, x, Some(&mask)).unwrap();
        for w in &out.weights {
            let t = g.value(*w);
            assert_eq!(t.get(&[0, 1]), 0.0);
            assert_eq!(t.get(&[0, 2]), 0.0);
            assert_eq!(t.get(&[1, 2]), 0.0);
            for r in 0..3 {
                let s: f64 = t.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mask_hiding_a_whole_row_fails() {
        let (store, p) = setup(4, 1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::uniform(&[2, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(5)));
        let mask = [true, true, false, false];
        assert!(matches!(
            p.forward(&mut g, &store, x, x, x, Some(&mask)),
            Err(Error::Masking { row: 1 })
        ));
    }
}
