use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finite_difference_check, GradCheckReport, Graph, ParamStore, Tensor, Var};
use crate::error::Result;

pub type CaseFn = Box<dyn Fn(&ParamStore<f64>, &mut Graph<f64>) -> Result<Var>>;

/// A named scalar function of a small parameter store, used to check one
/// gradient rule against finite differences.
pub struct PrimitiveCase {
    pub name: String,
    pub store: ParamStore<f64>,
    pub f: CaseFn,
}

impl PrimitiveCase {
    pub fn new(name: impl Into<String>, store: ParamStore<f64>, f: CaseFn) -> Self {
        Self {
            name: name.into(),
            store,
            f,
        }
    }

    pub fn check(&mut self, eps: f64) -> Result<GradCheckReport> {
        let Self { store, f, .. } = self;
        finite_difference_check(store, eps, |s, g| f(s, g))
    }
}

struct Builder {
    rng: ChaCha8Rng,
}

impl Builder {
    fn values(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.rng.gen_range(lo..hi)).collect()
    }

    fn tensor(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), self.values(n, lo, hi)).expect("shape matches")
    }

    /// Values in ±[0.2, 1], clear of the relu kink.
    fn away_from_zero(&mut self, shape: &[usize]) -> Tensor<f64> {
        let mut t = self.tensor(shape, 0.2, 1.0);
        for v in t.values_mut() {
            if self.rng.gen_bool(0.5) {
                *v = -*v;
            }
        }
        t
    }
}

/// Contracts `out` with fixed weights so every output coordinate reaches
/// the loss with a different coefficient.
fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = g.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product::<usize>().max(1);
    let w = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let w = g.constant(w);
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn unary(
    b: &mut Builder,
    name: &str,
    x: Tensor<f64>,
    op: impl Fn(&mut Graph<f64>, Var) -> Result<Var> + 'static,
) -> PrimitiveCase {
    let seed = b.rng.gen();
    let mut store = ParamStore::new();
    let id = store.insert("x", x);
    PrimitiveCase::new(
        name,
        store,
        Box::new(move |s, g| {
            let x = g.param(s, id);
            let y = op(g, x)?;
            project(g, y, seed)
        }),
    )
}

fn binary(
    b: &mut Builder,
    name: &str,
    x: Tensor<f64>,
    y: Tensor<f64>,
    op: impl Fn(&mut Graph<f64>, Var, Var) -> Result<Var> + 'static,
) -> PrimitiveCase {
    let seed = b.rng.gen();
    let mut store = ParamStore::new();
    let a = store.insert("a", x);
    let c = store.insert("b", y);
    PrimitiveCase::new(
        name,
        store,
        Box::new(move |s, g| {
            let (a, c) = (g.param(s, a), g.param(s, c));
            let out = op(g, a, c)?;
            project(g, out, seed)
        }),
    )
}

/// One case per differentiable primitive of [`Graph`].
pub fn primitive_cases() -> Vec<PrimitiveCase> {
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(2024),
    };
    let mut cases = Vec::new();
    macro_rules! m {
        ($shape:expr) => {
            b.tensor(&$shape, -1.0, 1.0)
        };
    }

    let (x, y) = (m!([2, 3]), m!([3, 4]));
    cases.push(binary(&mut b, "matmul", x, y, |g, a, c| g.matmul(a, c)));
    let x = m!([2, 3]);
    cases.push(unary(&mut b, "transpose", x, |g, a| g.transpose(a)));
    let (x, y) = (m!([2, 3]), m!([2, 3]));
    cases.push(binary(&mut b, "add", x, y, |g, a, c| g.add(a, c)));
    let (x, y) = (m!([2, 3]), m!([2, 3]));
    cases.push(binary(&mut b, "sub", x, y, |g, a, c| g.sub(a, c)));
    let (x, y) = (m!([2, 3]), m!([2, 3]));
    cases.push(binary(&mut b, "mul", x, y, |g, a, c| g.mul(a, c)));
    let (x, y) = (m!([2, 3]), b.tensor(&[2, 3], 0.5, 1.5));
    cases.push(binary(&mut b, "div", x, y, |g, a, c| g.div(a, c)));
    let (x, y) = (m!([3, 2]), m!([1, 2]));
    cases.push(binary(&mut b, "add_row", x, y, |g, a, c| g.add_row(a, c)));
    let x = m!([2, 2]);
    cases.push(unary(&mut b, "scale", x, |g, a| Ok(g.scale(a, 0.7))));
    let x = m!([2, 2]);
    cases.push(unary(&mut b, "add_scalar", x, |g, a| Ok(g.add_scalar(a, 0.3))));
    let x = m!([2, 2]);
    cases.push(unary(&mut b, "rsub_scalar", x, |g, a| Ok(g.rsub_scalar(1.0, a))));
    let x = b.away_from_zero(&[2, 3]);
    cases.push(unary(&mut b, "relu", x, |g, a| Ok(g.relu(a))));
    let x = b.tensor(&[2, 3], -2.0, 2.0);
    cases.push(unary(&mut b, "sigmoid", x, |g, a| Ok(g.sigmoid(a))));
    let x = b.tensor(&[2, 3], 0.5, 2.0);
    cases.push(unary(&mut b, "log", x, |g, a| Ok(g.log(a))));
    let x = b.away_from_zero(&[2, 3]);
    cases.push(unary(&mut b, "clamp", x, |g, a| Ok(g.clamp(a, -0.6, 0.6))));
    let x = m!([3, 4]);
    cases.push(unary(&mut b, "softmax_rows", x, |g, a| g.softmax(a, 1)));
    let x = m!([3, 4]);
    cases.push(unary(&mut b, "softmax_cols", x, |g, a| g.softmax(a, 0)));
    let x = m!([3, 3]);
    let visible: Vec<bool> = (0..9).map(|k| k % 3 <= k / 3).collect();
    cases.push(unary(&mut b, "masked_softmax", x, move |g, a| g.masked_softmax(a, &visible)));

    let seed = b.rng.gen();
    let mut store = ParamStore::new();
    let x = store.insert("x", b.tensor(&[3, 4], -1.0, 1.0));
    let gamma = store.insert("gamma", b.tensor(&[4], 0.5, 1.5));
    let beta = store.insert("beta", b.tensor(&[4], -0.5, 0.5));
    cases.push(PrimitiveCase::new(
        "layer_norm",
        store,
        Box::new(move |s, g| {
            let (x, gm, bt) = (g.param(s, x), g.param(s, gamma), g.param(s, beta));
            let y = g.layer_norm(x, gm, bt, 1e-5)?;
            project(g, y, seed)
        }),
    ));

    let x = m!([5, 3]);
    cases.push(unary(&mut b, "embedding_lookup", x, |g, t| g.embedding(t, &[0, 2, 2, 4])));
    let x = m!([4, 5]);
    cases.push(unary(&mut b, "cross_entropy", x, |g, a| {
        g.cross_entropy(a, &[1, 4, 0, 3], 0)
    }));
    let x = m!([2, 5]);
    cases.push(unary(&mut b, "slice_cols", x, |g, a| g.slice_cols(a, 1, 3)));
    let (x, y) = (m!([2, 2]), m!([2, 3]));
    cases.push(binary(&mut b, "concat_cols", x, y, |g, a, c| g.concat_cols(&[a, c])));
    let (x, y) = (m!([1, 3]), m!([2, 3]));
    cases.push(binary(&mut b, "concat_rows", x, y, |g, a, c| g.concat_rows(&[a, c])));
    let x = m!([2, 3]);
    cases.push(unary(&mut b, "sum", x, |g, a| Ok(g.sum(a))));
    let x = m!([2, 3]);
    cases.push(unary(&mut b, "mean", x, |g, a| Ok(g.mean(a))));
    let x = m!([3, 4]);
    cases.push(unary(&mut b, "mean_rows", x, |g, a| g.mean_rows(a)));
    let x = Tensor::from_rows(&[vec![0.1, 0.9, -0.4], vec![0.7, -0.2, 0.3], vec![-0.5, 0.4, 0.8]]).expect("rows");
    cases.push(unary(&mut b, "max_rows", x, |g, a| g.max_rows(a)));
    let x = m!([2, 4]);
    cases.push(unary(&mut b, "select_cols", x, |g, a| g.select_cols(a, &[3, 1, 1])));
    let x = m!([2, 3]);
    cases.push(unary(&mut b, "reshape", x, |g, a| g.reshape(a, vec![3, 2])));
    cases
}
