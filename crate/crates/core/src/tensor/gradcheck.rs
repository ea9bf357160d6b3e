use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Anything that owns a [`ParamStore`].
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
}

impl<T: Scalar> Parameterized<T> for ParamStore<T> {
    fn params(&self) -> &ParamStore<T> {
        self
    }
    fn params_mut(&mut self) -> &mut ParamStore<T> {
        self
    }
}

/// Worst coordinate found by [`finite_difference_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares analytic gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every coordinate of every trainable
/// parameter. Relative error uses the denominator `max(|a|, |b|, 1e-8)`.
///
/// Existing gradients on the model are cleared first and left holding the
/// analytic gradient on return.
pub fn finite_difference_check<T, M, F>(model: &mut M, eps: f64, f: F) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Parameterized<T>,
    F: Fn(&M, &mut Graph<T>) -> Result<Var>,
{
    if !(1e-8..=1e-3).contains(&eps) {
        return Err(Error::Parameter(format!(
            "finite-difference eps must lie in [1e-8, 1e-3], got {eps}"
        )));
    }
    let eval = |m: &M| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(m, &mut g)?;
        Ok(g.scalar(out).as_f64())
    };

    let first = eval(model)?;
    let second = eval(model)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Determinism { first, second });
    }

    model.params_mut().zero_grad();
    {
        let mut g = Graph::new();
        let out = f(model, &mut g)?;
        let grads = g.backward(out)?;
        grads.accumulate_into(model.params_mut());
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let ids: Vec<_> = model.params().ids().collect();
    let step = T::of(eps);
    for id in ids {
        if !model.params().get(id).requires_grad() {
            continue;
        }
        let analytic = model.params().get(id).grad().map(<[T]>::to_vec).unwrap_or_default();
        for k in 0..model.params().get(id).len() {
            let original = model.params().get(id).values()[k];
            model.params_mut().get_mut(id).values_mut()[k] = original + step;
            let plus = eval(model)?;
            model.params_mut().get_mut(id).values_mut()[k] = original - step;
            let minus = eval(model)?;
            model.params_mut().get_mut(id).values_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(k).map_or(0.0, |v| v.as_f64());
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_relative_error || report.worst_parameter.is_empty() {
                report.max_relative_error = rel;
                report.worst_parameter = model.params().name(id).to_string();
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::<f64>::new();
        let w = store.insert("w", Tensor::new(vec![3], vec![0.5, -1.25, 2.0]).unwrap());
        let report = finite_difference_check(&mut store, 1e-5, |s, g| {
            let p = g.param(s, w);
            let sq = g.mul(p, p)?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-8, "{report:?}");
        assert_eq!(report.coordinates, 3);
    }

    #[test]
    fn eps_out_of_range_is_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::scalar(1.0));
        let r = finite_difference_check(&mut store, 1.0, |_, g| Ok(g.scalar_constant(0.0)));
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        use std::cell::Cell;
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::scalar(1.0));
        let counter = Cell::new(0.0);
        let r = finite_difference_check(&mut store, 1e-5, |_, g| {
            counter.set(counter.get() + 1.0);
            Ok(g.scalar_constant(counter.get()))
        });
        assert!(matches!(r, Err(Error::Determinism { .. })));
    }
}
