use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Probabilities are clamped into `[PROBABILITY_CLAMP, 1 − PROBABILITY_CLAMP]`
/// before any logarithm.
pub const PROBABILITY_CLAMP: f64 = 1e-7;

/// Generator side of the adversarial objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialObjective {
    /// Minimise `−mean log D(fake)`.
    #[default]
    NonSaturating,
    /// Minimise `mean log(1 − D(fake))`, the literal minimax form.
    Minimax,
}

fn stacked<T: Scalar>(g: &mut Graph<T>, scores: &[Var], what: &str) -> Result<Var> {
    if scores.is_empty() {
        return Err(Error::DegenerateBatch(format!("no {what} scores")));
    }
    let column = g.concat_rows(scores)?;
    let eps = T::of(PROBABILITY_CLAMP);
    Ok(g.clamp(column, eps, T::one() - eps))
}

fn mean_log<T: Scalar>(g: &mut Graph<T>, p: Var) -> Var {
    let l = g.log(p);
    g.mean(l)
}

/// `−mean log D(real) − mean log(1 − D(fake))`. Each score is a `1×1` node.
pub fn discriminator_loss<T: Scalar>(g: &mut Graph<T>, real: &[Var], fake: &[Var]) -> Result<Var> {
    let r = stacked(g, real, "real")?;
    let f = stacked(g, fake, "fake")?;
    let lr = mean_log(g, r);
    let one_minus = g.rsub_scalar(T::one(), f);
    let lf = mean_log(g, one_minus);
    let total = g.add(lr, lf)?;
    Ok(g.scale(total, -T::one()))
}

pub fn generator_adversarial_loss<T: Scalar>(
    g: &mut Graph<T>,
    fake: &[Var],
    objective: AdversarialObjective,
) -> Result<Var> {
    let f = stacked(g, fake, "fake")?;
    Ok(match objective {
        AdversarialObjective::NonSaturating => {
            let m = mean_log(g, f);
            g.scale(m, -T::one())
        }
        AdversarialObjective::Minimax => {
            let one_minus = g.rsub_scalar(T::one(), f);
            mean_log(g, one_minus)
        }
    })
}

/// `w₀·standard + Σ wᵢ·conditionᵢ + w_last·adversarial`, with `weights`
/// ordered as standard, conditions, adversarial. Zero-weighted terms are left
/// out of the graph, so a zero adversarial weight with no conditions returns
/// `standard` scaled by its weight and nothing else.
pub fn compose_generator_loss<T: Scalar>(
    g: &mut Graph<T>,
    standard: Var,
    conditions: &[Var],
    adversarial: Option<Var>,
    weights: &[f64],
) -> Result<Var> {
    if weights.len() != conditions.len() + 2 {
        return Err(Error::Config(format!(
            "{} loss weights given for {} terms",
            weights.len(),
            conditions.len() + 2
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::Config(format!("loss weight {w} is not a finite nonnegative number")));
    }
    let weighted = |g: &mut Graph<T>, v: Var, w: f64| if w == 1.0 { v } else { g.scale(v, T::of(w)) };
    let mut total = weighted(g, standard, weights[0]);
    for (&c, &w) in conditions.iter().zip(&weights[1..]) {
        if w != 0.0 {
            let term = weighted(g, c, w);
            total = g.add(total, term)?;
        }
    }
    let w_adv = weights[weights.len() - 1];
    if w_adv != 0.0 {
        let adv = adversarial.ok_or_else(|| Error::Config("adversarial weight set without a score".into()))?;
        let term = weighted(g, adv, w_adv);
        total = g.add(total, term)?;
    }
    Ok(total)
}
