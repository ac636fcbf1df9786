use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::network::{Activations, QNetwork};
use super::{BranchAction, Transition};
use crate::error::{Error, Result};

/// Argmax with ties going to the lowest index.
pub fn greedy(q: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = k;
        }
    }
    best
}

/// Per-branch argmax of Q plus Gaussian noise of scale `noise[j]`.
pub fn select_action<R: Rng>(q: &[Vec<f64>], noise: &[f64], rng: &mut R) -> BranchAction {
    let heads: Vec<usize> = q
        .iter()
        .enumerate()
        .map(|(j, head)| {
            let sigma = noise.get(j).copied().unwrap_or(0.0);
            if sigma > 0.0 {
                let noisy: Vec<f64> = head
                    .iter()
                    .map(|v| v + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect();
                greedy(&noisy)
            } else {
                greedy(head)
            }
        })
        .collect();
    BranchAction::from_heads(&heads)
}

/// Double-DQN target per branch: the primary network picks a', the target
/// network values it. The bootstrap is discounted by `gamma^periods`.
pub fn td_target(t: &Transition, primary: &QNetwork, target: &QNetwork, gamma: f64) -> Result<Vec<f64>> {
    let heads = primary.shape().heads.len();
    if t.terminal {
        return Ok(vec![t.reward; heads]);
    }
    let discount = if t.periods == 1.0 { gamma } else { libm::pow(gamma, t.periods) };
    let qp = primary.forward(&t.next_state)?;
    let qt = target.forward(&t.next_state)?;
    Ok(qp.iter().zip(&qt).map(|(p, q)| t.reward + discount * q[greedy(p)]).collect())
}

pub fn td_targets(batch: &[&Transition], primary: &QNetwork, target: &QNetwork, gamma: f64) -> Result<Vec<Vec<f64>>> {
    batch.iter().map(|t| td_target(t, primary, target, gamma)).collect()
}

/// Squared TD error averaged over the batch, then over branches.
pub fn loss(batch: &[&Transition], primary: &QNetwork, target: &QNetwork, gamma: f64) -> Result<f64> {
    Ok(evaluate(batch, primary, target, gamma, None)?)
}

/// Loss and its gradient with respect to the primary parameters, holding
/// the targets fixed.
pub fn backward(batch: &[&Transition], primary: &QNetwork, target: &QNetwork, gamma: f64) -> Result<(f64, Vec<f64>)> {
    let mut grads = vec![0.0; primary.shape().num_params()];
    let l = evaluate(batch, primary, target, gamma, Some(&mut grads))?;
    Ok((l, grads))
}

fn evaluate(
    batch: &[&Transition],
    primary: &QNetwork,
    target: &QNetwork,
    gamma: f64,
    mut grads: Option<&mut Vec<f64>>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    let shape = primary.shape();
    let branches = shape.heads.len();
    let scale = 1.0 / (branches * batch.len()) as f64;
    let mut act = Activations::default();
    let mut dq = vec![0.0; shape.num_outputs()];
    let mut total = 0.0;
    for t in batch {
        let y = td_target(t, primary, target, gamma)?;
        primary.forward_into(&t.state, &mut act)?;
        dq.fill(0.0);
        for (j, a) in t.action.heads().enumerate() {
            if j >= branches || a >= shape.heads[j] {
                return Err(Error::Shape {
                    expected: shape.heads.get(j).copied().unwrap_or(0),
                    found: a + 1,
                });
            }
            let k = shape.output_offset(j) + a;
            let err = act.q[k] - y[j];
            total += err * err;
            dq[k] = 2.0 * err * scale;
        }
        if let Some(g) = grads.as_deref_mut() {
            primary.backward_into(&t.state, &act, &dq, g);
        }
    }
    let l = total * scale;
    if !l.is_finite() {
        return Err(Error::Divergence(alloc::format!("loss is {l}")));
    }
    Ok(l)
}

/// Hard copy of the primary parameters every `interval` gradient steps.
/// Returns whether a copy happened.
pub fn sync_target(primary: &QNetwork, target: &mut QNetwork, step: u64, interval: u64) -> bool {
    if interval != 0 && step % interval == 0 {
        target.clone_from(primary);
        true
    } else {
        false
    }
}
