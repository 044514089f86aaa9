use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::TrainConfig;
use super::loss::{example_loss, LossBreakdown, Objective, Target};
use super::schedule::mix_seed;
use crate::corpus::{Batch, ExampleInput};
use crate::error::{Error, Result};
use crate::model::{Equant, Graph};
use crate::real::Real;
use crate::tensor::{AdamState, Tensor};

/// Runs independent per-example jobs and returns results in index order.
pub trait Executor: Sync {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R>;
}

/// Runs jobs one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R> {
        (0..n).map(f).collect()
    }
}

/// Loss parts and (scaled) gradients for one example. `grads` is `None`
/// when no loss term applies, e.g. δ = 0 without a head.
pub struct ExampleResult<T> {
    pub grads: Option<Vec<Tensor<T>>>,
    pub parts: [f64; 3],
}

/// Forward, loss and backward for one example. The loss is multiplied by
/// `scale` (usually 1/N) before backpropagation. Dropout applies only when
/// `dropout_seed` is given.
pub fn example_gradient<T: Real>(
    model: &Equant<T>,
    input: ExampleInput<'_>,
    target: Target,
    objective: Objective,
    scale: T,
    dropout_seed: Option<u64>,
) -> Result<ExampleResult<T>> {
    let mut g = match dropout_seed {
        Some(seed) => Graph::training(&model.params, model.config.dropout, seed),
        None => Graph::new(&model.params),
    };
    let vars = model.forward(&mut g, input)?;
    let (loss, parts) = example_loss(&mut g, &vars, input.context.mask, target, objective)?;
    let Some(loss) = loss else {
        return Ok(ExampleResult { grads: None, parts });
    };
    if parts.iter().any(|p| !p.is_finite()) {
        return Ok(ExampleResult { grads: None, parts });
    }
    let scaled = g.tape.scale(loss, scale)?;
    g.tape.backward(scaled)?;
    Ok(ExampleResult { grads: Some(g.param_grads()), parts })
}

/// Summed gradient of the batch-mean loss, accumulated in member order.
/// `ids[k]` names example `k` of the dataset for error reports.
pub fn batch_gradients<T: Real, E: Executor>(
    model: &Equant<T>,
    batch: &Batch,
    ids: &[String],
    objective: Objective,
    dropout_seed: Option<u64>,
    exec: &E,
) -> Result<(Vec<Tensor<T>>, LossBreakdown)> {
    let n = batch.size();
    let scale = T::one() / T::lit(n.max(1) as f64);
    let results = exec.map(n, |b| {
        let target = Target { answerable: batch.answerable[b], span: batch.span(b) };
        let seed = dropout_seed.map(|s| mix_seed(s, b as u64));
        example_gradient(model, batch.input(b).trimmed(), target, objective, scale, seed)
    });
    let mut total: Vec<Tensor<T>> = model.params.values().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut sums = [0.0; 3];
    let mut bad = Vec::new();
    for (b, r) in results.into_iter().enumerate() {
        let r = r?;
        if r.parts.iter().any(|p| !p.is_finite()) {
            bad.push(ids.get(batch.indices[b]).cloned().unwrap_or_else(|| format!("#{}", batch.indices[b])));
            continue;
        }
        for (s, p) in sums.iter_mut().zip(r.parts) {
            *s += p;
        }
        if let Some(grads) = r.grads {
            for (acc, g) in total.iter_mut().zip(grads) {
                for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *v;
                }
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::NonFiniteLoss { ids: bad });
    }
    Ok((total, LossBreakdown::from_sums(sums[0], sums[1], sums[2], n)))
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().flat_map(|g| g.data()).map(|v| v.as_f64() * v.as_f64()).sum();
    let norm = libm::sqrt(sq);
    if max_norm > 0.0 && norm > max_norm {
        let factor = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
    norm
}

/// Clips and applies one Adam update at the scheduled learning rate.
pub fn apply_update<T: Real>(
    model: &mut Equant<T>,
    adam: &mut AdamState<T>,
    grads: &mut [Tensor<T>],
    config: &TrainConfig,
    iteration: u64,
) -> Result<f64> {
    let norm = clip_global_norm(grads, config.clip_norm);
    if !norm.is_finite() {
        return Err(Error::NonFiniteLoss { ids: Vec::new() });
    }
    let trainable = alloc::vec![true; grads.len()];
    let mut params: Vec<&mut Tensor<T>> = model.params.values_mut().iter_mut().collect();
    adam.step(&config.adam(), config.lr_at(iteration), &mut params, grads, &trainable)?;
    Ok(norm)
}

/// Forward, loss, backward, clip and Adam step on one batch. Returns the
/// loss measured before the update. Dropout masks derive from the run seed
/// and the iteration, so a resumed run replays them exactly.
#[allow(clippy::too_many_arguments)]
pub fn train_step<T: Real, E: Executor>(
    model: &mut Equant<T>,
    adam: &mut AdamState<T>,
    batch: &Batch,
    ids: &[String],
    objective: Objective,
    config: &TrainConfig,
    iteration: u64,
    exec: &E,
) -> Result<LossBreakdown> {
    let seed = mix_seed(config.seed, iteration);
    let (mut grads, loss) = batch_gradients(model, batch, ids, objective, Some(seed), exec)?;
    match apply_update(model, adam, &mut grads, config, iteration) {
        Err(Error::NonFiniteLoss { .. }) => {
            let ids = batch.indices.iter().map(|&i| ids.get(i).cloned().unwrap_or_else(|| format!("#{i}"))).collect();
            Err(Error::NonFiniteLoss { ids })
        }
        Err(e) => Err(e),
        Ok(_) => Ok(loss),
    }
}
