use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardVars, Graph, ModelOutput};
use crate::real::Real;
use crate::tensor::{binary_cross_entropy, categorical_cross_entropy, Var};

/// Mean loss components over a batch. `l1` and `l2` are already gated by δ,
/// so `total = l0 + l1 + l2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub batch_size: usize,
}

impl LossBreakdown {
    pub(crate) fn from_sums(l0: f64, l1: f64, l2: f64, n: usize) -> Self {
        let inv = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let (l0, l1, l2) = (l0 * inv, l1 * inv, l2 * inv);
        LossBreakdown { l0, l1, l2, total: l0 + l1 + l2, batch_size: n }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.l0.is_finite() && self.l1.is_finite() && self.l2.is_finite()
    }
}

/// Supervision for one example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target {
    pub answerable: bool,
    /// Read only when `answerable`.
    pub span: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `l0 + δ(l1 + l2)`; `l0` only when the model has a head.
    Joint,
    /// `l1 + l2`, answerable examples only.
    SpanOnly,
}

fn answerable_span(target: Target, n: usize) -> Result<(usize, usize)> {
    let (i, j) = target
        .span
        .ok_or_else(|| Error::Contract("answerable example without a span target".into()))?;
    if i > j || j >= n {
        return Err(Error::Contract(format!("span ({i}, {j}) invalid for context of {n} tokens")));
    }
    Ok((i, j))
}

/// Probability-space loss with clamped logs, for reporting.
pub fn joint_loss<T: Real>(outputs: &[ModelOutput<T>], targets: &[Target], objective: Objective) -> Result<LossBreakdown> {
    if outputs.len() != targets.len() {
        return Err(Error::Contract(format!("{} outputs for {} targets", outputs.len(), targets.len())));
    }
    let (mut l0, mut l1, mut l2) = (0.0, 0.0, 0.0);
    for (out, &t) in outputs.iter().zip(targets) {
        if objective == Objective::SpanOnly && !t.answerable {
            return Err(Error::Contract("span-only objective got an unanswerable example".into()));
        }
        if let (Objective::Joint, Some(p0)) = (objective, out.p0) {
            l0 += binary_cross_entropy(p0, t.answerable).as_f64();
        }
        if t.answerable {
            let (i, j) = answerable_span(t, out.p1.len())?;
            l1 += categorical_cross_entropy(&out.p1, i).as_f64();
            l2 += categorical_cross_entropy(&out.p2, j).as_f64();
        }
    }
    Ok(LossBreakdown::from_sums(l0, l1, l2, outputs.len()))
}

/// Per-example loss graph in logit space. Returns the summed loss node (if
/// any term applies) and the unscaled `(l0, l1, l2)` values. For δ = 0 the
/// span nodes are never built, so the span target is never read.
pub fn example_loss<T: Real>(
    g: &mut Graph<'_, T>,
    vars: &ForwardVars,
    context_mask: &[bool],
    target: Target,
    objective: Objective,
) -> Result<(Option<Var>, [f64; 3])> {
    let mut parts = [0.0; 3];
    let mut total: Option<Var> = None;
    let push = |g: &mut Graph<'_, T>, v: Var, total: &mut Option<Var>| -> Result<()> {
        *total = Some(match *total {
            Some(t) => g.tape.add(t, v)?,
            None => v,
        });
        Ok(())
    };
    match objective {
        Objective::SpanOnly if !target.answerable => {
            return Err(Error::Contract("span-only objective got an unanswerable example".into()));
        }
        Objective::Joint => {
            if let Some(z) = vars.head_logit {
                let target_value = if target.answerable { T::one() } else { T::zero() };
                let l0 = g.tape.bce_with_logit(z, target_value)?;
                parts[0] = g.tape.value(l0).data()[0].as_f64();
                push(g, l0, &mut total)?;
            }
        }
        Objective::SpanOnly => {}
    }
    if target.answerable {
        let (i, j) = answerable_span(target, context_mask.len())?;
        if !context_mask[i] || !context_mask[j] {
            return Err(Error::Contract(format!("span ({i}, {j}) points into padding")));
        }
        for (slot, logits, index) in [(1, vars.start_logits, i), (2, vars.end_logits, j)] {
            let logp = g.tape.masked_log_softmax(logits, context_mask)?;
            let picked = g.tape.pick(logp, index)?;
            let nll = g.tape.scale(picked, -T::one())?;
            parts[slot] = g.tape.value(nll).data()[0].as_f64();
            push(g, nll, &mut total)?;
        }
    }
    Ok((total, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn out(p1: &[f64], p2: &[f64], p0: Option<f64>) -> ModelOutput<f64> {
        ModelOutput { p1: p1.to_vec(), p2: p2.to_vec(), p0 }
    }

    const ANS: Target = Target { answerable: true, span: Some((0, 1)) };
    const UNANS: Target = Target { answerable: false, span: None };

    #[test]
    fn perfect_predictions_cost_nothing() {
        let l = joint_loss(&[out(&[1.0, 0.0], &[0.0, 1.0], Some(1.0))], &[ANS], Objective::Joint).unwrap();
        assert_eq!(l.total, 0.0);
        let l = joint_loss(&[out(&[0.5, 0.5], &[0.5, 0.5], Some(0.0))], &[UNANS], Objective::Joint).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn unanswerable_half_probability_is_ln2() {
        let l = joint_loss(&[out(&[0.5, 0.5], &[0.5, 0.5], Some(0.5))], &[UNANS], Objective::Joint).unwrap();
        assert!((l.total - core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(l.total, l.l0);
    }

    #[test]
    fn uniform_spans_cost_two_ln4() {
        let u = [0.25; 4];
        let l = joint_loss(&[out(&u, &u, Some(1.0))], &[Target { answerable: true, span: Some((1, 3)) }], Objective::Joint)
            .unwrap();
        assert!((l.total - 2.0 * libm::log(4.0)).abs() < 1e-12);
    }

    #[test]
    fn contract_errors() {
        let o = vec![out(&[1.0], &[1.0], Some(0.5))];
        let missing = Target { answerable: true, span: None };
        assert!(matches!(joint_loss(&o, &[missing], Objective::Joint), Err(Error::Contract(_))));
        assert!(matches!(joint_loss(&o, &[UNANS], Objective::SpanOnly), Err(Error::Contract(_))));
        assert!(joint_loss(&o, &[], Objective::Joint).is_err());
    }

    #[test]
    fn all_unanswerable_total_is_mean_l0() {
        let outs = [out(&[1.0], &[1.0], Some(0.2)), out(&[1.0], &[1.0], Some(0.7)), out(&[1.0], &[1.0], Some(0.4))];
        let l = joint_loss(&outs, &[UNANS; 3], Objective::Joint).unwrap();
        assert_eq!(l.total, l.l0);
        assert_eq!((l.l1, l.l2), (0.0, 0.0));
    }
}
