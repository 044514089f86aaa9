//! Probability-space cross-entropies with clamping.

use crate::real::Real;

/// Probabilities entering a log are floored at this value.
pub const PROB_CLAMP: f64 = 1e-12;

// Evaluated in f64 so f32 inputs near 0 or 1 keep their precision.
fn neg_log(q: f64) -> f64 {
    -libm::log(q.clamp(PROB_CLAMP, 1.0))
}

/// `−[δ log p + (1 − δ) log(1 − p)]`. A confident wrong answer costs at
/// most `−ln 1e-12`; a perfect one costs exactly 0.
pub fn binary_cross_entropy<T: Real>(p: T, answerable: bool) -> T {
    let p = p.as_f64();
    T::lit(neg_log(if answerable { p } else { 1.0 - p }))
}

/// `−log p[target]`, with the same floor.
pub fn categorical_cross_entropy<T: Real>(probs: &[T], target: usize) -> T {
    T::lit(neg_log(probs[target].as_f64()))
}
