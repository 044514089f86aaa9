use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Tape, Tensor, Var};

/// A tape plus lazily bound parameter leaves and an optional dropout stream.
pub struct Graph<'p, T: Real> {
    pub tape: Tape<T>,
    params: &'p ParamStore<T>,
    bound: Vec<Option<Var>>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl<'p, T: Real> Graph<'p, T> {
    /// Inference graph: no dropout.
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self { tape: Tape::new(), params, bound: vec![None; params.len()], dropout: None }
    }

    /// Training graph with inverted dropout at `rate`, masks drawn from `seed`.
    pub fn training(params: &'p ParamStore<T>, rate: f64, seed: u64) -> Self {
        let mut g = Self::new(params);
        if rate > 0.0 {
            g.dropout = Some((rate, ChaCha8Rng::seed_from_u64(seed)));
        }
        g
    }

    /// The leaf for parameter `name`, bound on first use.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        let i = self.params.index_of(name).ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if let Some(v) = self.bound[i] {
            return Ok(v);
        }
        let v = self.tape.leaf(self.params.values()[i].clone(), true);
        self.bound[i] = Some(v);
        Ok(v)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.tape.constant(value)
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return Ok(x);
        };
        let keep = T::lit(1.0 / (1.0 - *rate));
        let n = self.tape.value(x).len();
        let factors = (0..n).map(|_| if rng.random::<f64>() < *rate { T::zero() } else { keep }).collect();
        self.tape.mul_const(x, factors)
    }

    /// Gradient for every parameter in store order; unbound ones are zero.
    pub fn param_grads(&self) -> Vec<Tensor<T>> {
        self.bound
            .iter()
            .zip(self.params.values())
            .map(|(v, p)| match v.and_then(|v| self.tape.grad(v)) {
                Some(g) => g.clone(),
                None => Tensor::zeros(p.shape()),
            })
            .collect()
    }

    // Dense helpers over `name/weight` and `name/bias`.

    pub fn linear(&mut self, x: Var, name: &str) -> Result<Var> {
        let w = self.param(&alloc::format!("{name}/weight"))?;
        self.tape.matmul(x, w)
    }

    pub fn affine(&mut self, x: Var, name: &str) -> Result<Var> {
        let y = self.linear(x, name)?;
        let b = self.param(&alloc::format!("{name}/bias"))?;
        self.tape.add_bias(y, b)
    }

    pub fn layer_norm(&mut self, x: Var, prefix: &str, eps: f64) -> Result<Var> {
        let g = self.param(&alloc::format!("{prefix}/ln/gain"))?;
        let b = self.param(&alloc::format!("{prefix}/ln/bias"))?;
        self.tape.layer_norm(x, g, b, T::lit(eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{Init, ParamSpec};

    fn store() -> ParamStore<f64> {
        let spec = |name: &str, shape: &[usize]| ParamSpec { name: name.into(), shape: shape.to_vec(), init: Init::Ones };
        ParamStore::init(&[spec("a/weight", &[2, 2]), spec("a/bias", &[2]), spec("unused", &[3])], 0)
    }

    #[test]
    fn binds_once_and_reports_unused_as_zero() {
        let s = store();
        let mut g = Graph::new(&s);
        let w1 = g.param("a/weight").unwrap();
        assert_eq!(g.param("a/weight").unwrap(), w1);
        let x = g.constant(Tensor::from_rows(&[&[1.0, 2.0]]));
        let y = g.affine(x, "a").unwrap();
        assert_eq!(g.tape.value(y).data(), [4.0, 4.0]);
        let loss = g.tape.sum(y);
        g.tape.backward(loss).unwrap();
        let grads = g.param_grads();
        assert_eq!(grads[0].data(), [1.0, 1.0, 2.0, 2.0]);
        assert_eq!(grads[2].data(), [0.0; 3]);
        assert!(matches!(g.param("missing"), Err(Error::UnknownParam(_))));
    }

    #[test]
    fn dropout_is_seeded_and_inverted() {
        let s = store();
        let run = |seed| {
            let mut g = Graph::training(&s, 0.5, seed);
            let x = g.constant(Tensor::full(&[1000], 1.0));
            let y = g.dropout(x).unwrap();
            g.tape.value(y).data().to_vec()
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_ne!(a, run(2));
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
        let mean = a.iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.15);
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::full(&[4], 1.0));
        assert_eq!(g.dropout(x).unwrap(), x);
    }
}
