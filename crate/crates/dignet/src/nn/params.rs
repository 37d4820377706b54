//! Named parameter storage with deterministic, order-independent init.
//!
//! Each parameter's RNG stream is derived from the global seed and the
//! parameter name, so adding or reordering registrations never shifts the
//! initialization of existing parameters.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Arr = ArrayD<f64>;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Const(f64),
    /// Uniform in [-bound, bound] with bound = sqrt(1 / fan_in) * gain.
    FanIn { fan_in: usize, gain: f64 },
    /// Uniform in [-bound, bound].
    Uniform(f64),
}

#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arr>,
    index: HashMap<String, usize>,
    /// Names of parameters excluded from weight decay.
    no_decay: Vec<bool>,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> ParamStore {
        ParamStore { names: Vec::new(), values: Vec::new(), index: HashMap::new(), no_decay: Vec::new(), seed }
    }

    /// Registers a parameter if absent; returns its index either way.
    pub fn register(&mut self, name: &str, shape: &[usize], init: Init) -> usize {
        if let Some(&i) = self.index.get(name) {
            assert_eq!(self.values[i].shape(), shape, "re-registration of {name} with new shape");
            return i;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name));
        let value = match init {
            Init::Zeros => Arr::zeros(IxDyn(shape)),
            Init::Ones => Arr::from_elem(IxDyn(shape), 1.0),
            Init::Const(c) => Arr::from_elem(IxDyn(shape), c),
            Init::FanIn { fan_in, gain } => {
                let bound = gain * (1.0 / fan_in.max(1) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                Arr::from_shape_fn(IxDyn(shape), |_| dist.sample(&mut rng))
            }
            Init::Uniform(bound) => {
                let dist = Uniform::new_inclusive(-bound, bound);
                Arr::from_shape_fn(IxDyn(shape), |_| dist.sample(&mut rng))
            }
        };
        self.names.push(name.to_string());
        self.values.push(value);
        self.no_decay.push(false);
        self.index.insert(name.to_string(), self.values.len() - 1);
        self.values.len() - 1
    }

    pub fn mark_no_decay(&mut self, name: &str) {
        let i = self.index[name];
        self.no_decay[i] = true;
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn value(&self, name: &str) -> &Arr {
        &self.values[self.index[name]]
    }

    pub fn value_at(&self, i: usize) -> &Arr {
        &self.values[i]
    }

    pub fn value_at_mut(&mut self, i: usize) -> &mut Arr {
        &mut self.values[i]
    }

    pub fn set(&mut self, name: &str, value: Arr) {
        let i = self.index[name];
        assert_eq!(self.values[i].shape(), value.shape());
        self.values[i] = value;
    }

    pub fn name_at(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn is_no_decay(&self, i: usize) -> bool {
        self.no_decay[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arr)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_order_independent() {
        let mut a = ParamStore::new(7);
        a.register("w1", &[4, 3], Init::FanIn { fan_in: 3, gain: 1.0 });
        a.register("w2", &[2, 2], Init::FanIn { fan_in: 2, gain: 1.0 });
        let mut b = ParamStore::new(7);
        b.register("w2", &[2, 2], Init::FanIn { fan_in: 2, gain: 1.0 });
        b.register("w1", &[4, 3], Init::FanIn { fan_in: 3, gain: 1.0 });
        assert_eq!(a.value("w1"), b.value("w1"));
        assert_eq!(a.value("w2"), b.value("w2"));
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = ParamStore::new(1);
        let mut b = ParamStore::new(2);
        a.register("w", &[8], Init::FanIn { fan_in: 8, gain: 1.0 });
        b.register("w", &[8], Init::FanIn { fan_in: 8, gain: 1.0 });
        assert_ne!(a.value("w"), b.value("w"));
    }

    #[test]
    fn zero_init_and_reregistration() {
        let mut s = ParamStore::new(0);
        let i = s.register("b", &[3], Init::Zeros);
        assert!(s.value("b").iter().all(|&v| v == 0.0));
        assert_eq!(s.register("b", &[3], Init::Ones), i);
        // Re-registration keeps the existing value.
        assert!(s.value("b").iter().all(|&v| v == 0.0));
    }
}
