//! Named parameter storage, gradient buffers and the Adam optimizer.

use std::collections::HashMap;

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tape::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    trainable: Vec<bool>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    /// Adds a parameter, or replaces the value of an existing one.
    pub fn add(&mut self, name: &str, value: Mat, trainable: bool) -> ParamId {
        if let Some(&id) = self.index.get(name) {
            self.values[id.0] = value;
            self.trainable[id.0] = trainable;
            return id;
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.trainable.push(trainable);
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.id(name).map(|id| &self.values[id.0])
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, on: bool) {
        self.trainable[id.0] = on;
    }

    /// Sets the flag on every parameter whose name starts with `prefix`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, on: bool) {
        for (name, flag) in self.names.iter().zip(self.trainable.iter_mut()) {
            if name.starts_with(prefix) {
                *flag = on;
            }
        }
    }

    pub fn set_all_trainable(&mut self, on: bool) {
        self.trainable.iter_mut().for_each(|f| *f = on);
    }

    /// Total scalar count, optionally restricted by a name predicate.
    pub fn count_where(&self, pred: impl Fn(&str) -> bool) -> u64 {
        self.names.iter().zip(&self.values).filter(|(n, _)| pred(n)).map(|(_, v)| v.len() as u64).sum()
    }

    pub fn count(&self) -> u64 {
        self.count_where(|_| true)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Fills a `rows x cols` matrix with `N(0, std^2)` draws.
pub fn normal_init(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Mat {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads {
    g: Vec<Mat>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { g: store.values.iter().map(|v| Mat::zeros(v.raw_dim())).collect() }
    }

    pub fn accumulate(&mut self, id: ParamId, d: &Mat) {
        self.g[id.0] += d;
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.g[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.g {
            a.mapv_inplace(|x| x * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.g.iter().flat_map(|v| v.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.values.iter().map(|v| Mat::zeros(v.raw_dim())).collect();
        Self { cfg, m: zeros(), v: zeros(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every trainable parameter.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..store.values.len() {
            if !store.trainable[i] {
                continue;
            }
            Zip::from(&mut store.values[i])
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(&grads.g[i])
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}
