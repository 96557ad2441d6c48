//! Dense tables indexed by `(state, action, layer)` or `(state, layer)`.
//!
//! Layers are 0-based throughout the crate: layers `0..H` are the working
//! layers and layer `H` is the terminal layer that jumps straight to the goal.
//! A table built for `H` working layers therefore has `H + 1` layers.

use serde::{Deserialize, Serialize};

/// Table over `(state, action, layer)`. Carrier for Q, pi, q, b, B, e and
/// stacked costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredTable {
    num_states: usize,
    num_actions: usize,
    num_layers: usize,
    data: Vec<f64>,
}

impl LayeredTable {
    pub fn filled(num_states: usize, num_actions: usize, num_layers: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            num_layers,
            data: vec![value; num_states * num_actions * num_layers],
        }
    }

    pub fn zeros(num_states: usize, num_actions: usize, num_layers: usize) -> Self {
        Self::filled(num_states, num_actions, num_layers, 0.0)
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        num_layers: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Self::zeros(num_states, num_actions, num_layers);
        for l in 0..num_layers {
            for s in 0..num_states {
                for a in 0..num_actions {
                    t.set(s, a, l, f(s, a, l));
                }
            }
        }
        t
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    /// Index of the terminal layer.
    #[inline]
    pub fn terminal_layer(&self) -> usize {
        self.num_layers - 1
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, l: usize) -> usize {
        debug_assert!(s < self.num_states && a < self.num_actions && l < self.num_layers);
        (l * self.num_states + s) * self.num_actions + a
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, l: usize) -> f64 {
        self.data[self.idx(s, a, l)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, l: usize, v: f64) {
        let i = self.idx(s, a, l);
        self.data[i] = v;
    }

    #[inline]
    pub fn add(&mut self, s: usize, a: usize, l: usize, v: f64) {
        let i = self.idx(s, a, l);
        self.data[i] += v;
    }

    /// The action row at `(s, l)`.
    #[inline]
    pub fn row(&self, s: usize, l: usize) -> &[f64] {
        let i = self.idx(s, 0, l);
        &self.data[i..i + self.num_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize, l: usize) -> &mut [f64] {
        let i = self.idx(s, 0, l);
        &mut self.data[i..i + self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.num_layers == other.num_layers
    }

    /// Elementwise combination of two tables of the same shape.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.same_shape(other), "table shape mismatch");
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_layers: self.num_layers,
            data: self.data.iter().zip(&other.data).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_layers: self.num_layers,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum_{s,a,l} self * other`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "table shape mismatch");
        self.data.iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    /// Policy average `sum_a pi(a|s,l) * self(s,a,l)`.
    pub fn policy_average(&self, policy: &LayeredTable) -> LayeredValues {
        assert!(self.same_shape(policy), "table shape mismatch");
        let mut out = LayeredValues::zeros(self.num_states, self.num_layers);
        for l in 0..self.num_layers {
            for s in 0..self.num_states {
                let v: f64 = self.row(s, l).iter().zip(policy.row(s, l)).map(|(q, p)| q * p).sum();
                out.set(s, l, v);
            }
        }
        out
    }
}

/// Table over `(state, layer)`. Carrier for V and state occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredValues {
    num_states: usize,
    num_layers: usize,
    data: Vec<f64>,
}

impl LayeredValues {
    pub fn zeros(num_states: usize, num_layers: usize) -> Self {
        Self { num_states, num_layers, data: vec![0.0; num_states * num_layers] }
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    #[inline]
    pub fn get(&self, s: usize, l: usize) -> f64 {
        self.data[l * self.num_states + s]
    }

    #[inline]
    pub fn set(&mut self, s: usize, l: usize, v: f64) {
        self.data[l * self.num_states + s] = v;
    }

    #[inline]
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.data[l * self.num_states..(l + 1) * self.num_states]
    }

    #[inline]
    pub fn layer_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[l * self.num_states..(l + 1) * self.num_states]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }
}
