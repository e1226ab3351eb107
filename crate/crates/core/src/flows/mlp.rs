use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{DiffError, ParamId, ParamStore, Tape, Var};

/// Fully connected network: `tanh` between layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub name: String,
    /// `[input, hidden..., output]`.
    pub widths: Vec<usize>,
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
}

impl Mlp {
    /// Registers the network's tensors in `store`. Weights are drawn from
    /// `N(0, init_std^2)`, biases start at zero.
    pub fn build<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        init_std: f64,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        assert!(widths.len() >= 2, "an MLP needs at least one linear layer");
        assert!(widths.iter().all(|&w| w > 0), "MLP widths must be positive");
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            weights.push(store.insert_normal(format!("{name}.l{i}.weight"), pair[0], pair[1], init_std, rng)?);
            biases.push(store.insert_normal(format!("{name}.l{i}.bias"), 1, pair[1], 0.0, rng)?);
        }
        Ok(Self {
            name: name.to_string(),
            widths: widths.to_vec(),
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, input: Var) -> Var {
        let last = self.weights.len() - 1;
        let mut h = input;
        for (i, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let w = tape.param(store, w);
            let b = tape.param(store, b);
            h = tape.add(tape.matmul(h, w), b);
            if i < last {
                h = tape.tanh(h);
            }
        }
        h
    }

    /// Checks that every referenced tensor exists with the declared shape.
    pub(crate) fn validate(&self, store: &ParamStore) -> bool {
        if self.weights.len() + 1 != self.widths.len() || self.biases.len() != self.weights.len() {
            return false;
        }
        self.widths
            .windows(2)
            .zip(self.weights.iter().zip(&self.biases))
            .all(|(pair, (&w, &b))| {
                w.0 < store.len()
                    && b.0 < store.len()
                    && store.get(w).dim() == (pair[0], pair[1])
                    && store.get(b).dim() == (1, pair[1])
            })
    }
}
