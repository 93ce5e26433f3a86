//! Parameter bindings shared by the model variants.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// `x · W + b` with `W: [in, out]` and `b: [1, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y = g.matmul(x, self.weight)?;
        g.add_row(y, self.bias)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gain: Var,
    pub bias: Var,
}

impl Norm {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.layer_norm(x, self.gain, self.bias)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.up.forward(g, x)?;
        let h = g.relu(h);
        self.down.forward(g, h)
    }
}

/// Builds a fresh [`ParamStore`] with seeded uniform `±1/√fan_in` init.
pub(crate) struct Initializer<'r, R: Rng> {
    pub store: ParamStore,
    pub rng: &'r mut R,
}

impl<'r, R: Rng> Initializer<'r, R> {
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.store
            .insert(format!("{name}.w"), Tensor::uniform(&[fan_in, fan_out], bound, self.rng));
        self.store
            .insert(format!("{name}.b"), Tensor::uniform(&[1, fan_out], bound, self.rng));
    }

    pub fn norm(&mut self, name: &str, dim: usize) {
        self.store.insert(format!("{name}.g"), Tensor::ones(&[1, dim]));
        self.store.insert(format!("{name}.b"), Tensor::zeros(&[1, dim]));
    }

    pub fn ffn(&mut self, name: &str, dim: usize, hidden: usize) {
        self.linear(&format!("{name}.up"), dim, hidden);
        self.linear(&format!("{name}.down"), hidden, dim);
    }

    pub fn attention(&mut self, name: &str, dim: usize) {
        for part in ["q", "k", "v", "o"] {
            self.linear(&format!("{name}.{part}"), dim, dim);
        }
    }
}

/// Parameters placed into one graph, looked up by name.
pub(crate) struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Bind every parameter; `trainable` decides whether they collect gradients.
    pub fn new(g: &mut Graph, store: &ParamStore, trainable: bool) -> Self {
        let vars = store
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn linear(&self, name: &str) -> Result<Linear> {
        Ok(Linear {
            weight: self.var(&format!("{name}.w"))?,
            bias: self.var(&format!("{name}.b"))?,
        })
    }

    pub fn norm(&self, name: &str) -> Result<Norm> {
        Ok(Norm {
            gain: self.var(&format!("{name}.g"))?,
            bias: self.var(&format!("{name}.b"))?,
        })
    }

    pub fn ffn(&self, name: &str) -> Result<FeedForward> {
        Ok(FeedForward {
            up: self.linear(&format!("{name}.up"))?,
            down: self.linear(&format!("{name}.down"))?,
        })
    }

    pub fn attention(&self, name: &str) -> Result<crate::models::attention::MhaVars> {
        Ok(crate::models::attention::MhaVars {
            query: self.linear(&format!("{name}.q"))?,
            key: self.linear(&format!("{name}.k"))?,
            value: self.linear(&format!("{name}.v"))?,
            out: self.linear(&format!("{name}.o"))?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}
