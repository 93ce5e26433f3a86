use crate::error::Result;
use crate::models::layers::Linear;
use crate::tensor::{Graph, Var};

/// Self-attention distilling: pointwise `relu(x·W + b)` followed by
/// width-3 / stride-2 max pooling over time, halving the sequence
/// (`ceil(L/2)` rows).
pub fn distill_layer(g: &mut Graph, x: Var, transform: &Linear) -> Result<Var> {
    let h = transform.forward(g, x)?;
    let h = g.relu(h);
    g.max_pool_rows(h)
}
