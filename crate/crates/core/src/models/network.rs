use rand::Rng;

use crate::error::Result;
use crate::models::attention::{multi_head_attention, positional_encoding, AttentionKind, Mask};
use crate::models::autocorr::auto_correlation;
use crate::models::decomp::{decompose, series_decomposition};
use crate::models::distill::distill_layer;
use crate::models::layers::{Bound, Initializer};
use crate::models::{ModelConfig, Variant, LABEL_LEN};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

pub(crate) fn init_params(variant: Variant, cfg: &ModelConfig, rng: &mut impl Rng) -> ParamStore {
    let d = cfg.model_dim;
    let mut init = Initializer {
        store: ParamStore::new(),
        rng,
    };
    init.linear("enc.embed", 1, d);
    init.linear("dec.embed", 1, d);
    for l in 0..cfg.encoder_layers {
        match variant {
            Variant::Autoformer => init.attention(&format!("enc{l}.ac"), d),
            _ => {
                init.attention(&format!("enc{l}.attn"), d);
                init.norm(&format!("enc{l}.ln1"), d);
                init.norm(&format!("enc{l}.ln2"), d);
            }
        }
        init.ffn(&format!("enc{l}.ffn"), d, cfg.ffn_dim);
        if variant == Variant::Informer && l + 1 < cfg.encoder_layers {
            init.linear(&format!("enc{l}.distill"), d, d);
        }
    }
    for l in 0..cfg.decoder_layers {
        match variant {
            Variant::Autoformer => {
                init.attention(&format!("dec{l}.self_ac"), d);
                init.attention(&format!("dec{l}.cross_ac"), d);
                init.linear(&format!("head.trend{l}"), d, 1);
            }
            _ => {
                init.attention(&format!("dec{l}.self"), d);
                init.attention(&format!("dec{l}.cross"), d);
                for n in 1..=3 {
                    init.norm(&format!("dec{l}.ln{n}"), d);
                }
            }
        }
        init.ffn(&format!("dec{l}.ffn"), d, cfg.ffn_dim);
    }
    init.linear("head", d, 1);
    init.store
}

/// Decoder input: last `LABEL_LEN` context values followed by `horizon`
/// copies of `fill`.
fn decoder_input(context: &[f64], horizon: usize, fill: f64) -> Tensor {
    let label = &context[context.len().saturating_sub(LABEL_LEN)..];
    let mut col = label.to_vec();
    col.extend(std::iter::repeat(fill).take(horizon));
    Tensor::column(&col)
}

fn residual(g: &mut Graph, x: Var, y: Var) -> Result<Var> {
    g.add(x, y)
}

pub(crate) fn forward(variant: Variant, cfg: &ModelConfig, g: &mut Graph, p: &Bound, context: &[f64]) -> Result<Var> {
    match variant {
        Variant::Transformer | Variant::Informer => attention_forward(variant, cfg, g, p, context),
        Variant::Autoformer => autoformer_forward(cfg, g, p, context),
    }
}

fn attention_forward(variant: Variant, cfg: &ModelConfig, g: &mut Graph, p: &Bound, context: &[f64]) -> Result<Var> {
    let d = cfg.model_dim;
    let lc = context.len();
    let label = LABEL_LEN.min(lc);
    let pe = positional_encoding(lc + cfg.horizon, d)?;

    let x = g.constant(Tensor::column(context));
    let x = p.linear("enc.embed")?.forward(g, x)?;
    let pe_enc = g.constant(Tensor::new(vec![lc, d], pe.data()[..lc * d].to_vec())?);
    let mut x = g.add(x, pe_enc)?;
    let enc_kind = match variant {
        Variant::Informer => AttentionKind::ProbSparse {
            factor: cfg.probsparse_factor,
        },
        _ => AttentionKind::Full(Mask::None),
    };
    for l in 0..cfg.encoder_layers {
        let a = multi_head_attention(g, &p.attention(&format!("enc{l}.attn"))?, x, x, cfg.heads, enc_kind)?;
        let h = residual(g, x, a)?;
        let h = p.norm(&format!("enc{l}.ln1"))?.forward(g, h)?;
        let f = p.ffn(&format!("enc{l}.ffn"))?.forward(g, h)?;
        let h2 = residual(g, h, f)?;
        x = p.norm(&format!("enc{l}.ln2"))?.forward(g, h2)?;
        if variant == Variant::Informer && l + 1 < cfg.encoder_layers && g.shape(x)[0] >= 2 {
            x = distill_layer(g, x, &p.linear(&format!("enc{l}.distill"))?)?;
        }
    }

    let len_dec = label + cfg.horizon;
    let y = g.constant(decoder_input(context, cfg.horizon, 0.0));
    let y = p.linear("dec.embed")?.forward(g, y)?;
    let start = lc - label;
    let pe_dec = g.constant(Tensor::new(vec![len_dec, d], pe.data()[start * d..(start + len_dec) * d].to_vec())?);
    let mut y = g.add(y, pe_dec)?;
    for l in 0..cfg.decoder_layers {
        let s = multi_head_attention(
            g,
            &p.attention(&format!("dec{l}.self"))?,
            y,
            y,
            cfg.heads,
            AttentionKind::Full(Mask::Causal),
        )?;
        let h = residual(g, y, s)?;
        let h = p.norm(&format!("dec{l}.ln1"))?.forward(g, h)?;
        let c = multi_head_attention(
            g,
            &p.attention(&format!("dec{l}.cross"))?,
            h,
            x,
            cfg.heads,
            AttentionKind::Full(Mask::None),
        )?;
        let h2 = residual(g, h, c)?;
        let h2 = p.norm(&format!("dec{l}.ln2"))?.forward(g, h2)?;
        let f = p.ffn(&format!("dec{l}.ffn"))?.forward(g, h2)?;
        let h3 = residual(g, h2, f)?;
        y = p.norm(&format!("dec{l}.ln3"))?.forward(g, h3)?;
    }
    let out = p.linear("head")?.forward(g, y)?;
    g.slice(out, 0, label, cfg.horizon)
}

fn autoformer_forward(cfg: &ModelConfig, g: &mut Graph, p: &Bound, context: &[f64]) -> Result<Var> {
    let kernel = cfg.decomposition_kernel;
    let factor = cfg.autocorr_factor;
    let lc = context.len();
    let label = LABEL_LEN.min(lc);
    let mean = context.iter().sum::<f64>() / lc as f64;
    let (seasonal, trend) = decompose(context, kernel)?;

    let x = g.constant(Tensor::column(context));
    let mut x = p.linear("enc.embed")?.forward(g, x)?;
    for l in 0..cfg.encoder_layers {
        let a = auto_correlation(g, &p.attention(&format!("enc{l}.ac"))?, x, x, factor)?;
        let h = residual(g, x, a)?;
        let (h, _) = series_decomposition(g, h, kernel)?;
        let f = p.ffn(&format!("enc{l}.ffn"))?.forward(g, h)?;
        let h2 = residual(g, h, f)?;
        x = series_decomposition(g, h2, kernel)?.0;
    }

    let s = g.constant(decoder_input(&seasonal, cfg.horizon, 0.0));
    let mut s = p.linear("dec.embed")?.forward(g, s)?;
    let mut t = g.constant(decoder_input(&trend, cfg.horizon, mean));
    for l in 0..cfg.decoder_layers {
        let a = auto_correlation(g, &p.attention(&format!("dec{l}.self_ac"))?, s, s, factor)?;
        let h = residual(g, s, a)?;
        let (h, t1) = series_decomposition(g, h, kernel)?;
        let c = auto_correlation(g, &p.attention(&format!("dec{l}.cross_ac"))?, h, x, factor)?;
        let h2 = residual(g, h, c)?;
        let (h2, t2) = series_decomposition(g, h2, kernel)?;
        let f = p.ffn(&format!("dec{l}.ffn"))?.forward(g, h2)?;
        let h3 = residual(g, h2, f)?;
        let (h3, t3) = series_decomposition(g, h3, kernel)?;
        s = h3;
        let tr = g.add(t1, t2)?;
        let tr = g.add(tr, t3)?;
        let tr = p.linear(&format!("head.trend{l}"))?.forward(g, tr)?;
        t = g.add(t, tr)?;
    }
    let seasonal_out = p.linear("head")?.forward(g, s)?;
    let out = g.add(seasonal_out, t)?;
    g.slice(out, 0, label, cfg.horizon)
}
