use rand::Rng;

use super::config::{Activation, ModelConfig};
use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::Result;

pub(crate) fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Gelu => tape.gelu(x),
        Activation::Identity => Ok(x),
    }
}

/// Output of [`mhsa_block`].
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// Refined encodings `E″`, `k x d`.
    pub refined: Var,
    /// Row-stochastic `k x k` weights of each head.
    pub weights: Vec<Var>,
}

/// Multi-head self-attention over singular-value encodings followed by a
/// residual feed-forward block:
///
/// ```text
/// A_h = softmax(E W_h^Q (E W_h^K)ᵀ / sqrt(d_h)) · E W_h^V
/// E'  = LayerNorm(E  + Dropout(concat_h(A_h) W^O))
/// E'' = LayerNorm(E' + Dropout(W_2 act(W_1 E' + b_1) + b_2))
/// ```
pub fn mhsa_block<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    e: Var,
    training: bool,
    rng: &mut R,
) -> Result<AttentionOutput> {
    let inv_sqrt = 1.0 / (cfg.head_dim() as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut weights = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let q = tape.matmul(e, vars.get(&format!("attn.h{h}.q"))?)?;
        let k = tape.matmul(e, vars.get(&format!("attn.h{h}.k"))?)?;
        let v = tape.matmul(e, vars.get(&format!("attn.h{h}.v"))?)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, inv_sqrt)?;
        let w = tape.softmax_rows(scores)?;
        heads.push(tape.matmul(w, v)?);
        weights.push(w);
    }
    let cat = tape.concat_cols(&heads)?;
    let mhsa = tape.matmul(cat, vars.get("attn.out")?)?;
    let mhsa = tape.dropout(mhsa, cfg.attn_dropout, training, rng)?;
    let res = tape.add(e, mhsa)?;
    let e1 = tape.layer_norm(
        res,
        vars.get("attn.ln1.gain")?,
        vars.get("attn.ln1.bias")?,
        cfg.layer_norm_eps,
    )?;

    let hid = tape.matmul(e1, vars.get("attn.ffn1.w")?)?;
    let hid = tape.add_row(hid, vars.get("attn.ffn1.b")?)?;
    let hid = activate(tape, hid, cfg.activation)?;
    let out = tape.matmul(hid, vars.get("attn.ffn2.w")?)?;
    let out = tape.add_row(out, vars.get("attn.ffn2.b")?)?;
    let out = tape.dropout(out, cfg.attn_dropout, training, rng)?;
    let res = tape.add(e1, out)?;
    let refined = tape.layer_norm(
        res,
        vars.get("attn.ln2.gain")?,
        vars.get("attn.ln2.bias")?,
        cfg.layer_norm_eps,
    )?;
    Ok(AttentionOutput { refined, weights })
}
