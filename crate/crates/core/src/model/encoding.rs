use super::config::{EncodingVariant, ModelConfig};
use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Raw `k x (d+1)` encoding: each row is `σ` followed by `d/2` sines and `d/2`
/// cosines (or a second sine block) at frequencies `10000^{-2j/d}·c` for `j = 1..=d/2`.
pub fn sinusoidal_encoding(
    sigma: &[f64],
    d: usize,
    scale: f64,
    variant: EncodingVariant,
) -> Result<Matrix> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::Config(format!(
            "encoding width d = {d} must be even and positive"
        )));
    }
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("singular values".into()));
    }
    let half = d / 2;
    let freqs: Vec<f64> = (1..=half)
        .map(|j| 10000f64.powf(-2.0 * j as f64 / d as f64) * scale)
        .collect();
    let mut pe = Matrix::zeros(sigma.len(), d + 1);
    for (i, &s) in sigma.iter().enumerate() {
        let row = pe.row_mut(i);
        row[0] = s;
        for (j, w) in freqs.iter().enumerate() {
            let arg = w * s;
            row[1 + j] = arg.sin();
            row[1 + half + j] = match variant {
                EncodingVariant::SinCos => arg.cos(),
                EncodingVariant::DoubleSin => arg.sin(),
            };
        }
    }
    Ok(pe)
}

/// `E = LayerNorm(PE(σ)·W + b)`, shape `k x d`.
pub fn encode_singular_values(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    sigma: &[f64],
) -> Result<Var> {
    let pe = sinusoidal_encoding(sigma, cfg.hidden, cfg.encoding_scale, cfg.encoding)?;
    let pe = tape.constant(pe)?;
    let lin = tape.matmul(pe, vars.get("enc.w")?)?;
    let lin = tape.add_row(lin, vars.get("enc.b")?)?;
    tape.layer_norm(
        lin,
        vars.get("enc.ln.gain")?,
        vars.get("enc.ln.bias")?,
        cfg.layer_norm_eps,
    )
}
