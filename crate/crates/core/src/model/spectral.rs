use std::sync::Arc;

use rand::Rng;

use super::attention::activate;
use super::config::ModelConfig;
use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SpectralBasis};

/// A spectral basis laid out for propagation: `U`, `Vᵀ` and `ΣVᵀ` shared across tapes.
#[derive(Clone, Debug)]
pub struct PropagationBasis {
    pub u: Arc<Matrix>,
    pub vt: Arc<Matrix>,
    pub sigma_vt: Arc<Matrix>,
    pub sigma: Vec<f64>,
}

impl PropagationBasis {
    pub fn new(basis: &SpectralBasis) -> Self {
        let vt = basis.v.transpose();
        let sigma_vt = Matrix::from_fn(vt.rows(), vt.cols(), |i, j| basis.sigma[i] * vt[(i, j)]);
        PropagationBasis {
            u: Arc::new(basis.u.clone()),
            vt: Arc::new(vt),
            sigma_vt: Arc::new(sigma_vt),
            sigma: basis.sigma.clone(),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.u.rows()
    }
}

impl From<&SpectralBasis> for PropagationBasis {
    fn from(b: &SpectralBasis) -> Self {
        PropagationBasis::new(b)
    }
}

/// Spectral propagation and readout.
///
/// ```text
/// H0    = X W_in + b_in
/// H_j   = U diag(e_j) Vᵀ H^{(l-1)}              j = 1..m, e_j = column j of E″
/// H^(l) = act(Σ_j Dropout(H_j) W^(l) + b^(l))   (+ H^{(l-1)} with spectral_skip)
/// logits = H^(L) W_c + b_c
/// ```
///
/// `Vᵀ H^{(l-1)}` is shared by all `m` filters of a layer. With
/// `sigma_scaled_filters` the shared projection is `ΣVᵀ H^{(l-1)}` instead.
#[allow(clippy::too_many_arguments)]
pub fn spectral_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    features: Var,
    basis: &PropagationBasis,
    refined: Var,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let (k, width) = tape.value(refined).shape();
    if k != basis.rank() {
        return Err(Error::shape(
            "spectral_forward",
            format!("basis rank {} but {k} filter rows", basis.rank()),
        ));
    }
    if cfg.filters > width {
        return Err(Error::shape(
            "spectral_forward",
            format!("{} filters requested from {width} columns", cfg.filters),
        ));
    }
    if tape.value(features).rows() != basis.num_nodes() {
        return Err(Error::shape(
            "spectral_forward",
            format!(
                "{} feature rows for a basis over {} nodes",
                tape.value(features).rows(),
                basis.num_nodes()
            ),
        ));
    }
    let u = tape.constant_shared(Arc::clone(&basis.u))?;
    let right = if cfg.sigma_scaled_filters { &basis.sigma_vt } else { &basis.vt };
    let vt = tape.constant_shared(Arc::clone(right))?;
    let filters: Vec<Var> = (0..cfg.filters)
        .map(|j| tape.slice_cols(refined, j, j + 1))
        .collect::<Result<_>>()?;

    let h0 = tape.matmul(features, vars.get("spec.in.w")?)?;
    let mut h = tape.add_row(h0, vars.get("spec.in.b")?)?;
    for l in 0..cfg.layers {
        let w = vars.get(&format!("spec.l{l}.w"))?;
        let b = vars.get(&format!("spec.l{l}.b"))?;
        let projected = tape.matmul(vt, h)?;
        let mut acc: Option<Var> = None;
        for &e_j in &filters {
            let scaled = tape.scale_rows(projected, e_j)?;
            let h_j = tape.matmul(u, scaled)?;
            let h_j = tape.dropout(h_j, cfg.spec_dropout, training, rng)?;
            let z = tape.matmul(h_j, w)?;
            acc = Some(match acc {
                None => z,
                Some(a) => tape.add(a, z)?,
            });
        }
        let merged = tape.add_row(acc.expect("at least one filter"), b)?;
        let mut next = activate(tape, merged, cfg.activation)?;
        if cfg.spectral_skip {
            next = tape.add(next, h)?;
        }
        h = next;
    }
    let logits = tape.matmul(h, vars.get("readout.w")?)?;
    if cfg.readout_bias {
        tape.add_row(logits, vars.get("readout.b")?)
    } else {
        Ok(logits)
    }
}
