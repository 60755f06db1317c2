use super::params::{ParamSet, ParamVars};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Outcome of [`finite_difference_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_fd − g_ad| / max(1e-8, |g_fd| + |g_ad|)` over checked entries.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Entries whose ± perturbations landed on different ReLU pieces.
    pub excluded: usize,
}

fn evaluate<F>(params: &ParamSet, f: &F) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.register(&mut tape)?;
    let loss = f(&mut tape, &vars)?;
    Ok((tape.scalar(loss), tape.kink_signature()))
}

/// Compares tape gradients of `f` against central differences with step `eps`
/// for every scalar in `params`.
///
/// `f` builds a scalar loss on the given tape from the registered parameters.
/// Entries where `f(θ+eps)` and `f(θ−eps)` take different ReLU pieces sit on a
/// non-differentiable point and are left out of the maximum.
pub fn finite_difference_check<F>(params: &ParamSet, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.register(&mut tape)?;
    let loss = f(&mut tape, &vars)?;
    let base = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    let analytic = params.collect_grads(&vars, &grads);
    drop(tape);

    let (again, _) = evaluate(params, &f)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::InvalidArgument(format!(
            "function is not deterministic: {base} vs {again}"
        )));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        excluded: 0,
    };
    let mut probe = params.clone();
    for (name, value) in params.iter() {
        let g_ad = analytic.require(name)?;
        for idx in 0..value.len() {
            let original = value.as_slice()[idx];
            probe.get_mut(name).expect("same names").as_mut_slice()[idx] = original + eps;
            let (plus, sig_plus) = evaluate(&probe, &f)?;
            probe.get_mut(name).expect("same names").as_mut_slice()[idx] = original - eps;
            let (minus, sig_minus) = evaluate(&probe, &f)?;
            probe.get_mut(name).expect("same names").as_mut_slice()[idx] = original;
            if sig_plus != sig_minus {
                report.excluded += 1;
                continue;
            }
            let g_fd = (plus - minus) / (2.0 * eps);
            let g = g_ad.as_slice()[idx];
            let rel = (g_fd - g).abs() / (g_fd.abs() + g.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), idx));
            }
        }
    }
    Ok(report)
}
