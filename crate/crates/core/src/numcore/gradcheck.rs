use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

fn evaluate<F>(params: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::shape("grad_check", value.shape(), &[1, 1]));
    }
    let v = value.values()[0];
    if !v.is_finite() {
        return Err(Error::Numeric("non-finite function value in grad_check".into()));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of the scalar function `f` against central
/// differences with step `eps`.
///
/// Returns `max |analytic - numeric| / max(1, |numeric|)` over every entry of
/// every parameter. `f` must be deterministic (fix any dropout RNG inside it).
pub fn grad_check<F>(params: &[Tensor], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("grad_check eps must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for (i, p) in params.iter().enumerate() {
        let analytic = grads.get(vars[i]);
        for k in 0..p.len() {
            let orig = p.values()[k];
            probe[i].values_mut()[k] = orig + eps;
            let up = evaluate(&probe, &f)?;
            probe[i].values_mut()[k] = orig - eps;
            let down = evaluate(&probe, &f)?;
            probe[i].values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g[k]);
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}
