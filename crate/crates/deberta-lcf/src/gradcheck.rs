//! Finite-difference gradient oracle.
//!
//! Independent of the tape's backward rules: it only re-evaluates the
//! forward pass at perturbed parameter values, so it can falsify any
//! backward implementation.

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tape, Var};

/// Compare analytic gradients against central finite differences.
///
/// `build` constructs a fresh forward pass over the current parameter
/// values and returns the tape plus a scalar loss node. It must be
/// deterministic; this is enforced by evaluating it twice and requiring
/// bit-identical losses (a function with live dropout fails here).
///
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(params: &mut ParamStore, step: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<(Tape, Var)>,
{
    if step <= 0.0 {
        return Err(Error::Contract("grad_check step must be positive".into()));
    }

    let eval = |params: &ParamStore, build: &mut F| -> Result<f64> {
        let (tape, loss) = build(params)?;
        let v = tape.value(loss);
        if v.len() != 1 {
            return Err(Error::Contract(format!(
                "grad_check needs a scalar loss, got {} entries",
                v.len()
            )));
        }
        Ok(v[0])
    };

    let first = eval(params, &mut build)?;
    let second = eval(params, &mut build)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Contract(
            "grad_check function is nondeterministic (is dropout active?)".into(),
        ));
    }

    params.zero_grads();
    let (tape, loss) = build(params)?;
    tape.backward(loss, params)?;
    let analytic: Vec<Vec<f64>> = params
        .ids()
        .map(|id| {
            params
                .get(id)
                .grad
                .clone()
                .unwrap_or_else(|| vec![0.0; params.get(id).numel()])
        })
        .collect();

    let mut max_rel = 0.0_f64;
    for id in params.ids() {
        for (k, &ana) in analytic[id.0].iter().enumerate() {
            let orig = params.get(id).data[k];
            params.get_mut(id).data[k] = orig + step;
            let plus = eval(params, &mut build)?;
            params.get_mut(id).data[k] = orig - step;
            let minus = eval(params, &mut build)?;
            params.get_mut(id).data[k] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let rel = (ana - numeric).abs() / ana.abs().max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
