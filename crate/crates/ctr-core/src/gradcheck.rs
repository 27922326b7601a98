//! Central finite-difference oracle for the tape's backward rules.

use alloc::format;

use crate::error::{Error, Result};
use crate::param::ParamSet;
use crate::tape::{Tape, Var};

/// Compare analytic gradients of a scalar-valued forward function against
/// central finite differences over every parameter component.
///
/// Returns the maximum relative error
/// `|analytic - cd| / max(|analytic|, |cd|, 1e-12)`.
pub fn gradient_check<F>(params: &mut ParamSet, h: f64, forward: F) -> Result<f64>
where
    F: Fn(&ParamSet, &mut Tape) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&h) {
        return Err(Error::Contract(format!(
            "finite-difference step {h:e} outside [1e-7, 1e-4]"
        )));
    }
    params.zero_grads();
    let mut tape = Tape::new();
    let root = forward(params, &mut tape)?;
    if !tape.value(root).is_scalar() {
        return Err(Error::Contract(format!(
            "gradient_check needs a scalar forward, got shape {:?}",
            tape.value(root).shape()
        )));
    }
    tape.backward(root, params)?;
    let analytic = params.flat_grads();

    let eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::forward_only();
        let root = forward(params, &mut tape)?;
        tape.scalar(root)
    };

    let mut max_rel = 0.0f64;
    for i in 0..params.flat_len() {
        let theta = params.get_flat(i);
        params.set_flat(i, theta + h);
        let f_plus = eval(params)?;
        params.set_flat(i, theta - h);
        let f_minus = eval(params)?;
        params.set_flat(i, theta);
        let cd = (f_plus - f_minus) / (2.0 * h);
        let denom = analytic[i].abs().max(cd.abs()).max(1e-12);
        max_rel = max_rel.max((analytic[i] - cd).abs() / denom);
    }
    params.zero_grads();
    Ok(max_rel)
}
