use thiserror::Error;

use super::tape::{Tape, Var};
use super::{ParamId, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over entries of |analytic − numeric| / max(1, |numeric|)
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub entries_checked: usize,
}

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("step must be positive, got {0}")]
    BadStep(f64),
    #[error("non-finite {what} at input {input}, entry {index}")]
    NonFinite { what: &'static str, input: usize, index: usize },
    #[error(transparent)]
    Tape(#[from] crate::Error),
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`, over every entry of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    if !(h > 0.0) {
        return Err(GradCheckError::BadStep(h));
    }
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.scalar(out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        entries_checked: 0,
    };
    let mut probe = inputs.to_vec();
    for (input, x) in inputs.iter().enumerate() {
        for index in 0..x.len() {
            let a = analytic[input][index];
            if !a.is_finite() {
                return Err(GradCheckError::NonFinite {
                    what: "analytic gradient",
                    input,
                    index,
                });
            }
            let orig = x.data()[index];
            probe[input].data_mut()[index] = orig + h;
            let plus = eval(&probe);
            probe[input].data_mut()[index] = orig - h;
            let minus = eval(&probe);
            probe[input].data_mut()[index] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(GradCheckError::NonFinite {
                    what: "finite difference",
                    input,
                    index,
                });
            }
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            report.entries_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_input = input;
                report.worst_index = index;
            }
        }
    }
    Ok(report)
}

/// Like [`grad_check`], but for parameters bound from a [`ParamStore`] via
/// [`Tape::param`]. At most `per_param` evenly spaced entries of each listed
/// parameter are probed; `worst_input` indexes into `ids`.
pub fn param_grad_check<F>(
    f: F,
    store: &ParamStore,
    ids: &[ParamId],
    h: f64,
    per_param: usize,
) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    if !(h > 0.0) {
        return Err(GradCheckError::BadStep(h));
    }
    let mut work = store.clone();
    work.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, &work);
    tape.backward(out)?.accumulate_into(&mut work);
    let analytic: Vec<Tensor> = ids.iter().map(|id| work.get(*id).grad.clone()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        entries_checked: 0,
    };
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new();
        let out = f(&mut tape, s);
        tape.scalar(out)
    };
    for (input, id) in ids.iter().enumerate() {
        let n = store.get(*id).value.len();
        let step = n.div_ceil(per_param.max(1)).max(1);
        for index in (0..n).step_by(step) {
            let a = analytic[input].data()[index];
            if !a.is_finite() {
                return Err(GradCheckError::NonFinite {
                    what: "analytic gradient",
                    input,
                    index,
                });
            }
            let orig = store.get(*id).value.data()[index];
            work.get_mut(*id).value.data_mut()[index] = orig + h;
            let plus = eval(&work);
            work.get_mut(*id).value.data_mut()[index] = orig - h;
            let minus = eval(&work);
            work.get_mut(*id).value.data_mut()[index] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(GradCheckError::NonFinite {
                    what: "finite difference",
                    input,
                    index,
                });
            }
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            report.entries_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_input = input;
                report.worst_index = index;
            }
        }
    }
    Ok(report)
}
