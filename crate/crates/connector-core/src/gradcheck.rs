//! Finite-difference gradient verification.
//!
//! The analytic gradients of every backward rule in this crate are checked
//! against central differences; this module is the harness those checks
//! (and the `gradcheck` CLI subcommand) share.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{NodeId, Tape};
use crate::error::CoreError;
use crate::tensor::Tensor;

/// Largest permitted probe step.
pub const MAX_EPS: f64 = 1e-2;

fn validate_eps(eps: f64) -> Result<(), CoreError> {
    if !(eps > 0.0 && eps <= MAX_EPS) {
        return Err(CoreError::Config(format!(
            "gradient-check step must lie in (0, {MAX_EPS}], got {eps}"
        )));
    }
    Ok(())
}

fn eval<F>(f: &F, points: &[Tensor]) -> Result<f64, CoreError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, CoreError>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = points.iter().map(|p| tape.leaf(p.clone(), false)).collect();
    let out = f(&mut tape, &ids)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(CoreError::Contract(format!(
            "gradient check requires a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    let y = v.data()[0];
    if !y.is_finite() {
        return Err(CoreError::NonFinite {
            context: "gradient-check probe",
        });
    }
    Ok(y)
}

/// Check the analytic gradient of a scalar function of several tensors
/// against central finite differences.
///
/// Returns the maximum over all coordinates of
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check_multi<F>(f: F, points: &[Tensor], eps: f64) -> Result<f64, CoreError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, CoreError>,
{
    validate_eps(eps)?;

    // analytic pass
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = points.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let out = f(&mut tape, &ids)?;
    if !tape.value(out).is_scalar() {
        return Err(CoreError::Contract(
            "gradient check requires a scalar function".into(),
        ));
    }
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| tape.grad(id).unwrap().to_vec())
        .collect();

    // central differences, one coordinate at a time
    let mut max_err = 0.0f64;
    let mut probe: Vec<Tensor> = points.to_vec();
    for (pi, point) in points.iter().enumerate() {
        for ci in 0..point.numel() {
            let orig = point.data()[ci];
            probe[pi].data_mut()[ci] = orig + eps;
            let plus = eval(&f, &probe)?;
            probe[pi].data_mut()[ci] = orig - eps;
            let minus = eval(&f, &probe)?;
            probe[pi].data_mut()[ci] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[pi][ci] - numeric).abs() / numeric.abs().max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

/// Single-tensor convenience wrapper around [`grad_check_multi`].
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64, CoreError>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId, CoreError>,
{
    grad_check_multi(
        |tape, ids| f(tape, ids[0]),
        core::slice::from_ref(point),
        eps,
    )
}
