use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Largest `|analytic − numeric| / max(1, |analytic|)` over every entry of
/// `theta`, where `numeric` is the central difference with step `h`.
///
/// A NaN result means the program produced a non-finite value somewhere.
pub fn grad_check<F>(mut f: F, theta: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(theta), h)
}

/// [`grad_check`] over several parameter tensors at once.
pub fn grad_check_many<F>(mut f: F, thetas: &[Tensor], h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut eval = |params: &[Tensor], with_grad: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params
            .iter()
            .map(|p| {
                let mut p = p.clone();
                p.set_grad_enabled(with_grad);
                tape.leaf(&p)
            })
            .collect();
        let out = f(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return Err(Error::NotScalar(tape.shape(out).to_vec()));
        }
        let value = tape.value(out)[0];
        let mut grads = Vec::new();
        if with_grad {
            tape.backward(out)?;
            for (v, p) in vars.iter().zip(params) {
                grads.push(tape.grad(*v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec));
            }
        }
        Ok((value, grads))
    };

    let (_, analytic) = eval(thetas, true)?;
    let mut work: Vec<Tensor> = thetas.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..work.len() {
        for i in 0..work[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let (plus, _) = eval(&work, false)?;
            work[k].data_mut()[i] = orig - h;
            let (minus, _) = eval(&work, false)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k][i];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err.is_nan() {
                return Ok(f64::NAN);
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
