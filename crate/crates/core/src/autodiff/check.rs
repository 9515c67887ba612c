use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

fn evaluate<F>(f: &mut F, params: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss);
    if value.shape() != (1, 1) {
        return Err(Error::contract("gradient check needs a scalar function"));
    }
    if !value.item().is_finite() {
        return Err(Error::Numeric(format!(
            "function evaluated to {}",
            value.item()
        )));
    }
    Ok((tape, vars, loss))
}

/// Compares taped gradients of `f` against central differences.
///
/// `f` records its computation on the given tape from the parameter
/// handles and returns the scalar output. The result is the largest
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)` over every
/// parameter entry.
pub fn gradient_check<F>(mut f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::contract(format!("eps must be positive, got {eps}")));
    }
    let (mut tape, vars, loss) = evaluate(&mut f, params)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|v| tape.grad(*v)).collect();

    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = probe[pi].data()[j];
            probe[pi].data_mut()[j] = orig + eps;
            let (t, _, l) = evaluate(&mut f, &probe)?;
            let plus = t.value(l).item();
            probe[pi].data_mut()[j] = orig - eps;
            let (t, _, l) = evaluate(&mut f, &probe)?;
            let minus = t.value(l).item();
            probe[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;

    #[test]
    fn quadratic_is_exact() {
        let err = gradient_check(
            |tape, p| Ok(tape.square(p[0])),
            &[Tensor::scalar(3.0)],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = gradient_check(
            |tape, _| Ok(tape.constant(Tensor::scalar(4.2))),
            &[Tensor::filled(2, 2, 1.0)],
            DEFAULT_EPS,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_non_positive_eps() {
        let r = gradient_check(|t, p| Ok(t.square(p[0])), &[Tensor::scalar(1.0)], 0.0);
        assert!(r.is_err());
    }

    #[test]
    fn non_finite_evaluation_is_a_numeric_error() {
        let r = gradient_check(
            |tape, p| {
                let big = tape.constant(Tensor::scalar(f64::MAX));
                let y = tape.mul(p[0], big)?;
                Ok(tape.square(y))
            },
            &[Tensor::scalar(2.0)],
            DEFAULT_EPS,
        );
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn tanh_layer() {
        let w = Tensor::from_rows(&[[0.2, -0.4], [0.7, 0.1]]).unwrap();
        let err = gradient_check(
            |tape, p| {
                let x = tape.constant(Tensor::from_rows(&[[1.0, -2.0]])?);
                let h = tape.matmul(x, p[0])?;
                let h = tape.activation(h, Activation::Tanh);
                let s = tape.square(h);
                Ok(tape.sum(s))
            },
            &[w],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
