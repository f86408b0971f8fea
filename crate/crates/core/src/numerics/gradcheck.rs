use super::{NumericsError, Result, Tape, Tensor, Var};

/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Compare `analytic` gradients of `f` at `theta` against central
/// differences with step `h`; returns the maximum relative error.
pub fn grad_check_fn(
    f: impl Fn(&[Tensor]) -> f64,
    analytic: &[Tensor],
    theta: &[Tensor],
    h: f64,
) -> Result<f64> {
    check_against(f, analytic, theta, h, |f| (f(1.0) - f(-1.0)) / (2.0 * h))
}

/// As [`grad_check_fn`] but with the five-point central stencil, whose
/// O(h⁴) truncation error permits larger steps when `f` is noisy.
pub fn grad_check_fn_five_point(
    f: impl Fn(&[Tensor]) -> f64,
    analytic: &[Tensor],
    theta: &[Tensor],
    h: f64,
) -> Result<f64> {
    check_against(f, analytic, theta, h, |f| {
        (8.0 * (f(1.0) - f(-1.0)) - (f(2.0) - f(-2.0))) / (12.0 * h)
    })
}

fn check_against(
    f: impl Fn(&[Tensor]) -> f64,
    analytic: &[Tensor],
    theta: &[Tensor],
    h: f64,
    stencil: impl Fn(&mut dyn FnMut(f64) -> f64) -> f64,
) -> Result<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(analytic.len(), theta.len(), "one gradient per input");
    let mut point: Vec<Tensor> = theta.to_vec();
    let mut worst: f64 = 0.0;
    for (k, grad) in analytic.iter().enumerate() {
        if !grad.is_finite() {
            return Err(NumericsError::NonFiniteValue(format!("analytic gradient of input {k}")));
        }
        for i in 0..theta[k].len() {
            let x0 = theta[k].data()[i];
            let mut finite = true;
            let mut at = |steps: f64| {
                point[k].data_mut()[i] = x0 + steps * h;
                let v = f(&point);
                finite &= v.is_finite();
                v
            };
            let numeric = stencil(&mut at);
            point[k].data_mut()[i] = x0;
            if !finite {
                return Err(NumericsError::NonFiniteValue(format!("f at input {k} element {i}")));
            }
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Gradient check for a function built on a [`Tape`]: the closure receives
/// one leaf per element of `theta` and returns a scalar output.
pub fn grad_check(
    f: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
    theta: &[Tensor],
    h: f64,
) -> Result<f64> {
    let eval = |vals: &[Tensor], want_grad: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let value = tape.value(out).item();
        if !value.is_finite() {
            return Err(NumericsError::NonFiniteValue("f(theta)".into()));
        }
        let grads = if want_grad {
            let g = tape.backward(out);
            vars.iter().map(|&v| g.get_or_zeros(v)).collect()
        } else {
            Vec::new()
        };
        Ok((value, grads))
    };
    let (_, analytic) = eval(theta, true)?;
    grad_check_fn(
        |vals| eval(vals, false).map(|(v, _)| v).unwrap_or(f64::NAN),
        &analytic,
        theta,
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_is_exact() {
        let err = grad_check(|t, v| t.mul(v[0], v[0]), &[Tensor::scalar(3.0)], 1e-5).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn five_point_is_exact_on_quartics() {
        let f = |t: &[Tensor]| t[0].item().powi(4);
        let x = [Tensor::scalar(1.5)];
        let analytic = [Tensor::scalar(4.0 * 1.5f64.powi(3))];
        assert!(grad_check_fn_five_point(f, &analytic, &x, 0.1).unwrap() <= 1e-12);
        assert!(grad_check_fn(f, &analytic, &x, 0.1).unwrap() > 1e-4);
    }

    #[test]
    fn non_finite_is_reported() {
        let err = grad_check(|t, v| Ok(t.ln(v[0])), &[Tensor::scalar(-1.0)], 1e-5);
        assert!(matches!(err, Err(NumericsError::NonFiniteValue(_))));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.5) - 0.2).abs() < 1e-15);
    }
}
