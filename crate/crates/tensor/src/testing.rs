//! Finite-difference gradient checking.

use crate::tensor::Tensor;
use crate::var::Var;

/// Central-difference gradient of a scalar function at `x`.
pub fn numerical_grad(x: &Tensor, eps: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let hi = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let lo = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (hi - lo) / (2.0 * eps);
    }
    g
}

/// Largest elementwise relative error, with a unit floor on the scale so tiny
/// gradients are compared absolutely.
pub fn max_relative_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = a
        .data()
        .iter()
        .chain(b.data())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

/// Analytic gradient of `f` at `x`.
pub fn analytic_grad(x: &Tensor, f: impl Fn(&Var) -> Var) -> Tensor {
    let v = Var::input(x.clone());
    let y = f(&v);
    y.backward()
        .wrt(&v)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()))
}

/// Panics unless analytic and central-difference gradients agree within `tol`.
pub fn check_grad(x: &Tensor, f: impl Fn(&Var) -> Var, tol: f64) {
    let analytic = analytic_grad(x, &f);
    let numeric = numerical_grad(x, 1e-5, |t| f(&Var::constant(t.clone())).item());
    let err = max_relative_error(&analytic, &numeric);
    assert!(
        err <= tol,
        "gradient mismatch: rel err {err:.3e} > {tol:.1e}\n analytic {analytic:?}\n numeric {numeric:?}"
    );
}
