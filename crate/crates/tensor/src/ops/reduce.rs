use crate::tensor::Tensor;
use crate::var::Var;

impl Var {
    pub fn sum(&self) -> Var {
        let shape = self.shape().to_vec();
        let out = Tensor::scalar(self.value().sum());
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(Tensor::full(&shape, g.item()))]),
        )
    }

    pub fn mean(&self) -> Var {
        let n = self.value().numel();
        assert!(n > 0, "mean of an empty tensor");
        self.sum().scale(1.0 / n as f64)
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> Var {
        let shape = self.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let dim = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.value().data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for d in 0..dim {
                let src = &xd[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        Var::from_op(
            Tensor::new(&out_shape, out),
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let gd = g.data();
                let mut gx = Vec::with_capacity(outer * dim * inner);
                for o in 0..outer {
                    for _ in 0..dim {
                        gx.extend_from_slice(&gd[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(Tensor::new(&shape, gx))]
            }),
        )
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&self, axis: usize) -> Var {
        let dim = self.shape()[axis];
        assert!(dim > 0, "mean over an empty axis");
        self.sum_axis(axis).scale(1.0 / dim as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::check_grad;

    #[test]
    fn mean_axis_values() {
        let x = Var::constant(Tensor::new(&[2, 2], vec![1.0, 3.0, 3.0, 5.0]));
        assert_eq!(x.mean_axis(0).value().data(), &[2.0, 4.0]);
        assert_eq!(x.mean_axis(1).value().data(), &[2.0, 4.0]);
    }

    #[test]
    fn reduction_gradients() {
        let x = Tensor::from_fn(&[3, 4, 2], |i| (i as f64 * 0.3).sin());
        check_grad(&x, |v| v.sum_axis(1).square().sum(), 1e-7);
        check_grad(&x, |v| v.mean_axis(0).square().mean(), 1e-7);
    }
}
