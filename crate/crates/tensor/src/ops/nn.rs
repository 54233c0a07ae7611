use crate::exec;
use crate::tensor::Tensor;
use crate::var::Var;

impl Var {
    /// Softmax over the last axis.
    pub fn softmax_last(&self) -> Var {
        let d = *self.shape().last().expect("softmax on a scalar");
        let mut out = self.value().clone();
        exec::for_each_chunk_mut(out.data_mut(), d, d * 4, |_, row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        });
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let mut gx = g.clone();
                let yd = y.data();
                exec::for_each_chunk_mut(gx.data_mut(), d, d * 4, |ri, row| {
                    let yr = &yd[ri * d..(ri + 1) * d];
                    let dot: f64 = row.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (gv, yv) in row.iter_mut().zip(yr) {
                        *gv = yv * (*gv - dot);
                    }
                });
                vec![Some(gx)]
            }),
        )
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Var, beta: &Var, eps: f64) -> Var {
        let d = *self.shape().last().expect("layer_norm on a scalar");
        assert_eq!(gamma.shape(), &[d]);
        assert_eq!(beta.shape(), &[d]);
        let rows = self.value().numel() / d;
        let mut xhat = self.value().clone();
        let mut inv_std = vec![0.0; rows];
        {
            let xd = self.value().data();
            let stats: Vec<f64> = exec::map_range(rows, d * 4, |r| {
                let row = &xd[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
                1.0 / (var + eps).sqrt()
            });
            inv_std.copy_from_slice(&stats);
            exec::for_each_chunk_mut(xhat.data_mut(), d, d * 4, |r, row| {
                let mean = row.iter().sum::<f64>() / d as f64;
                row.iter_mut().for_each(|x| *x = (*x - mean) * stats[r]);
            });
        }
        let normed = Var::from_op(
            xhat,
            vec![self.clone()],
            Box::new(move |g, xh, _| {
                let mut gx = g.clone();
                let xhd = xh.data();
                exec::for_each_chunk_mut(gx.data_mut(), d, d * 6, |r, row| {
                    let xr = &xhd[r * d..(r + 1) * d];
                    let mg = row.iter().sum::<f64>() / d as f64;
                    let mgx: f64 = row.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for (gv, xv) in row.iter_mut().zip(xr) {
                        *gv = inv_std[r] * (*gv - mg - xv * mgx);
                    }
                });
                vec![Some(gx)]
            }),
        );
        normed.mul_suffix(gamma).add_suffix(beta)
    }

    /// Inverted dropout with an externally drawn keep-mask (1 = keep).
    pub fn dropout_with_mask(&self, keep: &Tensor, p: f64) -> Var {
        assert_eq!(keep.shape(), self.shape(), "dropout mask shape mismatch");
        let scale = 1.0 / (1.0 - p);
        self.mul_const(&keep.map(|k| k * scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::check_grad;

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Var::constant(Tensor::from_fn(&[3, 5], |i| i as f64 * 0.7 - 3.0));
        let y = x.softmax_last();
        for row in y.value().data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_and_layer_norm_gradients() {
        let x = Tensor::from_fn(&[2, 3, 6], |i| (i as f64 * 0.37).sin() * 2.0);
        let w = Var::constant(Tensor::from_fn(&[2, 3, 6], |i| (i as f64 * 0.91).cos()));
        check_grad(&x, |v| v.softmax_last().mul(&w).sum(), 1e-6);
        let gamma = Var::constant(Tensor::from_fn(&[6], |i| 1.0 + i as f64 * 0.1));
        let beta = Var::constant(Tensor::from_fn(&[6], |i| i as f64 * 0.05));
        check_grad(&x, |v| v.layer_norm(&gamma, &beta, 1e-5).mul(&w).sum(), 1e-6);
    }

    #[test]
    fn layer_norm_normalizes() {
        let x = Var::constant(Tensor::from_fn(&[4, 8], |i| (i * i) as f64));
        let ones = Var::constant(Tensor::full(&[8], 1.0));
        let zeros = Var::constant(Tensor::zeros(&[8]));
        let y = x.layer_norm(&ones, &zeros, 1e-9);
        for row in y.value().data().chunks(8) {
            let m = row.iter().sum::<f64>() / 8.0;
            let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 8.0;
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-6);
        }
    }
}
