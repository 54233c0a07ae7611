use crate::exec;
use crate::tensor::{gemm, Tensor};
use crate::var::Var;

/// Batched `op(a)·op(b)` for `[B, ·, ·]` buffers.
#[allow(clippy::too_many_arguments)]
fn batched(
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
) -> Vec<f64> {
    let mut c = vec![0.0; batch * m * n];
    if m * n == 0 {
        return c;
    }
    exec::for_each_chunk_mut(&mut c, m * n, m * n * k, |bi, cb| {
        gemm(
            m,
            k,
            n,
            &a[bi * m * k..(bi + 1) * m * k],
            ta,
            &b[bi * k * n..(bi + 1) * k * n],
            tb,
            cb,
            false,
        );
    });
    c
}

impl Var {
    /// `[M, K] · [K, N]`.
    pub fn matmul(&self, other: &Var) -> Var {
        let (a, b) = (self.shape(), other.shape());
        assert!(a.len() == 2 && b.len() == 2 && a[1] == b[0], "matmul shapes {a:?} · {b:?}");
        let a3 = self.reshape(&[1, a[0], a[1]]);
        let b3 = other.reshape(&[1, b[0], b[1]]);
        let (m, n) = (a[0], b[1]);
        a3.bmm(&b3, false, false).reshape(&[m, n])
    }

    /// Batched matmul of `[B, M, K]`-shaped operands (optionally transposed in
    /// their last two axes).
    pub fn bmm(&self, other: &Var, trans_a: bool, trans_b: bool) -> Var {
        let (sa, sb) = (self.shape(), other.shape());
        assert!(sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0], "bmm shapes {sa:?} {sb:?}");
        let batch = sa[0];
        let (m, k) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        assert_eq!(k, kb, "bmm inner dimension mismatch {sa:?} {sb:?}");
        let out = batched(
            batch,
            m,
            k,
            n,
            self.value().data(),
            trans_a,
            other.value().data(),
            trans_b,
        );
        let (a, b) = (self.clone(), other.clone());
        Var::from_op(
            Tensor::new(&[batch, m, n], out),
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, need| {
                let gd = g.data();
                let ad = a.value().data();
                let bd = b.value().data();
                // C = A·B  =>  dA = dC·Bᵀ, dB = Aᵀ·dC (adjusted for stored transposes)
                let ga = need[0].then(|| {
                    let v = if trans_a {
                        // A stored [k, m]: dAᵀ... = B·dCᵀ -> [k, m]
                        batched(batch, k, n, m, bd, trans_b, gd, true)
                    } else {
                        batched(batch, m, n, k, gd, false, bd, !trans_b)
                    };
                    Tensor::new(a.shape(), v)
                });
                let gb = need[1].then(|| {
                    let v = if trans_b {
                        // B stored [n, k]: dBstored = dCᵀ·A -> [n, k]
                        batched(batch, n, m, k, gd, true, ad, trans_a)
                    } else {
                        batched(batch, k, m, n, ad, !trans_a, gd, false)
                    };
                    Tensor::new(b.shape(), v)
                });
                vec![ga, gb]
            }),
        )
    }

    /// Affine map over the last axis: `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&self, w: &Var, b: Option<&Var>) -> Var {
        let shape = self.shape().to_vec();
        let d_in = *shape.last().expect("linear on a scalar");
        let rows = self.value().numel() / d_in.max(1);
        let d_out = w.shape()[1];
        let y = self.reshape(&[rows, d_in]).matmul(w);
        let y = match b {
            Some(b) => y.add_suffix(b),
            None => y,
        };
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = d_out;
        y.reshape(&out_shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::check_grad;

    #[test]
    fn matmul_small() {
        let a = Var::constant(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = Var::constant(Tensor::new(&[2, 1], vec![1.0, -1.0]));
        assert_eq!(a.matmul(&b).value().data(), &[-1.0, -1.0]);
    }

    #[test]
    fn bmm_gradients_all_transposes() {
        let a = Tensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.31).sin());
        let b = Tensor::from_fn(&[2, 4, 5], |i| (i as f64 * 0.17).cos());
        let at = Tensor::from_fn(&[2, 4, 3], |i| (i as f64 * 0.23).sin());
        let bt = Tensor::from_fn(&[2, 5, 4], |i| (i as f64 * 0.13).cos());
        let w = Var::constant(Tensor::from_fn(&[2, 3, 5], |i| (i as f64 * 0.7).sin()));
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let bv = Var::constant(bb.clone());
                check_grad(aa, |v| v.bmm(&bv, ta, tb).mul(&w).sum(), 1e-7);
                let av = Var::constant(aa.clone());
                check_grad(bb, |v| av.bmm(v, ta, tb).mul(&w).sum(), 1e-7);
            }
        }
    }

    #[test]
    fn linear_gradients() {
        let x = Tensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.31).sin());
        let w = Var::constant(Tensor::from_fn(&[4, 6], |i| (i as f64 * 0.11).cos()));
        let b = Var::constant(Tensor::from_fn(&[6], |i| i as f64 * 0.1));
        check_grad(&x, |v| v.linear(&w, Some(&b)).square().sum(), 1e-7);
    }

    proptest::proptest! {
        #[test]
        fn transposed_bmm_matches_explicit(
            b in 1usize..3, m in 1usize..5, k in 1usize..5, n in 1usize..5,
            ta: bool, tb: bool, seed in 0u64..1000,
        ) {
            let mut s = seed;
            let mut next = move || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
            };
            let a = Tensor::from_fn(&[b, m, k], |_| next());
            let c = Tensor::from_fn(&[b, k, n], |_| next());
            let av = Var::constant(a.clone());
            let cv = Var::constant(c.clone());
            let want = av.bmm(&cv, false, false);
            let a_in = if ta { av.transpose_last() } else { av.clone() };
            let c_in = if tb { cv.transpose_last() } else { cv.clone() };
            let got = a_in.bmm(&c_in, ta, tb);
            for (x, y) in got.value().data().iter().zip(want.value().data()) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
