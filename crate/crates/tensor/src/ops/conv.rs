//! 1-D convolution family over `[batch, channels, time]` tensors.

use crate::exec;
use crate::tensor::{gemm, Tensor};
use crate::var::Var;

/// Geometry of a strided, dilated, grouped 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
}

impl Conv1dSpec {
    /// Stride 1, no dilation, no padding.
    pub fn valid() -> Self {
        Self {
            stride: 1,
            dilation: 1,
            pad_left: 0,
            pad_right: 0,
            groups: 1,
        }
    }

    /// Length-preserving padding for stride 1 (left gets the smaller half).
    pub fn same(kernel: usize, dilation: usize) -> Self {
        let total = dilation * (kernel - 1);
        Self {
            stride: 1,
            dilation,
            pad_left: total / 2,
            pad_right: total - total / 2,
            groups: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_padding(mut self, left: usize, right: usize) -> Self {
        self.pad_left = left;
        self.pad_right = right;
        self
    }

    pub fn out_len(&self, len: usize, kernel: usize) -> usize {
        let padded = len + self.pad_left + self.pad_right;
        let span = self.dilation * (kernel - 1) + 1;
        assert!(
            padded >= span,
            "input of length {len} too short for kernel span {span}"
        );
        (padded - span) / self.stride + 1
    }
}

/// Unfold one group of one batch item into `[cin_g * k, out_len]`.
#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    len: usize,
    c0: usize,
    cin_g: usize,
    k: usize,
    spec: &Conv1dSpec,
    out_len: usize,
    cols: &mut [f64],
) {
    for c in 0..cin_g {
        let xr = &x[(c0 + c) * len..(c0 + c + 1) * len];
        for kk in 0..k {
            let row = &mut cols[(c * k + kk) * out_len..(c * k + kk + 1) * out_len];
            let shift = (kk * spec.dilation) as isize - spec.pad_left as isize;
            for (t, v) in row.iter_mut().enumerate() {
                let i = (t * spec.stride) as isize + shift;
                *v = if i >= 0 && (i as usize) < len { xr[i as usize] } else { 0.0 };
            }
        }
    }
}

/// Scatter-add of [`im2col`]'s layout back into a `[cin, len]` buffer.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    len: usize,
    c0: usize,
    cin_g: usize,
    k: usize,
    spec: &Conv1dSpec,
    out_len: usize,
    dx: &mut [f64],
) {
    for c in 0..cin_g {
        let dr = &mut dx[(c0 + c) * len..(c0 + c + 1) * len];
        for kk in 0..k {
            let row = &cols[(c * k + kk) * out_len..(c * k + kk + 1) * out_len];
            let shift = (kk * spec.dilation) as isize - spec.pad_left as isize;
            for (t, v) in row.iter().enumerate() {
                let i = (t * spec.stride) as isize + shift;
                if i >= 0 && (i as usize) < len {
                    dr[i as usize] += v;
                }
            }
        }
    }
}

impl Var {
    /// Cross-correlation `x[B, Cin, L] ⋆ w[Cout, Cin/groups, K] (+ b[Cout])`.
    pub fn conv1d(&self, w: &Var, b: Option<&Var>, spec: Conv1dSpec) -> Var {
        let xs = self.shape();
        let ws = w.shape();
        assert!(xs.len() == 3 && ws.len() == 3, "conv1d expects 3-D x and w");
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, cin_g, k) = (ws[0], ws[1], ws[2]);
        let groups = spec.groups;
        assert!(
            cin == cin_g * groups && cout % groups == 0,
            "conv1d channels: x {xs:?}, w {ws:?}, groups {groups}"
        );
        let cout_g = cout / groups;
        let out_len = spec.out_len(len, k);
        let kdim = cin_g * k;

        let xd = self.value().data();
        let wd = w.value().data();
        let mut out = vec![0.0; batch * cout * out_len];
        exec::for_each_chunk_mut(
            &mut out,
            cout * out_len,
            cout * out_len * kdim,
            |bi, ob| {
                let xb = &xd[bi * cin * len..(bi + 1) * cin * len];
                let mut cols = vec![0.0; kdim * out_len];
                for g in 0..groups {
                    im2col(xb, len, g * cin_g, cin_g, k, &spec, out_len, &mut cols);
                    gemm(
                        cout_g,
                        kdim,
                        out_len,
                        &wd[g * cout_g * kdim..(g + 1) * cout_g * kdim],
                        false,
                        &cols,
                        false,
                        &mut ob[g * cout_g * out_len..(g + 1) * cout_g * out_len],
                        false,
                    );
                }
            },
        );
        if let Some(b) = b {
            assert_eq!(b.shape(), &[cout], "conv1d bias shape");
            let bd = b.value().data();
            for (ci, row) in out.chunks_mut(out_len).enumerate() {
                let bv = bd[ci % cout];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }

        let mut parents = vec![self.clone(), w.clone()];
        if let Some(b) = b {
            parents.push(b.clone());
        }
        let (x, wv) = (self.clone(), w.clone());
        Var::from_op(
            Tensor::new(&[batch, cout, out_len], out),
            parents,
            Box::new(move |g, _, need| {
                let gd = g.data();
                let xd = x.value().data();
                let wd = wv.value().data();
                let gx = need[0].then(|| {
                    let mut dx = vec![0.0; batch * cin * len];
                    exec::for_each_chunk_mut(&mut dx, cin * len, cout * out_len * kdim, |bi, dxb| {
                        let gb = &gd[bi * cout * out_len..(bi + 1) * cout * out_len];
                        let mut dcols = vec![0.0; kdim * out_len];
                        for grp in 0..groups {
                            gemm(
                                kdim,
                                cout_g,
                                out_len,
                                &wd[grp * cout_g * kdim..(grp + 1) * cout_g * kdim],
                                true,
                                &gb[grp * cout_g * out_len..(grp + 1) * cout_g * out_len],
                                false,
                                &mut dcols,
                                false,
                            );
                            col2im(&dcols, len, grp * cin_g, cin_g, k, &spec, out_len, dxb);
                        }
                    });
                    Tensor::new(&[batch, cin, len], dx)
                });
                let gw = need[1].then(|| {
                    let partials = exec::map_range(batch, cout * out_len * kdim, |bi| {
                        let xb = &xd[bi * cin * len..(bi + 1) * cin * len];
                        let gb = &gd[bi * cout * out_len..(bi + 1) * cout * out_len];
                        let mut dw = vec![0.0; cout * kdim];
                        let mut cols = vec![0.0; kdim * out_len];
                        for grp in 0..groups {
                            im2col(xb, len, grp * cin_g, cin_g, k, &spec, out_len, &mut cols);
                            gemm(
                                cout_g,
                                out_len,
                                kdim,
                                &gb[grp * cout_g * out_len..(grp + 1) * cout_g * out_len],
                                false,
                                &cols,
                                true,
                                &mut dw[grp * cout_g * kdim..(grp + 1) * cout_g * kdim],
                                false,
                            );
                        }
                        dw
                    });
                    let mut dw = vec![0.0; cout * kdim];
                    for p in partials {
                        dw.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
                    }
                    Tensor::new(&[cout, cin_g, k], dw)
                });
                let mut grads = vec![gx, gw];
                if need.len() == 3 {
                    grads.push(need[2].then(|| bias_grad(gd, batch, cout, out_len)));
                }
                grads
            }),
        )
    }

    /// Transposed convolution `x[B, Cin, L]` with `w[Cin, Cout, K]`.
    ///
    /// The full output has `(L - 1) * stride + K` samples; `crop_left` samples
    /// are dropped from the front and `out_len` are kept.
    pub fn conv_transpose1d(
        &self,
        w: &Var,
        b: Option<&Var>,
        stride: usize,
        crop_left: usize,
        out_len: usize,
    ) -> Var {
        let xs = self.shape();
        let ws = w.shape();
        assert!(xs.len() == 3 && ws.len() == 3 && xs[1] == ws[0], "conv_transpose1d shapes {xs:?} {ws:?}");
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[1], ws[2]);
        let full = (len.max(1) - 1) * stride + k;
        assert!(crop_left + out_len <= full, "conv_transpose1d crop exceeds output");
        let rows = cout * k;

        let xd = self.value().data();
        let wd = w.value().data();
        let mut out = vec![0.0; batch * cout * out_len];
        exec::for_each_chunk_mut(&mut out, cout * out_len, rows * cin * len, |bi, ob| {
            let xb = &xd[bi * cin * len..(bi + 1) * cin * len];
            let mut cols = vec![0.0; rows * len];
            gemm(rows, cin, len, wd, true, xb, false, &mut cols, false);
            for co in 0..cout {
                let orow = &mut ob[co * out_len..(co + 1) * out_len];
                for kk in 0..k {
                    let crow = &cols[(co * k + kk) * len..(co * k + kk + 1) * len];
                    for (l, v) in crow.iter().enumerate() {
                        let t = (l * stride + kk) as isize - crop_left as isize;
                        if t >= 0 && (t as usize) < out_len {
                            orow[t as usize] += v;
                        }
                    }
                }
            }
        });
        if let Some(b) = b {
            assert_eq!(b.shape(), &[cout], "conv_transpose1d bias shape");
            let bd = b.value().data();
            for (ci, row) in out.chunks_mut(out_len).enumerate() {
                let bv = bd[ci % cout];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }

        let mut parents = vec![self.clone(), w.clone()];
        if let Some(b) = b {
            parents.push(b.clone());
        }
        let (x, wv) = (self.clone(), w.clone());
        Var::from_op(
            Tensor::new(&[batch, cout, out_len], out),
            parents,
            Box::new(move |g, _, need| {
                let gd = g.data();
                let xd = x.value().data();
                let wd = wv.value().data();
                let gather_cols = |gb: &[f64]| {
                    let mut dcols = vec![0.0; rows * len];
                    for co in 0..cout {
                        let grow = &gb[co * out_len..(co + 1) * out_len];
                        for kk in 0..k {
                            let crow = &mut dcols[(co * k + kk) * len..(co * k + kk + 1) * len];
                            for (l, v) in crow.iter_mut().enumerate() {
                                let t = (l * stride + kk) as isize - crop_left as isize;
                                if t >= 0 && (t as usize) < out_len {
                                    *v = grow[t as usize];
                                }
                            }
                        }
                    }
                    dcols
                };
                let gx = need[0].then(|| {
                    let mut dx = vec![0.0; batch * cin * len];
                    exec::for_each_chunk_mut(&mut dx, cin * len, rows * cin * len, |bi, dxb| {
                        let dcols = gather_cols(&gd[bi * cout * out_len..(bi + 1) * cout * out_len]);
                        gemm(cin, rows, len, wd, false, &dcols, false, dxb, false);
                    });
                    Tensor::new(&[batch, cin, len], dx)
                });
                let gw = need[1].then(|| {
                    let partials = exec::map_range(batch, rows * cin * len, |bi| {
                        let dcols = gather_cols(&gd[bi * cout * out_len..(bi + 1) * cout * out_len]);
                        let mut dw = vec![0.0; cin * rows];
                        gemm(
                            cin,
                            len,
                            rows,
                            &xd[bi * cin * len..(bi + 1) * cin * len],
                            false,
                            &dcols,
                            true,
                            &mut dw,
                            false,
                        );
                        dw
                    });
                    let mut dw = vec![0.0; cin * rows];
                    for p in partials {
                        dw.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
                    }
                    Tensor::new(&[cin, cout, k], dw)
                });
                let mut grads = vec![gx, gw];
                if need.len() == 3 {
                    grads.push(need[2].then(|| bias_grad(gd, batch, cout, out_len)));
                }
                grads
            }),
        )
    }

    /// Average pooling over time with zero padding counted in the divisor.
    pub fn avg_pool1d(&self, kernel: usize, stride: usize, pad: usize) -> Var {
        let xs = self.shape().to_vec();
        assert_eq!(xs.len(), 3, "avg_pool1d expects [B, C, L]");
        let (rows, len) = (xs[0] * xs[1], xs[2]);
        assert!(len + 2 * pad >= kernel, "avg_pool1d input too short");
        let out_len = (len + 2 * pad - kernel) / stride + 1;
        let inv = 1.0 / kernel as f64;
        let xd = self.value().data();
        let mut out = vec![0.0; rows * out_len];
        for (r, orow) in out.chunks_mut(out_len).enumerate() {
            let xr = &xd[r * len..(r + 1) * len];
            for (t, o) in orow.iter_mut().enumerate() {
                let start = (t * stride) as isize - pad as isize;
                let mut s = 0.0;
                for j in 0..kernel as isize {
                    let i = start + j;
                    if i >= 0 && (i as usize) < len {
                        s += xr[i as usize];
                    }
                }
                *o = s * inv;
            }
        }
        Var::from_op(
            Tensor::new(&[xs[0], xs[1], out_len], out),
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut dx = vec![0.0; rows * len];
                for (r, grow) in g.data().chunks(out_len).enumerate() {
                    let dr = &mut dx[r * len..(r + 1) * len];
                    for (t, gv) in grow.iter().enumerate() {
                        let start = (t * stride) as isize - pad as isize;
                        for j in 0..kernel as isize {
                            let i = start + j;
                            if i >= 0 && (i as usize) < len {
                                dr[i as usize] += gv * inv;
                            }
                        }
                    }
                }
                vec![Some(Tensor::new(&xs, dx))]
            }),
        )
    }
}

fn bias_grad(gd: &[f64], batch: usize, cout: usize, out_len: usize) -> Tensor {
    let mut db = vec![0.0; cout];
    for b in 0..batch {
        for (c, d) in db.iter_mut().enumerate() {
            let base = (b * cout + c) * out_len;
            *d += gd[base..base + out_len].iter().sum::<f64>();
        }
    }
    Tensor::new(&[cout], db)
}
