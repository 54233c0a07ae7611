use std::rc::Rc;

use crate::tensor::{strides_of, Tensor};
use crate::var::Var;

/// Split a shape around `axis` into `(outer, dim, inner)` extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Var {
    pub fn reshape(&self, shape: &[usize]) -> Var {
        let old = self.shape().to_vec();
        let out = self.value().clone().reshape(shape);
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(g.clone().reshape(&old))]),
        )
    }

    /// Reorder axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Var {
        let shape = self.shape().to_vec();
        assert_eq!(axes.len(), shape.len(), "permute rank mismatch");
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let in_strides = strides_of(&shape);
        let perm_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let index = Rc::new(permute_index(&out_shape, &perm_strides));
        let out = gather(self.value(), &index, &out_shape);
        let idx = index.clone();
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(scatter_add(g, &idx, &shape))]),
        )
    }

    /// Swap the last two axes.
    pub fn transpose_last(&self) -> Var {
        let n = self.shape().len();
        assert!(n >= 2);
        let mut axes: Vec<usize> = (0..n).collect();
        axes.swap(n - 1, n - 2);
        self.permute(&axes)
    }

    /// `out.flat[i] = self.flat[index[i]]`, shaped `out_shape`.
    ///
    /// Indices may repeat; the backward pass scatter-adds.
    pub fn gather(&self, index: Rc<Vec<usize>>, out_shape: &[usize]) -> Var {
        let in_shape = self.shape().to_vec();
        let out = gather(self.value(), &index, out_shape);
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(scatter_add(g, &index, &in_shape))]),
        )
    }

    /// Select entries `indices` along `axis` (repeats allowed).
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Var {
        let shape = self.shape();
        let (outer, dim, inner) = split_axis(shape, axis);
        let mut index = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                assert!(i < dim, "index {i} out of range for axis of size {dim}");
                let base = (o * dim + i) * inner;
                index.extend(base..base + inner);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = indices.len();
        self.gather(Rc::new(index), &out_shape)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Var {
        assert!(start + len <= self.shape()[axis], "slice out of range");
        let idx: Vec<usize> = (start..start + len).collect();
        self.index_select(axis, &idx)
    }

    /// Pad `axis` with `left`/`right` zeros.
    pub fn pad_zeros(&self, axis: usize, left: usize, right: usize) -> Var {
        let zl = zeros_like_axis(self.shape(), axis, left);
        let zr = zeros_like_axis(self.shape(), axis, right);
        let mut parts = Vec::new();
        if left > 0 {
            parts.push(Var::constant(zl));
        }
        parts.push(self.clone());
        if right > 0 {
            parts.push(Var::constant(zr));
        }
        Var::concat(&parts, axis)
    }

    pub fn concat(parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0].shape().to_vec();
        for p in parts {
            let s = p.shape();
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            for (d, (&a, &b)) in s.iter().zip(&first).enumerate() {
                assert!(d == axis || a == b, "concat shape mismatch {s:?} vs {first:?}");
            }
        }
        let dims: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = dims.iter().sum();
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &d) in parts.iter().zip(&dims) {
                let src = p.value().data();
                data.extend_from_slice(&src[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let out = Tensor::new(&out_shape, data);
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        Var::from_op(
            out,
            parts.to_vec(),
            Box::new(move |g, _, need| {
                let gd = g.data();
                let mut offsets = Vec::with_capacity(dims.len());
                let mut acc = 0;
                for &d in &dims {
                    offsets.push(acc);
                    acc += d;
                }
                dims.iter()
                    .zip(&offsets)
                    .zip(&shapes)
                    .zip(need)
                    .map(|(((&d, &off), shape), &n)| {
                        n.then(|| {
                            let mut data = Vec::with_capacity(outer * d * inner);
                            for o in 0..outer {
                                let base = (o * total + off) * inner;
                                data.extend_from_slice(&gd[base..base + d * inner]);
                            }
                            Tensor::new(shape, data)
                        })
                    })
                    .collect()
            }),
        )
    }
}

fn zeros_like_axis(shape: &[usize], axis: usize, n: usize) -> Tensor {
    let mut s = shape.to_vec();
    s[axis] = n;
    Tensor::zeros(&s)
}

fn permute_index(out_shape: &[usize], perm_strides: &[usize]) -> Vec<usize> {
    let n: usize = out_shape.iter().product();
    let mut index = Vec::with_capacity(n);
    let rank = out_shape.len();
    let mut counter = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..n {
        index.push(src);
        for d in (0..rank).rev() {
            counter[d] += 1;
            src += perm_strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            src -= perm_strides[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    index
}

pub(crate) fn gather(x: &Tensor, index: &[usize], out_shape: &[usize]) -> Tensor {
    let xd = x.data();
    Tensor::new(out_shape, index.iter().map(|&i| xd[i]).collect())
}

pub(crate) fn scatter_add(g: &Tensor, index: &[usize], shape: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(shape);
    let od = out.data_mut();
    for (&i, &v) in index.iter().zip(g.data()) {
        od[i] += v;
    }
    out
}
