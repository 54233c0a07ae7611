use crate::exec;
use crate::tensor::Tensor;
use crate::var::Var;

const CHUNK: usize = 1 << 13;

fn map_par(x: &Tensor, f: impl Fn(f64) -> f64 + Sync + Send) -> Tensor {
    let mut out = x.clone();
    exec::for_each_chunk_mut(out.data_mut(), CHUNK, CHUNK * 4, |_, c| {
        c.iter_mut().for_each(|v| *v = f(*v))
    });
    out
}

fn zip_par(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    let mut out = a.clone();
    let bd = b.data();
    exec::for_each_chunk_mut(out.data_mut(), CHUNK, CHUNK * 4, |ci, c| {
        let off = ci * CHUNK;
        for (j, v) in c.iter_mut().enumerate() {
            *v = f(*v, bd[off + j]);
        }
    });
    out
}

impl Var {
    /// Elementwise map with a derivative expressed through `(x, y)`.
    fn unary(
        &self,
        f: impl Fn(f64) -> f64 + Sync + Send,
        df: impl Fn(f64, f64) -> f64 + Sync + Send + 'static,
    ) -> Var {
        let out = map_par(self.value(), f);
        let x = self.clone();
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let xv = x.value().data();
                let yv = y.data();
                let mut gx = g.clone();
                exec::for_each_chunk_mut(gx.data_mut(), CHUNK, CHUNK * 4, |ci, c| {
                    let off = ci * CHUNK;
                    for (j, v) in c.iter_mut().enumerate() {
                        *v *= df(xv[off + j], yv[off + j]);
                    }
                });
                vec![Some(gx)]
            }),
        )
    }

    pub fn add(&self, other: &Var) -> Var {
        let out = zip_par(self.value(), other.value(), |a, b| a + b);
        Var::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(|g, _, need| {
                vec![
                    need[0].then(|| g.clone()),
                    need[1].then(|| g.clone()),
                ]
            }),
        )
    }

    pub fn sub(&self, other: &Var) -> Var {
        let out = zip_par(self.value(), other.value(), |a, b| a - b);
        Var::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(|g, _, need| {
                vec![
                    need[0].then(|| g.clone()),
                    need[1].then(|| g.map(|x| -x)),
                ]
            }),
        )
    }

    pub fn mul(&self, other: &Var) -> Var {
        let out = zip_par(self.value(), other.value(), |a, b| a * b);
        let (a, b) = (self.clone(), other.clone());
        Var::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, need| {
                vec![
                    need[0].then(|| zip_par(g, b.value(), |x, y| x * y)),
                    need[1].then(|| zip_par(g, a.value(), |x, y| x * y)),
                ]
            }),
        )
    }

    /// `self + bias` where `bias` matches the trailing dimensions of `self`.
    pub fn add_suffix(&self, bias: &Var) -> Var {
        let xs = self.shape();
        let bs = bias.shape();
        assert!(
            bs.len() <= xs.len() && xs[xs.len() - bs.len()..] == *bs,
            "cannot broadcast {bs:?} onto {xs:?}"
        );
        let inner = bias.value().numel();
        let bd = bias.value().data().to_vec();
        let mut out = self.value().clone();
        exec::for_each_chunk_mut(out.data_mut(), inner, inner, |_, c| {
            for (v, b) in c.iter_mut().zip(&bd) {
                *v += b;
            }
        });
        let bshape = bs.to_vec();
        Var::from_op(
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |g, _, need| {
                let gb = need[1].then(|| {
                    let mut acc = vec![0.0; inner];
                    for c in g.data().chunks(inner) {
                        for (a, v) in acc.iter_mut().zip(c) {
                            *a += v;
                        }
                    }
                    Tensor::new(&bshape, acc)
                });
                vec![need[0].then(|| g.clone()), gb]
            }),
        )
    }

    /// `self * scale` where `scale` matches the trailing dimensions of `self`.
    pub fn mul_suffix(&self, scale: &Var) -> Var {
        let xs = self.shape();
        let ss = scale.shape();
        assert!(
            ss.len() <= xs.len() && xs[xs.len() - ss.len()..] == *ss,
            "cannot broadcast {ss:?} onto {xs:?}"
        );
        let inner = scale.value().numel();
        let sd = scale.value().data().to_vec();
        let mut out = self.value().clone();
        exec::for_each_chunk_mut(out.data_mut(), inner, inner, |_, c| {
            for (v, s) in c.iter_mut().zip(&sd) {
                *v *= s;
            }
        });
        let sshape = ss.to_vec();
        let (x, s) = (self.clone(), scale.clone());
        Var::from_op(
            out,
            vec![self.clone(), scale.clone()],
            Box::new(move |g, _, need| {
                let gx = need[0].then(|| {
                    let sd = s.value().data();
                    let mut gx = g.clone();
                    for c in gx.data_mut().chunks_mut(inner) {
                        for (v, s) in c.iter_mut().zip(sd) {
                            *v *= s;
                        }
                    }
                    gx
                });
                let gs = need[1].then(|| {
                    let mut acc = vec![0.0; inner];
                    for (gc, xc) in g.data().chunks(inner).zip(x.value().data().chunks(inner)) {
                        for ((a, gv), xv) in acc.iter_mut().zip(gc).zip(xc) {
                            *a += gv * xv;
                        }
                    }
                    Tensor::new(&sshape, acc)
                });
                vec![gx, gs]
            }),
        )
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Var {
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.unary(move |x| x + c, |_, _| 1.0)
    }

    pub fn square(&self) -> Var {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn abs(&self) -> Var {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `sqrt(x + eps)`.
    pub fn sqrt_eps(&self, eps: f64) -> Var {
        self.unary(move |x| (x + eps).sqrt(), |_, y| 0.5 / y)
    }

    pub fn ln(&self) -> Var {
        self.unary(f64::ln, |x, _| 1.0 / x)
    }

    pub fn exp(&self) -> Var {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn sigmoid(&self) -> Var {
        self.unary(
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            |_, y| y * (1.0 - y),
        )
    }

    pub fn tanh(&self) -> Var {
        self.unary(f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&self) -> Var {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        self.unary(
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self) -> Var {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        self.unary(
            |x| 0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh()),
            |x, _| {
                let u = C * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                let du = C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            },
        )
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        self.unary(
            move |x| x.clamp(lo, hi),
            move |x, _| if x >= lo && x <= hi { 1.0 } else { 0.0 },
        )
    }

    /// Multiply by a constant tensor (e.g. a dropout mask).
    pub fn mul_const(&self, mask: &Tensor) -> Var {
        self.mul(&Var::constant(mask.clone()))
    }
}
