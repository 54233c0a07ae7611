use accentvc_tensor::{Binder, Conv1dSpec, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

use crate::audio::PitchTrack;
use crate::config::GeneratorConfig;
use crate::error::{Error, Result};
use crate::layers::{broadcast_time, repeat_time, Conv};

pub const GROUP: &str = "generator";

/// `[B, T, d_pron + d_z + 1]` rows on the 5 ms grid: upsampled pronunciation,
/// broadcast acoustic embedding, `ln(1 + f0)`.
pub struct DecoderInput(pub Var);

/// Build the decoder input. `pron` is `[B, T_char, d]`, `z` is `[B, d_z]`
/// and there is one pitch track per batch item with `factor * T_char` frames.
pub fn assemble_decoder_input(pron: &Var, z: &Var, pitch: &[&PitchTrack], factor: usize) -> Result<DecoderInput> {
    let ps = pron.shape();
    let (b, t_char) = (ps[0], ps[1]);
    let t = t_char * factor;
    if z.shape()[0] != b || pitch.len() != b {
        return Err(Error::Shape(format!(
            "batch sizes differ: pron {b}, z {}, pitch {}",
            z.shape()[0],
            pitch.len()
        )));
    }
    if let Some(p) = pitch.iter().find(|p| p.len() != t) {
        return Err(Error::Shape(format!(
            "{t_char} char frames upsample to {t} frames but the pitch track has {}",
            p.len()
        )));
    }
    let f0 = Tensor::new(
        &[b, t, 1],
        pitch
            .iter()
            .flat_map(|p| p.f0_hz.iter().map(|&f| (f as f64).ln_1p()))
            .collect(),
    );
    Ok(DecoderInput(Var::concat(
        &[repeat_time(pron, factor), broadcast_time(z, t), Var::constant(f0)],
        2,
    )))
}

#[derive(Clone, Debug)]
struct Upsample {
    w: ParamId,
    b: ParamId,
    rate: usize,
    kernel: usize,
}

#[derive(Clone, Debug)]
struct ResBlock {
    /// (dilated conv, plain conv) pairs.
    convs: Vec<(Conv, Conv)>,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pre: Conv,
    ups: Vec<Upsample>,
    /// `resblocks[stage][j]`.
    resblocks: Vec<Vec<ResBlock>>,
    post: Conv,
    slope: f64,
    hop: usize,
}

impl Generator {
    pub fn new(store: &mut ParamStore, cfg: &GeneratorConfig, in_dims: usize, rng: &mut impl Rng) -> Self {
        let g = GROUP;
        let std = Some(cfg.init_std);
        let mut ch = cfg.base_channels;
        let pre = Conv::new(store, "gen.pre", g, in_dims, ch, cfg.pre_kernel, Conv1dSpec::same(cfg.pre_kernel, 1), None, rng);
        let mut ups = Vec::new();
        let mut resblocks = Vec::new();
        for (i, (&r, &k)) in cfg.upsample_rates.iter().zip(&cfg.upsample_kernels).enumerate() {
            let out = ch / 2;
            ups.push(Upsample {
                w: store.add_normal(format!("gen.up{i}.w"), g, &[ch, out, k], cfg.init_std, rng),
                b: store.add(format!("gen.up{i}.b"), g, Tensor::zeros(&[out])),
                rate: r,
                kernel: k,
            });
            let blocks = cfg
                .resblock_kernels
                .iter()
                .zip(&cfg.resblock_dilations)
                .enumerate()
                .map(|(j, (&rk, dils))| ResBlock {
                    convs: dils
                        .iter()
                        .enumerate()
                        .map(|(m, &d)| {
                            let n = format!("gen.res{i}.{j}.{m}");
                            (
                                Conv::new(store, &format!("{n}.a"), g, out, out, rk, Conv1dSpec::same(rk, d), std, rng),
                                Conv::new(store, &format!("{n}.b"), g, out, out, rk, Conv1dSpec::same(rk, 1), std, rng),
                            )
                        })
                        .collect(),
                })
                .collect();
            resblocks.push(blocks);
            ch = out;
        }
        let post = Conv::new(store, "gen.post", g, ch, 1, cfg.post_kernel, Conv1dSpec::same(cfg.post_kernel, 1), None, rng);
        Self {
            pre,
            ups,
            resblocks,
            post,
            slope: cfg.leaky_slope,
            hop: cfg.upsample_rates.iter().product(),
        }
    }

    /// Samples produced per input frame.
    pub fn hop(&self) -> usize {
        self.hop
    }

    /// `[B, T, C]` decoder input to `[B, hop * T]` audio in (-1, 1).
    pub fn forward(&self, p: &Binder, input: &DecoderInput) -> Var {
        let s = input.0.shape();
        let (b, t) = (s[0], s[1]);
        let mut x = self.pre.forward(p, &input.0.permute(&[0, 2, 1]));
        let mut len = t;
        for (up, blocks) in self.ups.iter().zip(&self.resblocks) {
            x = x.leaky_relu(self.slope);
            len *= up.rate;
            let crop = (up.kernel - up.rate) / 2;
            x = x.conv_transpose1d(&p.get(up.w), Some(&p.get(up.b)), up.rate, crop, len);
            let mut acc: Option<Var> = None;
            for blk in blocks {
                let mut h = x.clone();
                for (c1, c2) in &blk.convs {
                    let y = c1.forward(p, &h.leaky_relu(self.slope));
                    let y = c2.forward(p, &y.leaky_relu(self.slope));
                    h = h.add(&y);
                }
                acc = Some(match acc {
                    Some(a) => a.add(&h),
                    None => h,
                });
            }
            if let Some(a) = acc {
                x = a.scale(1.0 / blocks.len() as f64);
            }
        }
        let y = self.post.forward(p, &x.leaky_relu(self.slope)).tanh();
        y.reshape(&[b, len])
    }
}
