use accentvc_tensor::{Binder, Conv1dSpec, ParamStore, Var};
use rand::Rng;

use crate::config::DiscriminatorConfig;
use crate::error::{invalid, Result};
use crate::layers::Conv;

pub const GROUP: &str = "hifi_disc";

/// Scores and intermediate features of every sub-discriminator, MPD first.
pub struct DiscOutput {
    /// One `[B, n]` score map per sub-discriminator.
    pub scores: Vec<Var>,
    /// Per sub-discriminator, the activations of each layer.
    pub features: Vec<Vec<Var>>,
}

#[derive(Clone, Debug)]
struct SubDisc {
    layers: Vec<Conv>,
    post: Conv,
}

impl SubDisc {
    fn forward(&self, p: &Binder, x: &Var, slope: f64) -> (Var, Vec<Var>) {
        let mut h = x.clone();
        let mut feats = Vec::with_capacity(self.layers.len() + 1);
        for l in &self.layers {
            h = l.forward(p, &h).leaky_relu(slope);
            feats.push(h.clone());
        }
        let out = self.post.forward(p, &h);
        feats.push(out.clone());
        (out, feats)
    }
}

#[derive(Clone, Debug)]
pub struct HifiDiscriminators {
    periods: Vec<usize>,
    mpd: Vec<SubDisc>,
    msd: Vec<SubDisc>,
    slope: f64,
    min_samples: usize,
}

impl HifiDiscriminators {
    pub fn new(store: &mut ParamStore, cfg: &DiscriminatorConfig, rng: &mut impl Rng) -> Self {
        let g = GROUP;
        let k = cfg.mpd_kernel;
        let mpd = cfg
            .mpd_periods
            .iter()
            .map(|&period| {
                let mut cin = 1;
                let n = cfg.mpd_channels.len();
                let layers = cfg
                    .mpd_channels
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        let stride = if i + 1 < n { cfg.mpd_stride } else { 1 };
                        let spec = Conv1dSpec::valid().with_stride(stride).with_padding(k / 2, k / 2);
                        let conv = Conv::new(store, &format!("mpd{period}.{i}"), g, cin, c, k, spec, None, rng);
                        cin = c;
                        conv
                    })
                    .collect();
                let post = Conv::new(store, &format!("mpd{period}.post"), g, cin, 1, 3, Conv1dSpec::same(3, 1), None, rng);
                SubDisc { layers, post }
            })
            .collect();
        let msd = (0..cfg.msd_scales)
            .map(|s| {
                let mut cin = 1;
                let layers = (0..cfg.msd_channels.len())
                    .map(|i| {
                        let (c, kk) = (cfg.msd_channels[i], cfg.msd_kernels[i]);
                        let spec = Conv1dSpec::valid()
                            .with_stride(cfg.msd_strides[i])
                            .with_groups(cfg.msd_groups[i])
                            .with_padding(kk / 2, kk / 2);
                        let conv = Conv::new(store, &format!("msd{s}.{i}"), g, cin, c, kk, spec, None, rng);
                        cin = c;
                        conv
                    })
                    .collect();
                let post = Conv::new(store, &format!("msd{s}.post"), g, cin, 1, 3, Conv1dSpec::same(3, 1), None, rng);
                SubDisc { layers, post }
            })
            .collect();
        Self {
            periods: cfg.mpd_periods.clone(),
            mpd,
            msd,
            slope: cfg.leaky_slope,
            min_samples: cfg.min_samples,
        }
    }

    pub fn count(&self) -> usize {
        self.mpd.len() + self.msd.len()
    }

    /// Feature layers per sub-discriminator, post conv included.
    pub fn layer_counts(&self) -> Vec<usize> {
        self.mpd.iter().chain(&self.msd).map(|d| d.layers.len() + 1).collect()
    }

    /// Score `audio[B, L]`.
    pub fn forward(&self, p: &Binder, audio: &Var) -> Result<DiscOutput> {
        let s = audio.shape();
        if s.len() != 2 || s[1] < self.min_samples {
            return Err(invalid(format!(
                "discriminators need [B, L >= {}] audio, got {s:?}",
                self.min_samples
            )));
        }
        let (b, len) = (s[0], s[1]);
        let mut scores = Vec::with_capacity(self.count());
        let mut features = Vec::with_capacity(self.count());
        for (&period, d) in self.periods.iter().zip(&self.mpd) {
            let padded_len = len.div_ceil(period) * period;
            let x = audio.pad_zeros(1, 0, padded_len - len);
            let rows = padded_len / period;
            // [B, rows, period] -> [B, period, rows] -> one sequence per column
            let x = x.reshape(&[b, rows, period]).permute(&[0, 2, 1]).reshape(&[b * period, 1, rows]);
            let (out, feats) = d.forward(p, &x, self.slope);
            let n = out.value().numel() / b;
            scores.push(out.reshape(&[b, n]));
            features.push(feats);
        }
        let mut x = audio.reshape(&[b, 1, len]);
        for (i, d) in self.msd.iter().enumerate() {
            if i > 0 {
                x = x.avg_pool1d(4, 2, 2);
            }
            let (out, feats) = d.forward(p, &x, self.slope);
            let n = out.value().numel() / b;
            scores.push(out.reshape(&[b, n]));
            features.push(feats);
        }
        Ok(DiscOutput { scores, features })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use accentvc_tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eight_sub_discriminators() {
        let cfg = Config::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let d = HifiDiscriminators::new(&mut store, &cfg.discriminator, &mut rng);
        let x = Var::input(Tensor::from_fn(&[1, 17_920], |i| (i as f64 * 0.05).sin() * 0.5));
        let p = Binder::frozen(&store);
        let out = d.forward(&p, &x).unwrap();
        assert_eq!(out.scores.len(), 8);
        let counts: Vec<usize> = out.features.iter().map(Vec::len).collect();
        assert_eq!(counts, d.layer_counts());
        let again = d.forward(&p, &x).unwrap();
        for (a, b) in out.scores.iter().zip(&again.scores) {
            assert_eq!(a.value(), b.value());
        }
        let short = Var::input(Tensor::zeros(&[1, 639]));
        assert!(d.forward(&p, &short).is_err());
    }
}
