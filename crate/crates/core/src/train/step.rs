//! One alternating update: HiFiGAN discriminators, accent discriminator,
//! then the generator path.

use accentvc_tensor::{AdamW, Binder, Gradients, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acoustic::stack_frames;
use crate::adversary::{loss_accent_adversarial, loss_accent_discriminator};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{AccentVcModel, ACCENT_DISC, GENERATOR_PATH, HIFI_DISC};
use crate::pronunciation::stack_chars;
use crate::vocoder::{loss_feature_matching, loss_hifigan_adversarial, loss_hifigan_discriminator, loss_mel, stack_mels};

use super::data::TrainItem;
use super::log::LossReport;
use super::schedule::learning_rate;

/// One optimizer per update phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub generator: AdamW,
    pub hifi_disc: AdamW,
    pub accent_disc: AdamW,
}

impl Optimizers {
    pub fn new(cfg: &TrainConfig) -> Self {
        let make = || AdamW::new(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
        Self {
            generator: make(),
            hifi_disc: make(),
            accent_disc: make(),
        }
    }

    pub fn named(&self) -> [(&'static str, &AdamW); 3] {
        [
            ("generator", &self.generator),
            ("hifi_disc", &self.hifi_disc),
            ("accent_disc", &self.accent_disc),
        ]
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut AdamW> {
        match name {
            "generator" => Some(&mut self.generator),
            "hifi_disc" => Some(&mut self.hifi_disc),
            "accent_disc" => Some(&mut self.accent_disc),
            _ => None,
        }
    }
}

fn finite(term: &'static str, v: &Var, iteration: u64) -> Result<f64> {
    let x = v.item();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFiniteLoss { term, iteration })
    }
}

fn clipped(loss: &Var, max_norm: f64) -> Gradients {
    let mut g = loss.backward();
    g.clip_param_norm(max_norm);
    g
}

/// Weight of the adversarial accent term at `iteration`.
pub fn adversarial_weight(model: &AccentVcModel, iteration: u64) -> f64 {
    let a = &model.config.adversary;
    if a.enabled && iteration >= a.warmup_steps {
        a.lambda
    } else {
        0.0
    }
}

/// Run the three update phases on `batch` and report every loss term.
pub fn train_step(
    model: &mut AccentVcModel,
    opt: &mut Optimizers,
    batch: &[&TrainItem],
    iteration: u64,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(crate::error::invalid("empty training batch"));
    }
    let tc = model.config.train.clone();
    let lr = learning_rate(iteration, &tc);
    let b = batch.len();
    let chars = stack_chars(&batch.iter().map(|i| &i.chars).collect::<Vec<_>>())?;
    let frames = stack_frames(&batch.iter().map(|i| &i.frames).collect::<Vec<_>>())?;
    let pitch: Vec<_> = batch.iter().map(|i| &i.pitch).collect();
    let accents: Vec<_> = batch.iter().map(|i| i.accent).collect();
    let native: Vec<bool> = batch.iter().map(|i| i.is_native()).collect();
    let target_mel = stack_mels(&batch.iter().map(|i| &i.mel).collect::<Vec<_>>())?;
    let len = batch[0].audio.len();
    let real = Var::constant(accentvc_tensor::Tensor::new(
        &[b, len],
        batch.iter().flat_map(|i| i.audio.iter().copied()).collect(),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(iteration);
    let gen = {
        let p = Binder::new(&model.store, &GENERATOR_PATH);
        model.generator_pass(&p, &chars, &frames, &pitch, &accents, true, &mut rng)?
    };
    let fake = gen.audio.detach();

    // (a) waveform discriminators on detached generator output
    let l_hd = {
        let p = Binder::new(&model.store, &[HIFI_DISC]);
        let r = model.discriminators.forward(&p, &real)?;
        let f = model.discriminators.forward(&p, &fake)?;
        loss_hifigan_discriminator(&r.scores, &f.scores)?
    };
    let l_hd_val = finite("L_HD", &l_hd, iteration)?;
    let g = clipped(&l_hd, tc.grad_clip);
    opt.hifi_disc.step(&mut model.store, &g, lr);

    // (b) accent discriminator on the detached embedding
    let z = gen.z.detach();
    let enabled = model.config.adversary.enabled;
    let l_ad = {
        let groups: &[&str] = if enabled { &[ACCENT_DISC] } else { &[] };
        let p = Binder::new(&model.store, groups);
        loss_accent_discriminator(&model.accent_disc.forward(&p, &z), &native)?.value
    };
    let l_ad_val = finite("L_AD", &l_ad, iteration)?;
    if enabled {
        let g = clipped(&l_ad, tc.grad_clip);
        opt.accent_disc.step(&mut model.store, &g, lr);
    }

    // (c) generator path against the updated, frozen discriminators
    let w_adv = adversarial_weight(model, iteration);
    let (total, report) = {
        let p = Binder::frozen(&model.store);
        let r = model.discriminators.forward(&p, &real)?;
        let f = model.discriminators.forward(&p, &gen.audio)?;
        let l_hd_adv = loss_hifigan_adversarial(&f.scores)?;
        let l_fm = loss_feature_matching(&r.features, &f.features)?;
        let l_mel = loss_mel(&model.mel, &target_mel, &gen.audio)?;
        let l_ad_adv = loss_accent_adversarial(&model.accent_disc.forward(&p, &gen.z), &native)?.value;
        let report = LossReport {
            iteration,
            l_mel: finite("L_mel", &l_mel, iteration)?,
            l_ad: l_ad_val,
            l_ad_adv: finite("L_AD_adv", &l_ad_adv, iteration)?,
            l_hd: l_hd_val,
            l_hd_adv: finite("L_HD_adv", &l_hd_adv, iteration)?,
            l_fm: finite("L_FM", &l_fm, iteration)?,
            lr,
        };
        let mut total = l_mel
            .scale(tc.lambda_mel)
            .add(&l_hd_adv.scale(tc.lambda_hd))
            .add(&l_fm.scale(tc.lambda_fm));
        if w_adv > 0.0 {
            total = total.add(&l_ad_adv.scale(w_adv));
        }
        (total, report)
    };
    let g = clipped(&total, tc.grad_clip);
    opt.generator.step(&mut model.store, &g, lr);
    Ok(report)
}

/// Mel reconstruction loss on `batch` with dropout off and no update.
pub fn evaluate_mel(model: &AccentVcModel, batch: &[&TrainItem]) -> Result<f64> {
    let chars = stack_chars(&batch.iter().map(|i| &i.chars).collect::<Vec<_>>())?;
    let frames = stack_frames(&batch.iter().map(|i| &i.frames).collect::<Vec<_>>())?;
    let pitch: Vec<_> = batch.iter().map(|i| &i.pitch).collect();
    let accents: Vec<_> = batch.iter().map(|i| i.accent).collect();
    let target = stack_mels(&batch.iter().map(|i| &i.mel).collect::<Vec<_>>())?;
    let p = Binder::frozen(&model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model.generator_pass(&p, &chars, &frames, &pitch, &accents, false, &mut rng)?;
    Ok(loss_mel(&model.mel, &target, &out.audio)?.item())
}
