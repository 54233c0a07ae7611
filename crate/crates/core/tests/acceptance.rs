//! End-to-end acceptance report: one PASS/FAIL line per criterion.
//!
//! Every criterion always runs and prints its measured numbers. The process
//! exits non-zero on a failure only when `ACCEPTANCE_STRICT=1`; set
//! `ACCEPTANCE_ONLY=name[,name]` to run a subset.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::time::{Duration, Instant};

use accentvc_core::accent::AccentId;
use accentvc_core::acoustic::AcousticEncoder;
use accentvc_core::adversary::{loss_accent_adversarial, loss_accent_discriminator, AccentDiscriminator};
use accentvc_core::audio::{
    acoustic_frames, extract_pitch, mel_spectrogram, upsample_frames, Frames, Waveform, SEGMENT_SAMPLES,
};
use accentvc_core::config::FeatureConfig;
use accentvc_core::convert::Converter;
use accentvc_core::fixtures::{accent_f0, voice_clip};
use accentvc_core::frontend::{char_frames_for, synthetic_provider, CharVocab, SyntheticProvider};
use accentvc_core::model::{AccentVcModel, GENERATOR_PATH};
use accentvc_core::pronunciation::stack_chars;
use accentvc_core::train::{
    decode_checkpoint, encode_checkpoint, evaluate_mel, learning_rate, train_step, Optimizers, TrainClip,
    TrainItem, Trainer, TrainingState, WeightedSampler,
};
use accentvc_core::vocoder::{
    assemble_decoder_input, loss_feature_matching, loss_hifigan_adversarial, loss_hifigan_discriminator,
    loss_mel, MelBasis,
};
use accentvc_core::Config;
use accentvc_tensor::{AdamW, Binder, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn selected(name: &str) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(v) if !v.is_empty() => v.split(',').any(|s| s.trim() == name),
        _ => true,
    }
}

fn main() {
    let criteria: Vec<(&str, Option<Duration>, fn() -> Verdict)> = vec![
        ("loss-oracles", Some(Duration::from_secs(10)), loss_oracles),
        ("grid-shape", Some(Duration::from_secs(5)), grid_shape),
        ("duration-sync", None, duration_sync),
        ("gradient-checks", Some(Duration::from_secs(60)), gradient_checks),
        ("adversarial", Some(Duration::from_secs(15 * 60)), adversarial),
        ("overfit", None, overfit),
        ("sampler", None, sampler),
        ("persistence", None, persistence),
        ("pitch", None, pitch),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        if !selected(name) {
            continue;
        }
        let t0 = Instant::now();
        let v = f();
        let dt = t0.elapsed();
        let in_time = budget.is_none_or(|b| dt <= b);
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = budget.map_or(String::new(), |b| format!(" / budget {:.0}s", b.as_secs_f64()));
        println!(
            "{} {name}: {} [{:.1}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            dt.as_secs_f64()
        );
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn small_config() -> Config {
    let mut c = Config::tiny();
    c.features.segment_samples = 5120;
    c
}

fn item(accent: AccentId, seed: u64, text: &str, cfg: &Config) -> TrainItem {
    let n = cfg.features.segment_samples;
    let vocab = CharVocab::new(&cfg.frontend.vocab).unwrap();
    let chars = synthetic_provider(text, char_frames_for(n), &vocab, seed).unwrap();
    TrainItem::from_segment(&voice_clip(accent_f0(accent), n, seed), chars, accent, &cfg.features).unwrap()
}

// ---------------------------------------------------------------- losses

mod oracle {
    use super::*;

    pub fn l_ad(p: &[f64], native: &[bool]) -> f64 {
        let (mut sn, mut nn, mut sf, mut nf) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..p.len() {
            if native[i] {
                sn -= p[i].ln();
                nn += 1;
            } else {
                sf -= (1.0 - p[i]).ln();
                nf += 1;
            }
        }
        let mut total = 0.0;
        if nn > 0 {
            total += sn / nn as f64;
        }
        if nf > 0 {
            total += sf / nf as f64;
        }
        total
    }

    pub fn l_ad_adv(p: &[f64], native: &[bool]) -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for i in 0..p.len() {
            if !native[i] {
                s -= p[i].ln();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }

    pub fn l_hd(real: &[Vec<f64>], fake: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for d in 0..real.len() {
            let mut a = 0.0;
            for x in &real[d] {
                a += (x - 1.0) * (x - 1.0);
            }
            let mut b = 0.0;
            for x in &fake[d] {
                b += x * x;
            }
            total += a / real[d].len() as f64 + b / fake[d].len() as f64;
        }
        total
    }

    pub fn l_hd_adv(fake: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for f in fake {
            let mut a = 0.0;
            for x in f {
                a += (x - 1.0) * (x - 1.0);
            }
            total += a / f.len() as f64;
        }
        total
    }

    pub fn l_fm(real: &[Vec<Vec<f64>>], fake: &[Vec<Vec<f64>>]) -> f64 {
        let mut total = 0.0;
        for d in 0..real.len() {
            for l in 0..real[d].len() {
                let mut a = 0.0;
                for i in 0..real[d][l].len() {
                    a += (real[d][l][i] - fake[d][l][i]).abs();
                }
                total += a / real[d][l].len() as f64;
            }
        }
        total
    }

    fn hz_to_mel(f: f64) -> f64 {
        if f < 1000.0 {
            3.0 * f / 200.0
        } else {
            15.0 + 27.0 * (f / 1000.0).ln() / 6.4f64.ln()
        }
    }

    fn mel_to_hz(m: f64) -> f64 {
        if m < 15.0 {
            200.0 * m / 3.0
        } else {
            1000.0 * (6.4f64.ln() * (m - 15.0) / 27.0).exp()
        }
    }

    /// Log-mel frames by direct DFT sums: centred frames, reflected edges,
    /// periodic Hann window placed in the middle of the FFT buffer.
    pub fn log_mel(x: &[f64], c: &FeatureConfig) -> Vec<Vec<f64>> {
        let (n_fft, win, hop) = (c.n_fft, c.win_length, c.hop_length);
        let bins = n_fft / 2 + 1;
        let sr = c.sample_rate as f64;
        let lo = hz_to_mel(c.fmin);
        let hi = hz_to_mel(c.fmax);
        let mut edge = vec![0.0; c.n_mels + 2];
        for (i, e) in edge.iter_mut().enumerate() {
            *e = mel_to_hz(lo + (hi - lo) * i as f64 / (c.n_mels + 1) as f64);
        }
        let cos: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).cos()).collect();
        let sin: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).sin()).collect();
        let n = x.len() as isize;
        let frames = x.len().div_ceil(hop);
        let mut out = Vec::new();
        for t in 0..frames {
            let start = (t * hop + hop / 2) as isize - (win / 2) as isize;
            let mut buf = vec![0.0; n_fft];
            for j in 0..win {
                let mut i = start + j as isize;
                loop {
                    if i < 0 {
                        i = -i;
                    } else if i >= n {
                        i = 2 * (n - 1) - i;
                    } else {
                        break;
                    }
                }
                let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / win as f64).cos();
                buf[(n_fft - win) / 2 + j] = x[i as usize] * w;
            }
            let mut mag = vec![0.0; bins];
            for (k, m) in mag.iter_mut().enumerate() {
                let (mut re, mut im) = (0.0, 0.0);
                for (s, v) in buf.iter().enumerate() {
                    let idx = (k * s) % n_fft;
                    re += v * cos[idx];
                    im -= v * sin[idx];
                }
                *m = (re * re + im * im + 1e-9).sqrt();
            }
            let mut row = vec![0.0; c.n_mels];
            for (m, r) in row.iter_mut().enumerate() {
                let (a, b, d) = (edge[m], edge[m + 1], edge[m + 2]);
                let mut acc = 0.0;
                for (k, v) in mag.iter().enumerate() {
                    let f = k as f64 * sr / n_fft as f64;
                    let tri = ((f - a) / (b - a)).min((d - f) / (d - b)).max(0.0);
                    acc += v * tri * 2.0 / (d - a);
                }
                *r = acc.max(c.log_floor).ln();
            }
            out.push(row);
        }
        out
    }

    pub fn l_mel(target: &[Vec<Vec<f64>>], x: &[Vec<f64>], c: &FeatureConfig) -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for (b, xb) in x.iter().enumerate() {
            let m = log_mel(xb, c);
            for t in 0..m.len() {
                for k in 0..m[t].len() {
                    s += (m[t][k] - target[b][t][k]).abs();
                    n += 1;
                }
            }
        }
        s / n as f64
    }
}

fn row_var(rows: &[Vec<f64>]) -> Var {
    let n = rows[0].len();
    Var::input(Tensor::new(&[rows.len(), n], rows.concat()))
}

fn loss_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fc = FeatureConfig::standard();
    let basis = MelBasis::new(&fc);
    let mut worst = [0.0f64; 6];
    let names = ["L_mel", "L_AD", "L_AD_adv", "L_HD", "L_HD_adv", "L_FM"];
    for _ in 0..100 {
        let b = rng.random_range(1..=4usize);

        let p: Vec<f64> = (0..b).map(|_| rng.random_range(0.01..0.99)).collect();
        let native: Vec<bool> = (0..b).map(|_| rng.random_bool(0.5)).collect();
        let pv = Var::input(Tensor::new(&[b], p.clone()));
        let e1 = (loss_accent_discriminator(&pv, &native).unwrap().value.item() - oracle::l_ad(&p, &native)).abs();
        let e2 = (loss_accent_adversarial(&pv, &native).unwrap().value.item() - oracle::l_ad_adv(&p, &native)).abs();

        let d = rng.random_range(1..=3usize);
        let mut real = Vec::new();
        let mut fake = Vec::new();
        let mut rv = Vec::new();
        let mut fv = Vec::new();
        for _ in 0..d {
            let n = rng.random_range(1..6usize);
            let r: Vec<Vec<f64>> = (0..b).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let f: Vec<Vec<f64>> = (0..b).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            rv.push(row_var(&r));
            fv.push(row_var(&f));
            real.push(r.concat());
            fake.push(f.concat());
        }
        let e3 = (loss_hifigan_discriminator(&rv, &fv).unwrap().item() - oracle::l_hd(&real, &fake)).abs();
        let e4 = (loss_hifigan_adversarial(&fv).unwrap().item() - oracle::l_hd_adv(&fake)).abs();

        let mut rf = Vec::new();
        let mut ff = Vec::new();
        let mut rfv = Vec::new();
        let mut ffv = Vec::new();
        for _ in 0..d {
            let layers = rng.random_range(1..4usize);
            let (mut a, mut bb, mut av, mut bv) = (vec![], vec![], vec![], vec![]);
            for _ in 0..layers {
                let n = rng.random_range(1..8usize);
                let r: Vec<Vec<f64>> = (0..b).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                let f: Vec<Vec<f64>> = (0..b).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                av.push(row_var(&r));
                bv.push(row_var(&f));
                a.push(r.concat());
                bb.push(f.concat());
            }
            rf.push(a);
            ff.push(bb);
            rfv.push(av);
            ffv.push(bv);
        }
        let e6 = (loss_feature_matching(&rfv, &ffv).unwrap().item() - oracle::l_fm(&rf, &ff)).abs();

        let len = rng.random_range(160..480usize);
        let x: Vec<Vec<f64>> = (0..b).map(|_| (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let y: Vec<Vec<f64>> = (0..b).map(|_| (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let target: Vec<Vec<Vec<f64>>> = y.iter().map(|yb| oracle::log_mel(yb, &fc)).collect();
        let t = target[0].len();
        let tt = Tensor::new(&[b, t, fc.n_mels], target.iter().flatten().flatten().copied().collect());
        let got = loss_mel(&basis, &tt, &row_var(&x)).unwrap().item();
        let e0 = (got - oracle::l_mel(&target, &x, &fc)).abs();

        for (w, e) in worst.iter_mut().zip([e0, e1, e2, e3, e4, e6]) {
            *w = w.max(e);
        }
    }

    let s = |v: &[f64]| Var::input(Tensor::new(&[1, v.len()], v.to_vec()));
    let p = |v: &[f64]| Var::input(Tensor::new(&[v.len()], v.to_vec()));
    let clamp = |x: f64| x.clamp(1e-7, 1.0 - 1e-7);
    let closed: Vec<(&str, f64, f64)> = vec![
        (
            "L_AD perfect",
            loss_accent_discriminator(&p(&[clamp(1.0), clamp(0.0)]), &[true, false]).unwrap().value.item(),
            0.0,
        ),
        ("L_AD_adv 0.5", loss_accent_adversarial(&p(&[0.5]), &[false]).unwrap().value.item(), LN_2),
        (
            "L_AD 0.5",
            loss_accent_discriminator(&p(&[0.5, 0.5]), &[true, false]).unwrap().value.item(),
            2.0 * LN_2,
        ),
        (
            "L_AD 0.9/0.2",
            loss_accent_discriminator(&p(&[0.9, 0.2]), &[true, false]).unwrap().value.item(),
            -(0.9f64.ln()) - 0.8f64.ln(),
        ),
        (
            "L_AD_adv 0.25/0.5",
            loss_accent_adversarial(&p(&[0.25, 0.5]), &[false, false]).unwrap().value.item(),
            (4f64.ln() + 2f64.ln()) / 2.0,
        ),
        ("L_HD 0.5", loss_hifigan_discriminator(&[s(&[0.5])], &[s(&[0.5])]).unwrap().item(), 0.5),
        ("L_HD worst", loss_hifigan_discriminator(&[s(&[0.0])], &[s(&[1.0])]).unwrap().item(), 2.0),
        ("L_HD_adv {0,1}", loss_hifigan_adversarial(&[s(&[0.0, 1.0])]).unwrap().item(), 0.5),
        (
            "L_FM",
            loss_feature_matching(
                &[vec![s(&[1.0, 0.0]), s(&[0.0, 0.0])]],
                &[vec![s(&[0.0, 0.0]), s(&[0.0, 0.0])]],
            )
            .unwrap()
            .item(),
            0.5,
        ),
    ];
    let mut bad: Vec<String> = closed
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-6)
        .map(|(n, g, w)| format!("{n}={g:.6}≠{w}"))
        .collect();
    for (i, quoted) in [(3, "0.3285"), (4, "1.0397")] {
        if format!("{:.4}", closed[i].1) != quoted {
            bad.push(format!("{} rounds to {:.4}, quoted {quoted}", closed[i].0, closed[i].1));
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let worst_s: Vec<String> = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect();
    verdict(
        max <= 1e-6 && bad.is_empty(),
        format!(
            "100 random batches, max |Δ| {} ; closed forms {}",
            worst_s.join(", "),
            if bad.is_empty() { "all match".to_string() } else { bad.join(" ") }
        ),
    )
}

// ------------------------------------------------------------ grid/shape

fn grid_shape() -> Verdict {
    let cfg = Config::desk();
    let f = &cfg.features;
    let wave = voice_clip(150.0, SEGMENT_SAMPLES, 1);
    let mel = mel_spectrogram(&wave, f).unwrap().frames.rows();
    let pitch = extract_pitch(&wave, f).unwrap();
    let mfcc = acoustic_frames(&wave, &pitch, f).unwrap().frames.rows();
    let vocab = CharVocab::new(&cfg.frontend.vocab).unwrap();
    let chars = synthetic_provider("hello world", char_frames_for(SEGMENT_SAMPLES), &vocab, 1).unwrap();
    let up = upsample_frames(&Frames::zeros(chars.len(), 4), f.upsample_factor).unwrap().rows();

    let model = AccentVcModel::new(cfg.clone(), 1).unwrap();
    let p = Binder::frozen(&model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pron = model
        .pronunciation
        .forward(&p, &Var::constant(stack_chars(&[&chars]).unwrap()), &[AccentId::Hi], false, &mut rng)
        .unwrap();
    let frames = acoustic_frames(&wave, &pitch, f).unwrap();
    let z = model.acoustic.forward(&p, &Var::constant(frames.frames.to_tensor().reshape(&[1, mfcc, f.acoustic_dims()]))).unwrap();
    let dec = assemble_decoder_input(&pron, &z, &[&pitch], f.upsample_factor).unwrap();
    let dec_frames = dec.0.shape()[1];
    let out = model.generator.forward(&p, &dec).shape()[1];
    let got = [mel, mfcc, pitch.len(), chars.len(), dec_frames, out];
    let want = [224, 224, 224, 56, 224, 17920];
    verdict(
        got == want,
        format!(
            "mel {mel}, mfcc {mfcc}, pitch {}, chars {}, upsampled {up}/{dec_frames}, output {out} samples",
            pitch.len(),
            chars.len()
        ),
    )
}

// --------------------------------------------------------- duration sync

fn duration_sync() -> Verdict {
    let cfg = Config::tiny();
    let vocab = CharVocab::new(&cfg.frontend.vocab).unwrap();
    let conv = Converter::new(AccentVcModel::new(cfg, 2).unwrap(), Box::new(SyntheticProvider::new(vocab, 0)));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut fails = 0;
    let mut total = 0;
    for i in 0..50 {
        let n = rng.random_range(4800..=80_000usize);
        let w = voice_clip(rng.random_range(90.0..300.0), n, i);
        for a in AccentId::ALL {
            total += 1;
            match conv.convert_waveform(&format!("c{i}"), &w, a) {
                Ok(out) if out.len() == n => {}
                _ => fails += 1,
            }
        }
    }
    verdict(fails == 0, format!("{total} conversions, {fails} length mismatches or errors"))
}

// ------------------------------------------------------- gradient checks

/// Norm-wise relative error between two gradient vectors.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn central_diff(x: &Tensor, eps: f64, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.numel())
        .map(|i| {
            let o = probe.data()[i];
            probe.data_mut()[i] = o + eps;
            let hi = f(&probe);
            probe.data_mut()[i] = o - eps;
            let lo = f(&probe);
            probe.data_mut()[i] = o;
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

/// Relative error of d f / d(params[idx]) for one store parameter.
fn param_grad_error(
    store: &ParamStore,
    id: ParamId,
    idx: &[usize],
    groups: &[&str],
    f: &dyn Fn(&Binder) -> Var,
) -> f64 {
    let analytic = {
        let p = Binder::new(store, groups);
        f(&p).backward().param(id).cloned().unwrap()
    };
    let a: Vec<f64> = idx.iter().map(|&i| analytic.data()[i]).collect();
    let mut s = store.clone();
    let n: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let o = s.value(id).data()[i];
            let eps = 1e-5;
            s.value_mut(id).data_mut()[i] = o + eps;
            let hi = f(&Binder::frozen(&s)).item();
            s.value_mut(id).data_mut()[i] = o - eps;
            let lo = f(&Binder::frozen(&s)).item();
            s.value_mut(id).data_mut()[i] = o;
            (hi - lo) / (2.0 * eps)
        })
        .collect();
    rel_err(&a, &n)
}

fn gradient_checks() -> Verdict {
    let mut cfg = Config::tiny();
    cfg.pronunciation.dropout = 0.0;
    // Larger init keeps the toy output off the log-mel floor and away from
    // the activation kinks, where finite differences are meaningless.
    cfg.generator.init_std = 0.3;
    let model = AccentVcModel::new(cfg.clone(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let store = &model.store;

    // Acoustic encoder: input frames and first conv weights.
    let frames = Tensor::from_fn(&[1, 8, cfg.features.acoustic_dims()], |_| rng.random_range(-1.0..1.0));
    let proj = Tensor::from_fn(&[1, cfg.embedding_dim()], |_| rng.random_range(-1.0..1.0));
    let ac = |p: &Binder, x: &Var| model.acoustic.forward(p, x).unwrap().mul(&Var::constant(proj.clone())).sum();
    let frozen = Binder::frozen(store);
    let xa = Var::input(frames.clone());
    let ga = ac(&frozen, &xa).backward().wrt(&xa).unwrap().data().to_vec();
    let na = central_diff(&frames, 1e-5, |t| ac(&frozen, &Var::constant(t.clone())).item());
    let e_ac_in = rel_err(&ga, &na);
    let ac_param = store.ids_in_group("acoustic").next().unwrap();
    let fx = Var::constant(frames.clone());
    let e_ac_w = param_grad_error(store, ac_param, &(0..16).collect::<Vec<_>>(), &["acoustic"], &|p| ac(p, &fx));

    // Pronunciation encoder: char posteriors and the accent table.
    let vocab = CharVocab::new(&cfg.frontend.vocab).unwrap();
    let chars = stack_chars(&[&synthetic_provider("ab", 6, &vocab, 2).unwrap()]).unwrap();
    let pw = Tensor::from_fn(&[1, 6, cfg.pronunciation.d_model], |_| rng.random_range(-1.0..1.0));
    let pr = |p: &Binder, x: &Var| {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        model
            .pronunciation
            .forward(p, x, &[AccentId::Ko], false, &mut r)
            .unwrap()
            .mul(&Var::constant(pw.clone()))
            .sum()
    };
    let xc = Var::input(chars.clone());
    let gc = pr(&frozen, &xc).backward().wrt(&xc).unwrap().data().to_vec();
    let nc = central_diff(&chars, 1e-5, |t| pr(&frozen, &Var::constant(t.clone())).item());
    let e_pr_in = rel_err(&gc, &nc);
    let table = model.pronunciation.accent_table;
    let d_a = cfg.pronunciation.d_accent;
    let ko: Vec<usize> = (0..d_a.min(16)).map(|j| AccentId::Ko.index() * d_a + j).collect();
    let cx = Var::constant(chars.clone());
    let e_pr_acc = param_grad_error(store, table, &ko, &["pronunciation"], &|p| pr(p, &cx));

    // Generator: full generator objective on an 8-frame toy input, 16 weights.
    let n = 8 * cfg.features.hop_length;
    let wave = voice_clip(160.0, n, 5);
    let pitch = extract_pitch(&wave, &cfg.features).unwrap();
    let af = acoustic_frames(&wave, &pitch, &cfg.features).unwrap();
    let target = mel_spectrogram(&wave, &cfg.features).unwrap().frames;
    let ch = stack_chars(&[&synthetic_provider("a", 2, &vocab, 3).unwrap()]).unwrap();
    let real = Var::constant(Tensor::new(&[1, n], wave.samples().iter().map(|&x| x as f64).collect()));
    let tc = cfg.train.clone();
    let tgt = Tensor::new(&[1, target.rows(), target.dims()], target.data().iter().map(|&x| x as f64).collect());
    let gen_loss = |p: &Binder| {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let out = model
            .generator_pass(p, &ch, &af.frames.to_tensor().reshape(&[1, 8, 14]), &[&pitch], &[AccentId::Hi], false, &mut r)
            .unwrap();
        let dr = model.discriminators.forward(p, &real).unwrap();
        let df = model.discriminators.forward(p, &out.audio).unwrap();
        loss_mel(&model.mel, &tgt, &out.audio)
            .unwrap()
            .scale(tc.lambda_mel)
            .add(&loss_hifigan_adversarial(&df.scores).unwrap().scale(tc.lambda_hd))
            .add(&loss_feature_matching(&dr.features, &df.features).unwrap().scale(tc.lambda_fm))
    };
    let gen_param = store.ids_in_group("generator").next().unwrap();
    let e_gen = param_grad_error(store, gen_param, &(0..16).collect::<Vec<_>>(), &GENERATOR_PATH, &gen_loss);
    let enc = [e_ac_in, e_ac_w, e_pr_in, e_pr_acc];
    verdict(
        enc.iter().all(|&e| e <= 1e-3) && e_gen <= 1e-2,
        format!(
            "acoustic input {e_ac_in:.1e} weights {e_ac_w:.1e}; pronunciation chars {e_pr_in:.1e} accent {e_pr_acc:.1e} (tol 1e-3); generator {e_gen:.1e} (tol 1e-2)"
        ),
    )
}

// ---------------------------------------------------------- adversarial

/// Frame sequences whose MFCC channel 2 is shifted by the native/foreign
/// label; channels 0-1 carry a per-speaker offset that must survive.
struct Marked {
    frames: Tensor,
    native: Vec<bool>,
    speaker: Vec<f64>,
}

fn marked_set(n: usize, t: usize, dims: usize, seed: u64) -> Marked {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * t * dims);
    let mut native = Vec::with_capacity(n);
    let mut speaker = Vec::with_capacity(n);
    for i in 0..n {
        let is_native = i % 2 == 0;
        let spk: f64 = rng.random_range(-1.0..1.0);
        for _ in 0..t {
            for d in 0..dims {
                let mut v = rng.random_range(-1.0..1.0);
                if d < 2 {
                    v += 1.5 * spk;
                }
                if d == 2 {
                    v += if is_native { 1.0 } else { -1.0 };
                }
                data.push(v);
            }
        }
        native.push(is_native);
        speaker.push(spk);
    }
    Marked {
        frames: Tensor::new(&[n, t, dims], data),
        native,
        speaker,
    }
}

fn accuracy(probs: &Var, native: &[bool]) -> f64 {
    let hits = probs.value().data().iter().zip(native).filter(|(p, &n)| (**p > 0.5) == n).count();
    hits as f64 / native.len() as f64
}

/// Train a fresh discriminator on fixed embeddings; held-out accuracy.
fn probe(cfg: &Config, z_train: &Tensor, y_train: &[bool], z_test: &Tensor, y_test: &[bool], seed: u64) -> (f64, f64) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disc = AccentDiscriminator::new(&mut store, &cfg.adversary, z_train.shape()[1], &mut rng);
    let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0);
    for _ in 0..600 {
        let g = {
            let p = Binder::new(&store, &["accent_disc"]);
            loss_accent_discriminator(&disc.forward(&p, &Var::constant(z_train.clone())), y_train)
                .unwrap()
                .value
                .backward()
        };
        opt.step(&mut store, &g, 3e-3);
    }
    let p = Binder::frozen(&store);
    (
        accuracy(&disc.forward(&p, &Var::constant(z_train.clone())), y_train),
        accuracy(&disc.forward(&p, &Var::constant(z_test.clone())), y_test),
    )
}

fn adversarial() -> Verdict {
    let cfg = Config::tiny();
    let dims = cfg.features.acoustic_dims();
    let (t, n_train, n_test) = (32, 96, 64);
    let train = marked_set(n_train, t, dims, 1);
    let test = marked_set(n_test, t, dims, 2);

    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let enc = AcousticEncoder::new(&mut store, &cfg.acoustic, dims, &mut rng);
    let disc = AccentDiscriminator::new(&mut store, &cfg.adversary, cfg.embedding_dim(), &mut rng);
    // Speaker readout keeps the encoder from discarding everything.
    let head = store.add_normal("speaker_head", "acoustic", &[cfg.embedding_dim(), 1], 0.1, &mut rng);
    let mut opt_enc = AdamW::new(0.8, 0.99, 1e-8, 0.0);
    let mut opt_disc = AdamW::new(0.8, 0.99, 1e-8, 0.0);
    let lr = 1e-3;
    let x = Var::constant(train.frames.clone());
    let spk = Var::constant(Tensor::new(&[n_train, 1], train.speaker.clone()));

    let embed = |s: &ParamStore, m: &Marked| {
        let p = Binder::frozen(s);
        enc.forward(&p, &Var::constant(m.frames.clone())).unwrap().value().clone()
    };
    let disc_step = |store: &mut ParamStore, opt: &mut AdamW| {
        let z = {
            let p = Binder::frozen(store);
            enc.forward(&p, &x).unwrap().detach()
        };
        let g = {
            let p = Binder::new(store, &["accent_disc"]);
            loss_accent_discriminator(&disc.forward(&p, &z), &train.native).unwrap().value.backward()
        };
        opt.step(store, &g, lr);
    };
    let enc_step = |store: &mut ParamStore, opt: &mut AdamW, lambda: f64| {
        let g = {
            let p = Binder::new(store, &["acoustic"]);
            let z = enc.forward(&p, &x).unwrap();
            let recon = z.matmul(&p.get(head)).sub(&spk).square().mean();
            let adv = loss_accent_adversarial(&disc.forward(&p, &z), &train.native).unwrap().value;
            recon.add(&adv.scale(lambda)).backward()
        };
        opt.step(store, &g, lr);
    };

    // Warm-up: encoder learns the speaker readout, discriminator learns accent.
    for _ in 0..300 {
        enc_step(&mut store, &mut opt_enc, 0.0);
        disc_step(&mut store, &mut opt_disc);
    }
    let warm_acc = {
        let p = Binder::frozen(&store);
        accuracy(&disc.forward(&p, &Var::constant(embed(&store, &test))), &test.native)
    };
    let (_, warm_probe) = probe(&cfg, &embed(&store, &train), &train.native, &embed(&store, &test), &test.native, 7);

    for _ in 0..600 {
        disc_step(&mut store, &mut opt_disc);
        enc_step(&mut store, &mut opt_enc, 1.0);
    }
    let (z_tr, z_te) = (embed(&store, &train), embed(&store, &test));
    let (probe_train, probe_test) = probe(&cfg, &z_tr, &train.native, &z_te, &test.native, 8);

    // Speaker information retained: correlation of the readout with truth.
    let pred: Vec<f64> = {
        let p = Binder::frozen(&store);
        Var::constant(z_te).matmul(&p.get(head)).value().data().to_vec()
    };
    let corr = {
        let n = pred.len() as f64;
        let (mp, ms) = (pred.iter().sum::<f64>() / n, test.speaker.iter().sum::<f64>() / n);
        let cov: f64 = pred.iter().zip(&test.speaker).map(|(a, b)| (a - mp) * (b - ms)).sum();
        let vp: f64 = pred.iter().map(|a| (a - mp).powi(2)).sum();
        let vs: f64 = test.speaker.iter().map(|b| (b - ms).powi(2)).sum();
        cov / (vp * vs).sqrt()
    };
    verdict(
        warm_acc > 0.95 && probe_test < 0.65,
        format!(
            "discriminator after warm-up {:.1}% (fresh probe {:.1}%); fresh probe after adversarial training {:.1}% held-out ({:.1}% train); speaker readout r = {corr:.2}",
            100.0 * warm_acc,
            100.0 * warm_probe,
            100.0 * probe_test,
            100.0 * probe_train
        ),
    )
}

// --------------------------------------------------------------- overfit

fn overfit_run(enabled: bool) -> (f64, f64) {
    let mut cfg = small_config();
    cfg.adversary.enabled = enabled;
    cfg.adversary.warmup_steps = 500;
    cfg.generator.base_channels = 64;
    let items = [
        item(AccentId::Am, 0, "ship", &cfg),
        item(AccentId::Hi, 1, "tree", &cfg),
        item(AccentId::Br, 2, "moon", &cfg),
        item(AccentId::Ko, 3, "wave", &cfg),
    ];
    let batch: Vec<&TrainItem> = items.iter().collect();
    let mut model = AccentVcModel::new(cfg.clone(), 1).unwrap();
    let mut opt = Optimizers::new(&cfg.train);
    let before = evaluate_mel(&model, &batch).unwrap();
    for it in 0..2000 {
        train_step(&mut model, &mut opt, &batch, it).unwrap();
    }
    (before, evaluate_mel(&model, &batch).unwrap())
}

fn overfit() -> Verdict {
    let (b0, a0) = overfit_run(true);
    let (b1, a1) = overfit_run(false);
    let ok = |b: f64, a: f64| b > 2.0 && a < 0.5;
    verdict(
        ok(b0, a0) && ok(b1, a1),
        format!("mel loss {b0:.3} -> {a0:.3} with adversary, {b1:.3} -> {a1:.3} without (need > 2.0 -> < 0.5)"),
    )
}

// --------------------------------------------------------------- sampler

fn sampler() -> Verdict {
    let weights: BTreeMap<String, f64> = [("LibriTTS", 1.0), ("VCTK", 6.0), ("SAA", 10.0), ("L2-Arctic", 15.0), ("Indic TTS", 2.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let subsets: Vec<String> = weights.keys().cloned().collect();
    let s = WeightedSampler::new(&subsets, &weights).unwrap();
    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0usize; subsets.len()];
    for _ in 0..draws {
        counts[s.draw(&mut rng)] += 1;
    }
    let total_w: f64 = weights.values().sum();
    let mut chi2 = 0.0;
    let mut within = true;
    let mut parts = Vec::new();
    for (i, name) in subsets.iter().enumerate() {
        let expected = draws as f64 * weights[name] / total_w;
        let c = counts[i] as f64;
        chi2 += (c - expected).powi(2) / expected;
        within &= (c - expected).abs() <= 0.1 * expected;
        parts.push(format!("{name} {} (exp {expected:.0})", counts[i]));
    }
    let pval = 1.0 - ChiSquared::new((subsets.len() - 1) as f64).unwrap().cdf(chi2);
    verdict(within && pval > 0.01, format!("{}; chi2 {chi2:.2}, p = {pval:.3}", parts.join(", ")))
}

// ----------------------------------------------------------- persistence

fn persistence() -> Verdict {
    let mut cfg = small_config();
    cfg.train.batch_size = 2;
    cfg.adversary.warmup_steps = 1;
    cfg.sampler.weights = [("SAA".to_string(), 1.0)].into_iter().collect();
    let clips = vec![
        TrainClip {
            stem: "a".into(),
            subset: "SAA".into(),
            segments: vec![item(AccentId::Am, 0, "ship", &cfg)],
        },
        TrainClip {
            stem: "b".into(),
            subset: "SAA".into(),
            segments: vec![item(AccentId::Vi, 1, "tree", &cfg)],
        },
    ];

    // Uninterrupted 4 steps vs 2 steps, save, load, 2 more.
    let mut straight = Trainer::fresh(cfg.clone(), clips.clone()).unwrap();
    let rs = straight.run(4, None, None).unwrap();
    let mut first = Trainer::fresh(cfg.clone(), clips.clone()).unwrap();
    first.run(2, None, None).unwrap();
    let bytes = encode_checkpoint(&first.model, &first.optimizers, first.iteration);
    let restored = decode_checkpoint(&bytes, std::path::Path::new("mem")).unwrap();
    let bit_exact = encode_checkpoint(&restored.model, &restored.optimizers, restored.iteration) == bytes
        && restored.model.store == first.model.store
        && restored.optimizers == first.optimizers;
    let mut resumed = Trainer::new(restored, clips.clone()).unwrap();
    let rr = resumed.run(4, None, None).unwrap();
    let resume_exact = rr == rs[2..] && resumed.model.store == straight.model.store;

    // Learning rate at iterations 0, 1000, 5000: resumed from a checkpoint
    // taken at that iteration vs an uninterrupted trainer there.
    let mut lr_ok = true;
    let mut lrs = Vec::new();
    for it in [0u64, 1000, 5000] {
        let mut oracle = 2e-4;
        for _ in 0..it / 1000 {
            oracle *= 0.999;
        }
        let mut a = Trainer::fresh(cfg.clone(), clips.clone()).unwrap();
        a.iteration = it;
        let bytes = encode_checkpoint(&a.model, &a.optimizers, it);
        let lr_a = a.step().unwrap().lr;
        let st: TrainingState = decode_checkpoint(&bytes, std::path::Path::new("mem")).unwrap();
        let mut b = Trainer::new(st, clips.clone()).unwrap();
        let lr_b = b.step().unwrap().lr;
        lr_ok &= lr_a == lr_b && (lr_a - oracle).abs() < 1e-15 && learning_rate(it, &cfg.train) == lr_a;
        lrs.push(format!("{it}: {lr_b:.6e}"));
    }
    verdict(
        bit_exact && resume_exact && lr_ok,
        format!(
            "round trip bit-exact {bit_exact}, resumed steps identical {resume_exact}, lr {}",
            lrs.join(", ")
        ),
    )
}

// ----------------------------------------------------------------- pitch

fn pitch() -> Verdict {
    let c = FeatureConfig::standard();
    let lag_max = (c.sample_rate as f64 / c.pitch_min_hz) as usize;
    let first = (c.win_length / 2).div_ceil(c.hop_length);
    let last = (SEGMENT_SAMPLES - c.win_length - lag_max) / c.hop_length;
    let mut ok = true;
    let mut parts = Vec::new();
    for f in [120.0, 200.0, 350.0] {
        let w = Waveform::new(
            (0..SEGMENT_SAMPLES).map(|i| (0.5 * (2.0 * PI * f * i as f64 / 16_000.0).sin()) as f32).collect(),
            16_000,
        )
        .unwrap();
        let tr = extract_pitch(&w, &c).unwrap();
        let good = (first..last)
            .filter(|&t| tr.voicing[t] && ((tr.f0_hz[t] as f64 - f) / f).abs() <= 0.02)
            .count();
        let frac = good as f64 / (last - first) as f64;
        ok &= frac >= 0.9;
        parts.push(format!("{f:.0} Hz {:.1}%", 100.0 * frac));
    }
    let silence = extract_pitch(&Waveform::silence(SEGMENT_SAMPLES, 16_000), &c).unwrap();
    let voiced = silence.voicing.iter().filter(|v| **v).count();
    ok &= voiced == 0;
    verdict(ok, format!("{} of interior frames within 2%; silence voiced frames {voiced}", parts.join(", ")))
}
