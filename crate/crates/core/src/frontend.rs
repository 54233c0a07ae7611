//! Character-level linguistic content on the 20 ms grid.
//!
//! The recognizer that produces these posteriors is external. Predictions are
//! either read from per-clip cache files (feature-dump format, `n_dims = V`,
//! hop 320) or generated by a deterministic synthetic stub.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{read_feature_dump, write_feature_dump, FeatureDump, Frames, Waveform};
use crate::config::{FrontendConfig, FrontendKind};
use crate::error::{invalid, Error, Result};

/// Blank first, then word boundary, apostrophe and the 26 letters.
pub const DEFAULT_VOCAB: &str = "_|'abcdefghijklmnopqrstuvwxyz";

pub const CHAR_HOP: usize = 320;
const TARGET_MASS: f64 = 0.95;
const ROW_SUM_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharVocab {
    symbols: Vec<char>,
}

impl CharVocab {
    /// Symbols in index order; the first is the blank.
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.len() < 2 {
            return Err(invalid("vocab needs a blank and at least one symbol"));
        }
        let mut seen = HashSet::new();
        if let Some(c) = symbols.iter().find(|c| !seen.insert(**c)) {
            return Err(invalid(format!("duplicate vocab symbol {c:?}")));
        }
        Ok(Self { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blank(&self) -> usize {
        0
    }

    pub fn symbol(&self, i: usize) -> char {
        self.symbols[i]
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    /// Map text to symbol indices. Spaces become the word boundary `|` when
    /// the vocab has one, and letters are lowercased if needed.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                let c = if c == ' ' && self.index_of(' ').is_none() { '|' } else { c };
                self.index_of(c)
                    .or_else(|| self.index_of(c.to_ascii_lowercase()))
                    .filter(|&i| i != self.blank())
                    .ok_or_else(|| invalid(format!("character {c:?} is not in the vocab")))
            })
            .collect()
    }
}

impl Default for CharVocab {
    fn default() -> Self {
        Self::new(DEFAULT_VOCAB).expect("default vocab is valid")
    }
}

/// `T_char × V` row-stochastic matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CharPosteriorSequence {
    pub frames: Frames,
    pub hop: usize,
}

impl CharPosteriorSequence {
    pub fn new(frames: Frames) -> Result<Self> {
        for t in 0..frames.rows() {
            let row = frames.row(t);
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            if row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Format(format!("char row {t} is not a distribution (sum {s})")));
            }
        }
        Ok(Self {
            frames,
            hop: CHAR_HOP,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn argmax(&self) -> Vec<usize> {
        (0..self.frames.rows())
            .map(|t| {
                let row = self.frames.row(t);
                (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
            })
            .collect()
    }

    /// Greedy CTC decoding: argmax, collapse repeats, drop blanks.
    pub fn decode(&self, vocab: &CharVocab) -> String {
        let mut out = String::new();
        let mut prev = None;
        for k in self.argmax() {
            if Some(k) != prev && k != vocab.blank() {
                out.push(vocab.symbol(k));
            }
            prev = Some(k);
        }
        out
    }

    /// Replace every row by the one-hot vector of its argmax.
    pub fn to_one_hot(&self) -> Self {
        let mut frames = Frames::zeros(self.frames.rows(), self.frames.dims());
        for (t, k) in self.argmax().into_iter().enumerate() {
            frames.row_mut(t)[k] = 1.0;
        }
        Self {
            frames,
            hop: self.hop,
        }
    }

    /// Rows `start..start + len`; rows past the end are one-hot blank.
    pub fn window(&self, start: usize, len: usize, blank: usize) -> Self {
        let mut frames = Frames::zeros(len, self.frames.dims());
        for t in 0..len {
            if start + t < self.frames.rows() {
                frames.row_mut(t).copy_from_slice(self.frames.row(start + t));
            } else {
                frames.row_mut(t)[blank] = 1.0;
            }
        }
        Self {
            frames,
            hop: self.hop,
        }
    }
}

/// Frames on the 20 ms grid for `samples` samples.
pub fn char_frames_for(samples: usize) -> usize {
    samples.div_ceil(CHAR_HOP)
}

/// Frames needed to spell `text`: one per character plus a separating blank
/// between adjacent repeats.
pub fn min_frames_for(symbols: &[usize]) -> usize {
    symbols.len() + symbols.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Deterministic CTC-like spelling of `text` over `duration_frames` frames.
///
/// The frames are split into one slot per character (earlier slots take the
/// remainder). The first half of each slot (rounded up) carries the
/// character, the rest is blank. Each row puts 0.95 on its symbol and spreads
/// the remaining mass over the other symbols with seeded random weights.
pub fn synthetic_provider(
    text: &str,
    duration_frames: usize,
    vocab: &CharVocab,
    seed: u64,
) -> Result<CharPosteriorSequence> {
    let symbols = vocab.encode(text)?;
    let need = min_frames_for(&symbols);
    if duration_frames < need {
        return Err(invalid(format!(
            "{duration_frames} frames cannot spell {} characters ({need} needed)",
            symbols.len()
        )));
    }
    let labels = spread(&symbols, duration_frames, vocab.blank());
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Frames::zeros(duration_frames, v);
    for (t, &k) in labels.iter().enumerate() {
        let noise: Vec<f64> = (0..v).map(|i| if i == k { 0.0 } else { rng.random::<f64>() + 1e-3 }).collect();
        let total: f64 = noise.iter().sum();
        let row = frames.row_mut(t);
        for i in 0..v {
            row[i] = if i == k { TARGET_MASS } else { (1.0 - TARGET_MASS) * noise[i] / total } as f32;
        }
    }
    CharPosteriorSequence::new(frames)
}

/// Frame labels for the synthetic spelling.
fn spread(symbols: &[usize], frames: usize, blank: usize) -> Vec<usize> {
    let n = symbols.len();
    if n == 0 {
        return vec![blank; frames];
    }
    let min_len: Vec<usize> = (0..n)
        .map(|i| if i + 1 < n && symbols[i] == symbols[i + 1] { 2 } else { 1 })
        .collect();
    let mut lens: Vec<usize> = (0..n).map(|i| frames / n + usize::from(i < frames % n)).collect();
    if lens.iter().zip(&min_len).any(|(l, m)| l < m) {
        lens = min_len.clone();
        let mut extra = frames - lens.iter().sum::<usize>();
        let mut i = 0;
        while extra > 0 {
            lens[i % n] += 1;
            extra -= 1;
            i += 1;
        }
    }
    let mut out = Vec::with_capacity(frames);
    for (&s, &len) in symbols.iter().zip(&lens) {
        let on = len.div_ceil(2);
        out.extend(std::iter::repeat_n(s, on));
        out.extend(std::iter::repeat_n(blank, len - on));
    }
    out
}

pub fn load_cached_predictions(path: &Path, vocab: &CharVocab) -> Result<CharPosteriorSequence> {
    let dump = read_feature_dump(path)?;
    if dump.frames.dims() != vocab.len() {
        return Err(Error::Format(format!(
            "{}: {} columns but the vocab has {} symbols",
            path.display(),
            dump.frames.dims(),
            vocab.len()
        )));
    }
    if dump.hop_samples as usize != CHAR_HOP {
        return Err(Error::Format(format!(
            "{}: hop {} is not the {CHAR_HOP}-sample char grid",
            path.display(),
            dump.hop_samples
        )));
    }
    CharPosteriorSequence::new(dump.frames)
}

pub fn write_cached_predictions(path: &Path, seq: &CharPosteriorSequence) -> Result<()> {
    write_feature_dump(
        path,
        &FeatureDump {
            frames: seq.frames.clone(),
            hop_samples: CHAR_HOP as u32,
        },
    )
}

/// Source of character posteriors for a clip.
pub trait CharProvider: Send + Sync {
    /// `clip` is the clip's file stem; the result has
    /// `ceil(len / 320)` rows.
    fn char_predictions(&self, clip: &str, waveform: &Waveform) -> Result<CharPosteriorSequence>;
}

/// Reads `<dir>/<clip>.chars` files written by [`write_cached_predictions`].
pub struct CachedProvider {
    dir: PathBuf,
    vocab: CharVocab,
}

impl CachedProvider {
    pub fn new(dir: impl Into<PathBuf>, vocab: CharVocab) -> Self {
        Self {
            dir: dir.into(),
            vocab,
        }
    }

    pub fn path_for(dir: &Path, clip: &str) -> PathBuf {
        dir.join(format!("{clip}.chars"))
    }
}

impl CharProvider for CachedProvider {
    fn char_predictions(&self, clip: &str, waveform: &Waveform) -> Result<CharPosteriorSequence> {
        let path = Self::path_for(&self.dir, clip);
        if !path.is_file() {
            return Err(Error::FrontendUnavailable {
                clip: clip.to_string(),
                reason: format!("no cached predictions at {}", path.display()),
            });
        }
        let seq = load_cached_predictions(&path, &self.vocab)?;
        let want = char_frames_for(waveform.len());
        if seq.len() != want {
            return Err(Error::Format(format!(
                "{}: {} frames cached, clip needs {want}",
                path.display(),
                seq.len()
            )));
        }
        Ok(seq)
    }
}

/// Spells a pseudo-transcript derived from the clip name.
pub struct SyntheticProvider {
    vocab: CharVocab,
    seed: u64,
}

impl SyntheticProvider {
    pub fn new(vocab: CharVocab, seed: u64) -> Self {
        Self { vocab, seed }
    }

    /// Letters of `clip` kept, everything else turned into word boundaries,
    /// shortened until it fits in `frames`.
    fn pseudo_text(&self, clip: &str, frames: usize) -> Vec<char> {
        let mut text: Vec<char> = clip
            .chars()
            .map(|c| c.to_ascii_lowercase())
            .map(|c| if self.vocab.index_of(c).is_some_and(|i| i != 0) { c } else { '|' })
            .filter(|&c| self.vocab.index_of(c).is_some())
            .collect();
        loop {
            let s: String = text.iter().collect();
            match self.vocab.encode(&s) {
                Ok(sym) if min_frames_for(&sym) <= frames => return text,
                _ if text.is_empty() => return text,
                _ => {
                    text.pop();
                }
            }
        }
    }
}

impl CharProvider for SyntheticProvider {
    fn char_predictions(&self, clip: &str, waveform: &Waveform) -> Result<CharPosteriorSequence> {
        let frames = char_frames_for(waveform.len());
        let text: String = self.pseudo_text(clip, frames).into_iter().collect();
        synthetic_provider(&text, frames, &self.vocab, self.seed)
    }
}

/// Build the provider named by the config.
pub fn provider_from_config(cfg: &FrontendConfig) -> Result<Box<dyn CharProvider>> {
    let vocab = CharVocab::new(&cfg.vocab)?;
    Ok(match cfg.kind {
        FrontendKind::Synthetic => Box::new(SyntheticProvider::new(vocab, cfg.seed)),
        FrontendKind::Cached => {
            let dir = cfg
                .cache_dir
                .as_ref()
                .ok_or_else(|| Error::Config("frontend.kind = cached needs frontend.cache_dir".into()))?;
            Box::new(CachedProvider::new(dir, vocab))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(seq: &CharPosteriorSequence, vocab: &CharVocab) -> String {
        seq.argmax().into_iter().map(|k| vocab.symbol(k)).collect()
    }

    #[test]
    fn default_vocab() {
        let v = CharVocab::default();
        assert_eq!(v.len(), 29);
        assert_eq!(v.symbol(0), '_');
        assert!(CharVocab::new("aa").is_err());
        assert!(CharVocab::new("_").is_err());
    }

    #[test]
    fn spreads_two_characters() {
        let v = CharVocab::default();
        let s = synthetic_provider("ab", 8, &v, 0).unwrap();
        assert_eq!(labels(&s, &v), "aa__bb__");
        assert_eq!(s.decode(&v), "ab");
    }

    #[test]
    fn empty_text_is_blank() {
        let v = CharVocab::default();
        let s = synthetic_provider("", 4, &v, 3).unwrap();
        assert_eq!(labels(&s, &v), "____");
    }

    #[test]
    fn too_short_is_invalid() {
        let v = CharVocab::default();
        assert!(synthetic_provider("abc", 2, &v, 0).is_err());
        // a repeat needs a blank in between
        assert!(synthetic_provider("aa", 2, &v, 0).is_err());
        assert_eq!(synthetic_provider("aa", 3, &v, 0).unwrap().decode(&v), "aa");
    }

    #[test]
    fn rows_put_095_on_the_label() {
        let v = CharVocab::default();
        let s = synthetic_provider("hello world", 56, &v, 9).unwrap();
        assert_eq!((s.len(), s.frames.dims()), (56, 29));
        for (t, k) in s.argmax().into_iter().enumerate() {
            assert!((s.frames.row(t)[k] - 0.95).abs() < 1e-6);
        }
        assert_eq!(s.decode(&v), "hello|world");
    }

    #[test]
    fn cache_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let v = CharVocab::default();
        let s = synthetic_provider("abc", 56, &v, 1).unwrap();
        let p = dir.path().join("clip.chars");
        write_cached_predictions(&p, &s).unwrap();
        assert_eq!(load_cached_predictions(&p, &v).unwrap(), s);

        let small = CharVocab::new("_ab").unwrap();
        assert!(matches!(load_cached_predictions(&p, &small), Err(Error::Format(_))));

        let empty = dir.path().join("empty.chars");
        std::fs::write(&empty, b"").unwrap();
        assert!(matches!(load_cached_predictions(&empty, &v), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn providers() {
        let dir = tempfile::tempdir().unwrap();
        let v = CharVocab::default();
        let w = Waveform::silence(17_920, 16_000);
        let cached = CachedProvider::new(dir.path(), v.clone());
        assert!(matches!(
            cached.char_predictions("missing", &w),
            Err(Error::FrontendUnavailable { clip, .. }) if clip == "missing"
        ));
        let syn = SyntheticProvider::new(v.clone(), 5);
        let a = syn.char_predictions("speaker_01-hello", &w).unwrap();
        assert_eq!(a.len(), 56);
        assert_eq!(a, syn.char_predictions("speaker_01-hello", &w).unwrap());
        write_cached_predictions(&CachedProvider::path_for(dir.path(), "x"), &a).unwrap();
        assert_eq!(cached.char_predictions("x", &w).unwrap(), a);
        // a clip name too long for the clip is shortened, not rejected
        let short = Waveform::silence(640, 16_000);
        assert_eq!(syn.char_predictions("abcdefgh", &short).unwrap().len(), 2);
    }

    #[test]
    fn one_hot_and_window() {
        let v = CharVocab::default();
        let s = synthetic_provider("ab", 8, &v, 0).unwrap();
        let h = s.to_one_hot();
        assert_eq!(h.argmax(), s.argmax());
        assert!(h.frames.data().iter().all(|&x| x == 0.0 || x == 1.0));
        let w = s.window(6, 4, 0);
        assert_eq!(labels(&w, &v), "____");
        assert_eq!(w.frames.row(0), s.frames.row(6));
    }

    /// Independent statement of the spreading rule for the even case.
    fn reference_labels(text: &[usize], frames: usize) -> Vec<usize> {
        let n = text.len();
        let mut out = vec![];
        for (i, &s) in text.iter().enumerate() {
            let len = frames / n + if i < frames % n { 1 } else { 0 };
            let on = (len + 1) / 2;
            for j in 0..len {
                out.push(if j < on { s } else { 0 });
            }
        }
        out
    }

    proptest! {
        #[test]
        fn decode_recovers_text(text in "[a-z' ]{0,20}", extra in 0usize..40, seed in any::<u64>()) {
            let v = CharVocab::default();
            let sym = v.encode(&text).unwrap();
            let frames = min_frames_for(&sym) + extra;
            let s = synthetic_provider(&text, frames, &v, seed).unwrap();
            prop_assert_eq!(s.decode(&v), text.replace(' ', "|"));
            for t in 0..s.len() {
                let sum: f64 = s.frames.row(t).iter().map(|&x| x as f64).sum();
                prop_assert!((sum - 1.0).abs() < 1e-5);
            }
            prop_assert_eq!(&s, &synthetic_provider(&text, frames, &v, seed).unwrap());
        }

        #[test]
        fn matches_reference_spreading(text in "[a-z]{1,10}", per in 2usize..6, extra in 0usize..5) {
            let v = CharVocab::default();
            let sym = v.encode(&text).unwrap();
            let frames = per * sym.len() + extra;
            let s = synthetic_provider(&text, frames, &v, 0).unwrap();
            prop_assert_eq!(s.argmax(), reference_labels(&sym, frames));
        }
    }
}
