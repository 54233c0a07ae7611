use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{invalid, Result};

/// Read a 16-bit PCM WAV, averaging channels to mono and scaling by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(invalid(format!(
            "{}: expected 16-bit PCM, found {}-bit {:?}",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let ch = spec.channels.max(1) as usize;
    let raw: Vec<i16> = reader.samples::<i16>().collect::<std::result::Result<_, _>>()?;
    let samples = raw
        .chunks(ch)
        .map(|frame| frame.iter().map(|&s| s as f32 / 32768.0).sum::<f32>() / frame.len() as f32)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

fn to_i16(x: f32) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Write mono 16-bit PCM. Samples outside [-1, 1) are clipped.
pub fn write_wav(path: &Path, waveform: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: waveform.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &x in waveform.samples() {
        w.write_sample(to_i16(x))?;
    }
    w.finalize()?;
    Ok(())
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_wav_atomic(path: &Path, waveform: &Waveform) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    if let Err(e) = write_wav(&tmp, waveform) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
