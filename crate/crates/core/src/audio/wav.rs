use std::io::Cursor;
use std::path::{Path, PathBuf};

use super::{AudioClip, AudioError, SUPPORTED_RATES};

/// Decodes a PCM WAV payload (16-bit integer or 32-bit float), mixes it down
/// to mono and resamples to `target_rate`.
pub fn decode_and_normalize(raw: &[u8], target_rate: u32) -> Result<AudioClip, AudioError> {
    if !SUPPORTED_RATES.contains(&target_rate) {
        return Err(AudioError::UnsupportedRate(target_rate));
    }
    let (samples, rate) = decode_wav(raw)?;
    let samples = super::resample(&samples, rate, target_rate);
    AudioClip::from_unclamped("", samples, target_rate, 0.0)
}

/// Decodes a WAV payload to mono `f32` samples at the file's native rate.
pub fn decode_wav(raw: &[u8]) -> Result<(Vec<f32>, u32), AudioError> {
    if raw.len() < 12 || &raw[0..4] != b"RIFF" || &raw[8..12] != b"WAVE" {
        return Err(AudioError::UnsupportedFormat("not a RIFF/WAVE container".into()));
    }
    let reader = hound::WavReader::new(Cursor::new(raw)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::CorruptAudio("zero channels".into()));
    }

    // hound stops short on a truncated data chunk without raising, so
    // compare against the declared length.
    let declared = reader.len() as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} PCM"
            )))
        }
    };
    if interleaved.len() < declared {
        return Err(AudioError::CorruptAudio(format!(
            "payload truncated: {} of {declared} samples",
            interleaved.len()
        )));
    }
    if interleaved.len() % channels != 0 {
        return Err(AudioError::CorruptAudio("partial frame at end of data".into()));
    }

    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok((mono, spec.sample_rate))
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::FormatError(msg) => AudioError::UnsupportedFormat(msg.to_string()),
        hound::Error::Unsupported => AudioError::UnsupportedFormat("unsupported WAV variant".into()),
        hound::Error::IoError(e) => AudioError::CorruptAudio(e.to_string()),
        other => AudioError::CorruptAudio(other.to_string()),
    }
}

/// Encodes mono samples as a 16-bit PCM WAV.
pub fn encode_wav_i16(samples: &[f32], sample_rate: u32) -> Result<Vec<u8>, AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut buf, spec).map_err(map_hound)?;
        for s in samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v).map_err(map_hound)?;
        }
        writer.finalize().map_err(map_hound)?;
    }
    Ok(buf.into_inner())
}

/// `{track_id}__{offset_ms}.wav`
pub fn clip_file_name(clip: &AudioClip) -> String {
    let offset_ms = (clip.offset_s * 1000.0).round() as u64;
    format!("{}__{offset_ms}.wav", sanitize(&clip.track_id))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Persists a clip as 16-bit 44.1 kHz WAV inside `dir`, returning the path.
pub fn write_clip_wav(clip: &AudioClip, dir: &Path) -> Result<PathBuf, AudioError> {
    std::fs::create_dir_all(dir)?;
    let at_44k = clip.resampled(44_100);
    let bytes = encode_wav_i16(&at_44k.samples, 44_100)?;
    let path = dir.join(clip_file_name(clip));
    std::fs::write(&path, bytes)?;
    Ok(path)
}
