//! The fixed interchange format: RIFF WAV, 16 kHz, mono, 16-bit PCM.

use std::io::Cursor;

pub const SAMPLE_RATE: u32 = 16_000;

/// Bytes written for audio a simulated TTS failed to produce. Not a parseable WAV.
pub const INVALID_PLACEHOLDER: &[u8] = b"RIFF\0\0\0\0WAVEbroken";

fn spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

pub fn encode(samples: &[i16]) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::with_capacity(44 + samples.len() * 2));
    {
        let mut w = hound::WavWriter::new(&mut buf, spec()).expect("in-memory writer");
        for &s in samples {
            w.write_sample(s).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

pub fn triangle_wave(len: usize, period: usize) -> Vec<i16> {
    let period = period.max(2);
    let half = period / 2;
    (0..len)
        .map(|i| {
            let phase = i % period;
            let ramp = if phase < half { phase } else { period - phase };
            ((ramp * 16_000 / half.max(1)) as i32 - 8_000) as i16
        })
        .collect()
}

/// Duration in seconds if `bytes` is a well-formed WAV in the interchange
/// format, `None` otherwise.
pub fn inspect(bytes: &[u8]) -> Option<f64> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).ok()?;
    let s = reader.spec();
    if s.channels != 1 || s.sample_rate != SAMPLE_RATE || s.bits_per_sample != 16 {
        return None;
    }
    let frames = reader.duration();
    let needed = 44 + frames as usize * 2;
    if bytes.len() < needed {
        return None;
    }
    Some(frames as f64 / SAMPLE_RATE as f64)
}
