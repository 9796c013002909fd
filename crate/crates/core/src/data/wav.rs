//! Mono WAV input and output through `hound`.

use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>) -> Self {
        Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        if let Some(&v) = self.samples.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Clipping(v));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn map_err(path: &Path, e: hound::Error) -> Error {
    match e {
        // hound reports a short data chunk as a custom `Other` error.
        hound::Error::IoError(io)
            if io.kind() == ErrorKind::UnexpectedEof || io.to_string().contains("enough bytes") =>
        {
            Error::TruncatedFile {
                path: path.to_path_buf(),
            }
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(m) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: m.to_string(),
        },
        other => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Reads a mono 16 kHz file stored as 16-bit PCM or 32-bit float. PCM is
/// scaled by `1 / 32768`.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = WavReader::open(path).map_err(|e| map_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::StereoInput {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRateMismatch {
            path: path.to_path_buf(),
            expected: SAMPLE_RATE,
            found: spec.sample_rate,
        });
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect(),
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {fmt:?}; only 16-bit PCM and 32-bit float are read"),
            })
        }
    }
    .map_err(|e| map_err(path, e))?;
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes a validated waveform. PCM16 rounds `x·32768` to the nearest
/// integer and saturates `+1.0` at 32767.
pub fn write_wav(path: &Path, wav: &Waveform, encoding: WavEncoding) -> Result<()> {
    wav.validate()
        .map_err(|e| e.context(path.display().to_string()))?;
    let (bits, fmt) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate,
        bits_per_sample: bits,
        sample_format: fmt,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = WavWriter::create(path, spec).map_err(|e| map_err(path, e))?;
    for &v in &wav.samples {
        let r = match encoding {
            WavEncoding::Pcm16 => {
                w.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
            }
            WavEncoding::Float32 => w.write_sample(v),
        };
        r.map_err(|e| map_err(path, e))?;
    }
    w.finalize().map_err(|e| map_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Waveform {
        Waveform::new((0..1000).map(|i| (i as f32 / 999.0) * 2.0 - 1.0).collect())
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.1, -0.333, 1.0, -1.0, 1e-9, 0.0]);
        write_wav(&p, &w, WavEncoding::Float32).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(
            r.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            w.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pcm_round_trip_within_quantizer_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = ramp();
        write_wav(&p, &w, WavEncoding::Pcm16).unwrap();
        let r = read_wav(&p).unwrap();
        let worst = w
            .samples
            .iter()
            .zip(&r.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(worst <= 2f32.powi(-15), "{worst}");
    }

    #[test]
    fn rejects_wrong_rate_stereo_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&p),
            Err(Error::SampleRateMismatch { found: 44100, .. })
        ));

        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            ..spec
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&p),
            Err(Error::StereoInput { channels: 2, .. })
        ));

        write_wav(&p, &ramp(), WavEncoding::Float32).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::TruncatedFile { .. })));

        std::fs::write(&p, b"not a wav file at all").unwrap();
        let e = read_wav(&p).unwrap_err();
        assert!(e.is_data_format(), "{e}");
    }

    #[test]
    fn clipping_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let w = Waveform::new(vec![0.5, 1.5]);
        let e = write_wav(&dir.path().join("c.wav"), &w, WavEncoding::Float32).unwrap_err();
        assert!(e.to_string().contains("1.5"));
    }
}
