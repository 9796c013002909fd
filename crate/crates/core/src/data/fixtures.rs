//! Small synthetic corpus: voiced "speech" and three noise types.
//!
//! Every clean file is a sequence of harmonic syllables with a randomly
//! placed spectral peak, framed by silence. Noises are 12 s of
//! `noise_00` high-passed white noise, `noise_01` amplitude-modulated white
//! noise and `noise_02` low-passed white noise. File `k` draws from stream
//! `k` of a ChaCha8 generator seeded with the corpus seed.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wav::{write_wav, WavEncoding, Waveform, SAMPLE_RATE};
use crate::error::Result;

pub const CLEAN_FILES: usize = 12;
pub const NOISE_FILES: usize = 3;
pub const NOISE_SECONDS: f64 = 12.0;
pub const CLEAN_DIR: &str = "clean";
pub const NOISE_DIR: &str = "noise";

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureCorpus {
    pub clean_dir: PathBuf,
    pub noise_dir: PathBuf,
    pub clean: Vec<PathBuf>,
    pub noise: Vec<PathBuf>,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// 4 to 4.5 s of harmonic syllables at a fundamental between 100 and 220 Hz,
/// peak amplitude 0.5.
pub fn synth_utterance(rng: &mut impl Rng) -> Vec<f32> {
    let sr = SAMPLE_RATE as f64;
    let n = ((4.0 + rng.gen_range(0.0..0.5)) * sr) as usize;
    let f0 = rng.gen_range(100.0..220.0);
    let edge = (0.25 * sr) as usize;
    let mut out = vec![0.0f64; n];
    let mut t = edge;
    while t < n - edge {
        let len = ((rng.gen_range(0.18..0.4) * sr) as usize).min(n - edge - t);
        let pitch = f0 * rng.gen_range(0.9..1.15);
        let glide = rng.gen_range(-0.15..0.15);
        let formant = rng.gen_range(400.0..2500.0);
        let width: f64 = rng.gen_range(300.0..900.0);
        let harmonics = (3800.0 / pitch) as usize;
        let amps: Vec<f64> = (1..=harmonics)
            .map(|h| {
                let f = h as f64 * pitch;
                (1.0 / h as f64) * (0.3 + (-((f - formant) / width).powi(2)).exp())
            })
            .collect();
        let mut phase = 0.0;
        for i in 0..len {
            let x = i as f64 / len as f64;
            let f = pitch * (1.0 + glide * x);
            phase += 2.0 * PI * f / sr;
            let env = (PI * x).sin().powi(2);
            let v: f64 = amps
                .iter()
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
                .sum();
            out[t + i] += env * v;
        }
        t += len + (rng.gen_range(0.04..0.12) * sr) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.iter().map(|v| (0.5 * v / peak) as f32).collect()
}

/// Noise of type `kind` (0, 1 or 2) with RMS 0.1.
pub fn synth_noise(kind: usize, len: usize, rng: &mut impl Rng) -> Vec<f32> {
    let sr = SAMPLE_RATE as f64;
    let white: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shaped: Vec<f64> = match kind {
        0 => {
            let mut prev = 0.0;
            white
                .iter()
                .map(|&x| {
                    let y = x - 0.95 * prev;
                    prev = x;
                    y
                })
                .collect()
        }
        1 => {
            let rate = rng.gen_range(2.0..5.0);
            white
                .iter()
                .enumerate()
                .map(|(i, &x)| x * (1.0 + 0.8 * (2.0 * PI * rate * i as f64 / sr).sin()))
                .collect()
        }
        _ => {
            let mut y = 0.0;
            white
                .iter()
                .map(|&x| {
                    y = 0.9 * y + 0.1 * x;
                    y
                })
                .collect()
        }
    };
    let rms = (shaped.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    shaped.iter().map(|v| (0.1 * v / rms) as f32).collect()
}

/// Writes `clean/utt_00.wav … utt_11.wav` and `noise/noise_00.wav …
/// noise_02.wav` under `out_dir` as 16 kHz float32.
pub fn make_fixture_corpus(out_dir: &Path, seed: u64) -> Result<FixtureCorpus> {
    let clean_dir = out_dir.join(CLEAN_DIR);
    let noise_dir = out_dir.join(NOISE_DIR);
    let mut clean = Vec::with_capacity(CLEAN_FILES);
    for k in 0..CLEAN_FILES {
        let p = clean_dir.join(format!("utt_{k:02}.wav"));
        let samples = synth_utterance(&mut stream(seed, k as u64));
        write_wav(&p, &Waveform::new(samples), WavEncoding::Float32)?;
        clean.push(p);
    }
    let len = (NOISE_SECONDS * SAMPLE_RATE as f64) as usize;
    let mut noise = Vec::with_capacity(NOISE_FILES);
    for k in 0..NOISE_FILES {
        let p = noise_dir.join(format!("noise_{k:02}.wav"));
        let samples = synth_noise(k, len, &mut stream(seed, (CLEAN_FILES + k) as u64));
        write_wav(&p, &Waveform::new(samples), WavEncoding::Float32)?;
        noise.push(p);
    }
    Ok(FixtureCorpus {
        clean_dir,
        noise_dir,
        clean,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mix::power;
    use crate::data::wav::read_wav;

    #[test]
    fn corpus_contract() {
        let dir = tempfile::tempdir().unwrap();
        let c = make_fixture_corpus(dir.path(), 7).unwrap();
        assert_eq!(c.clean.len() + c.noise.len(), 15);
        for p in c.clean.iter().chain(&c.noise) {
            let w = read_wav(p).unwrap();
            assert!(w.len() >= 4 * SAMPLE_RATE as usize, "{}", p.display());
            assert!(w.samples.iter().all(|v| v.abs() <= 1.0));
        }
        for p in &c.noise {
            let w = read_wav(p).unwrap();
            for win in w.samples.windows(16384).step_by(1024) {
                assert!(power(win) > 1e-4);
            }
        }
        for p in &c.clean {
            let w = read_wav(p).unwrap();
            assert_eq!(w.samples[0], 0.0);
            assert_eq!(*w.samples.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ca = make_fixture_corpus(a.path(), 3).unwrap();
        let cb = make_fixture_corpus(b.path(), 3).unwrap();
        for (x, y) in ca
            .clean
            .iter()
            .chain(&ca.noise)
            .zip(cb.clean.iter().chain(&cb.noise))
        {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let c = tempfile::tempdir().unwrap();
        let cc = make_fixture_corpus(c.path(), 4).unwrap();
        assert_ne!(
            std::fs::read(&ca.clean[0]).unwrap(),
            std::fs::read(&cc.clean[0]).unwrap()
        );
    }
}
