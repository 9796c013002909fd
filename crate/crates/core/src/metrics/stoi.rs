//! Short-time objective intelligibility.
//!
//! Signals are resampled to 10 kHz, frames more than 40 dB below the loudest
//! clean frame are dropped from both signals, and the remaining audio is
//! analysed in 15 one-third-octave bands. Short segments of band envelopes
//! are compared by normalized correlation after the processed envelope is
//! clipped to at most 15 dB above the clean one.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const EPS: f64 = f64::EPSILON;

#[derive(Clone, Debug, PartialEq)]
pub struct StoiConfig {
    pub input_rate: u32,
    pub analysis_rate: u32,
    pub frame: usize,
    pub fft_size: usize,
    pub bands: usize,
    pub min_freq: f64,
    /// Frames per correlation segment.
    pub segment: usize,
    pub dyn_range_db: f64,
    /// Lower bound on the signal-to-distortion ratio, in dB.
    pub beta_db: f64,
}

impl Default for StoiConfig {
    fn default() -> Self {
        StoiConfig {
            input_rate: 16_000,
            analysis_rate: 10_000,
            frame: 256,
            fft_size: 512,
            bands: 15,
            min_freq: 150.0,
            segment: 30,
            dyn_range_db: 40.0,
            beta_db: -15.0,
        }
    }
}

/// STOI of `processed` against `clean` with the standard constants.
pub fn stoi(clean: &[f32], processed: &[f32]) -> Result<f64> {
    stoi_with(clean, processed, &StoiConfig::default())
}

pub fn stoi_with(clean: &[f32], processed: &[f32], cfg: &StoiConfig) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::LengthMismatch(clean.len(), processed.len()));
    }
    if clean.is_empty() {
        return Err(Error::ZeroLengthInput("stoi"));
    }
    let to64 = |s: &[f32]| s.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let (mut x, mut y) = (to64(clean), to64(processed));
    if cfg.input_rate != cfg.analysis_rate {
        let r = Resampler::new(cfg.input_rate, cfg.analysis_rate);
        x = r.apply(&x);
        y = r.apply(&y);
    }
    let (x, y) = remove_silent_frames(&x, &y, cfg.frame, cfg.dyn_range_db);

    let window = hann(cfg.frame);
    let mut stft = Stft::new(cfg.fft_size);
    let bands = third_octave_bands(cfg.analysis_rate, cfg.fft_size, cfg.bands, cfg.min_freq);
    let xe = band_envelopes(&mut stft, &x, &window, &bands);
    let ye = band_envelopes(&mut stft, &y, &window, &bands);
    let frames = xe.first().map_or(0, Vec::len);
    if frames < cfg.segment {
        return Err(Error::TooShort {
            frames,
            needed: cfg.segment,
        });
    }

    let clip = 10f64.powf(-cfg.beta_db / 20.0);
    let n = cfg.segment;
    let mut total = 0.0;
    let mut count = 0usize;
    for m in n..=frames {
        for (xb, yb) in xe.iter().zip(&ye) {
            let xs = &xb[m - n..m];
            let ys = &yb[m - n..m];
            let scale = norm(xs) / (norm(ys) + EPS);
            let yc: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(&yv, &xv)| (yv * scale).min(xv * (1.0 + clip)))
                .collect();
            total += correlation(xs, &yc);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let ac: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let bc: Vec<f64> = b.iter().map(|v| v - mb).collect();
    let dot: f64 = ac.iter().zip(&bc).map(|(p, q)| p * q).sum();
    dot / ((norm(&ac) + EPS) * (norm(&bc) + EPS))
}

/// Hann window of `n + 2` points with both zero end points dropped.
fn hann(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Rational resampler with a Blackman-windowed sinc prototype.
///
/// The prototype runs at `up · input_rate` (80 kHz for 16 to 10 kHz) and
/// cuts off at 0.8 of the output Nyquist frequency (4 kHz), with sixteen
/// sinc lobes on each side. Blackman keeps stopband leakage near -74 dB and
/// its transition band ends below 5 kHz. Only the taps that land on
/// nonzero upsampled inputs are evaluated, which is the polyphase form.
pub struct Resampler {
    up: usize,
    down: usize,
    taps: Vec<f64>,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Self {
        let g = gcd(from as usize, to as usize);
        let (up, down) = (to as usize / g, from as usize / g);
        let fs_up = (from as usize * up) as f64;
        let cutoff = 0.8 * 0.5 * from.min(to) as f64;
        let f = 2.0 * cutoff / fs_up;
        let half = (16.0 / f).round() as usize;
        let len = 2 * half + 1;
        let mut taps: Vec<f64> = (0..len)
            .map(|i| {
                let t = i as f64 - half as f64;
                let sinc = if t == 0.0 {
                    1.0
                } else {
                    (PI * f * t).sin() / (PI * f * t)
                };
                let a = 2.0 * PI * i as f64 / (len - 1) as f64;
                let w = 0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos();
                f * sinc * w
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t *= up as f64 / sum);
        Resampler { up, down, taps }
    }

    /// Output has `ceil(len · up / down)` samples, aligned so that the
    /// filter delay is removed.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (up, down) = (self.up as i64, self.down as i64);
        let half = (self.taps.len() / 2) as i64;
        let out_len = (x.len() * self.up).div_ceil(self.down);
        (0..out_len as i64)
            .map(|m| {
                // Position in the upsampled signal whose filtered value we want.
                let c = m * down + half;
                // Input j contributes with tap c - up·j, which must lie in the filter.
                let j_lo = (c - self.taps.len() as i64 + 1 + up - 1)
                    .div_euclid(up)
                    .max(0);
                let j_hi = c.div_euclid(up).min(x.len() as i64 - 1);
                (j_lo..=j_hi)
                    .map(|j| x[j as usize] * self.taps[(c - up * j) as usize])
                    .sum()
            })
            .collect()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Drops frames whose clean energy is more than `range_db` below the
/// loudest clean frame and overlap-adds the survivors at half-frame hop.
fn remove_silent_frames(x: &[f64], y: &[f64], frame: usize, range_db: f64) -> (Vec<f64>, Vec<f64>) {
    let hop = frame / 2;
    let w = hann(frame);
    if x.len() < frame {
        return (Vec::new(), Vec::new());
    }
    let starts: Vec<usize> = (0..=x.len() - frame).step_by(hop).collect();
    let windowed = |s: &[f64], i: usize| -> Vec<f64> {
        s[i..i + frame].iter().zip(&w).map(|(a, b)| a * b).collect()
    };
    let energies: Vec<f64> = starts
        .iter()
        .map(|&i| 20.0 * (norm(&windowed(x, i)) + EPS).log10())
        .collect();
    let peak = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| e > peak - range_db)
        .map(|(&i, _)| i)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let len = (kept.len() - 1) * hop + frame;
    let (mut xs, mut ys) = (vec![0.0; len], vec![0.0; len]);
    for (k, &i) in kept.iter().enumerate() {
        let at = k * hop;
        for (o, v) in xs[at..at + frame].iter_mut().zip(windowed(x, i)) {
            *o += v;
        }
        for (o, v) in ys[at..at + frame].iter_mut().zip(windowed(y, i)) {
            *o += v;
        }
    }
    (xs, ys)
}

struct Stft {
    size: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Stft {
    fn new(size: usize) -> Self {
        Stft {
            size,
            fft: FftPlanner::new().plan_fft_forward(size),
            buf: vec![Complex::default(); size],
        }
    }

    /// Power spectrum (`size / 2 + 1` bins) of one zero-padded frame.
    fn power(&mut self, frame: &[f64], window: &[f64]) -> Vec<f64> {
        self.buf.iter_mut().for_each(|c| *c = Complex::default());
        for (c, (v, w)) in self.buf.iter_mut().zip(frame.iter().zip(window)) {
            c.re = v * w;
        }
        self.fft.process(&mut self.buf);
        self.buf[..self.size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }
}

/// Inclusive-exclusive FFT bin ranges of each one-third-octave band. Band
/// `k` is centred on `min_freq · 2^(k/3)` and bounded by the geometric
/// means with its neighbours, each edge snapped to the nearest bin and
/// clipped to Nyquist.
pub fn third_octave_bands(
    rate: u32,
    fft_size: usize,
    bands: usize,
    min_freq: f64,
) -> Vec<(usize, usize)> {
    let bins = fft_size / 2 + 1;
    let bin_hz = rate as f64 / fft_size as f64;
    let nearest = |hz: f64| ((hz / bin_hz).round() as usize).min(bins - 1);
    (0..bands)
        .map(|k| {
            let c = |j: f64| min_freq * 2f64.powf(j / 3.0);
            let k = k as f64;
            let lo = (c(k) * c(k - 1.0)).sqrt();
            let hi = (c(k) * c(k + 1.0)).sqrt();
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band magnitudes, indexed `[band][frame]`.
fn band_envelopes(
    stft: &mut Stft,
    x: &[f64],
    window: &[f64],
    bands: &[(usize, usize)],
) -> Vec<Vec<f64>> {
    let frame = window.len();
    let hop = frame / 2;
    let mut out = vec![Vec::new(); bands.len()];
    if x.len() < frame {
        return out;
    }
    for start in (0..=x.len() - frame).step_by(hop) {
        let p = stft.power(&x[start..start + frame], window);
        for (o, &(lo, hi)) in out.iter_mut().zip(bands) {
            o.push(p[lo..hi].iter().sum::<f64>().sqrt());
        }
    }
    out
}
