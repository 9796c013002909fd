use crate::error::{Error, Result};

/// Result of mixing a clean utterance with scaled noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub mixture: Vec<f32>,
    /// Clean reference after the same normalization as the mixture.
    pub clean: Vec<f32>,
    /// Factor applied to the noise segment.
    pub gain: f64,
    /// `10·log10(P_clean / P_scaled_noise)` measured on the scaled signals.
    pub achieved_snr_db: f64,
    /// Joint peak normalization applied to both signals (1 when none).
    pub norm_scale: f64,
}

/// Mean squared amplitude, accumulated in `f64`.
pub fn power(x: &[f32]) -> f64 {
    x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len().max(1) as f64
}

/// Noise gain that puts `noise` at `snr_db` below `clean`.
pub fn snr_gain(clean_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (clean_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Adds `noise[offset .. offset + clean.len()]`, scaled to the requested
/// SNR, to `clean`. If the sum leaves `[−1, 1]` both signals are divided by
/// the mixture peak, which leaves the SNR unchanged.
pub fn mix_at_snr(clean: &[f32], noise: &[f32], snr_db: f64, offset: usize) -> Result<Mixture> {
    if clean.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let end = offset + clean.len();
    if end > noise.len() {
        return Err(Error::SegmentOutOfRange {
            start: offset,
            end,
            len: noise.len(),
        });
    }
    let seg = &noise[offset..end];
    let (pc, pn) = (power(clean), power(seg));
    if pc == 0.0 {
        return Err(Error::ZeroPower("clean"));
    }
    if pn == 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    let gain = snr_gain(pc, pn, snr_db);
    let scaled: Vec<f64> = seg.iter().map(|&n| gain * n as f64).collect();
    let achieved_snr_db =
        10.0 * (pc / (scaled.iter().map(|v| v * v).sum::<f64>() / scaled.len() as f64)).log10();
    let mut mix: Vec<f64> = clean
        .iter()
        .zip(&scaled)
        .map(|(&c, &n)| c as f64 + n)
        .collect();
    let peak = mix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm_scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    mix.iter_mut().for_each(|v| *v *= norm_scale);
    Ok(Mixture {
        mixture: mix.iter().map(|&v| (v as f32).clamp(-1.0, 1.0)).collect(),
        clean: clean
            .iter()
            .map(|&c| (c as f64 * norm_scale) as f32)
            .collect(),
        gain,
        achieved_snr_db,
        norm_scale,
    })
}
