use rand::Rng;

use crate::error::{Error, Result};

/// Aligned training excerpt of a mixture and its clean reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub mixture: Vec<f32>,
    pub clean: Vec<f32>,
    pub offset: usize,
    /// Zeros appended to reach the requested length.
    pub pad: usize,
}

/// Cuts `length` samples starting at one uniformly random offset shared by
/// both signals. Shorter signals are zero-padded at the tail.
pub fn sample_segments(
    mixture: &[f32],
    clean: &[f32],
    length: usize,
    rng: &mut impl Rng,
) -> Result<Segment> {
    if mixture.is_empty() || clean.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    if mixture.len() != clean.len() {
        return Err(Error::LengthMismatch(mixture.len(), clean.len()));
    }
    let n = mixture.len();
    if n <= length {
        let pad = length - n;
        let mut m = mixture.to_vec();
        let mut c = clean.to_vec();
        m.resize(length, 0.0);
        c.resize(length, 0.0);
        return Ok(Segment {
            mixture: m,
            clean: c,
            offset: 0,
            pad,
        });
    }
    let offset = rng.gen_range(0..=n - length);
    Ok(Segment {
        mixture: mixture[offset..offset + length].to_vec(),
        clean: clean[offset..offset + length].to_vec(),
        offset,
        pad: 0,
    })
}
