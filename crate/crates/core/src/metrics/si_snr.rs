use crate::error::{Error, Result};

/// Returned when the residual vanishes, i.e. the signals are identical up
/// to scale and offset. Also the magnitude of the lower clamp.
pub const SI_SNR_CAP_DB: f64 = 100.0;

/// Scale-invariant SNR in dB. Both signals are mean-removed; `processed` is
/// projected onto `clean` and the projection is compared with the residual.
/// The result is clamped to `±SI_SNR_CAP_DB`.
pub fn si_snr(clean: &[f32], processed: &[f32]) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::LengthMismatch(clean.len(), processed.len()));
    }
    if clean.is_empty() {
        return Err(Error::ZeroLengthInput("si_snr"));
    }
    let centred = |s: &[f32]| {
        let m = s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64;
        s.iter().map(|&v| v as f64 - m).collect::<Vec<_>>()
    };
    let (x, y) = (centred(clean), centred(processed));
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx == 0.0 {
        return Err(Error::ZeroPower("clean"));
    }
    let alpha = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / xx;
    let target = alpha * alpha * xx;
    let residual: f64 = x.iter().zip(&y).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    if target == 0.0 {
        return Ok(-SI_SNR_CAP_DB);
    }
    if residual <= target * 1e-10 {
        return Ok(SI_SNR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB))
}
