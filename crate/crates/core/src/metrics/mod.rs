//! Objective scoring of enhanced speech.

mod report;
mod si_snr;
mod stoi;

pub use report::{
    enhanced_path, group_means, score_manifest, Enhanced, GroupMean, ScoreReport, ScoreRow,
};
pub use si_snr::{si_snr, SI_SNR_CAP_DB};
pub use stoi::{stoi, stoi_with, third_octave_bands, Resampler, StoiConfig};
