//! Audio I/O, SNR-controlled mixing, dataset manifests and the synthetic
//! fixture corpus.

pub mod fixtures;
pub mod manifest;
pub mod mix;
pub mod wav;

pub use fixtures::{make_fixture_corpus, FixtureCorpus};
pub use manifest::{
    build_manifest, list_wavs, load_pair, missing_files, plan_manifest, read_manifest,
    write_manifest, DataConfig, Manifest, ManifestRecord, PlannedPair, Split, MANIFEST_FILE,
};
pub use mix::{mix_at_snr, Mixture};
pub use wav::{read_wav, write_wav, WavEncoding, Waveform, SAMPLE_RATE};
