//! Corpora of univariate series: file formats, splitting, window sampling,
//! frequency mapping between datasets and synthetic families.

pub mod convert;
mod corpus;
mod mapping;
mod overlap;
mod sampler;
mod series;
mod split;
mod synth;
mod upsample;

pub use convert::{convert, default_horizon, ConvertOptions, SourceLayout};
pub use corpus::{
    load_corpus, read_manifest, save_corpus, Corpus, CorpusManifest, ManifestSplit, CORPUS_SCHEMA_VERSION,
    MANIFEST_FILE,
};
pub use mapping::{map_frequency, map_frequency_for, source_series, SourceSplit};
pub use overlap::{screen_overlaps, OverlapMatch, OverlapReport};
pub use sampler::{fill_window, sample_batch, window_at, WindowSample, WindowSampler, DEFAULT_HISTORY_HORIZONS};
pub use series::{DatasetKind, Frequency, TimeSeries};
pub use split::{split, split_series, split_values, training_region, SplitMode, SplitPart};
pub use synth::{synth_corpus, SynthFamily};
pub use upsample::upsample_bilinear;
