//! Time-frequency features: STFT, magnitude/phase planes, interaural level
//! and phase differences, and their assembly into network inputs.

mod assemble;
mod cache;
mod dataset;
mod planes;
mod spec;
mod stft;

pub use assemble::{assemble_features, raw_planes, FeatureTensor, PlaneNorm, RawPlanes};
pub use cache::{decode_feature_cache, encode_feature_cache, read_feature_cache, write_feature_cache};
pub use dataset::{load_clip, load_labeled_set, LabeledSet};
pub use planes::{ild, ipd, magnitude, phase, wrap_angle, Plane, ILD_EPSILON};
pub use spec::{enumerate_table1_specs, FeatureSetSpec, PlaneLabel};
pub use stft::{hann_window, stft, Channel, ComplexSpectrogram, FFT_LEN, HOP, N_BINS, WINDOW_LEN};

/// STFT frames in a one-second 16 kHz clip.
pub const CLIP_FRAMES: usize = 98;
