//! Binaural azimuth localization workbench: synthesis of labeled binaural
//! clips, time-frequency features, a small CNN regressor with its training
//! loop, and evaluation across feature-set combinations.

pub mod audio;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod training;

pub use audio::{AudioClip, ManifestRecord, Split};
pub use error::{Error, Result};
pub use features::{FeatureSetSpec, FeatureTensor, LabeledSet, PlaneLabel};
