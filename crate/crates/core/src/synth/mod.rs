//! Synthetic binaural material: source generators, a parametric spherical-head
//! renderer and the labeled dataset builder.

mod dataset;
mod head;
mod render;
mod source;

pub use dataset::{
    build_dataset, plan_dataset, AzimuthGrid, ClipJob, DatasetConfig, DatasetSummary, SplitSpec,
    SplitSummary,
};
pub use head::{fractional_delay, itd_woodworth, shadow_fir, shadow_iir_coefficients, HeadModel};
pub use render::{render_binaural, reverb_impulse_response, CLIP_SAMPLES};
pub use source::{generate_source, SourceKind, SourceSpec, SOURCE_RMS};
