//! Feature cache files: one JSON header line, then little-endian f32 planes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assemble::{FeatureTensor, PlaneNorm};
use super::spec::PlaneLabel;
use crate::error::{Error, Result};

const MAGIC: &str = "binloc-features/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    layout: Vec<String>,
    #[serde(rename = "C")]
    channels: usize,
    #[serde(rename = "T")]
    frames: usize,
    #[serde(rename = "F")]
    bins: usize,
    normalization: Vec<PlaneNorm>,
}

pub fn encode_feature_cache(t: &FeatureTensor) -> Vec<u8> {
    let header = Header {
        format: MAGIC.into(),
        layout: t.layout.iter().map(|l| l.as_str().to_string()).collect(),
        channels: t.n_channels(),
        frames: t.n_frames,
        bins: t.n_bins,
        normalization: t.normalization.clone(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(t.data.len() * 4);
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_cache(bytes: &[u8]) -> Result<FeatureTensor> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("feature cache has no header line".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Format(format!("feature cache header: {e}")))?;
    if header.format != MAGIC {
        return Err(Error::Format(format!("unexpected feature cache format {:?}", header.format)));
    }
    if header.layout.len() != header.channels || header.normalization.len() != header.channels {
        return Err(Error::Format("feature cache header is inconsistent".into()));
    }
    let layout = header
        .layout
        .iter()
        .map(|s| s.parse::<PlaneLabel>())
        .collect::<Result<Vec<_>>>()?;
    let body = &bytes[nl + 1..];
    let expected = header.channels * header.frames * header.bins * 4;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "feature cache body has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(FeatureTensor {
        layout,
        n_frames: header.frames,
        n_bins: header.bins,
        data,
        normalization: header.normalization,
    })
}

pub fn write_feature_cache(path: impl AsRef<Path>, t: &FeatureTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature_cache(t)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    decode_feature_cache(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioClip;
    use crate::features::{assemble_features, enumerate_table1_specs};

    #[test]
    fn round_trip_is_bit_exact() {
        let l: Vec<f32> = (0..16_000).map(|i| ((i * 31 % 997) as f32 / 997.0 - 0.5) * 0.2).collect();
        let r: Vec<f32> = l.iter().rev().copied().collect();
        let clip = AudioClip::new(l, r, 16_000, "c").unwrap();
        let t = assemble_features(&clip, &enumerate_table1_specs()[12]).unwrap();
        let bytes = encode_feature_cache(&t);
        let back = decode_feature_cache(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_feature_cache(&back), bytes);
    }

    #[test]
    fn truncated_body_is_a_format_error() {
        let clip = AudioClip::from_mono(vec![0.01; 16_000], 16_000, "c").unwrap();
        let t = assemble_features(&clip, &"ild".parse().unwrap()).unwrap();
        let mut bytes = encode_feature_cache(&t);
        bytes.pop();
        assert!(matches!(decode_feature_cache(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_feature_cache(b"no header"), Err(Error::Format(_))));
    }
}
