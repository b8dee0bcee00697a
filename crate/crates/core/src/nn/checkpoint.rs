//! Checkpoint files: one text header line, then little-endian f32 blocks for
//! the parameters and both Adam moments, each in canonical layer order.

use std::fs;
use std::path::Path;

use super::model::{ModelState, CONV_CHANNELS, DROPOUT_RATE, HIDDEN_UNITS};
use crate::error::{Error, Result};
use crate::features::FeatureSetSpec;

const MAGIC: &str = "binloc-cnn/1";

pub const ARCH_FINGERPRINT: &str = "conv3x3-32-64-128.relu.maxpool2.gap.fc128.relu.dropout0.3.head1";

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelState<f32>,
    pub adam_m: ModelState<f32>,
    pub adam_v: ModelState<f32>,
    pub step: u64,
    pub features: FeatureSetSpec,
}

impl Checkpoint {
    /// A checkpoint for freshly initialized parameters (step 0, zero moments).
    pub fn fresh(params: ModelState<f32>, features: FeatureSetSpec) -> Self {
        let zeros = params.zeros_like();
        Checkpoint { adam_m: zeros.clone(), adam_v: zeros, params, step: 0, features }
    }

    pub fn input_channels(&self) -> usize {
        self.params.input_channels
    }

    fn header(&self) -> String {
        let layout: Vec<&str> = self.features.layout().iter().map(|l| l.as_str()).collect();
        format!(
            "{MAGIC} arch={ARCH_FINGERPRINT} c_in={} step={} features={} layout={}",
            self.params.input_channels,
            self.step,
            self.features.fingerprint(),
            layout.join(",")
        )
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = ck.header().into_bytes();
    out.push(b'\n');
    for state in [&ck.params, &ck.adam_m, &ck.adam_v] {
        for block in state.blocks() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn field<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Format(format!("checkpoint header lacks `{key}`")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("checkpoint has no header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let fields: Vec<(&str, &str)> = parts
        .map(|p| p.split_once('=').ok_or_else(|| Error::Format(format!("bad header field `{p}`"))))
        .collect::<Result<_>>()?;
    if field(&fields, "arch")? != ARCH_FINGERPRINT {
        return Err(Error::Format(format!("unknown architecture `{}`", field(&fields, "arch")?)));
    }
    let num = |key: &str| -> Result<u64> {
        field(&fields, key)?.parse().map_err(|_| Error::Format(format!("bad `{key}` in checkpoint header")))
    };
    let c_in = num("c_in")? as usize;
    let step = num("step")?;
    let features: FeatureSetSpec = field(&fields, "features")?
        .parse()
        .map_err(|e| Error::Format(format!("checkpoint feature set: {e}")))?;
    let layout = features.layout().iter().map(|l| l.as_str()).collect::<Vec<_>>().join(",");
    if features.n_planes() != c_in || field(&fields, "layout")? != layout {
        return Err(Error::Format("checkpoint header layout disagrees with its input channels".into()));
    }
    let template = ModelState::<f32>::zeros(c_in).map_err(|e| Error::Format(e.to_string()))?;
    let body = &bytes[nl + 1..];
    let n = template.param_count();
    if body.len() != 3 * n * 4 {
        return Err(Error::Format(format!("checkpoint body has {} bytes, expected {}", body.len(), 12 * n)));
    }
    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut read_state = || {
        let mut s = template.clone();
        for block in s.blocks_mut() {
            block.iter_mut().for_each(|v| *v = values.next().expect("length checked"));
        }
        s
    };
    let (params, adam_m, adam_v) = (read_state(), read_state(), read_state());
    Ok(Checkpoint { params, adam_m, adam_v, step, features })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint; with `expect`, also requires its input channel
/// count to match that feature set.
pub fn load_checkpoint(path: impl AsRef<Path>, expect: Option<&FeatureSetSpec>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let ck = decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)?;
    if let Some(spec) = expect {
        if spec.n_planes() != ck.input_channels() {
            return Err(Error::Validation(format!(
                "checkpoint has {} input channels but feature set {} needs {}",
                ck.input_channels(),
                spec.fingerprint(),
                spec.n_planes()
            )));
        }
    }
    Ok(ck)
}

// Keeps the fingerprint honest if the architecture constants change.
const _: () = assert!(CONV_CHANNELS[0] == 32 && CONV_CHANNELS[1] == 64 && CONV_CHANNELS[2] == 128 && HIDDEN_UNITS == 128);
const _: () = assert!(DROPOUT_RATE == 0.3);
