//! Minimal RIFF/WAVE reader and writer.
//!
//! Reads PCM16 and IEEE float32, mono or stereo, at 16 or 48 kHz. Mono input
//! is duplicated to both ears. Writing supports the same two encodings in
//! stereo.

use std::fs;
use std::path::Path;

use super::{AudioClip, OPERATING_RATE_HZ, SOURCE_RATE_HZ};
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

#[derive(Debug)]
struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::Format(format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let mut format = le_u16(body, 0);
    if format == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID,
        // whose first two bytes carry the actual format tag.
        if body.len() < 26 {
            return Err(Error::Format("truncated WAVE_FORMAT_EXTENSIBLE header".into()));
        }
        format = le_u16(body, 24);
    }
    Ok(FmtChunk {
        format,
        channels: le_u16(body, 2),
        sample_rate: le_u32(body, 4),
        bits: le_u16(body, 14),
    })
}

/// Decodes a WAV byte stream into a stereo clip.
pub fn decode_wav(bytes: &[u8], source_id: &str) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }
    let mut fmt = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "chunk {:?} claims {size} bytes past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        match id {
            b"fmt " => fmt = Some(parse_fmt(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;

    if fmt.channels != 1 && fmt.channels != 2 {
        return Err(Error::UnsupportedFormat(format!("{} channels", fmt.channels)));
    }
    if fmt.sample_rate != OPERATING_RATE_HZ && fmt.sample_rate != SOURCE_RATE_HZ {
        return Err(Error::UnsupportedFormat(format!("sample rate {} Hz", fmt.sample_rate)));
    }
    let decode: fn(&[u8]) -> f32 = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0,
        (FORMAT_FLOAT, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        (f, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "format tag {f} with {bits} bits per sample"
            )))
        }
    };
    let width = fmt.bits as usize / 8;
    let frame = width * fmt.channels as usize;
    if data.len() % frame != 0 {
        return Err(Error::Format(format!(
            "data chunk of {} bytes is not a whole number of {frame}-byte frames",
            data.len()
        )));
    }
    let frames = data.len() / frame;
    let mut left = Vec::with_capacity(frames);
    let mut right = Vec::with_capacity(frames);
    for f in data.chunks_exact(frame) {
        let l = decode(&f[..width]);
        let r = if fmt.channels == 2 { decode(&f[width..]) } else { l };
        left.push(l);
        right.push(r);
    }
    AudioClip::new(left, right, fmt.sample_rate, source_id)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(&bytes, &id)
}

/// Encodes a stereo clip. PCM16 samples are rounded and clamped to the i16 range.
pub fn encode_wav(clip: &AudioClip, encoding: WavEncoding) -> Vec<u8> {
    let (format, bits) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16u16),
        WavEncoding::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let channels = 2u16;
    let block_align = channels * bits / 8;
    let data_len = clip.len() * block_align as usize;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz() * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for (&l, &r) in clip.left().iter().zip(clip.right()) {
        for s in [l, r] {
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                WavEncoding::Float32 => out.extend_from_slice(&s.to_le_bytes()),
            }
        }
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip, encoding)).map_err(|e| Error::io(path, e))
}
