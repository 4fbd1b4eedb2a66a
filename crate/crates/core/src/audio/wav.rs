//! RIFF/WAVE PCM reader and writer (16- and 24-bit integer, mono or stereo).

use std::path::Path;

use super::{AudioClip, AudioError};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Format {
    code: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Decode("fmt chunk shorter than 16 bytes".into()));
    }
    let mut code = u16_at(body, 0);
    if code == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(AudioError::Decode("truncated WAVE_FORMAT_EXTENSIBLE header".into()));
        }
        // first two bytes of the sub-format GUID carry the real format code
        code = u16_at(body, 24);
    }
    Ok(Format {
        code,
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits: u16_at(body, 14),
    })
}

/// Decodes an in-memory WAV file.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Decode("missing RIFF/WAVE signature".into()));
    }
    let mut fmt = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start.saturating_add(size);
        match id {
            b"fmt " => {
                if end > bytes.len() {
                    return Err(AudioError::Decode("fmt chunk runs past end of file".into()));
                }
                fmt = Some(parse_fmt(&bytes[start..end])?);
            }
            // streaming writers leave the data size unset; take what is there
            b"data" => data = Some(&bytes[start..end.min(bytes.len())]),
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        pos = end.saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::Decode("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Decode("no data chunk".into()))?;

    match fmt.code {
        FORMAT_PCM => {}
        FORMAT_IEEE_FLOAT => {
            return Err(AudioError::UnsupportedFormat("IEEE float samples".into()))
        }
        other => {
            return Err(AudioError::UnsupportedFormat(format!("format code {other:#06x}")))
        }
    }
    if fmt.bits != 16 && fmt.bits != 24 {
        return Err(AudioError::UnsupportedFormat(format!("{}-bit PCM", fmt.bits)));
    }
    if fmt.channels != 1 && fmt.channels != 2 {
        return Err(AudioError::UnsupportedFormat(format!("{} channels", fmt.channels)));
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::Decode("sample rate is zero".into()));
    }
    let width = (fmt.bits / 8) as usize;
    let nch = fmt.channels as usize;
    if fmt.block_align as usize != width * nch {
        return Err(AudioError::Decode(format!(
            "block align {} does not match {} channels of {} bits",
            fmt.block_align, nch, fmt.bits
        )));
    }

    let frame_bytes = width * nch;
    let frames = data.len() / frame_bytes;
    let scale = 1.0 / (1u32 << (fmt.bits - 1)) as f64;
    let mut channels = vec![Vec::with_capacity(frames); nch];
    for frame in data.chunks_exact(frame_bytes) {
        for (ch, s) in channels.iter_mut().zip(frame.chunks_exact(width)) {
            let v = if width == 2 {
                i16::from_le_bytes([s[0], s[1]]) as i32
            } else {
                // sign-extend a 3-byte little-endian integer
                i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8
            };
            ch.push(v as f64 * scale);
        }
    }
    AudioClip::new(channels, fmt.sample_rate)
}

/// Reads and decodes a WAV file.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_wav(&bytes)
}

/// Encodes a clip as integer PCM, rounding and clipping to the target width.
pub fn encode_wav(clip: &AudioClip, bits: u16) -> Result<Vec<u8>, AudioError> {
    if bits != 16 && bits != 24 {
        return Err(AudioError::UnsupportedFormat(format!("{bits}-bit PCM")));
    }
    let nch = clip.num_channels();
    if nch > u16::MAX as usize {
        return Err(AudioError::Argument("too many channels".into()));
    }
    let width = (bits / 8) as usize;
    let data_len = clip.len() * nch * width;
    let full = (1i64 << (bits - 1)) as f64;
    let (lo, hi) = (-full, full - 1.0);

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(nch as u16).to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * (nch * width) as u32).to_le_bytes());
    out.extend_from_slice(&((nch * width) as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..clip.len() {
        for ch in clip.channels() {
            let v = (ch[i] * full).round().clamp(lo, hi) as i32;
            out.extend_from_slice(&v.to_le_bytes()[..width]);
        }
    }
    Ok(out)
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, bits: u16) -> Result<(), AudioError> {
    let path = path.as_ref();
    let bytes = encode_wav(clip, bits)?;
    std::fs::write(path, bytes).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })
}
