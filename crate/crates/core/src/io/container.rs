//! `RISC` binary channel container.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `RISC` |
//! | 2 | version (u16) |
//! | 4 | n_freq (u32) |
//! | 4 | n_pos (u32) |
//! | 8 | f_start [Hz] (f64) |
//! | 8 | f_step [Hz] (f64) |
//! | 8 | pointing angle [deg] (f64) |
//! | 1 | role tag (u8): 0 = BS sweep, i + 1 = sweep of RIS i |
//! | 8 | noise seed (u64) |
//!
//! followed by `n_freq * n_pos` `(re, im)` f64 pairs, frequency-major.
//! The carrier, the UE index and the static BS pointing of RIS sweeps are not
//! stored; readers supply them from the configuration.

use std::path::Path;

use num_complex::Complex64;

use crate::channel::{ChannelTensor, FrequencyGrid, SweepRole, TensorMeta};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RISC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 47;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainerHeader {
    pub version: u16,
    pub n_freq: u32,
    pub n_pos: u32,
    pub f_start: f64,
    pub f_step: f64,
    pub pointing: f64,
    pub role_tag: u8,
    pub seed: u64,
}

/// Context a reader needs to rebuild the tensor metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadContext<'a> {
    pub carrier: f64,
    pub ue_index: usize,
    pub ris_bs_pointing: &'a [f64],
}

pub fn encode(tensor: &ChannelTensor) -> Result<Vec<u8>> {
    let n_freq = u32::try_from(tensor.n_freq())
        .map_err(|_| Error::domain("too many frequency bins for a container"))?;
    let n_pos = u32::try_from(tensor.n_pos)
        .map_err(|_| Error::domain("too many positions for a container"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * tensor.values.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n_freq.to_le_bytes());
    out.extend_from_slice(&n_pos.to_le_bytes());
    out.extend_from_slice(&tensor.grid.f_start.to_le_bytes());
    out.extend_from_slice(&tensor.grid.f_step.to_le_bytes());
    out.extend_from_slice(&tensor.meta.pointing.to_le_bytes());
    out.push(tensor.meta.role.tag());
    out.extend_from_slice(&tensor.meta.seed.to_le_bytes());
    for v in &tensor.values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[self.at..self.at + N]);
        self.at += N;
        b
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

pub fn decode_header(bytes: &[u8]) -> std::result::Result<ContainerHeader, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Malformed(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    let mut c = Cursor { bytes, at: 0 };
    let magic: [u8; 4] = c.take();
    if magic != MAGIC {
        return Err(DecodeError::Malformed(format!("bad magic {magic:?}")));
    }
    let version = u16::from_le_bytes(c.take());
    if version != VERSION {
        return Err(DecodeError::Version(version));
    }
    Ok(ContainerHeader {
        version,
        n_freq: u32::from_le_bytes(c.take()),
        n_pos: u32::from_le_bytes(c.take()),
        f_start: c.f64(),
        f_step: c.f64(),
        pointing: c.f64(),
        role_tag: u8::from_le_bytes(c.take()),
        seed: u64::from_le_bytes(c.take()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeError {
    Malformed(String),
    Version(u16),
}

fn decode_inner(
    bytes: &[u8],
    ctx: &ReadContext<'_>,
) -> std::result::Result<ChannelTensor, DecodeError> {
    let h = decode_header(bytes)?;
    let n = h.n_freq as usize * h.n_pos as usize;
    let expected = HEADER_LEN + 16 * n;
    if bytes.len() != expected {
        return Err(DecodeError::Malformed(format!(
            "payload length {} does not match {} x {} entries",
            bytes.len() - HEADER_LEN,
            h.n_freq,
            h.n_pos
        )));
    }
    let role = match h.role_tag {
        0 => SweepRole::BsScan,
        t => {
            let ris = t as usize - 1;
            let bs_pointing = *ctx.ris_bs_pointing.get(ris).ok_or_else(|| {
                DecodeError::Malformed(format!("role tag {t} names an unconfigured RIS"))
            })?;
            SweepRole::RisScan { ris, bs_pointing }
        }
    };
    let mut c = Cursor {
        bytes,
        at: HEADER_LEN,
    };
    let values = (0..n)
        .map(|_| {
            let re = c.f64();
            Complex64::new(re, c.f64())
        })
        .collect();
    let grid = FrequencyGrid::from_bins(h.f_start, h.f_step, h.n_freq as usize, ctx.carrier)
        .map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let meta = TensorMeta {
        ue_index: ctx.ue_index,
        pointing: h.pointing,
        role,
        seed: h.seed,
    };
    ChannelTensor::new(values, h.n_pos as usize, grid, meta)
        .map_err(|e| DecodeError::Malformed(e.to_string()))
}

/// Decodes a container; `origin` names the source in errors.
pub fn decode(bytes: &[u8], ctx: &ReadContext<'_>, origin: &Path) -> Result<ChannelTensor> {
    decode_inner(bytes, ctx).map_err(|e| match e {
        DecodeError::Malformed(reason) => Error::Container {
            path: origin.to_path_buf(),
            reason,
        },
        DecodeError::Version(found) => Error::ContainerVersion {
            found,
            expected: VERSION,
        },
    })
}

pub fn write_container(path: &Path, tensor: &ChannelTensor) -> Result<()> {
    std::fs::write(path, encode(tensor)?)?;
    Ok(())
}

pub fn read_container(path: &Path, ctx: &ReadContext<'_>) -> Result<ChannelTensor> {
    decode(&std::fs::read(path)?, ctx, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(role: SweepRole) -> ChannelTensor {
        let grid = FrequencyGrid::from_bins(25e9, 1e9, 7, 28e9).unwrap();
        let values = (0..7 * 9)
            .map(|i| Complex64::new((i as f64).sin() * 1e-3, -(i as f64) / 3.0))
            .collect();
        let meta = TensorMeta {
            ue_index: 2,
            pointing: -35.0,
            role,
            seed: 0xDEAD_BEEF_1234,
        };
        ChannelTensor::new(values, 9, grid, meta).unwrap()
    }

    fn ctx() -> ReadContext<'static> {
        ReadContext {
            carrier: 28e9,
            ue_index: 2,
            ris_bs_pointing: &[-35.0, 0.0],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for role in [
            SweepRole::BsScan,
            SweepRole::RisScan {
                ris: 1,
                bs_pointing: 0.0,
            },
        ] {
            let t = tensor(role);
            let bytes = encode(&t).unwrap();
            assert_eq!(bytes.len(), HEADER_LEN + 16 * 63);
            let back = decode(&bytes, &ctx(), Path::new("mem")).unwrap();
            assert_eq!(back.meta, t.meta);
            assert_eq!(back.n_pos, t.n_pos);
            for (a, b) in back.values.iter().zip(&t.values) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
            assert_eq!(encode(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.risc");
        let t = tensor(SweepRole::BsScan);
        write_container(&path, &t).unwrap();
        assert_eq!(read_container(&path, &ctx()).unwrap().values, t.values);
    }

    #[test]
    fn rejects_malformed() {
        let bytes = encode(&tensor(SweepRole::BsScan)).unwrap();
        let p = Path::new("x.risc");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode(&bad, &ctx(), p),
            Err(Error::Container { .. })
        ));

        let short = &bytes[..bytes.len() - 1];
        let err = decode(short, &ctx(), p).unwrap_err();
        assert!(err.to_string().contains("payload length"), "{err}");

        assert!(matches!(
            decode(&bytes[..10], &ctx(), p),
            Err(Error::Container { .. })
        ));

        let mut v2 = bytes.clone();
        v2[4..6].copy_from_slice(&2u16.to_le_bytes());
        assert!(matches!(
            decode(&v2, &ctx(), p),
            Err(Error::ContainerVersion {
                found: 2,
                expected: 1
            })
        ));

        let mut tag = bytes;
        tag[HEADER_LEN - 9] = 7;
        assert!(matches!(
            decode(&tag, &ctx(), p),
            Err(Error::Container { .. })
        ));
    }
}
