//! `EVPM` checkpoints.
//!
//! ```text
//! magic        "EVPM"
//! version      u8 = 1
//! in_channels  u32
//! widths       4 x u32
//! joints       u32
//! width        u32
//! height       u32
//! raw_features u8
//! count        u64
//! params       count x f32, declaration order
//! ```
//!
//! All integers and floats little-endian.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVPM";
const VERSION: u8 = 1;

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let cfg = params.config();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&[VERSION]).map_err(io)?;
    let dims = [
        cfg.in_channels,
        cfg.widths[0],
        cfg.widths[1],
        cfg.widths[2],
        cfg.widths[3],
        cfg.joints,
        cfg.width,
        cfg.height,
    ];
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Invalid(format!("dimension {d} too large")))?;
        w.write_all(&d.to_le_bytes()).map_err(io)?;
    }
    w.write_all(&[u8::from(cfg.raw_features)]).map_err(io)?;
    w.write_all(&(params.len() as u64).to_le_bytes()).map_err(io)?;
    for &v in params.as_slice() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    const HEADER: usize = 4 + 1 + 8 * 4 + 1 + 8;
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::parse("offset 0", "not an EVPM checkpoint"));
    }
    if bytes[4] != VERSION {
        return Err(Error::parse("offset 4", format!("unsupported version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let cfg = ModelConfig {
        in_channels: u32_at(5),
        widths: [u32_at(9), u32_at(13), u32_at(17), u32_at(21)],
        joints: u32_at(25),
        width: u32_at(29),
        height: u32_at(33),
        raw_features: bytes[37] != 0,
    };
    let count = u64::from_le_bytes(bytes[38..46].try_into().unwrap()) as usize;
    let body = &bytes[HEADER..];
    if count.checked_mul(4) != Some(body.len()) {
        return Err(Error::parse(
            format!("offset {HEADER}"),
            format!("declared {count} parameters, found {} bytes", body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    ModelParams::from_flat(&cfg, data)
}
