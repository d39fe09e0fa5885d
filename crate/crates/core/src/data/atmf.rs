//! ATMF feature container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   b"ATMF"
//! version u16
//! 3 stream records, tags in order 0 (object), 1 (frame), 2 (motion):
//!     tag u8, T u32, D u32, then T*D IEEE-754 f32 row-major
//! crc32   u32 over every byte after the version up to here
//! ```

use super::FeatureBundle;
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;

pub const ATMF_MAGIC: &[u8; 4] = b"ATMF";
pub const ATMF_VERSION: u16 = 1;

fn format_err(offset: u64, msg: impl Into<String>) -> CoreError {
    CoreError::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn write_feature_bundle(path: &Path, bundle: &FeatureBundle) -> Result<()> {
    let mut payload = Vec::new();
    for (tag, tensor) in [
        (0u8, &bundle.object),
        (1u8, &bundle.frame),
        (2u8, &bundle.motion),
    ] {
        let (t, d) = tensor.dims2()?;
        payload.push(tag);
        payload.extend_from_slice(&(t as u32).to_le_bytes());
        payload.extend_from_slice(&(d as u32).to_le_bytes());
        for &v in tensor.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);

    let mut file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut write = |bytes: &[u8]| -> Result<()> {
        file.write_all(bytes).map_err(|e| CoreError::io(path, e))
    };
    write(ATMF_MAGIC)?;
    write(&ATMF_VERSION.to_le_bytes())?;
    write(&payload)?;
    write(&crc.to_le_bytes())?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(format_err(
                self.pos as u64,
                format!("truncated while reading {what} ({n} bytes wanted, {} left)", self.bytes.len() - self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Read and validate an ATMF file. The bundle's `video_id` is the file stem.
pub fn read_feature_bundle(path: &Path) -> Result<FeatureBundle> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    let magic = cur.take(4, "magic")?;
    if magic != ATMF_MAGIC {
        return Err(format_err(0, format!("bad magic {magic:02x?}, expected \"ATMF\"")));
    }
    let version = cur.u16("version")?;
    if version != ATMF_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }

    let payload_start = cur.pos;
    let mut streams: Vec<Tensor> = Vec::with_capacity(3);
    let mut t_shared: Option<u32> = None;
    for expected_tag in 0u8..3 {
        let tag_offset = cur.pos as u64;
        let tag = cur.u8("stream tag")?;
        if tag != expected_tag {
            return Err(format_err(
                tag_offset,
                format!("stream tag {tag}, expected {expected_tag} (object=0, frame=1, motion=2)"),
            ));
        }
        let t = cur.u32("clip count")?;
        let d = cur.u32("feature width")?;
        if t == 0 || d == 0 {
            return Err(format_err(tag_offset + 1, format!("stream {tag} has zero dimension {t}x{d}")));
        }
        match t_shared {
            None => t_shared = Some(t),
            Some(prev) if prev != t => {
                return Err(format_err(
                    tag_offset + 1,
                    format!("stream {tag} clip count {t} disagrees with {prev}"),
                ));
            }
            _ => {}
        }
        let count = t as usize * d as usize;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let off = cur.pos as u64;
            let b = cur.take(4, "feature value")?;
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if !v.is_finite() {
                return Err(format_err(off, format!("non-finite value at element {i} of stream {tag}")));
            }
            data.push(v as f64);
        }
        streams.push(Tensor::matrix(t as usize, d as usize, data)?);
    }

    let crc_offset = cur.pos as u64;
    let stored_crc = cur.u32("crc32")?;
    let computed = crc32fast::hash(&bytes[payload_start..crc_offset as usize]);
    if stored_crc != computed {
        return Err(format_err(
            crc_offset,
            format!("crc mismatch: stored {stored_crc:#010x}, computed {computed:#010x}"),
        ));
    }
    if cur.pos != bytes.len() {
        return Err(format_err(
            cur.pos as u64,
            format!("{} trailing bytes after crc", bytes.len() - cur.pos),
        ));
    }

    let video_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unknown")
        .to_string();
    let motion = streams.pop().unwrap();
    let frame = streams.pop().unwrap();
    let object = streams.pop().unwrap();
    FeatureBundle::new(video_id, object, frame, motion)
}
