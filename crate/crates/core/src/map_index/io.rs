//! Binary layout, all scalars little-endian:
//!
//! ```text
//! magic           8 bytes  "GEOMAPDB"
//! version         u32      1
//! descriptor_dim  u32
//! entry_count     u64
//! resolution      f64      meters per map pixel
//! width_px        u32
//! height_px       u32
//! stride          u32
//! entries         entry_count × (east f64, north f64, descriptor_dim × f64)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector2;

use super::MapFeatureDB;
use crate::error::{Error, Result};
use crate::frames::MapGeometry;

const MAGIC: &[u8; 8] = b"GEOMAPDB";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 4 + 4 + 4;

pub fn write_db<W: Write>(db: &MapFeatureDB, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(db.descriptor_dim as u32).to_le_bytes())?;
    w.write_all(&(db.len() as u64).to_le_bytes())?;
    w.write_all(&db.geom.resolution.to_le_bytes())?;
    w.write_all(&db.geom.width_px.to_le_bytes())?;
    w.write_all(&db.geom.height_px.to_le_bytes())?;
    w.write_all(&db.stride.to_le_bytes())?;
    for j in 0..db.len() {
        let p = db.position(j);
        w.write_all(&p.x.to_le_bytes())?;
        w.write_all(&p.y.to_le_bytes())?;
        for x in db.descriptor(j) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_db(db: &MapFeatureDB, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_db(db, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_db(path: impl AsRef<Path>) -> Result<MapFeatureDB> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_db(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            field,
            reason: format!("file truncated at byte {}", self.bytes.len()),
        })?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice length equals N"))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        self.take::<4>(field).map(u32::from_le_bytes)
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        self.take::<8>(field).map(u64::from_le_bytes)
    }

    fn f64(&mut self, field: &'static str) -> Result<f64> {
        self.take::<8>(field).map(f64::from_le_bytes)
    }
}

fn format_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        field,
        reason: reason.into(),
    }
}

/// Parses a database image, checking every header field and the total length
/// before decoding entries.
pub fn read_db(bytes: &[u8]) -> Result<MapFeatureDB> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take::<8>("magic")?;
    if &magic != MAGIC {
        return Err(format_err("magic", format!("expected {MAGIC:?}, found {magic:?}")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(format_err("version", format!("unsupported version {version}")));
    }
    let dim = cur.u32("descriptor_dim")? as usize;
    if dim == 0 {
        return Err(format_err("descriptor_dim", "must be positive"));
    }
    let count = cur.u64("entry_count")?;
    let resolution = cur.f64("resolution")?;
    let width = cur.u32("width_px")?;
    let height = cur.u32("height_px")?;
    let stride = cur.u32("stride")?;
    let geom = MapGeometry {
        resolution,
        width_px: width,
        height_px: height,
    };
    geom.validate().map_err(|e| format_err("geometry", e.to_string()))?;
    if stride == 0 {
        return Err(format_err("stride", "must be at least 1"));
    }

    let entry_len = (2 + dim) * 8;
    let body = bytes.len() - HEADER_LEN;
    if !body.is_multiple_of(entry_len) || (body / entry_len) as u64 != count {
        return Err(format_err(
            "entry_count",
            format!(
                "header declares {count} entries of {entry_len} bytes but {body} bytes follow the header"
            ),
        ));
    }

    let mut db = MapFeatureDB::new(geom, stride, dim)?;
    db.descriptors.reserve(count as usize * dim);
    db.positions.reserve(count as usize);
    for _ in 0..count {
        let e = cur.f64("entry.position")?;
        let n = cur.f64("entry.position")?;
        if !(e.is_finite() && n.is_finite()) {
            return Err(format_err("entry.position", "non-finite coordinate"));
        }
        db.positions.push(Vector2::new(e, n));
        for _ in 0..dim {
            let x = cur.f64("entry.descriptor")?;
            if !x.is_finite() {
                return Err(format_err("entry.descriptor", "non-finite component"));
            }
            db.descriptors.push(x);
        }
    }
    Ok(db)
}
