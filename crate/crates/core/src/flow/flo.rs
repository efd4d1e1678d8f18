//! Middlebury `.flo` flow file format.
//!
//! Layout: 4 bytes ASCII "PIEH"; width then height as little-endian i32;
//! then height×width×2 little-endian f32 values, row-major, horizontal
//! component first per pixel. Internally horizontal = d_col and vertical
//! = d_row.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::float::Scalar;
use crate::flow::FlowField;

const MAGIC: &[u8; 4] = b"PIEH";

/// Writes a flow field as `.flo`. Displacements are stored as f32.
pub fn write_flo<T: Scalar>(w: &FlowField<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&(w.width() as i32).to_le_bytes())?;
    f.write_all(&(w.height() as i32).to_le_bytes())?;
    for d in w.data() {
        f.write_all(&(d[1].f64() as f32).to_le_bytes())?;
        f.write_all(&(d[0].f64() as f32).to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a `.flo` file.
pub fn read_flo<T: Scalar>(path: impl AsRef<Path>) -> Result<FlowField<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(Error::format("bad .flo magic".to_string()));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::format(format!("bad .flo dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expect = 12 + height * width * 2 * 4;
    if bytes.len() != expect {
        return Err(Error::format(format!(
            ".flo payload size {} does not match header ({expect} bytes expected)",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(height * width);
    for px in bytes[12..].chunks_exact(8) {
        let dc = f32::from_le_bytes(px[0..4].try_into().unwrap());
        let dr = f32::from_le_bytes(px[4..8].try_into().unwrap());
        if !dc.is_finite() || !dr.is_finite() {
            return Err(Error::format("non-finite displacement in .flo".to_string()));
        }
        data.push([T::cast(dr as f64), T::cast(dc as f64)]);
    }
    FlowField::from_vec(height, width, data)
}
