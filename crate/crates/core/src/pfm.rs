//! Portable float map (PFM) reader/writer for depth maps.
//!
//! Grayscale `Pf` maps only, little-endian (scale header -1.0). Rows are
//! stored bottom-to-top as the format prescribes; this module hides that
//! and works in top-down image order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::DepthMap;

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_token<R: Read>(reader: &mut R, path: &Path) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(parse_err(path, "unexpected end of header"));
            }
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
    }
    String::from_utf8(token).map_err(|_| parse_err(path, "non-UTF8 header token"))
}

/// Reads a grayscale PFM file. Non-finite and non-positive samples load as
/// invalid depth pixels.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let mut reader = BufReader::new(File::open(path)?);
    let magic = read_token(&mut reader, path)?;
    if magic != "Pf" {
        return Err(parse_err(
            path,
            format!("expected grayscale PFM magic 'Pf', got '{magic}'"),
        ));
    }
    let width: usize = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| parse_err(path, "bad width"))?;
    let height: usize = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| parse_err(path, "bad height"))?;
    let scale: f64 = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| parse_err(path, "bad scale"))?;
    if width == 0 || height == 0 {
        return Err(parse_err(path, "zero resolution"));
    }
    let little_endian = scale < 0.0;
    let mut raw = vec![0u8; width * height * 4];
    reader.read_exact(&mut raw)?;
    let mut map = DepthMap::invalid(width as u32, height as u32);
    for row in 0..height {
        // PFM rows run bottom-to-top.
        let image_row = height - 1 - row;
        for col in 0..width {
            let off = (row * width + col) * 4;
            let bytes: [u8; 4] = raw[off..off + 4].try_into().unwrap();
            let bits = if little_endian {
                u32::from_le_bytes(bytes)
            } else {
                u32::from_be_bytes(bytes)
            };
            map.set(col as u32, image_row as u32, f32::from_bits(bits) as f64);
        }
    }
    Ok(map)
}

/// Writes a grayscale little-endian PFM file. Invalid pixels are stored
/// as 0, which reads back as invalid.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write!(writer, "Pf\n{} {}\n-1.0\n", depth.width, depth.height)?;
    for row in (0..depth.height).rev() {
        for col in 0..depth.width {
            let value = depth.get(col, row).unwrap_or(0.0) as f32;
            writer.write_all(&value.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.pfm");
        let mut map = DepthMap::invalid(3, 2);
        map.set(0, 0, 1.25);
        map.set(2, 0, 0.1f32 as f64);
        map.set(1, 1, 1234.5678f32 as f64);
        write_pfm(&path, &map).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.height, 2);
        for v in 0..2 {
            for u in 0..3 {
                assert_eq!(map.get(u, v), back.get(u, v), "pixel ({u},{v})");
            }
        }
    }

    #[test]
    fn rejects_color_pfm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("color.pfm");
        std::fs::write(&path, b"PF\n1 1\n-1.0\n\x00\x00\x80?\x00\x00\x80?\x00\x00\x80?").unwrap();
        assert!(read_pfm(&path).is_err());
    }
}
