//! PFM (portable float map) reader/writer for HDR references. Little-endian
//! (scale -1.0), color variant "PF", bottom-to-top scanlines. Values travel
//! as f32 bit patterns, so a write/read round trip is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

pub fn write_pfm(path: &Path, width: usize, height: usize, pixels: &[Vec3]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Config(format!(
            "pfm write: {} pixels for {}x{}",
            pixels.len(),
            width,
            height
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "PF\n{} {}\n-1.0\n", width, height).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(width * 12);
    for row in (0..height).rev() {
        buf.clear();
        for col in 0..width {
            let p = pixels[row * width + col];
            buf.extend_from_slice(&(p.x as f32).to_le_bytes());
            buf.extend_from_slice(&(p.y as f32).to_le_bytes());
            buf.extend_from_slice(&(p.z as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<Vec3>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut header = Vec::new();
    let mut token = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    // Three whitespace-separated header tokens after the magic line.
    while tokens.len() < 4 {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte).map_err(|e| Error::io(path, e))?;
        header.push(byte[0]);
        if byte[0].is_ascii_whitespace() {
            if !token.is_empty() {
                tokens.push(String::from_utf8_lossy(&token).into_owned());
                token.clear();
            }
        } else {
            token.push(byte[0]);
        }
    }
    if tokens[0] != "PF" {
        return Err(Error::Dataset(format!("{}: not a color PFM (magic {})", path.display(), tokens[0])));
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| Error::Dataset(format!("{}: bad width", path.display())))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| Error::Dataset(format!("{}: bad height", path.display())))?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::Dataset(format!("{}: bad scale", path.display())))?;
    if scale >= 0.0 {
        return Err(Error::Dataset(format!("{}: big-endian PFM unsupported", path.display())));
    }

    let mut data = vec![0u8; width * height * 12];
    r.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
    let mut pixels = vec![Vec3::ZERO; width * height];
    for row in 0..height {
        let src_row = height - 1 - row;
        for col in 0..width {
            let o = (src_row * width + col) * 12;
            let f = |k: usize| {
                f32::from_le_bytes([data[o + k], data[o + k + 1], data[o + k + 2], data[o + k + 3]])
                    as f64
            };
            pixels[row * width + col] = Vec3::new(f(0), f(4), f(8));
        }
    }
    Ok((width, height, pixels))
}
