//! Image container, file I/O, sub-pixel sampling, and backward warping.
//!
//! Intensities are real values nominally in [0,1], stored row-major with
//! interleaved channels. Quantization to 8 bits happens only when saving.
//! Coordinates are (row, col) with the origin at pixel (0,0); sub-pixel
//! sampling clamps coordinates to the valid domain (replicate boundary).

use std::io::{ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::float::Scalar;
use crate::flow::FlowField;

/// H×W×C image of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    /// All-zero image. Channels must be 1 (gray) or 3 (RGB).
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image { height, width, channels, data: vec![T::zero(); height * width * channels] }
    }

    /// Wraps raw row-major interleaved data.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite intensity"));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: T) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    /// Luminance image. RGB is reduced with the 0.299/0.587/0.114 weights;
    /// gray input is returned unchanged.
    pub fn to_gray(&self) -> Image<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let (wr, wg, wb) = (T::cast(0.299), T::cast(0.587), T::cast(0.114));
        let mut out = Image::new(self.height, self.width, 1);
        for (o, px) in out.data.iter_mut().zip(self.data.chunks_exact(3)) {
            *o = wr * px[0] + wg * px[1] + wb * px[2];
        }
        out
    }

    /// Bilinear sample of one channel at real (row, col). Coordinates are
    /// clamped to [0, H-1]×[0, W-1] before interpolation.
    #[inline]
    pub fn sample(&self, row: T, col: T, ch: usize) -> T {
        let r = row.max(T::zero()).min(T::cast((self.height - 1) as f64));
        let c = col.max(T::zero()).min(T::cast((self.width - 1) as f64));
        let r0 = r.floor();
        let c0 = c.floor();
        let fr = r - r0;
        let fc = c - c0;
        let r0 = r0.to_usize().unwrap();
        let c0 = c0.to_usize().unwrap();
        let r1 = (r0 + 1).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let one = T::one();
        (one - fr) * (one - fc) * self.at(r0, c0, ch)
            + (one - fr) * fc * self.at(r0, c1, ch)
            + fr * (one - fc) * self.at(r1, c0, ch)
            + fr * fc * self.at(r1, c1, ch)
    }

    /// Bilinear sample of all channels at real (row, col).
    pub fn bilinear_sample(&self, row: T, col: T) -> Vec<T> {
        (0..self.channels).map(|ch| self.sample(row, col, ch)).collect()
    }

    /// Loads a PGM/PPM/PNG file (scaling 8-bit intensities to [0,1]) or a
    /// PFM file (raw floats, no scaling).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match extension(path).as_deref() {
            Some("pgm") | Some("ppm") => load_pnm(path),
            Some("png") => load_png(path),
            Some("pfm") => load_pfm(path),
            _ => Err(Error::format(format!("unsupported image format: {}", path.display()))),
        }
    }

    /// Saves in the format inferred from the extension. The 8-bit formats
    /// clamp to [0,1] and quantize; PFM stores single-precision floats
    /// without clamping.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match extension(path).as_deref() {
            Some("pgm") => {
                if self.channels != 1 {
                    return Err(Error::invalid("PGM requires a 1-channel image"));
                }
                save_pnm(self, path, b"P5")
            }
            Some("ppm") => {
                if self.channels != 3 {
                    return Err(Error::invalid("PPM requires a 3-channel image"));
                }
                save_pnm(self, path, b"P6")
            }
            Some("png") => save_png(self, path),
            Some("pfm") => save_pfm(self, path),
            _ => Err(Error::format(format!("unsupported image format: {}", path.display()))),
        }
    }

    fn quantized(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| {
                let v = v.f64().clamp(0.0, 1.0);
                (v * 255.0).round() as u8
            })
            .collect()
    }
}

/// Backward warp: out(x) = img(x + w(x)), sampled bilinearly per channel.
pub fn warp_image<T: Scalar>(img: &Image<T>, w: &FlowField<T>) -> Result<Image<T>> {
    if img.height() != w.height() || img.width() != w.width() {
        return Err(Error::invalid(format!(
            "image {}x{} vs flow {}x{}",
            img.height(),
            img.width(),
            w.height(),
            w.width()
        )));
    }
    let mut out = Image::new(img.height, img.width, img.channels);
    for r in 0..img.height {
        for c in 0..img.width {
            let [dr, dc] = w.at(r, c);
            let sr = T::cast(r as f64) + dr;
            let sc = T::cast(c as f64) + dc;
            for ch in 0..img.channels {
                out.set(r, c, ch, img.sample(sr, sc, ch));
            }
        }
    }
    Ok(out)
}

/// Image files in a directory, lexicographically ordered by file name.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            matches!(extension(p).as_deref(), Some("pgm") | Some("ppm") | Some("png") | Some("pfm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_lowercase())
}

fn load_pnm<T: Scalar>(path: &Path) -> Result<Image<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let magic = pnm_token(&bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(Error::format(format!("bad PNM magic {magic:?}"))),
    };
    let width: usize = pnm_number(&bytes, &mut pos)?;
    let height: usize = pnm_number(&bytes, &mut pos)?;
    let maxval: usize = pnm_number(&bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported PNM maxval {maxval} (need 255)")));
    }
    // the header ends with exactly one whitespace byte
    pos += 1;
    let n = height * width * channels;
    if bytes.len() < pos + n {
        return Err(Error::Io(std::io::Error::new(
            ErrorKind::UnexpectedEof,
            format!("PNM payload truncated: need {n} bytes, have {}", bytes.len() - pos.min(bytes.len())),
        )));
    }
    let data = bytes[pos..pos + n].iter().map(|&b| T::cast(b as f64 / 255.0)).collect();
    Image::from_vec(height, width, channels, data)
}

fn pnm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    // skip whitespace and '#' comment lines
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Io(std::io::Error::new(ErrorKind::UnexpectedEof, "PNM header truncated")));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn pnm_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = pnm_token(bytes, pos)?;
    tok.parse().map_err(|_| Error::format(format!("bad PNM header field {tok:?}")))
}

fn save_pnm<T: Scalar>(img: &Image<T>, path: &Path, magic: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(magic)?;
    f.write_all(format!("\n{} {}\n255\n", img.width, img.height).as_bytes())?;
    f.write_all(&img.quantized())?;
    Ok(())
}

fn load_png<T: Scalar>(path: &Path) -> Result<Image<T>> {
    let img = image::open(path)?;
    let (data, h, w, ch): (Vec<u8>, usize, usize, usize) = match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            (g.into_raw(), h as usize, w as usize, 1)
        }
        image::DynamicImage::ImageRgb8(g) => {
            let (w, h) = g.dimensions();
            (g.into_raw(), h as usize, w as usize, 3)
        }
        image::DynamicImage::ImageLumaA8(g) => {
            let (w, h) = g.dimensions();
            let raw: Vec<u8> = g.into_raw().chunks_exact(2).map(|p| p[0]).collect();
            (raw, h as usize, w as usize, 1)
        }
        image::DynamicImage::ImageRgba8(g) => {
            let (w, h) = g.dimensions();
            let raw: Vec<u8> =
                g.into_raw().chunks_exact(4).flat_map(|p| p[..3].to_vec()).collect();
            (raw, h as usize, w as usize, 3)
        }
        _ => return Err(Error::format("unsupported PNG pixel type (need 8-bit gray or RGB)".to_string())),
    };
    let data = data.into_iter().map(|b| T::cast(b as f64 / 255.0)).collect();
    Image::from_vec(h, w, ch, data)
}

fn save_png<T: Scalar>(img: &Image<T>, path: &Path) -> Result<()> {
    let q = img.quantized();
    let (w, h) = (img.width as u32, img.height as u32);
    match img.channels {
        1 => image::GrayImage::from_raw(w, h, q)
            .expect("buffer size matches dimensions")
            .save(path)?,
        _ => image::RgbImage::from_raw(w, h, q)
            .expect("buffer size matches dimensions")
            .save(path)?,
    }
    Ok(())
}

// PFM stores rows bottom to top; a negative scale marks little-endian data.
fn load_pfm<T: Scalar>(path: &Path) -> Result<Image<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let magic = pnm_token(&bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(Error::format(format!("bad PFM magic {magic:?}"))),
    };
    let width: usize = pnm_number(&bytes, &mut pos)?;
    let height: usize = pnm_number(&bytes, &mut pos)?;
    let scale: f64 = pnm_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::format("bad PFM scale field".to_string()))?;
    if scale == 0.0 {
        return Err(Error::format("PFM scale must be nonzero".to_string()));
    }
    pos += 1;
    let n = height * width * channels;
    if bytes.len() < pos + 4 * n {
        return Err(Error::Io(std::io::Error::new(
            ErrorKind::UnexpectedEof,
            format!("PFM payload truncated: need {} bytes, have {}", 4 * n, bytes.len().saturating_sub(pos)),
        )));
    }
    let mut data = vec![T::zero(); n];
    let row_len = width * channels;
    for file_row in 0..height {
        let out_row = height - 1 - file_row;
        for i in 0..row_len {
            let off = pos + (file_row * row_len + i) * 4;
            let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
            let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
            data[out_row * row_len + i] = T::cast(v as f64 * (1.0 / scale.abs()));
        }
    }
    Image::from_vec(height, width, channels, data)
}

fn save_pfm<T: Scalar>(img: &Image<T>, path: &Path) -> Result<()> {
    let magic = if img.channels == 1 { "Pf" } else { "PF" };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).as_bytes())?;
    let row_len = img.width * img.channels;
    for file_row in 0..img.height {
        let src_row = img.height - 1 - file_row;
        for i in 0..row_len {
            let v = img.data[src_row * row_len + i].f64() as f32;
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn pgm_load_scales_to_unit_range() {
        let dir = tmpdir();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\xff\x80\x40").unwrap();
        let img: Image<f64> = Image::load(&path).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 1));
        let want = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        for (got, want) in img.data().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let dir = tmpdir();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n# a comment\n2 1\n255\n\x10\x20").unwrap();
        let img: Image<f64> = Image::load(&path).unwrap();
        assert_eq!((img.height(), img.width()), (1, 2));
    }

    #[test]
    fn truncated_pnm_is_io_error() {
        let dir = tmpdir();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\n\x00\x01").unwrap();
        match Image::<f64>::load(&path) {
            Err(Error::Io(_)) => {}
            other => panic!("expected I/O error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tmpdir();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"Q5\n1 1\n255\n\x00").unwrap();
        assert!(matches!(Image::<f64>::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn save_load_round_trip_within_one_quantum() {
        let dir = tmpdir();
        for (ext, ch) in [("pgm", 1), ("ppm", 3), ("png", 1), ("png", 3)] {
            let path = dir.path().join(format!("t{ch}.{ext}"));
            let n = 6 * 5 * ch;
            let data: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            let img = Image::from_vec(6, 5, ch, data).unwrap();
            img.save(&path).unwrap();
            let back: Image<f64> = Image::load(&path).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 1.0 / 255.0, "{ext} ch{ch}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pfm_round_trip_is_bit_exact_for_f32() {
        let dir = tmpdir();
        for ch in [1usize, 3] {
            let path = dir.path().join(format!("t{ch}.pfm"));
            let n = 4 * 3 * ch;
            let data: Vec<f32> = (0..n).map(|i| (i as f32 * 0.137).sin() * 2.0 - 0.3).collect();
            let img = Image::from_vec(4, 3, ch, data).unwrap();
            img.save(&path).unwrap();
            let back: Image<f32> = Image::load(&path).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn pfm_rows_are_stored_bottom_to_top() {
        let dir = tmpdir();
        let path = dir.path().join("t.pfm");
        let img = Image::from_vec(2, 1, 1, vec![0.25f32, 0.75]).unwrap();
        img.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let payload = &bytes[bytes.len() - 8..];
        let first = f32::from_le_bytes(payload[..4].try_into().unwrap());
        assert_eq!(first, 0.75);
    }

    #[test]
    fn pfm_bad_header_is_format_error() {
        let dir = tmpdir();
        let path = dir.path().join("t.pfm");
        std::fs::write(&path, b"Px\n1 1\n-1.0\n\x00\x00\x00\x00").unwrap();
        assert!(matches!(Image::<f32>::load(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"Pf\n1 1\n-1.0\n\x00\x00").unwrap();
        assert!(matches!(Image::<f32>::load(&path), Err(Error::Io(_))));
    }

    #[test]
    fn save_clamps_out_of_range_values() {
        let dir = tmpdir();
        let path = dir.path().join("t.pgm");
        let img = Image::from_vec(1, 2, 1, vec![1.5, -0.25]).unwrap();
        img.save(&path).unwrap();
        let back: Image<f64> = Image::load(&path).unwrap();
        assert_eq!(back.data(), &[1.0, 0.0]);
    }

    #[test]
    fn save_into_directory_path_is_io_error() {
        let dir = tmpdir();
        let img = Image::<f64>::new(2, 2, 1);
        assert!(matches!(img.save(dir.path().join("no/such/dir/x.pgm")), Err(Error::Io(_))));
    }

    #[test]
    fn to_gray_weights() {
        let img =
            Image::<f64>::from_vec(1, 3, 3, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let g = img.to_gray();
        assert!((g.at(0, 0, 0) - 1.0).abs() < 1e-12);
        assert!((g.at(0, 1, 0) - 0.299).abs() < 1e-12);
        assert!((g.at(0, 2, 0) - 0.587).abs() < 1e-12);
    }

    #[test]
    fn to_gray_of_gray_is_identity() {
        let img = Image::from_vec(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(img.to_gray(), img);
    }

    #[test]
    fn bilinear_integer_coordinates_are_exact() {
        let img = Image::from_vec(2, 2, 1, vec![0.1, 0.7, 0.3, 0.9]).unwrap();
        assert_eq!(img.sample(1.0, 0.0, 0), 0.3);
        assert_eq!(img.sample(0.0, 1.0, 0), 0.7);
    }

    #[test]
    fn bilinear_midpoint_is_average() {
        let img = Image::<f64>::from_vec(1, 2, 1, vec![0.0, 1.0]).unwrap();
        assert!((img.sample(0.0, 0.5, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bilinear_clamps_out_of_bounds() {
        let img = Image::from_vec(2, 2, 1, vec![0.4, 0.5, 0.6, 0.7]).unwrap();
        assert_eq!(img.sample(-5.0, -5.0, 0), 0.4);
        assert_eq!(img.sample(99.0, 99.0, 0), 0.7);
    }

    #[test]
    fn warp_with_zero_flow_is_identity() {
        let img = Image::from_vec(3, 3, 1, (0..9).map(|i| i as f64 / 9.0).collect()).unwrap();
        let w = FlowField::zeros(3, 3);
        assert_eq!(warp_image(&img, &w).unwrap(), img);
    }

    #[test]
    fn warp_of_constant_image_is_constant() {
        let img = Image::from_vec(4, 4, 1, vec![0.42; 16]).unwrap();
        let mut w = FlowField::zeros(4, 4);
        for r in 0..4 {
            for c in 0..4 {
                w.set(r, c, [0.7 * r as f64 - 1.0, 0.3 * c as f64]);
            }
        }
        let out = warp_image(&img, &w).unwrap();
        for &v in out.data() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_by_integer_translation_matches_index_shift() {
        let mut img = Image::new(8, 8, 1);
        for r in 0..8 {
            for c in 0..8 {
                img.set(r, c, 0, (r * 8 + c) as f64 / 64.0);
            }
        }
        let mut w = FlowField::zeros(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                w.set(r, c, [2.0, 1.0]);
            }
        }
        let out = warp_image(&img, &w).unwrap();
        for r in 0..6 {
            for c in 0..7 {
                assert_eq!(out.at(r, c, 0), img.at(r + 2, c + 1, 0));
            }
        }
    }

    #[test]
    fn warp_dimension_mismatch_is_invalid_input() {
        let img = Image::<f64>::new(4, 4, 1);
        let w = FlowField::zeros(3, 3);
        assert!(matches!(warp_image(&img, &w), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn warp_preserves_value_bounds() {
        let img = Image::from_vec(5, 5, 1, (0..25).map(|i| (i as f64 * 0.13).sin().abs()).collect()).unwrap();
        let mut w = FlowField::zeros(5, 5);
        for r in 0..5 {
            for c in 0..5 {
                w.set(r, c, [(r as f64 * 0.77).sin() * 3.0, (c as f64 * 0.31).cos() * 3.0]);
            }
        }
        let out = warp_image(&img, &w).unwrap();
        let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &v in out.data() {
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
