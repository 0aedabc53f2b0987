//! File formats.
//!
//! Raw rasters are two little-endian `u32` (width, height) followed by
//! row-major little-endian `f64`. Sinograms add their offset and angle grids
//! after the dimensions.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::wake::{DetectionReport, GroundTruthAnnotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Raw,
    Pgm,
    Png,
}

impl ImageFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "raw" | "f64" => Ok(ImageFormat::Raw),
            "pgm" | "pnm" => Ok(ImageFormat::Pgm),
            "png" => Ok(ImageFormat::Png),
            _ => Err(Error::format(
                "image",
                format!(
                    "{}: unknown extension, expected .raw, .pgm or .png",
                    path.display()
                ),
            )),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn dims_error(path: &Path, w: usize, h: usize) -> Error {
    Error::Dimension(format!(
        "{}: {w}x{h} has an odd side; crop to {}x{} (center_crop_even) before detection",
        path.display(),
        w - w % 2,
        h - h % 2
    ))
}

/// Loads a grayscale raster as linear intensities.
///
/// 8- and 16-bit samples keep their integer values. Odd dimensions are
/// rejected.
pub fn load_image(path: &Path, format: ImageFormat) -> Result<Image<f64>> {
    let data = match format {
        ImageFormat::Raw => decode_raw(path, &read(path)?)?,
        ImageFormat::Pgm | ImageFormat::Png => {
            let fmt = if format == ImageFormat::Png {
                image::ImageFormat::Png
            } else {
                image::ImageFormat::Pnm
            };
            let decoded = image::load_from_memory_with_format(&read(path)?, fmt)
                .map_err(|e| Error::format("image", format!("{}: {e}", path.display())))?;
            let (w, h) = (decoded.width() as usize, decoded.height() as usize);
            let values: Vec<f64> = match decoded {
                image::DynamicImage::ImageLuma8(g) => {
                    g.into_raw().into_iter().map(f64::from).collect()
                }
                image::DynamicImage::ImageLuma16(g) => {
                    g.into_raw().into_iter().map(f64::from).collect()
                }
                other => {
                    return Err(Error::format(
                        "image",
                        format!(
                            "{}: expected 8/16-bit grayscale, got {:?}",
                            path.display(),
                            other.color()
                        ),
                    ))
                }
            };
            Array2::from_shape_vec((h, w), values).expect("decoder returns w*h samples")
        }
    };
    let (h, w) = data.dim();
    if w % 2 == 1 || h % 2 == 1 {
        return Err(dims_error(path, w, h));
    }
    Image::new(data)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, path: &Path) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::format(
            "raw file",
            format!("{}: truncated", path.display()),
        ));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8], path: &Path) -> Result<usize> {
    Ok(u32::from_le_bytes(take(bytes, 4, path)?.try_into().expect("4 bytes")) as usize)
}

fn take_f64s(bytes: &mut &[u8], n: usize, path: &Path) -> Result<Vec<f64>> {
    let len = n
        .checked_mul(8)
        .ok_or_else(|| Error::format("raw file", format!("{}: size overflow", path.display())))?;
    Ok(take(bytes, len, path)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn decode_raw(path: &Path, mut bytes: &[u8]) -> Result<Array2<f64>> {
    let w = take_u32(&mut bytes, path)?;
    let h = take_u32(&mut bytes, path)?;
    let values = take_f64s(&mut bytes, w * h, path)?;
    if !bytes.is_empty() {
        return Err(Error::format(
            "raw file",
            format!("{}: {} trailing bytes", path.display(), bytes.len()),
        ));
    }
    Ok(Array2::from_shape_vec((h, w), values).expect("w*h values"))
}

fn push_f64s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_raw(data: &Array2<f64>) -> Vec<u8> {
    let (h, w) = data.dim();
    let mut out = Vec::with_capacity(8 + 8 * w * h);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    push_f64s(&mut out, data.iter());
    out
}

pub fn save_raw(path: &Path, img: &Image<f64>) -> Result<()> {
    write_atomic(path, &encode_raw(img.data()))
}

/// `u32 n_offsets, u32 n_angles`, offsets, angles, then the
/// `n_offsets × n_angles` grid row-major.
pub fn save_sinogram(path: &Path, sino: &Sinogram<f64>) -> Result<()> {
    let (no, na) = sino.data().dim();
    let mut out = Vec::with_capacity(8 + 8 * (no + na + no * na));
    out.extend_from_slice(&(no as u32).to_le_bytes());
    out.extend_from_slice(&(na as u32).to_le_bytes());
    push_f64s(&mut out, sino.offsets());
    push_f64s(&mut out, sino.angles());
    push_f64s(&mut out, sino.data().iter());
    write_atomic(path, &out)
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram<f64>> {
    let bytes = read(path)?;
    let mut b = bytes.as_slice();
    let no = take_u32(&mut b, path)?;
    let na = take_u32(&mut b, path)?;
    let offsets = take_f64s(&mut b, no, path)?;
    let angles = take_f64s(&mut b, na, path)?;
    let values = take_f64s(&mut b, no * na, path)?;
    if !b.is_empty() {
        return Err(Error::format(
            "sinogram",
            format!("{}: trailing bytes", path.display()),
        ));
    }
    Sinogram::new(
        offsets,
        angles,
        Array2::from_shape_vec((no, na), values).expect("grid size"),
    )
}

/// Linearly maps `data` onto 0..=255 and writes it as an 8-bit raster; the
/// format follows the extension (`.png` or `.pgm`).
pub fn save_gray8(path: &Path, data: &Array2<f64>) -> Result<()> {
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (h, w) = data.dim();
    let pixels: Vec<u8> = data
        .iter()
        .map(|&v| ((v - lo) / span * 255.0).round() as u8)
        .collect();
    let gray = image::GrayImage::from_raw(w as u32, h as u32, pixels).expect("w*h pixels");
    let fmt = match ImageFormat::from_path(path)? {
        ImageFormat::Png => image::ImageFormat::Png,
        ImageFormat::Pgm => image::ImageFormat::Pnm,
        ImageFormat::Raw => return Err(Error::format("image", "8-bit output needs .png or .pgm")),
    };
    let mut buf = std::io::Cursor::new(Vec::new());
    gray.write_to(&mut buf, fmt)
        .map_err(|e| Error::format("image", format!("{}: {e}", path.display())))?;
    write_atomic(path, buf.get_ref())
}

pub fn load_annotation(path: &Path) -> Result<GroundTruthAnnotation> {
    let text = String::from_utf8(read(path)?)
        .map_err(|_| Error::format("annotation", format!("{}: not UTF-8", path.display())))?;
    let mut records = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let first = records
        .next()
        .ok_or_else(|| Error::format("annotation", format!("{}: no record", path.display())))?;
    if records.next().is_some() {
        return Err(Error::format(
            "annotation",
            format!("{}: more than one record", path.display()),
        ));
    }
    GroundTruthAnnotation::parse_record(first)
}

/// One JSON object per line.
pub fn reports_to_jsonl(reports: &[DetectionReport]) -> String {
    reports.iter().map(|r| r.to_json() + "\n").collect()
}

pub fn reports_from_jsonl(text: &str) -> Result<Vec<DetectionReport>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(DetectionReport::from_json)
        .collect()
}
