use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::DocumentPair;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn format_of(path: &Path) -> Result<ImageFormat> {
    match ImageFormat::from_path(path) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Pnm)) => Ok(f),
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let format = format_of(path)?;
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    image::load(BufReader::new(file), format).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a PNG or PGM/PPM page as `3×H×W` in `[0, 1]`; grayscale sources
/// are replicated over the three channels.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(3 * w * h);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        for c in 0..3 {
            data.extend(rgb.pixels().map(|p| f64::from(p[c]) / 255.0));
        }
    } else {
        let luma = img.to_luma8();
        for _ in 0..3 {
            data.extend(luma.pixels().map(|p| f64::from(p[0]) / 255.0));
        }
    }
    Ok(Tensor::new(vec![3, h, w], data)?)
}

/// Reads a ground-truth image as `H×W`, binarized at 0.5 (1 = background).
pub fn load_gt(path: &Path) -> Result<Tensor> {
    let luma = decode(path)?.to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let data = luma.pixels().map(|p| if p[0] >= 128 { 1.0 } else { 0.0 }).collect();
    Ok(Tensor::new(vec![h, w], data)?)
}

pub fn load_pair(degraded: &Path, gt: &Path) -> Result<DocumentPair> {
    let image = load_image(degraded)?;
    let truth = load_gt(gt)?;
    let (id, td) = (image.dims(), truth.dims());
    if id[1..] != *td {
        return Err(Error::DimensionMismatch {
            left: degraded.display().to_string(),
            left_dims: (id[1], id[2]),
            right: gt.display().to_string(),
            right_dims: (td[0], td[1]),
        });
    }
    DocumentPair::new(image, truth, degraded.display().to_string())
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write(path: &Path, img: DynamicImage) -> Result<()> {
    let format = format_of(path)?;
    let encode_err = |message: String| Error::Encode {
        path: path.to_path_buf(),
        message,
    };
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    img.write_to(&mut out, format).map_err(|e| encode_err(e.to_string()))?;
    std::io::Write::flush(&mut out).map_err(|e| encode_err(e.to_string()))
}

/// Writes an `H×W` `{0, 1}` map as an 8-bit grayscale image of 0 and 255.
pub fn save_binary(path: &Path, binary: &Tensor) -> Result<()> {
    let d = binary.dims();
    let pixels = binary.data().iter().map(|&v| if v >= 0.5 { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(d[1] as u32, d[0] as u32, pixels).expect("buffer matches dims");
    write(path, DynamicImage::ImageLuma8(img))
}

/// Writes a `C×H×W` image in `[0, 1]` as 8-bit RGB (C = 3) or gray (C = 1).
pub fn save_continuous(path: &Path, image: &Tensor) -> Result<()> {
    let d = image.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let src = image.data();
    let img = if c == 3 {
        let mut buf = Vec::with_capacity(3 * h * w);
        for p in 0..h * w {
            buf.extend((0..3).map(|ch| to_u8(src[ch * h * w + p])));
        }
        DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer matches dims"))
    } else {
        let buf = src[..h * w].iter().map(|&v| to_u8(v)).collect();
        DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, buf).expect("buffer matches dims"))
    };
    write(path, img)
}
