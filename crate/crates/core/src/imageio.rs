//! Grayscale PNG reading and writing for `[H, W]` tensors in `[0, 1]`.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

fn img_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn save_png(image: &Tensor, path: &Path, depth: BitDepth) -> Result<()> {
    let [h, w] = image.shape()[..] else {
        return Err(Error::Shape(format!(
            "PNG export needs an HxW image, got {:?}",
            image.shape()
        )));
    };
    let (w, h) = (w as u32, h as u32);
    let data = image.data();
    match depth {
        BitDepth::Eight => {
            let px = data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            let buf: GrayImage = ImageBuffer::from_raw(w, h, px).expect("sized from dims");
            buf.save(path).map_err(|e| img_err(path, e))
        }
        BitDepth::Sixteen => {
            let px = data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
                .collect();
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, px).expect("sized from dims");
            buf.save(path).map_err(|e| img_err(path, e))
        }
    }
}

/// Loads any PNG as grayscale in `[0, 1]`. 16-bit files keep full precision.
pub fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| img_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => other
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
    };
    Tensor::new(vec![h, w], data)
}
