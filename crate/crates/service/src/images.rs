use std::io::Cursor;

use image::imageops::FilterType;
use image::{ImageFormat, RgbImage};
use makeitso::generator::ImageTensor;

use crate::error::{Result, ServiceError};

/// Decoded target plus the dimensions it arrived with.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub image: ImageTensor,
    pub original_width: u32,
    pub original_height: u32,
}

/// Decode a PNG or JPEG, resize bilinearly so the short side equals
/// `resolution`, center-crop to a square and map to `[-1, 1]`.
pub fn ingest(bytes: &[u8], resolution: usize) -> Result<Ingested> {
    let format = image::guess_format(bytes).map_err(|e| ServiceError::usage(format!("unrecognized image: {e}")))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(ServiceError::usage(format!("unsupported image format {format:?}; use PNG or JPEG")));
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ServiceError::usage(format!("cannot decode image: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(ServiceError::usage("image has no pixels"));
    }
    let r = resolution as u32;
    let short = w.min(h) as f64;
    let nw = ((w as f64 * r as f64 / short).round() as u32).max(r);
    let nh = ((h as f64 * r as f64 / short).round() as u32).max(r);
    let resized = if (nw, nh) == (w, h) {
        img
    } else {
        image::imageops::resize(&img, nw, nh, FilterType::Triangle)
    };
    let cropped = image::imageops::crop_imm(&resized, (nw - r) / 2, (nh - r) / 2, r, r).to_image();
    Ok(Ingested {
        image: ImageTensor::from_rgb8(resolution, resolution, cropped.as_raw())?,
        original_width: w,
        original_height: h,
    })
}

/// PNG bytes of `img` under the 8-bit mapping of [`ImageTensor::to_rgb8`].
pub fn encode_png(img: &ImageTensor) -> Result<Vec<u8>> {
    let buf = RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8())
        .ok_or_else(|| ServiceError::Failed("image buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| ServiceError::Failed(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_square_input_is_cropped_to_resolution() {
        let src = RgbImage::from_fn(40, 20, |x, _| image::Rgb([if x < 20 { 0 } else { 255 }, 128, 0]));
        let mut bytes = Cursor::new(Vec::new());
        src.write_to(&mut bytes, ImageFormat::Png).unwrap();
        let ing = ingest(bytes.get_ref(), 8).unwrap();
        assert_eq!((ing.original_width, ing.original_height), (40, 20));
        assert_eq!((ing.image.height, ing.image.width), (8, 8));
        assert_eq!(ing.image.get(0, 0, 0), -1.0);
        assert_eq!(ing.image.get(0, 0, 7), 1.0);
    }

    #[test]
    fn png_round_trip_keeps_bytes() {
        let img = ImageTensor::from_rgb8(2, 2, &[0, 10, 20, 30, 40, 50, 60, 70, 80, 255, 254, 1]).unwrap();
        let png = encode_png(&img).unwrap();
        let back = ingest(&png, 2).unwrap();
        assert_eq!(back.image.to_rgb8(), img.to_rgb8());
    }

    #[test]
    fn garbage_is_a_usage_error() {
        assert_eq!(ingest(b"not an image", 8).unwrap_err().exit_code(), 2);
    }
}
