//! RGB image helpers shared by the pipeline, the synthesizer, and ingestion.

use std::path::Path;

use image::RgbImage;

use crate::error::Result;

/// Neutral gray filling empty crop and amodal-pair pixels: the canonical
/// 8-bit encoding of mid-gray 127.5.
pub const NEUTRAL: u8 = 128;
/// Per-channel tolerance (in 8-bit steps) separating "neutral" from content.
pub const NEUTRAL_TOL: u8 = 2;

/// An image of the given size filled with the neutral gray.
pub fn neutral_image(width: u32, height: u32) -> RgbImage {
    RgbImage::from_pixel(width, height, image::Rgb([NEUTRAL; 3]))
}

/// True when the pixel differs from the neutral value by more than the
/// tolerance on any channel.
pub fn is_content(px: &image::Rgb<u8>) -> bool {
    px.0.iter()
        .any(|&c| (c as i16 - NEUTRAL as i16).unsigned_abs() > NEUTRAL_TOL as u16)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn save_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_classification() {
        assert!(!is_content(&image::Rgb([NEUTRAL; 3])));
        assert!(!is_content(&image::Rgb([NEUTRAL + 2, NEUTRAL - 2, NEUTRAL])));
        assert!(is_content(&image::Rgb([NEUTRAL + 3, NEUTRAL, NEUTRAL])));
        assert!(is_content(&image::Rgb([0, 0, 0])));
    }
}
