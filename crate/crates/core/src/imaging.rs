//! Conversion between raw PUF responses and the unified grayscale
//! fingerprint image, plus the normalized 3-channel tensor the classifier
//! consumes.
//!
//! Bit packing is 0-based with the first response bit as the least
//! significant bit of the first pixel: pixel j = sum_b r[8j + b] * 2^b.
//! That rule is bijective, so images and bit vectors round-trip exactly.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::puf::{BitMatrix, Challenge, Device, PufError, PufInstance, ResponseVector};

#[derive(Debug, Error, PartialEq)]
pub enum ImagingError {
    #[error("response length {got} does not match 8*{width}*{height} = {expected}")]
    LengthMismatch {
        expected: usize,
        got: usize,
        width: usize,
        height: usize,
    },
    #[error("crop of {needed} bits at linear offset {offset} exceeds array of {available} bits")]
    CropOutOfBounds {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("normalization std must be positive")]
    InvalidNormalization,
    #[error(transparent)]
    Puf(#[from] PufError),
}

/// A W x H grayscale fingerprint image, 8 bits per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PufImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PufImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// Packs a response vector of exactly 8*w*h bits into a w x h image.
pub fn pack_bits_to_image(
    r: &ResponseVector,
    width: usize,
    height: usize,
) -> Result<PufImage, ImagingError> {
    let expected = 8 * width * height;
    if r.len() != expected {
        return Err(ImagingError::LengthMismatch {
            expected,
            got: r.len(),
            width,
            height,
        });
    }
    let bits = r.bits();
    let pixels = (0..width * height)
        .map(|j| {
            (0..8).fold(0u8, |acc, b| acc | (bits[8 * j + b] & 1) << b)
        })
        .collect();
    Ok(PufImage::new(width, height, pixels))
}

/// Inverse of [`pack_bits_to_image`]; exact for every image.
pub fn unpack_image_to_bits(img: &PufImage) -> ResponseVector {
    let mut bits = Vec::with_capacity(img.pixels.len() * 8);
    for &p in &img.pixels {
        for b in 0..8 {
            bits.push((p >> b) & 1);
        }
    }
    ResponseVector::new(bits).expect("8 bits per pixel")
}

/// Crops a cell array to a w x h image by flattening the array row-major and
/// consuming 8*w*h bits starting at the linear position of `offset`
/// (row, col). Deterministic; never resamples.
pub fn crop_cell_array(
    cells: &BitMatrix,
    width: usize,
    height: usize,
    offset: (usize, usize),
) -> Result<PufImage, ImagingError> {
    let needed = 8 * width * height;
    let available = cells.rows() * cells.cols();
    let linear = offset.0 * cells.cols() + offset.1;
    if offset.1 >= cells.cols() || linear + needed > available {
        return Err(ImagingError::CropOutOfBounds {
            offset: linear,
            needed,
            available,
        });
    }
    let slice = &cells.bits()[linear..linear + needed];
    let v = ResponseVector::new(slice.to_vec()).expect("8*w*h is divisible by 8");
    pack_bits_to_image(&v, width, height)
}

/// The classifier input: a grayscale image replicated into three channels
/// and normalized per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub height: usize,
    pub width: usize,
    /// 3 x H x W, channel-major.
    pub data: Vec<f32>,
}

/// Per-channel normalization constants recorded in the model manifest.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        // Maps [0,1] pixel intensities to [-1, 1].
        Self {
            mean: [0.5; 3],
            std: [0.5; 3],
        }
    }
}

/// Replicates the image into three channels and applies
/// (pixel/255 - mean) / std per channel.
pub fn to_model_input(img: &PufImage, norm: &Normalization) -> Result<ModelInput, ImagingError> {
    if norm.std.iter().any(|&s| s <= 0.0) {
        return Err(ImagingError::InvalidNormalization);
    }
    let hw = img.width * img.height;
    let mut data = Vec::with_capacity(3 * hw);
    for c in 0..3 {
        for &p in &img.pixels {
            data.push((f32::from(p) / 255.0 - norm.mean[c]) / norm.std[c]);
        }
    }
    Ok(ModelInput {
        height: img.height,
        width: img.width,
        data,
    })
}

/// Generates one fingerprint image from a device: strong devices expand the
/// challenge through the fleet LFSR and pack 8*w*h response bits; memory
/// devices read out their cell array and crop from the top-left.
pub fn device_image(
    device: &mut Device,
    lfsr_taps: &[u8],
    challenge: Challenge,
    width: usize,
    height: usize,
) -> Result<PufImage, ImagingError> {
    match &device.instance {
        PufInstance::Arbiter(puf) => {
            let puf = puf.clone();
            let v = crate::puf::response_vector(
                &puf,
                lfsr_taps,
                challenge,
                8 * width * height,
                device.eval_rng(),
            )?;
            pack_bits_to_image(&v, width, height)
        }
        PufInstance::Memory(puf) => {
            let puf = puf.clone();
            let cells = puf.readout(device.eval_rng());
            crop_cell_array(&cells, width, height, (0, 0))
        }
    }
}

const IMAGE_MAGIC: &[u8; 4] = b"PUFI";

/// Writes the image dump: magic "PUFI", u16 width, u16 height
/// (little-endian), then W*H raw pixel bytes.
pub fn write_image<W: Write>(w: &mut W, img: &PufImage) -> io::Result<()> {
    w.write_all(IMAGE_MAGIC)?;
    w.write_all(&(img.width as u16).to_le_bytes())?;
    w.write_all(&(img.height as u16).to_le_bytes())?;
    w.write_all(&img.pixels)
}

pub fn read_image<R: Read>(r: &mut R) -> io::Result<PufImage> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != IMAGE_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    let width = u16::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let height = u16::from_le_bytes(b) as usize;
    let mut pixels = vec![0u8; width * height];
    r.read_exact(&mut pixels)?;
    Ok(PufImage::new(width, height, pixels))
}
