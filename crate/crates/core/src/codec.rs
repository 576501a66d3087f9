//! Image ↔ bitstream.
//!
//! ```text
//! "MGPC" | version u8 | width u16 | height u16 | config_id u8 | z_bytes u32 | y_bytes u32
//! z payload | y payload
//! ```
//!
//! Both payloads are range-coded. Hyper-latent symbols use the per-channel
//! factorized tables; latent symbols use the table picked by their σ index.

use crate::entropy::{
    dequantize, factorized_index, quantize_st, rate_estimate, rd_loss_from_mse, symbol_likelihood, GaussianParams, SYMBOL_MIN,
};
use crate::error::{ensure, Error, Result};
use crate::image::Image;
use crate::metrics::{bpp, mse, psnr_from_mse, RdPoint};
use crate::model::Model;
use crate::range_coder::{self, standard_tables, CdfTable};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const STREAM_MAGIC: [u8; 4] = *b"MGPC";
pub const STREAM_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub width: u16,
    pub height: u16,
    pub config_id: u8,
    pub z_bytes: u32,
    pub y_bytes: u32,
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(&STREAM_MAGIC);
        b[4] = STREAM_VERSION;
        b[5..7].copy_from_slice(&self.width.to_le_bytes());
        b[7..9].copy_from_slice(&self.height.to_le_bytes());
        b[9] = self.config_id;
        b[10..14].copy_from_slice(&self.z_bytes.to_le_bytes());
        b[14..18].copy_from_slice(&self.y_bytes.to_le_bytes());
        b
    }

    /// Validates magic and version before anything else.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated("bitstream header"));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != STREAM_MAGIC {
            return Err(Error::BadMagic {
                what: "bitstream",
                expected: STREAM_MAGIC,
                found: magic,
            });
        }
        if bytes.len() < 5 {
            return Err(Error::Truncated("bitstream header"));
        }
        if bytes[4] != STREAM_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "bitstream",
                version: bytes[4],
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated("bitstream header"));
        }
        let h = Self {
            width: u16::from_le_bytes([bytes[5], bytes[6]]),
            height: u16::from_le_bytes([bytes[7], bytes[8]]),
            config_id: bytes[9],
            z_bytes: u32::from_le_bytes(bytes[10..14].try_into().unwrap()),
            y_bytes: u32::from_le_bytes(bytes[14..18].try_into().unwrap()),
        };
        if h.width == 0 || h.height == 0 {
            return Err(Error::Malformed {
                what: "bitstream",
                reason: format!("zero image dimension {}x{}", h.width, h.height),
            });
        }
        Ok(h)
    }

    pub fn total_len(&self) -> usize {
        HEADER_LEN + self.z_bytes as usize + self.y_bytes as usize
    }
}

/// Everything the encoder computes on the way to the payloads.
#[derive(Clone, Debug)]
pub struct Analysis<T> {
    pub padded: (usize, usize),
    pub y: Tensor<T>,
    pub z: Tensor<T>,
    pub q_z: Vec<i32>,
    pub z_hat: Tensor<T>,
    pub gaussian: GaussianParams<T>,
    pub sigma_index: Vec<u8>,
    pub q_y: Vec<i32>,
    pub y_hat: Tensor<T>,
}

impl<T: Scalar> Analysis<T> {
    /// Model-estimated (bpp_y, bpp_z) over `pixels` original pixels.
    pub fn rate_estimates<W: Scalar>(&self, model: &Model<W>, pixels: usize) -> (f64, f64) {
        let ly: Vec<f64> = self
            .q_y
            .iter()
            .zip(&self.sigma_index)
            .map(|(&q, &i)| symbol_likelihood(q, i as usize))
            .collect();
        let z_idx = z_indices(self.z_hat.shape(), model);
        let lz: Vec<f64> = self
            .q_z
            .iter()
            .zip(&z_idx)
            .map(|(&q, &i)| symbol_likelihood(q, i))
            .collect();
        (rate_estimate(&ly, pixels), rate_estimate(&lz, pixels))
    }
}

/// Smallest `(W', H')` at or above the image size divisible by the
/// configuration's padding multiple.
pub fn padded_size<W: Scalar>(model: &Model<W>, width: usize, height: usize) -> (usize, usize) {
    let m = model.config.pad_multiple();
    (width.div_ceil(m) * m, height.div_ceil(m) * m)
}

fn z_indices<W: Scalar>(shape: Shape, model: &Model<W>) -> Vec<usize> {
    let per_channel: Vec<usize> = (0..shape[1]).map(|c| factorized_index(c, &model.z_sigma)).collect();
    let plane = shape[2] * shape[3];
    (0..shape[0] * shape[1] * plane)
        .map(|i| per_channel[(i / plane) % shape[1]])
        .collect()
}

fn hyper_params<T: Scalar, W: Scalar>(z_hat: &Tensor<T>, model: &Model<W>) -> Result<GaussianParams<T>> {
    let (mu, sigma_raw) = model.h_s.mean_scale(z_hat)?;
    GaussianParams::new(mu, &sigma_raw)
}

/// Runs the encoder side up to the quantized symbols.
pub fn analyze<T: Scalar, W: Scalar>(image: &Image, model: &Model<W>) -> Result<Analysis<T>> {
    let (pw, ph) = padded_size(model, image.width(), image.height());
    let x: Tensor<T> = image.to_tensor_padded(pw, ph)?;
    let y = model.g_a.forward(&x)?;
    let z = model.h_a.forward(&y)?;
    let (q_z, z_hat) = quantize_st(&z, &Tensor::zeros(z.shape()))?;
    let gaussian = hyper_params(&z_hat, model)?;
    ensure!(
        gaussian.mu.shape() == y.shape(),
        "hyper-synthesis produced {:?} for a latent of {:?}",
        gaussian.mu.shape(),
        y.shape()
    );
    let (q_y, y_hat) = quantize_st(&y, &gaussian.mu)?;
    let sigma_index = gaussian.indices();
    Ok(Analysis {
        padded: (pw, ph),
        y,
        z,
        q_z,
        z_hat,
        gaussian,
        sigma_index,
        q_y,
        y_hat,
    })
}

/// `clamp(g_s(ŷ), 0, 1)·255`, rounded and cropped.
pub fn reconstruct<T: Scalar, W: Scalar>(y_hat: &Tensor<T>, model: &Model<W>, width: usize, height: usize) -> Result<Image> {
    let x_hat = model.g_s.forward(y_hat)?;
    Image::from_tensor_cropped(&x_hat, width, height)
}

fn code_symbols(q: &[i32], tables: impl Iterator<Item = usize>) -> Result<Vec<u8>> {
    let all = standard_tables();
    let syms: Vec<usize> = q.iter().map(|&v| (v - SYMBOL_MIN) as usize).collect();
    let refs: Vec<&CdfTable> = tables.map(|i| &all[i]).collect();
    range_coder::encode(&syms, &refs)
}

fn decode_symbols(bytes: &[u8], tables: impl Iterator<Item = usize>) -> Result<Vec<i32>> {
    let all = standard_tables();
    let refs: Vec<&CdfTable> = tables.map(|i| &all[i]).collect();
    Ok(range_coder::decode(bytes, &refs)?
        .into_iter()
        .map(|s| s as i32 + SYMBOL_MIN)
        .collect())
}

#[derive(Clone, Debug)]
pub struct Encoded<T> {
    pub bytes: Vec<u8>,
    pub header: Header,
    pub analysis: Analysis<T>,
}

pub fn encode_with<T: Scalar, W: Scalar>(image: &Image, model: &Model<W>) -> Result<Encoded<T>> {
    ensure!(
        image.width() <= u16::MAX as usize && image.height() <= u16::MAX as usize,
        "image {}x{} exceeds the 65535 header limit",
        image.width(),
        image.height()
    );
    let a = analyze::<T, W>(image, model)?;
    let z_bytes = code_symbols(&a.q_z, z_indices(a.z_hat.shape(), model).into_iter())?;
    let y_bytes = code_symbols(&a.q_y, a.sigma_index.iter().map(|&i| i as usize))?;
    let header = Header {
        width: image.width() as u16,
        height: image.height() as u16,
        config_id: model.config.config_id(),
        z_bytes: u32::try_from(z_bytes.len()).map_err(|_| Error::contract("z payload exceeds 4 GiB"))?,
        y_bytes: u32::try_from(y_bytes.len()).map_err(|_| Error::contract("y payload exceeds 4 GiB"))?,
    };
    let mut bytes = Vec::with_capacity(header.total_len());
    bytes.extend_from_slice(&header.to_bytes());
    bytes.extend_from_slice(&z_bytes);
    bytes.extend_from_slice(&y_bytes);
    Ok(Encoded {
        bytes,
        header,
        analysis: a,
    })
}

/// Encodes with computation in the weights' own precision.
pub fn encode_image<W: Scalar>(image: &Image, model: &Model<W>) -> Result<Vec<u8>> {
    Ok(encode_with::<W, W>(image, model)?.bytes)
}

#[derive(Clone, Debug)]
pub struct Decoded<T> {
    pub image: Image,
    pub header: Header,
    pub y_hat: Tensor<T>,
    pub bpp: f64,
}

pub fn decode_with<T: Scalar, W: Scalar>(bytes: &[u8], model: &Model<W>) -> Result<Decoded<T>> {
    let header = Header::parse(bytes)?;
    if header.config_id != model.config.config_id() {
        return Err(Error::ConfigMismatch(format!(
            "stream was coded with config id {} but the weights are for {} (id {})",
            header.config_id,
            model.config.name(),
            model.config.config_id()
        )));
    }
    if bytes.len() < header.total_len() {
        return Err(Error::Truncated("bitstream payload"));
    }
    if bytes.len() > header.total_len() {
        return Err(Error::Malformed {
            what: "bitstream",
            reason: format!("{} trailing bytes", bytes.len() - header.total_len()),
        });
    }
    let (w, h) = (header.width as usize, header.height as usize);
    let (pw, ph) = padded_size(model, w, h);
    let y_shape = model.config.analysis.output_shape([1, 3, ph, pw], &model.config.mgt)?;
    let z_shape = [1, model.config.hyper, y_shape[2] / 4, y_shape[3] / 4];

    let z_end = HEADER_LEN + header.z_bytes as usize;
    let q_z = decode_symbols(&bytes[HEADER_LEN..z_end], z_indices(z_shape, model).into_iter())?;
    let z_hat = dequantize(&q_z, &Tensor::<T>::zeros(z_shape))?;
    let gaussian = hyper_params(&z_hat, model)?;
    ensure!(
        gaussian.mu.shape() == y_shape,
        "hyper-synthesis produced {:?}, expected {:?}",
        gaussian.mu.shape(),
        y_shape
    );
    let idx = gaussian.indices();
    let q_y = decode_symbols(&bytes[z_end..], idx.iter().map(|&i| i as usize))?;
    let y_hat = dequantize(&q_y, &gaussian.mu)?;
    let image = reconstruct(&y_hat, model, w, h)?;
    Ok(Decoded {
        image,
        header,
        y_hat,
        bpp: bpp(bytes.len(), w, h),
    })
}

pub fn decode_image<W: Scalar>(bytes: &[u8], model: &Model<W>) -> Result<Decoded<W>> {
    decode_with::<W, W>(bytes, model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdOutcome {
    pub point: RdPoint,
    pub loss: f64,
    pub bpp_y: f64,
    pub bpp_z: f64,
    pub mse: f64,
    pub bytes: usize,
}

/// Encode and decode in memory. `loss` combines the model rate estimates
/// with `λ·MSE`; `point.bpp` is the actual coded size.
pub fn simulate_rd_point<W: Scalar>(image: &Image, model: &Model<W>, lambda: f64) -> Result<RdOutcome> {
    let enc = encode_with::<W, W>(image, model)?;
    let dec = decode_with::<W, W>(&enc.bytes, model)?;
    let pixels = image.width() * image.height();
    let (bpp_y, bpp_z) = enc.analysis.rate_estimates(model, pixels);
    let d = mse(image, &dec.image)?;
    let loss = rd_loss_from_mse(bpp_y, bpp_z, lambda, d)?;
    Ok(RdOutcome {
        point: RdPoint {
            bpp: dec.bpp,
            psnr: psnr_from_mse(d, 255.0),
        },
        loss,
        bpp_y,
        bpp_z,
        mse: d,
        bytes: enc.bytes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = Header {
            width: 768,
            height: 512,
            config_id: 9,
            z_bytes: 7,
            y_bytes: 1234,
        };
        let b = h.to_bytes();
        assert_eq!(Header::parse(&b).unwrap(), h);
        assert!(matches!(Header::parse(&b[..10]), Err(Error::Truncated(_))));
        let mut bad = b;
        bad[4] = 2;
        assert!(matches!(Header::parse(&bad), Err(Error::UnsupportedVersion { .. })));
        bad[0] = b'X';
        assert!(matches!(Header::parse(&bad), Err(Error::BadMagic { .. })));
    }
}
