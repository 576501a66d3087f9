mod common;

use common::*;
use mgtpc::codec::*;
use mgtpc::entropy::rd_loss_from_mse;
use mgtpc::error::Error;
use mgtpc::metrics::{bpp, mse};
use mgtpc::{CodecConfig, Image, Model, Preset, Variant};
use std::sync::OnceLock;

fn tiny() -> &'static Model<f32> {
    static M: OnceLock<Model<f32>> = OnceLock::new();
    M.get_or_init(|| Model::init(&CodecConfig::new(Preset::Tiny, Variant::Full), 11).unwrap())
}

/// Encode, decode, and check everything the two sides must agree on.
fn check_symmetry(image: &Image, model: &Model<f32>) -> Vec<u8> {
    let enc = encode_with::<f32, f32>(image, model).unwrap();
    let dec = decode_with::<f32, f32>(&enc.bytes, model).unwrap();
    assert!(dec.y_hat.bit_eq(&enc.analysis.y_hat));
    let direct = reconstruct(&enc.analysis.y_hat, model, image.width(), image.height()).unwrap();
    assert_eq!(dec.image, direct);
    assert_eq!(dec.bpp, 8.0 * enc.bytes.len() as f64 / (image.width() * image.height()) as f64);
    assert_eq!(dec.header, enc.header);
    assert_eq!(enc.header.total_len(), enc.bytes.len());
    enc.bytes
}

#[test]
fn full_size_image() {
    let img = test_image(768, 512, 1);
    let bytes = check_symmetry(&img, tiny());
    let h = Header::parse(&bytes).unwrap();
    assert_eq!((h.width, h.height), (768, 512));
    assert_eq!(h.config_id, tiny().config.config_id());
    assert_eq!(&bytes[..4], b"MGPC");
}

#[test]
fn single_pixel_image() {
    let img = Image::new(1, 1, vec![200, 10, 90]).unwrap();
    check_symmetry(&img, tiny());
}

#[test]
fn odd_sizes() {
    for (w, h) in [(3, 257), (300, 7)] {
        check_symmetry(&test_image(w, h, 2), tiny());
    }
}

#[test]
fn padding_is_to_the_configured_multiple() {
    assert_eq!(padded_size(tiny(), 1, 1), (256, 256));
    assert_eq!(padded_size(tiny(), 768, 512), (768, 512));
    assert_eq!(padded_size(tiny(), 769, 300), (1024, 512));
}

#[test]
fn encoding_is_deterministic() {
    let img = test_image(64, 48, 3);
    assert_eq!(encode_image(&img, tiny()).unwrap(), encode_image(&img, tiny()).unwrap());
    let again = Model::<f32>::init(&tiny().config, 11).unwrap();
    assert_eq!(encode_image(&img, tiny()).unwrap(), encode_image(&img, &again).unwrap());
}

#[test]
fn double_precision_compute_round_trips() {
    let img = test_image(40, 40, 4);
    let enc = encode_with::<f64, f32>(&img, tiny()).unwrap();
    let dec = decode_with::<f64, f32>(&enc.bytes, tiny()).unwrap();
    assert!(dec.y_hat.bit_eq(&enc.analysis.y_hat));
}

#[test]
fn rate_estimate_tracks_coded_size() {
    let img = test_image(256, 256, 5);
    let enc = encode_with::<f32, f32>(&img, tiny()).unwrap();
    let pixels = 256 * 256;
    let (ey, ez) = enc.analysis.rate_estimates(tiny(), pixels);
    let actual = bpp(enc.bytes.len(), 256, 256);
    let est = ey + ez;
    assert!((actual - est).abs() <= 0.001 * est + 64.0 * 8.0 / pixels as f64, "{actual} vs {est}");
}

#[test]
fn rd_outcome_recomposes() {
    let img = test_image(32, 32, 6);
    let r = simulate_rd_point(&img, tiny(), 0.0130).unwrap();
    let dec = decode_image(&encode_image(&img, tiny()).unwrap(), tiny()).unwrap();
    assert_eq!(r.mse, mse(&img, &dec.image).unwrap());
    assert_eq!(r.loss, rd_loss_from_mse(r.bpp_y, r.bpp_z, 0.0130, r.mse).unwrap());
    assert_eq!(r.point.bpp, bpp(r.bytes, 32, 32));
    assert!(simulate_rd_point(&img, tiny(), 0.0).is_err());
}

#[test]
fn foreign_stream_is_refused() {
    let img = test_image(16, 16, 7);
    let bytes = encode_image(&img, tiny()).unwrap();
    let other = Model::<f32>::init(&CodecConfig::new(Preset::Tiny, Variant::V1), 11).unwrap();
    assert!(matches!(decode_image(&bytes, &other), Err(Error::ConfigMismatch(_))));
}

#[test]
fn damaged_streams_are_refused() {
    let bytes = encode_image(&test_image(16, 16, 8), tiny()).unwrap();
    let mut magic = bytes.clone();
    magic[1] = b'X';
    assert!(matches!(decode_image(&magic, tiny()), Err(Error::BadMagic { .. })));
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(decode_image(&version, tiny()), Err(Error::UnsupportedVersion { .. })));
    assert!(matches!(decode_image(&bytes[..10], tiny()), Err(Error::Truncated(_))));
    assert!(matches!(decode_image(&bytes[..bytes.len() - 1], tiny()), Err(Error::Truncated(_))));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_image(&long, tiny()), Err(Error::Malformed { .. })));
}

#[test]
fn header_layout() {
    let h = Header {
        width: 0x0302,
        height: 0x0504,
        config_id: 17,
        z_bytes: 0x0a090807,
        y_bytes: 0x0e0d0c0b,
    };
    let b = h.to_bytes();
    assert_eq!(b, [b'M', b'G', b'P', b'C', 1, 2, 3, 4, 5, 17, 7, 8, 9, 10, 11, 12, 13, 14]);
    assert_eq!(Header::parse(&b).unwrap(), h);
    assert_eq!(HEADER_LEN, 18);
}
