mod common;

use common::*;
use mgtpc::error::Error;
use mgtpc::{Image, Tensor};
use proptest::prelude::*;

#[test]
fn ppm_round_trip_through_a_file() {
    let img = test_image(13, 7, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ppm");
    img.save(&path).unwrap();
    assert_eq!(Image::load(&path).unwrap(), img);
}

#[test]
fn header_comments_are_skipped() {
    let mut bytes = b"P6 # made by hand\n2 1\n# max\n255\n".to_vec();
    bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
    let img = Image::from_ppm_bytes(&bytes).unwrap();
    assert_eq!((img.width(), img.height()), (2, 1));
    assert_eq!(img.pixel(1, 0, 2), 6);
}

#[test]
fn unsupported_ppms_are_refused() {
    assert!(matches!(Image::from_ppm_bytes(b"P3\n1 1\n255\n0 0 0\n"), Err(Error::Malformed { .. })));
    assert!(matches!(Image::from_ppm_bytes(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(Error::Malformed { .. })));
    assert!(matches!(Image::from_ppm_bytes(b"P6\n2 2\n255\n\0\0\0"), Err(Error::Truncated(_))));
    assert!(Image::from_ppm_bytes(b"P6\n0 2\n255\n").is_err());
}

#[test]
fn padding_replicates_edges() {
    let img = test_image(3, 2, 2);
    let t: Tensor<f64> = img.to_tensor_padded(5, 4).unwrap();
    for c in 0..3 {
        assert_eq!(t.get(0, c, 3, 4), img.pixel(2, 1, c) as f64 / 255.0);
        assert_eq!(t.get(0, c, 0, 4), img.pixel(2, 0, c) as f64 / 255.0);
        assert_eq!(t.get(0, c, 3, 0), img.pixel(0, 1, c) as f64 / 255.0);
    }
    assert!(img.to_tensor_padded::<f32>(2, 2).is_err());
}

#[test]
fn cropping_clamps_and_rounds() {
    let t = Tensor::new([1, 3, 1, 2], vec![-0.5f32, 2.0, 0.5, 1.0 / 255.0, 0.3, 0.9]).unwrap();
    let img = Image::from_tensor_cropped(&t, 1, 1).unwrap();
    assert_eq!(img.data(), &[0, 128, 77]);
}

proptest! {
    #[test]
    fn tensor_round_trip_is_lossless(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let img = test_image(w, h, seed);
        let t: Tensor<f32> = img.to_tensor_padded(w + 3, h + 1).unwrap();
        prop_assert_eq!(Image::from_tensor_cropped(&t, w, h).unwrap(), img);
    }
}
