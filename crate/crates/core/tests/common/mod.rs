#![allow(dead_code)]

use mgtpc::pgconv::{BranchFlags, BranchKind, PgConvWeights};
use mgtpc::weights_io::Initializer;
use mgtpc::{Image, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor<f32> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| r.gen_range(-1.0f32..1.0))
}

pub fn random_tensor64(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| r.gen_range(-1.0f64..1.0))
}

/// Random branch weights and non-zero biases.
pub fn random_pg(out_ch: usize, in_ch: usize, flags: BranchFlags, seed: u64) -> PgConvWeights<f32> {
    let mut w = PgConvWeights::build(&mut Initializer::new(seed), "pg", out_ch, in_ch, flags).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for kind in BranchKind::ALL {
        for b in w.branch_mut(kind).bias.iter_mut() {
            *b = r.gen_range(-0.5f32..0.5);
        }
    }
    w
}

/// All flag sets with the mandatory vanilla + pointwise pair.
pub fn all_flag_sets() -> Vec<BranchFlags> {
    (0u32..64)
        .map(|m| {
            let mut f = [true; 8];
            for i in 0..6 {
                f[i + 2] = m >> i & 1 == 1;
            }
            BranchFlags(f)
        })
        .collect()
}

/// Smooth gradient with a little texture.
pub fn test_image(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::from_fn(w, h, |x, y, c| {
        let base = (x * 255 / w.max(1) + y * 127 / h.max(1) + c * 40) % 256;
        (base as i32 + r.gen_range(-12..=12)).clamp(0, 255) as u8
    })
    .unwrap()
}
