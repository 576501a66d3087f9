mod common;

use common::*;
use mgtpc::pgconv::{equiv_kernel, merge, pgconv_forward, BranchFlags, BranchKind, PgConv, PgMode};
use mgtpc::tensor::{conv2d, ConvParams, ConvWeights};
use mgtpc::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn rel_close(parallel: &Tensor<f32>, merged: &Tensor<f32>, tol: f64) -> bool {
    parallel.data().iter().zip(merged.data()).all(|(&p, &m)| {
        let (p, m) = (p as f64, m as f64);
        (p - m).abs() / (p.abs() + 1e-8) <= tol
    })
}

#[test]
fn merged_equals_parallel_for_every_flag_set() {
    for (i, flags) in all_flag_sets().into_iter().enumerate() {
        let w = random_pg(5, 4, flags, i as u64);
        let x = random_tensor([2, 4, 9, 7], 100 + i as u64);
        let p = pgconv_forward(&x, &w, PgMode::Parallel).unwrap();
        let m = pgconv_forward(&x, &w, PgMode::Merged).unwrap();
        assert!(rel_close(&p, &m, 1e-5), "flags {:?}", flags);
    }
}

#[test]
fn merged_kernel_is_positional_sum_of_branch_kernels() {
    let w = random_pg(2, 3, BranchFlags::ALL, 4);
    let merged = merge(&w);
    for pair in 0..6 {
        let mut expect = [0.0f64; 9];
        for kind in BranchKind::ALL {
            let taps = kind.taps();
            let src: Vec<f64> = w.branch(kind).weight[pair * taps..(pair + 1) * taps]
                .iter()
                .map(|&v| v as f64)
                .collect();
            let k = equiv_kernel(kind, &src);
            for i in 0..9 {
                expect[i] += k[i];
            }
        }
        for i in 0..9 {
            assert!((merged.kernel[pair * 9 + i] - expect[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn difference_branches_are_zero_dc() {
    let mut r = rng(9);
    for kind in [BranchKind::Cdc, BranchKind::Adc, BranchKind::Hdc, BranchKind::Vdc] {
        for _ in 0..50 {
            let w: Vec<f64> = (0..kind.taps()).map(|_| r.gen_range(-3.0f32..3.0) as f64).collect();
            let k = equiv_kernel(kind, &w);
            let s: f64 = k.iter().sum();
            assert_eq!(s, 0.0, "{kind:?} kernel {k:?}");
        }
    }
}

#[test]
fn difference_branch_kills_constant_input_in_interior() {
    for kind in [BranchKind::Cdc, BranchKind::Adc, BranchKind::Hdc, BranchKind::Vdc] {
        let mut flags = BranchFlags([false; 8]);
        flags.set(BranchKind::Vanilla, true);
        flags.set(BranchKind::Pointwise, true);
        flags.set(kind, true);
        let mut w = random_pg(3, 2, flags, 11);
        for k in [BranchKind::Vanilla, BranchKind::Pointwise] {
            w.branch_mut(k).weight.iter_mut().for_each(|v| *v = 0.0);
        }
        for k in BranchKind::ALL {
            w.branch_mut(k).bias.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::full([1, 2, 6, 6], 3.7f32);
        let y = pgconv_forward(&x, &w, PgMode::Parallel).unwrap();
        for c in 0..3 {
            for yy in 1..5 {
                for xx in 1..5 {
                    assert!(y.get(0, c, yy, xx).abs() <= 1e-6, "{kind:?}");
                }
            }
        }
    }
}

#[test]
fn pointwise_only_branch_is_a_1x1_conv() {
    let mut w = random_pg(3, 2, BranchFlags::CONVS, 2);
    w.branch_mut(BranchKind::Vanilla).weight.iter_mut().for_each(|v| *v = 0.0);
    w.branch_mut(BranchKind::Vanilla).bias.iter_mut().for_each(|v| *v = 0.0);
    let pw = w.branch(BranchKind::Pointwise);
    let conv = ConvWeights::new([3, 2, 1, 1], pw.weight.clone(), pw.bias.clone(), ConvParams::default()).unwrap();
    let x = random_tensor([1, 2, 5, 5], 3);
    let expect = conv2d(&x, &conv).unwrap();
    let got = PgConv::new(w).forward(&x).unwrap();
    assert!(got.max_abs_diff(&expect) < 1e-6);
}

#[test]
fn merged_is_deterministic() {
    let w = random_pg(4, 4, BranchFlags::ALL, 5);
    let x = random_tensor([1, 4, 8, 8], 6);
    let pg = PgConv::new(w);
    assert!(pg.forward(&x).unwrap().bit_eq(&pg.forward(&x).unwrap()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn merge_identity_holds(seed in any::<u64>(), mask in 0usize..64, h in 1usize..8, w in 1usize..8) {
        let flags = all_flag_sets()[mask];
        let weights = random_pg(3, 2, flags, seed);
        let x = random_tensor([1, 2, h, w], seed.wrapping_add(1));
        let p = pgconv_forward(&x, &weights, PgMode::Parallel).unwrap();
        let m = pgconv_forward(&x, &weights, PgMode::Merged).unwrap();
        prop_assert!(rel_close(&p, &m, 1e-5));
    }
}
