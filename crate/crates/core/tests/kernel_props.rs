mod common;

use cgvqm::tensor::{channel_unit_normalize, conv3d, fold_batchnorm, trilinear_resample, BatchNorm, ConvSpec};
use cgvqm::VideoTensor;
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - y).abs()).fold(0.0, f64::max)
}

prop_compose! {
    fn conv_case()(
        seed in any::<u64>(),
        c_in in 1usize..4, c_out in 1usize..4,
        f in 1usize..7, h in 1usize..7, w in 1usize..7,
        k in prop::array::uniform3(1usize..4),
        s in prop::array::uniform3(1usize..3),
        p in prop::array::uniform3(0usize..2),
    ) -> (u64, [usize; 4], usize, [usize; 3], [usize; 3], [usize; 3]) {
        (seed, [c_in, f, h, w], c_out, k, s, p)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn conv_matches_direct_summation((seed, shape, c_out, k, s, p) in conv_case()) {
        let fits = (0..3).all(|a| shape[a + 1] + 2 * p[a] >= k[a]);
        prop_assume!(fits);
        let mut r = rng(seed);
        let x = random_tensor(&mut r, shape, -1.0, 1.0);
        let weights = random_vec(&mut r, c_out * shape[0] * k.iter().product::<usize>(), -1.0, 1.0);
        let bias = random_vec(&mut r, c_out, -1.0, 1.0);
        let spec = ConvSpec::new(shape[0], c_out, k, s, p, weights.clone(), bias.clone()).unwrap();
        let got = conv3d(&x, &spec).unwrap();
        let (dims, want) = conv_oracle(&x, c_out, k, s, p, &weights, &bias);
        prop_assert_eq!(got.shape().to_vec(), dims);
        prop_assert!(max_abs_diff(got.data(), &want) < 1e-5);
    }

    #[test]
    fn folded_batchnorm_matches_two_pass((seed, shape, c_out, k, s, p) in conv_case()) {
        let fits = (0..3).all(|a| shape[a + 1] + 2 * p[a] >= k[a]);
        prop_assume!(fits);
        let mut r = rng(seed);
        let x = random_tensor(&mut r, shape, -1.0, 1.0);
        let weights = random_vec(&mut r, c_out * shape[0] * k.iter().product::<usize>(), -1.0, 1.0);
        let bias = random_vec(&mut r, c_out, -0.5, 0.5);
        let bn = BatchNorm {
            gamma: random_vec(&mut r, c_out, 0.5, 1.5),
            beta: random_vec(&mut r, c_out, -0.5, 0.5),
            running_mean: random_vec(&mut r, c_out, -0.5, 0.5),
            running_var: random_vec(&mut r, c_out, 0.2, 2.0),
            eps: 1e-5,
        };
        let spec = ConvSpec::new(shape[0], c_out, k, s, p, weights.clone(), bias.clone()).unwrap();
        let folded = conv3d(&x, &fold_batchnorm(&spec, &bn).unwrap()).unwrap();
        let (_, raw) = conv_oracle(&x, c_out, k, s, p, &weights, &bias);
        let want = batchnorm_oracle(&raw, c_out, &bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var, bn.eps);
        prop_assert!(max_abs_diff(folded.data(), &want) < 1e-4);
    }

    #[test]
    fn resample_matches_coordinate_oracle(
        seed in any::<u64>(),
        src in prop::array::uniform3(1usize..7),
        dst in prop::array::uniform3(1usize..9),
        c in 1usize..3,
    ) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, [c, src[0], src[1], src[2]], -2.0, 2.0);
        let got = trilinear_resample(&x, (dst[0], dst[1], dst[2])).unwrap();
        let want = resample_oracle(&x, (dst[0], dst[1], dst[2]));
        prop_assert!(max_abs_diff(got.data(), &want) < 1e-5);
    }

    #[test]
    fn resample_preserves_constants(
        v in -100.0f32..100.0,
        src in prop::array::uniform3(1usize..6),
        dst in prop::array::uniform3(1usize..12),
    ) {
        let x = VideoTensor::filled([1, src[0], src[1], src[2]], v);
        let got = trilinear_resample(&x, (dst[0], dst[1], dst[2])).unwrap();
        prop_assert!(got.data().iter().all(|&y| y == v));
    }

    #[test]
    fn resample_is_exact_on_interior_ramps(axis in 0usize..3, n in 2usize..6, factor in 2usize..4, slope in -3.0f32..3.0) {
        // Upsampling a ramp reproduces the ramp at every output point that maps inside the source.
        let mut src = [1usize; 3];
        src[axis] = n;
        let x = VideoTensor::from_fn([1, src[0], src[1], src[2]], |_, f, h, w| slope * [f, h, w][axis] as f32);
        let mut dst = src;
        dst[axis] = n * factor;
        let got = trilinear_resample(&x, (dst[0], dst[1], dst[2])).unwrap();
        for i in 0..dst[axis] {
            let coord = (i as f64 + 0.5) / factor as f64 - 0.5;
            if coord < 0.0 || coord > (n - 1) as f64 {
                continue;
            }
            let mut idx = [0usize; 3];
            idx[axis] = i;
            let v = got.get(0, idx[0], idx[1], idx[2]) as f64;
            prop_assert!((v - slope as f64 * coord).abs() < 1e-6, "{} vs {}", v, slope as f64 * coord);
        }
    }

    #[test]
    fn normalisation_properties(seed in any::<u64>(), c in 1usize..6, scale in 0.01f32..100.0) {
        let mut r = rng(seed);
        // Keep every location norm well above 1e-3.
        let x = VideoTensor::from_fn([c, 2, 3, 4], |_, _, _, _| {
            let m: f32 = r.gen_range(0.05..1.0);
            if r.gen_bool(0.5) { m } else { -m }
        });
        let n = channel_unit_normalize(&x, cgvqm::tensor::NORMALIZE_EPS).unwrap();
        let oracle = normalize_oracle(&x, 1e-10);
        prop_assert!(max_abs_diff(n.data(), &oracle) < 1e-6);
        for loc in 0..x.locations() {
            let norm: f64 = (0..c).map(|k| (n.data()[k * x.locations() + loc] as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-5);
        }
        let twice = channel_unit_normalize(&n, cgvqm::tensor::NORMALIZE_EPS).unwrap();
        prop_assert!(n.data().iter().zip(twice.data()).all(|(a, b)| (a - b).abs() < 1e-5));
        let scaled = channel_unit_normalize(&x.scaled(scale), cgvqm::tensor::NORMALIZE_EPS).unwrap();
        prop_assert!(n.data().iter().zip(scaled.data()).all(|(a, b)| (a - b).abs() < 1e-5));
    }

    #[test]
    fn kernels_stay_finite(seed in any::<u64>(), big in 1e3f32..1e6) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, [2, 3, 5, 5], -big, big);
        let spec = ConvSpec::new(2, 2, [3, 3, 3], [1, 1, 1], [1, 1, 1], random_vec(&mut r, 108, -1.0, 1.0), vec![0.0; 2]).unwrap();
        let y = conv3d(&x, &spec).unwrap();
        let n = channel_unit_normalize(&y, cgvqm::tensor::NORMALIZE_EPS).unwrap();
        let z = trilinear_resample(&n, (6, 10, 10)).unwrap();
        prop_assert!(z.data().iter().all(|v| v.is_finite()));
        let zeros = channel_unit_normalize(&VideoTensor::zeros([3, 1, 2, 2]), cgvqm::tensor::NORMALIZE_EPS).unwrap();
        prop_assert!(zeros.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn documented_conv_example() {
    let mut r = rng(46);
    let x = random_tensor(&mut r, [2, 4, 6, 6], -1.0, 1.0);
    let weights = random_vec(&mut r, 3 * 2 * 27, -1.0, 1.0);
    let bias = random_vec(&mut r, 3, -1.0, 1.0);
    let spec = ConvSpec::new(2, 3, [3, 3, 3], [1, 2, 2], [1, 1, 1], weights.clone(), bias.clone()).unwrap();
    let got = conv3d(&x, &spec).unwrap();
    let (dims, want) = conv_oracle(&x, 3, [3, 3, 3], [1, 2, 2], [1, 1, 1], &weights, &bias);
    assert_eq!(got.shape().to_vec(), dims);
    assert!(max_abs_diff(got.data(), &want) < 1e-5);
}

#[test]
fn ramp_upsampling_example() {
    let x = VideoTensor::new([1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let got = trilinear_resample(&x, (1, 4, 4)).unwrap();
    let want = resample_oracle(&x, (1, 4, 4));
    assert!(max_abs_diff(got.data(), &want) < 1e-6);
    // First row: clamped edge, quarter steps, clamped edge.
    assert_eq!(&got.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
}
