//! Randomized invariants checked with proptest.

use proptest::prelude::*;

use turbreg::deconv::{convolve, convolve_adjoint, make_kernel};
use turbreg::flow::{compose_flow, mean_flow, read_flo, write_flo, FlowField};
use turbreg::metrics::{psnr, ssim, SsimParams};
use turbreg::turbsim::random_smooth_flow;
use turbreg::Image;

fn image_strategy(max_side: usize) -> impl Strategy<Value = Image<f64>> {
    (2..max_side, 2..max_side)
        .prop_flat_map(|(h, w)| {
            prop::collection::vec(0.0f64..1.0, h * w).prop_map(move |data| {
                Image::from_vec(h, w, 1, data).unwrap()
            })
        })
}

fn image_pair_strategy(max_side: usize) -> impl Strategy<Value = (Image<f64>, Image<f64>)> {
    (2..max_side, 2..max_side).prop_flat_map(|(h, w)| {
        let one = prop::collection::vec(0.0f64..1.0, h * w);
        let other = prop::collection::vec(0.0f64..1.0, h * w);
        (one, other).prop_map(move |(a, b)| {
            (Image::from_vec(h, w, 1, a).unwrap(), Image::from_vec(h, w, 1, b).unwrap())
        })
    })
}

fn flow_strategy(max_side: usize) -> impl Strategy<Value = FlowField<f32>> {
    (2..max_side, 2..max_side)
        .prop_flat_map(|(h, w)| {
            prop::collection::vec((-8.0f32..8.0, -8.0f32..8.0), h * w).prop_map(move |data| {
                let data = data.into_iter().map(|(a, b)| [a, b]).collect();
                FlowField::from_vec(h, w, data).unwrap()
            })
        })
}

proptest! {
    #[test]
    fn bilinear_samples_stay_within_the_image_range(
        img in image_strategy(8),
        r in -10.0f64..20.0,
        c in -10.0f64..20.0,
    ) {
        let v = img.sample(r, c, 0);
        let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn flo_round_trip_is_exact(w in flow_strategy(10)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.flo");
        write_flo(&w, &path).unwrap();
        let back = read_flo::<f32>(&path).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn psnr_is_symmetric((a, b) in image_pair_strategy(8)) {
        let ab = psnr(&a, &b, 1.0).unwrap();
        let ba = psnr(&b, &a, 1.0).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn gaussian_kernel_taps_sum_to_one(
        sigma in 0.05f64..3.0,
        sr in -2.0f64..2.0,
        sc in -2.0f64..2.0,
        extra in 0usize..3,
    ) {
        let radius = (3.0 * sigma).ceil() as usize + extra;
        let k = make_kernel(sigma, [sr, sc], radius.max(1)).unwrap();
        let sum: f64 = k.taps().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
    }

    #[test]
    fn tiny_sigma_kernel_is_a_single_unit_tap(
        sigma in 0.0001f64..0.0499,
        sr in -1.4f64..1.4,
        sc in -1.4f64..1.4,
    ) {
        let k = make_kernel(sigma, [sr, sc], 3).unwrap();
        let ones = k.taps().iter().filter(|&&t| t == 1.0).count();
        let zeros = k.taps().iter().filter(|&&t| t == 0.0).count();
        prop_assert_eq!(ones, 1);
        prop_assert_eq!(zeros, k.taps().len() - 1);
    }

    #[test]
    fn compose_with_zero_flow_is_identity(w in flow_strategy(10)) {
        let z = FlowField::zeros(w.height(), w.width());
        prop_assert_eq!(compose_flow(&z, &w).unwrap(), w.clone());
        prop_assert_eq!(compose_flow(&w, &z).unwrap(), w);
    }

    #[test]
    fn mean_of_identical_flows_is_that_flow(w in flow_strategy(8), n in 1usize..6) {
        let flows = vec![w.clone(); n];
        let mean = mean_flow(&flows).unwrap();
        for (a, b) in mean.data().iter().zip(w.data()) {
            prop_assert!((a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn smooth_flow_hits_the_requested_amplitude(
        seed in 0u64..1000,
        amplitude in 0.01f64..4.0,
        corr in 1.0f64..12.0,
    ) {
        let w = random_smooth_flow::<f64>(seed, 24, 24, amplitude, corr);
        let rms = w.rms_magnitude(0);
        prop_assert!((rms - amplitude).abs() < 1e-9 * amplitude.max(1.0), "rms {rms} vs {amplitude}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_adjoint_identity_holds(
        u in image_strategy(12),
        sigma in 0.05f64..2.0,
        sr in -1.0f64..1.0,
        sc in -1.0f64..1.0,
        seed in 0u64..100,
    ) {
        let (h, w) = (u.height(), u.width());
        let v_data: Vec<f64> = (0..h * w)
            .map(|i| {
                let x = (i as u64).wrapping_mul(6364136223846793005).wrapping_add(seed);
                (x >> 33) as f64 / (1u64 << 31) as f64 - 0.5
            })
            .collect();
        let v = Image::from_vec(h, w, 1, v_data).unwrap();
        let radius = ((3.0 * sigma).ceil() as usize).max(1);
        let k = make_kernel(sigma, [sr, sc], radius).unwrap();
        let ku = convolve(&u, &k);
        let kv = convolve_adjoint(&v, &k);
        let lhs: f64 = ku.data().iter().zip(v.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.data().iter().zip(kv.data()).map(|(a, b)| a * b).sum();
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() / scale < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn ssim_is_symmetric_and_exact_on_equal_images((a, b) in ssim_pair_strategy()) {
        let p = SsimParams::default();
        let self_sim = ssim(&a, &a, &p).unwrap();
        prop_assert!((self_sim - 1.0).abs() < 1e-12, "ssim(a,a) = {self_sim}");
        let ab = ssim(&a, &b, &p).unwrap();
        let ba = ssim(&b, &a, &p).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
    }
}

fn ssim_pair_strategy() -> impl Strategy<Value = (Image<f64>, Image<f64>)> {
    (11usize..16, 11usize..16).prop_flat_map(|(h, w)| {
        let one = prop::collection::vec(0.0f64..1.0, h * w);
        let other = prop::collection::vec(0.0f64..1.0, h * w);
        (one, other).prop_map(move |(a, b)| {
            (Image::from_vec(h, w, 1, a).unwrap(), Image::from_vec(h, w, 1, b).unwrap())
        })
    })
}
