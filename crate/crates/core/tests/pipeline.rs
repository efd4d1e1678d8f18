//! Cross-module behavior of the full restoration chain on simulated
//! sequences with known ground truth.

use turbreg::deconv::DeconvConfig;
use turbreg::flow::{
    compose_flow, horn_schunck, invert_flow, mean_flow, FlowField, HornSchunckParams,
};
use turbreg::imgio::warp_image;
use turbreg::metrics::{psnr, ssim, SsimParams};
use turbreg::register::{build_template, run_pipeline, PipelineConfig};
use turbreg::turbsim::{random_smooth_flow, simulate_sequence, synthetic_target, TurbulenceParams};
use turbreg::Image;

/// Inverse of a displacement field by fixed-point iteration,
/// v(x) = -d(x + v(x)), independent of the library's splat-based inverter.
fn fixed_point_inverse(d: &FlowField<f64>) -> FlowField<f64> {
    let (h, w) = (d.height(), d.width());
    let mut v = FlowField::zeros(h, w);
    for _ in 0..60 {
        let mut next = FlowField::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                let cur = v.at(r, c);
                let pr = r as f64 + cur[0];
                let pc = c as f64 + cur[1];
                next.set(r, c, [-d.sample_component(pr, pc, 0), -d.sample_component(pr, pc, 1)]);
            }
        }
        v = next;
    }
    v
}

fn interior_rms(a: &FlowField<f64>, b: &FlowField<f64>, margin: usize) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for r in margin..a.height() - margin {
        for c in margin..a.width() - margin {
            let (x, y) = (a.at(r, c), b.at(r, c));
            acc += (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
            n += 2;
        }
    }
    (acc / n as f64).sqrt()
}

#[test]
fn flow_estimate_matches_the_simulated_deformation() {
    let gt: Image<f64> = synthetic_target(128, 128, 21);
    let p = TurbulenceParams {
        amplitude: 1.5,
        correlation_length: 10.0,
        blur_sigma_mean: 0.0,
        noise_sigma: 0.0,
        seed: 40,
        ..Default::default()
    };
    let (frames, flows) = simulate_sequence(&gt, 1, &p).unwrap();
    let estimated = horn_schunck(&gt, &frames[0], &HornSchunckParams::default()).unwrap();
    let expected = fixed_point_inverse(&flows[0]);
    let err = interior_rms(&estimated, &expected, 10);
    assert!(err < 0.5, "interior flow error {err} px");
}

#[test]
fn inversion_round_trip_reproduces_the_image() {
    let gt: Image<f64> = synthetic_target(128, 128, 22);
    let w = random_smooth_flow::<f64>(77, 128, 128, 2.0, 9.0);
    let winv = invert_flow(&w).unwrap();
    let round = compose_flow(&w, &winv).unwrap();
    let back = warp_image(&gt, &round).unwrap();
    let mut acc = 0.0;
    let mut n = 0usize;
    for r in 10..118 {
        for c in 10..118 {
            let d = back.at(r, c, 0) - gt.at(r, c, 0);
            acc += d * d;
            n += 1;
        }
    }
    let rmse = (acc / n as f64).sqrt();
    assert!(rmse < 0.02, "interior intensity rmse {rmse}");
}

#[test]
fn mean_flow_magnitude_decays_like_the_square_root_of_t() {
    let amp = 2.0;
    for (t, seed0) in [(16usize, 100u64), (64, 300)] {
        let mut rms_sum = 0.0;
        for trial in 0..5u64 {
            let flows: Vec<FlowField<f64>> = (0..t)
                .map(|i| {
                    random_smooth_flow(seed0 + trial * 1000 + i as u64, 64, 64, amp, 7.0)
                })
                .collect();
            let mean = mean_flow(&flows).unwrap();
            rms_sum += mean.rms_magnitude(0);
        }
        let avg = rms_sum / 5.0;
        let bound = 1.75 * amp / (t as f64).sqrt();
        assert!(avg <= bound, "T={t}: mean-flow rms {avg} exceeds {bound}");
    }
}

fn temporal_mean(frames: &[Image<f64>]) -> Image<f64> {
    let mut acc = vec![0.0f64; frames[0].data().len()];
    for f in frames {
        for (a, v) in acc.iter_mut().zip(f.data()) {
            *a += v;
        }
    }
    let n = frames.len() as f64;
    let data = acc.into_iter().map(|a| a / n).collect();
    Image::from_vec(frames[0].height(), frames[0].width(), frames[0].channels(), data).unwrap()
}

#[test]
fn template_beats_the_temporal_mean() {
    let gt: Image<f64> = synthetic_target(96, 96, 23);
    let p = TurbulenceParams {
        amplitude: 1.5,
        correlation_length: 8.0,
        blur_sigma_mean: 0.0,
        noise_sigma: 0.005,
        seed: 50,
        ..Default::default()
    };
    let (frames, _) = simulate_sequence(&gt, 12, &p).unwrap();
    let template = build_template(&frames, &PipelineConfig::default()).unwrap().template;
    let p_template = psnr(&template, &gt, 1.0).unwrap();
    let p_mean = psnr(&temporal_mean(&frames), &gt, 1.0).unwrap();
    assert!(
        p_template >= p_mean + 0.5,
        "template {p_template:.2} dB vs mean {p_mean:.2} dB"
    );
}

#[test]
fn deconvolution_recovers_part_of_the_blur_loss() {
    let gt: Image<f64> = synthetic_target(96, 96, 24);
    let p = TurbulenceParams {
        amplitude: 1.2,
        correlation_length: 8.0,
        blur_sigma_mean: 1.0,
        noise_sigma: 0.005,
        seed: 60,
        ..Default::default()
    };
    let (frames, _) = simulate_sequence(&gt, 10, &p).unwrap();
    let cfg = PipelineConfig {
        deconv: DeconvConfig { alpha: 1e-4, sigma_init: 3.0, ..Default::default() },
        ..Default::default()
    };
    let template = build_template(&frames, &cfg).unwrap().template;
    let restored = run_pipeline(&frames, &cfg).unwrap();
    let p_template = psnr(&template, &gt, 1.0).unwrap();
    let p_restored = psnr(&restored, &gt, 1.0).unwrap();
    assert!(
        p_restored >= p_template + 0.5,
        "restored {p_restored:.2} dB vs template {p_template:.2} dB"
    );
}

#[test]
fn second_outer_iteration_does_not_hurt_a_blurred_sequence() {
    let gt: Image<f64> = synthetic_target(96, 96, 24);
    let p = TurbulenceParams {
        amplitude: 1.2,
        correlation_length: 8.0,
        blur_sigma_mean: 1.0,
        noise_sigma: 0.005,
        seed: 60,
        ..Default::default()
    };
    let (frames, _) = simulate_sequence(&gt, 10, &p).unwrap();
    let mut cfg = PipelineConfig {
        deconv: DeconvConfig { alpha: 1e-4, sigma_init: 3.0, ..Default::default() },
        ..Default::default()
    };
    let one = run_pipeline(&frames, &cfg).unwrap();
    cfg.outer_iterations = 2;
    let two = run_pipeline(&frames, &cfg).unwrap();
    let p1 = psnr(&one, &gt, 1.0).unwrap();
    let p2 = psnr(&two, &gt, 1.0).unwrap();
    assert!(p2 >= p1 - 0.2, "outer=1 {p1:.2} dB vs outer=2 {p2:.2} dB");
}

#[test]
fn keyframe_choice_barely_moves_template_quality() {
    let gt: Image<f64> = synthetic_target(64, 64, 26);
    let p = TurbulenceParams {
        amplitude: 1.2,
        correlation_length: 7.0,
        blur_sigma_mean: 0.5,
        noise_sigma: 0.005,
        seed: 80,
        ..Default::default()
    };
    let (frames, _) = simulate_sequence(&gt, 8, &p).unwrap();
    let mut values = Vec::new();
    for k in [0usize, 3, 7] {
        let cfg = PipelineConfig { keyframe_index: k, ..Default::default() };
        let template = build_template(&frames, &cfg).unwrap().template;
        values.push(ssim(&template, &gt, &SsimParams::default()).unwrap());
    }
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.02, "ssim spread {spread} over keyframes, values {values:?}");
}

#[test]
fn template_quality_does_not_degrade_with_more_frames() {
    let gt: Image<f64> = synthetic_target(96, 96, 27);
    let p = TurbulenceParams {
        amplitude: 1.5,
        correlation_length: 8.0,
        blur_sigma_mean: 0.0,
        noise_sigma: 0.005,
        seed: 90,
        ..Default::default()
    };
    let (frames, _) = simulate_sequence(&gt, 24, &p).unwrap();
    let mut last = f64::NEG_INFINITY;
    for t in [6usize, 12, 24] {
        let template = build_template(&frames[..t], &PipelineConfig::default()).unwrap().template;
        let v = psnr(&template, &gt, 1.0).unwrap();
        assert!(v >= last - 0.2, "T={t}: {v:.2} dB after {last:.2} dB");
        last = v;
    }
}
