//! Forward-model simulator: smooth random warps, per-frame Gaussian blur,
//! and sensor noise, used as the verification oracle for the registration
//! pipeline. The [`wavefront`] submodule synthesizes physically motivated
//! point spread functions from random wavefront aberrations.

pub mod wavefront;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filter;
use crate::float::Scalar;
use crate::flow::FlowField;
use crate::imgio::{warp_image, Image};

/// Degradation parameters of the simulated sequence.
#[derive(Debug, Clone)]
pub struct TurbulenceParams {
    /// RMS warp displacement in pixels.
    pub amplitude: f64,
    /// Spatial smoothness of the warp fields in pixels.
    pub correlation_length: f64,
    /// Mean of the per-frame blur standard deviation.
    pub blur_sigma_mean: f64,
    /// Half-width of the uniform jitter around the blur mean.
    pub blur_sigma_jitter: f64,
    /// Standard deviation of the additive intensity noise.
    pub noise_sigma: f64,
    /// Base RNG seed; frame t uses seed + t.
    pub seed: u64,
}

impl Default for TurbulenceParams {
    fn default() -> Self {
        TurbulenceParams {
            amplitude: 2.0,
            correlation_length: 8.0,
            blur_sigma_mean: 1.0,
            blur_sigma_jitter: 0.0,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl TurbulenceParams {
    fn validate(&self) -> Result<()> {
        if self.amplitude < 0.0
            || self.blur_sigma_mean < 0.0
            || self.blur_sigma_jitter < 0.0
            || self.noise_sigma < 0.0
        {
            return Err(Error::invalid("turbulence parameters must be nonnegative"));
        }
        if self.correlation_length < 1.0 {
            return Err(Error::invalid("correlation_length must be at least 1 pixel"));
        }
        Ok(())
    }
}

/// Smooth zero-mean random displacement field: two independent white
/// Gaussian planes are blurred with a Gaussian of std `correlation_length`
/// and globally rescaled so the RMS displacement magnitude equals
/// `amplitude`. Deterministic given the seed.
pub fn random_smooth_flow<T: Scalar>(
    seed: u64,
    height: usize,
    width: usize,
    amplitude: f64,
    correlation_length: f64,
) -> FlowField<T> {
    let mut out = FlowField::zeros(height, width);
    if amplitude <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = height * width;
    let mut planes = [vec![0.0f64; n], vec![0.0f64; n]];
    for plane in &mut planes {
        for v in plane.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        *plane = filter::blur_plane(plane, height, width, correlation_length);
    }
    let mut ms = 0.0;
    for i in 0..n {
        ms += planes[0][i] * planes[0][i] + planes[1][i] * planes[1][i];
    }
    let rms = (ms / n as f64).sqrt();
    if rms == 0.0 {
        return out;
    }
    let scale = amplitude / rms;
    for (i, d) in out.data_mut().iter_mut().enumerate() {
        *d = [T::cast(planes[0][i] * scale), T::cast(planes[1][i] * scale)];
    }
    out
}

/// Simulates `t_count` frames: each is the ground truth warped by a fresh
/// smooth random field, blurred by a per-frame Gaussian, corrupted by
/// additive Gaussian noise, and clamped to [0,1]. Returns the frames and
/// the realized backward displacement fields d_t (frame(y) = gt(y + d_t(y))).
pub fn simulate_sequence<T: Scalar>(
    gt: &Image<T>,
    t_count: usize,
    p: &TurbulenceParams,
) -> Result<(Vec<Image<T>>, Vec<FlowField<T>>)> {
    p.validate()?;
    if t_count == 0 {
        return Err(Error::invalid("sequence length must be at least 1"));
    }
    let mut frames = Vec::with_capacity(t_count);
    let mut flows = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let frame_seed = p.seed.wrapping_add(t as u64);
        let d = random_smooth_flow(frame_seed, gt.height(), gt.width(), p.amplitude, p.correlation_length);
        let mut frame = warp_image(gt, &d)?;

        // blur/noise draws use a stream separate from the flow's
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
        rng.set_stream(1);
        let sigma = if p.blur_sigma_jitter > 0.0 {
            let lo = (p.blur_sigma_mean - p.blur_sigma_jitter).max(0.0);
            let hi = p.blur_sigma_mean + p.blur_sigma_jitter;
            rng.random_range(lo..hi)
        } else {
            p.blur_sigma_mean
        };
        if sigma > 0.0 {
            frame = filter::blur_image(&frame, sigma);
        }
        for v in frame.data_mut() {
            let mut x = v.f64();
            if p.noise_sigma > 0.0 {
                let eta: f64 = rng.sample(StandardNormal);
                x += p.noise_sigma * eta;
            }
            *v = T::cast(x.clamp(0.0, 1.0));
        }
        frames.push(frame);
        flows.push(d);
    }
    Ok((frames, flows))
}

/// Deterministic synthetic test image: several octaves of smoothed noise
/// normalized to full range, a bright rectangle and a dark disc for hard
/// edges, mapped into [0.1, 0.9].
pub fn synthetic_target<T: Scalar>(height: usize, width: usize, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = height * width;
    let mut acc = vec![0.0f64; n];
    for (sigma, scale) in [(6.0, 1.0), (3.0, 0.5), (1.5, 0.25), (0.75, 0.12)] {
        let mut plane = vec![0.0f64; n];
        for v in plane.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let plane = filter::blur_plane(&plane, height, width, sigma);
        for (a, v) in acc.iter_mut().zip(plane) {
            *a += scale * v;
        }
    }
    let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in &mut acc {
        *v = (*v - lo) / span;
    }
    for r in height / 4..height / 2 {
        for c in width / 5..width / 3 {
            acc[r * width + c] = 0.85;
        }
    }
    let (cr, cc) = ((2 * height / 3) as i64, (2 * width / 3) as i64);
    let rad2 = ((height / 8) * (height / 8)) as i64;
    for r in 0..height as i64 {
        for c in 0..width as i64 {
            if (r - cr) * (r - cr) + (c - cc) * (c - cc) < rad2 {
                acc[r as usize * width + c as usize] = 0.15;
            }
        }
    }
    let data = acc.into_iter().map(|v| T::cast(0.1 + 0.8 * v)).collect();
    Image::from_vec(height, width, 1, data).expect("generator output is finite")
}
