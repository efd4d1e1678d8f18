//! Fourier-optics synthesis of instantaneous point spread functions from
//! random wavefront aberrations over a circular aperture, and a moment-based
//! Gaussian fit used to quantify how close averaged PSFs are to Gaussian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::filter;
use crate::float::Scalar;
use crate::imgio::Image;

/// One higher-order aberration mode. `index` sets the spatial scale of the
/// mode pattern (correlation length 0.5/index of the aperture radius);
/// `pattern` selects the random pattern stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HigherOrderMode {
    pub index: u32,
    pub pattern: u64,
}

/// Aperture and aberration description. Coordinates are unit-normalized:
/// the aperture plane is u in [-1,1]^2, tilt and defocus are expressed in
/// radians of phase at the aperture rim, and the PSF is returned in DFT
/// pixels on a grid zero-padded to twice `grid_size`.
#[derive(Debug, Clone)]
pub struct WavefrontParams {
    pub grid_size: usize,
    /// Aperture radius as a fraction of the grid, in (0, 0.5].
    pub aperture_radius: f64,
    /// Tilt phase coefficients (row, col).
    pub tilt: [f64; 2],
    /// Defocus phase coefficient.
    pub defocus: f64,
    /// Standard deviation of each random mode coefficient.
    pub higher_order_sigma: f64,
    pub higher_order_modes: Vec<HigherOrderMode>,
}

impl Default for WavefrontParams {
    fn default() -> Self {
        WavefrontParams {
            grid_size: 128,
            aperture_radius: 0.25,
            tilt: [0.0, 0.0],
            defocus: 0.0,
            higher_order_sigma: 1.4,
            higher_order_modes: (0..32)
                .map(|m| HigherOrderMode { index: 2, pattern: m })
                .collect(),
        }
    }
}

impl WavefrontParams {
    fn validate(&self) -> Result<()> {
        if self.grid_size < 8 {
            return Err(Error::invalid("wavefront grid must be at least 8"));
        }
        if !(self.aperture_radius > 0.0 && self.aperture_radius <= 0.5) {
            return Err(Error::invalid("aperture_radius must be in (0, 0.5]"));
        }
        if self.higher_order_sigma < 0.0 {
            return Err(Error::invalid("higher_order_sigma must be nonnegative"));
        }
        if self.higher_order_modes.iter().any(|m| m.index == 0) {
            return Err(Error::invalid("mode index must be positive"));
        }
        Ok(())
    }
}

/// Result of [`fit_gaussian_psf`]: centroid and isotropic width in grid
/// pixels, plus the normalized L2 distance to the fitted Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub center: [f64; 2],
    pub sigma: f64,
    pub residual: f64,
}

/// Synthesizes one instantaneous PSF. The phase over the aperture is
/// tilt + defocus plus a fresh random realization of each higher-order
/// mode, scaled by a coefficient drawn from N(0, higher_order_sigma^2).
/// Deterministic given (params, draw).
pub fn wavefront_psf<T: Scalar>(wp: &WavefrontParams, draw: u64) -> Result<Image<T>> {
    wp.validate()?;
    let n = wp.grid_size;
    let rad_u = 2.0 * wp.aperture_radius;
    let c0 = (n as f64 - 1.0) / 2.0;
    let half = n as f64 / 2.0;

    let mut phase = vec![0.0f64; n * n];
    let mut mask = vec![false; n * n];
    for r in 0..n {
        let rho_r = ((r as f64 - c0) / half) / rad_u;
        for c in 0..n {
            let rho_c = ((c as f64 - c0) / half) / rad_u;
            let rho2 = rho_r * rho_r + rho_c * rho_c;
            mask[r * n + c] = rho2 <= 1.0;
            phase[r * n + c] = wp.tilt[0] * rho_r + wp.tilt[1] * rho_c + wp.defocus * rho2;
        }
    }

    if wp.higher_order_sigma > 0.0 && !wp.higher_order_modes.is_empty() {
        let mut coef_rng = ChaCha8Rng::seed_from_u64(draw);
        // modes sharing a spatial scale are accumulated before the single
        // smoothing pass; smoothing is linear so the result is identical
        let mut by_index: Vec<(u32, Vec<f64>)> = Vec::new();
        for mode in &wp.higher_order_modes {
            let coef: f64 = coef_rng.sample::<f64, _>(StandardNormal) * wp.higher_order_sigma;
            let mut noise_rng = ChaCha8Rng::seed_from_u64(draw);
            noise_rng.set_stream(mode.pattern.wrapping_add(1));
            let pos = match by_index.iter().position(|(i, _)| *i == mode.index) {
                Some(p) => p,
                None => {
                    by_index.push((mode.index, vec![0.0; n * n]));
                    by_index.len() - 1
                }
            };
            let acc = &mut by_index[pos].1;
            for a in acc.iter_mut() {
                let w: f64 = noise_rng.sample(StandardNormal);
                *a += coef * w;
            }
        }
        for (index, acc) in by_index {
            let corr_px = 0.5 / index as f64 * wp.aperture_radius * n as f64;
            let taps = filter::gaussian_taps(corr_px);
            // smoothing white noise scales its pointwise std by the kernel's
            // L2 norm; divide it back out so coefficients keep their meaning
            let tau = taps.iter().map(|t| t * t).sum::<f64>();
            let smooth = filter::blur_plane(&acc, n, n, corr_px);
            for (p, v) in phase.iter_mut().zip(smooth) {
                *p += v / tau;
            }
        }
    }

    let m = 2 * n;
    let mut field = vec![Complex::new(0.0f64, 0.0); m * m];
    for r in 0..n {
        for c in 0..n {
            if mask[r * n + c] {
                let (s, co) = phase[r * n + c].sin_cos();
                field[r * m + c] = Complex::new(co, s);
            }
        }
    }
    fft2_in_place(&mut field, m);

    let total: f64 = field.iter().map(|z| z.norm_sqr()).sum();
    if total <= 0.0 {
        return Err(Error::invalid("aperture contains no open pixels"));
    }
    let mut psf = vec![T::zero(); m * m];
    for r in 0..m {
        let sr = (r + m / 2) % m;
        for c in 0..m {
            let sc = (c + m / 2) % m;
            psf[sr * m + sc] = T::cast(field[r * m + c].norm_sqr() / total);
        }
    }
    Image::from_vec(m, m, 1, psf)
}

/// Unnormalized forward 2-D FFT of a square grid, rows then columns.
fn fft2_in_place(data: &mut [Complex<f64>], m: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    for row in data.chunks_exact_mut(m) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); m];
    for c in 0..m {
        for r in 0..m {
            col[r] = data[r * m + c];
        }
        fft.process(&mut col);
        for r in 0..m {
            data[r * m + c] = col[r];
        }
    }
}

/// Fits an isotropic Gaussian to a PSF by intensity moments: the centroid,
/// the width sqrt of the mean of the two principal second central moments,
/// and the normalized L2 residual against the sampled unit-sum Gaussian.
pub fn fit_gaussian_psf<T: Scalar>(psf: &Image<T>) -> Result<GaussianFit> {
    if psf.channels() != 1 {
        return Err(Error::invalid("psf must be single channel"));
    }
    let (h, w) = (psf.height(), psf.width());
    let mut total = 0.0f64;
    let mut mu_r = 0.0f64;
    let mut mu_c = 0.0f64;
    for r in 0..h {
        for c in 0..w {
            let p = psf.at(r, c, 0).f64();
            total += p;
            mu_r += p * r as f64;
            mu_c += p * c as f64;
        }
    }
    if total <= 0.0 {
        return Err(Error::invalid("psf has no mass"));
    }
    mu_r /= total;
    mu_c /= total;
    let mut m_rr = 0.0f64;
    let mut m_cc = 0.0f64;
    for r in 0..h {
        for c in 0..w {
            let p = psf.at(r, c, 0).f64() / total;
            let dr = r as f64 - mu_r;
            let dc = c as f64 - mu_c;
            m_rr += p * dr * dr;
            m_cc += p * dc * dc;
        }
    }
    let sigma = (0.5 * (m_rr + m_cc)).sqrt();

    let mut gauss = vec![0.0f64; h * w];
    let mut gsum = 0.0f64;
    if sigma > 1e-9 {
        for r in 0..h {
            for c in 0..w {
                let dr = r as f64 - mu_r;
                let dc = c as f64 - mu_c;
                let g = (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp();
                gauss[r * w + c] = g;
                gsum += g;
            }
        }
    }
    if gsum <= 0.0 {
        // degenerate width: compare against a single-pixel impulse
        let r = (mu_r.round().max(0.0) as usize).min(h - 1);
        let c = (mu_c.round().max(0.0) as usize).min(w - 1);
        gauss[r * w + c] = 1.0;
        gsum = 1.0;
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for r in 0..h {
        for c in 0..w {
            let p = psf.at(r, c, 0).f64() / total;
            let g = gauss[r * w + c] / gsum;
            num += (p - g) * (p - g);
            den += p * p;
        }
    }
    Ok(GaussianFit {
        center: [mu_r, mu_c],
        sigma,
        residual: (num / den).sqrt(),
    })
}
