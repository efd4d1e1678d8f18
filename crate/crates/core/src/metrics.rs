//! Reconstruction quality metrics: PSNR and SSIM.

use crate::error::{Error, Result};
use crate::float::Scalar;
use crate::imgio::Image;

/// Reported ceiling for the PSNR of identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio in dB: 10·log10(peak² / MSE), with the MSE
/// taken over all pixels and channels. Identical images report the
/// [`PSNR_CAP_DB`] sentinel.
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>, peak: f64) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(Error::invalid("psnr: image dimensions differ"));
    }
    if !(peak > 0.0) {
        return Err(Error::invalid("psnr: peak must be positive"));
    }
    let mut acc = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x.f64() - y.f64();
        acc += d * d;
    }
    let mse = acc / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// SSIM parameters: window shape and stabilization constants.
#[derive(Debug, Clone)]
pub struct SsimParams {
    /// Window edge length (odd).
    pub window_size: usize,
    /// Standard deviation of the Gaussian window.
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range L of the intensities.
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window_size: 11, window_sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 1.0 }
    }
}

/// Structural similarity index, averaged over all window positions fully
/// inside the image. Color input is reduced to luminance first.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>, p: &SsimParams) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(Error::invalid("ssim: image dimensions differ"));
    }
    if p.window_size % 2 == 0 || p.window_size == 0 {
        return Err(Error::invalid("ssim: window size must be odd"));
    }
    if a.height() < p.window_size || a.width() < p.window_size {
        return Err(Error::invalid("ssim: image smaller than the window"));
    }
    let a = a.to_gray();
    let b = b.to_gray();
    let (h, w) = (a.height(), a.width());
    let win = p.window_size;
    let half = win / 2;

    // normalized Gaussian window
    let mut weights = vec![0.0f64; win * win];
    let mut wsum = 0.0;
    for i in 0..win {
        for j in 0..win {
            let dr = i as f64 - half as f64;
            let dc = j as f64 - half as f64;
            let v = (-(dr * dr + dc * dc) / (2.0 * p.window_sigma * p.window_sigma)).exp();
            weights[i * win + j] = v;
            wsum += v;
        }
    }
    for v in &mut weights {
        *v /= wsum;
    }

    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for r in half..h - half {
        for c in half..w - half {
            let mut mua = 0.0;
            let mut mub = 0.0;
            let mut saa = 0.0;
            let mut sbb = 0.0;
            let mut sab = 0.0;
            for i in 0..win {
                for j in 0..win {
                    let wt = weights[i * win + j];
                    let va = a.at(r + i - half, c + j - half, 0).f64();
                    let vb = b.at(r + i - half, c + j - half, 0).f64();
                    mua += wt * va;
                    mub += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            saa -= mua * mua;
            sbb -= mub * mub;
            sab -= mua * mub;
            let val = ((2.0 * mua * mub + c1) * (2.0 * sab + c2))
                / ((mua * mua + mub * mub + c1) * (saa + sbb + c2));
            acc += val;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(h: usize, w: usize, k: f64) -> Image<f64> {
        let mut img = Image::new(h, w, 1);
        for r in 0..h {
            for c in 0..w {
                let (x, y) = (r as f64, c as f64);
                let v = 0.5
                    + 0.3 * (0.37 * x + 0.21 * y + k).sin()
                    + 0.2 * (0.11 * x - 0.29 * y + 2.0 * k).cos()
                    + 0.15 * (0.05 * x * y / (1.0 + k)).sin();
                img.set(r, c, 0, v.clamp(0.0, 1.0));
            }
        }
        img
    }

    #[test]
    fn psnr_of_identical_images_is_capped() {
        let a = pattern(16, 16, 1.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_of_constant_offset_is_twenty_db() {
        let a = pattern(16, 16, 1.0);
        let mut b = a.clone();
        for v in b.data_mut() {
            *v += 0.1; // no clamping: MSE is exactly 0.01
        }
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_direct_recomputation() {
        let a = pattern(20, 24, 1.3);
        let b = pattern(20, 24, 2.7);
        let mut acc = 0.0;
        for (x, y) in a.data().iter().zip(b.data()) {
            acc += (x - y) * (x - y);
        }
        let want = 10.0 * (1.0 / (acc / (20.0 * 24.0))).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn psnr_is_symmetric() {
        let a = pattern(16, 16, 0.4);
        let b = pattern(16, 16, 3.1);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn psnr_dimension_mismatch_is_invalid() {
        let a = Image::<f64>::new(8, 8, 1);
        let b = Image::<f64>::new(8, 9, 1);
        assert!(matches!(psnr(&a, &b, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn psnr_decreases_with_noise_level() {
        let a = pattern(32, 32, 1.0);
        let mut prev = f64::INFINITY;
        for (i, sigma) in [0.01, 0.02, 0.05].iter().enumerate() {
            let mut b = a.clone();
            for (j, v) in b.data_mut().iter_mut().enumerate() {
                // deterministic pseudo-noise with the requested amplitude
                *v += sigma * ((j as f64 * 12.9898 + i as f64).sin() * 43758.5453).fract();
            }
            let p = psnr(&a, &b, 1.0).unwrap();
            assert!(p < prev, "psnr {p} not below {prev} at sigma {sigma}");
            prev = p;
        }
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = pattern(24, 24, 2.0);
        assert_eq!(ssim(&a, &a, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = pattern(24, 24, 0.7);
        let b = pattern(24, 24, 1.9);
        let p = SsimParams::default();
        assert!((ssim(&a, &b, &p).unwrap() - ssim(&b, &a, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_inverted_binary_image_is_negative() {
        let mut a = Image::<f64>::new(16, 16, 1);
        for r in 0..16 {
            for c in 0..16 {
                a.set(r, c, 0, if (r / 2 + c / 2) % 2 == 0 { 1.0 } else { 0.0 });
            }
        }
        let mut b = a.clone();
        for v in b.data_mut() {
            *v = 1.0 - *v;
        }
        assert!(ssim(&a, &b, &SsimParams::default()).unwrap() < 0.0);
    }

    #[test]
    fn ssim_image_smaller_than_window_is_invalid() {
        let a = Image::<f64>::new(8, 8, 1);
        assert!(matches!(ssim(&a, &a, &SsimParams::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ssim_matches_reference_implementation() {
        // expected values computed with scikit-image structural_similarity
        // (gaussian_weights, sigma 1.5, population covariance, data_range 1)
        let expected = [0.9115685036, 0.9307311805, 0.8853797302, 0.9198261679, 0.9079830302];
        for (k, want) in (1..=5).zip(expected) {
            let a = pattern(48, 40, k as f64);
            let mut b = a.clone();
            for (j, v) in b.data_mut().iter_mut().enumerate() {
                *v = (*v + 0.08 * (0.5 * j as f64 * (k as f64 + 0.5)).sin()).clamp(0.0, 1.0);
            }
            let got = ssim(&a, &b, &SsimParams::default()).unwrap();
            assert!((got - want).abs() < 1e-3, "k={k}: {got} vs {want}");
        }
    }
}
