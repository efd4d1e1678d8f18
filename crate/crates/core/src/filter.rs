//! Internal separable Gaussian filtering and pyramid resampling.

use crate::float::Scalar;
use crate::imgio::Image;

/// Normalized 1-D Gaussian taps with radius ceil(3·sigma).
pub(crate) fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur of a single plane, replicate boundary.
pub(crate) fn blur_plane<T: Scalar>(src: &[T], height: usize, width: usize, sigma: f64) -> Vec<T> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as i64;
    let mut tmp = vec![T::zero(); src.len()];
    // horizontal
    for r in 0..height {
        let row = &src[r * width..(r + 1) * width];
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let cc = (c as i64 + k as i64 - radius).clamp(0, width as i64 - 1) as usize;
                acc += t * row[cc].f64();
            }
            tmp[r * width + c] = T::cast(acc);
        }
    }
    // vertical
    let mut out = vec![T::zero(); src.len()];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let rr = (r as i64 + k as i64 - radius).clamp(0, height as i64 - 1) as usize;
                acc += t * tmp[rr * width + c].f64();
            }
            out[r * width + c] = T::cast(acc);
        }
    }
    out
}

/// Gaussian blur of an image, applied per channel.
pub(crate) fn blur_image<T: Scalar>(img: &Image<T>, sigma: f64) -> Image<T> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    if ch == 1 {
        let data = blur_plane(img.data(), h, w, sigma);
        return Image::from_vec(h, w, 1, data).expect("blur preserves shape");
    }
    let mut out = Image::new(h, w, ch);
    for k in 0..ch {
        let plane: Vec<T> = (0..h * w).map(|i| img.data()[i * ch + k]).collect();
        let blurred = blur_plane(&plane, h, w, sigma);
        for (i, v) in blurred.into_iter().enumerate() {
            out.data_mut()[i * ch + k] = v;
        }
    }
    out
}

/// Anti-aliased downsampling of a 1-channel image by `scale` in (0,1):
/// Gaussian pre-blur with sigma = 0.5·sqrt(1/scale² − 1), then bilinear
/// resampling at cell centers.
pub(crate) fn downsample_gray<T: Scalar>(img: &Image<T>, scale: f64) -> Image<T> {
    debug_assert!(img.channels() == 1);
    let sigma = 0.5 * (1.0 / (scale * scale) - 1.0).sqrt();
    let blurred = blur_image(img, sigma);
    let nh = ((img.height() as f64 * scale).round() as usize).max(2);
    let nw = ((img.width() as f64 * scale).round() as usize).max(2);
    let mut out = Image::new(nh, nw, 1);
    for r in 0..nh {
        let sr = (r as f64 + 0.5) / scale - 0.5;
        for c in 0..nw {
            let sc = (c as f64 + 0.5) / scale - 0.5;
            out.set(r, c, 0, blurred.sample(T::cast(sr), T::cast(sc), 0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_are_normalized_and_symmetric() {
        for sigma in [0.5, 1.0, 2.7] {
            let taps = gaussian_taps(sigma);
            let sum: f64 = taps.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let n = taps.len();
            for i in 0..n / 2 {
                assert_eq!(taps[i], taps[n - 1 - i]);
            }
        }
    }

    #[test]
    fn blur_preserves_constant_plane() {
        let src = vec![0.37f64; 30];
        let out = blur_plane(&src, 5, 6, 1.5);
        for v in out {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_preserves_mean_of_symmetric_pattern() {
        // replicate boundary keeps total mass for a symmetric input
        let mut img = Image::<f64>::new(9, 9, 1);
        img.set(4, 4, 0, 1.0);
        let out = blur_image(&img, 1.0);
        let peak = out.at(4, 4, 0);
        assert!(peak < 1.0 && peak > 0.1);
        // 3-sigma support fits inside the grid, so the sum is preserved
        let sum: f64 = out.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn downsample_halves_dimensions() {
        let img = Image::<f64>::new(64, 48, 1);
        let out = downsample_gray(&img, 0.5);
        assert_eq!((out.height(), out.width()), (32, 24));
    }

    #[test]
    fn downsample_of_constant_is_constant() {
        let img = Image::<f64>::from_vec(16, 16, 1, vec![0.6; 256]).unwrap();
        let out = downsample_gray(&img, 0.5);
        for &v in out.data() {
            assert!((v - 0.6).abs() < 1e-12);
        }
    }
}
