//! Total-variation blind deconvolution of the registered template with a
//! parametric Gaussian blur kernel. The objective is
//! `sum((k_sigma (*) I - template)^2) + alpha * sum(sqrt(|grad I|^2 + eps^2))`
//! minimized by alternating projected gradient descent on the image and the
//! kernel width, with backtracking line search on both.

use crate::error::{Error, Result};
use crate::float::Scalar;
use crate::imgio::Image;

/// Parametric blur kernel: an isotropic Gaussian of width `sigma` centered
/// at `shift`, materialized on the square grid [-radius, radius]^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub sigma: f64,
    pub shift: [f64; 2],
    pub radius: usize,
}

impl GaussianKernel {
    pub fn new(sigma: f64, radius: usize) -> Self {
        GaussianKernel { sigma, shift: [0.0, 0.0], radius }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("kernel sigma must be positive"));
        }
        if self.radius == 0 {
            return Err(Error::invalid("kernel radius must be positive"));
        }
        if (self.radius as f64) < (3.0 * self.sigma).ceil() {
            return Err(Error::invalid("kernel radius must be at least ceil(3 sigma)"));
        }
        if !self.shift.iter().all(|s| s.is_finite()) {
            return Err(Error::invalid("kernel shift must be finite"));
        }
        Ok(())
    }
}

/// A materialized odd-sized convolution kernel. Gaussian kernels carry their
/// separable row/column factors so convolution can run in two 1-D passes.
#[derive(Debug, Clone)]
pub struct Kernel {
    radius: usize,
    taps: Vec<f64>,
    separable: Option<(Vec<f64>, Vec<f64>)>,
}

impl Kernel {
    /// Wraps explicit 2-D taps. `side` must be odd; taps are row-major on
    /// the (side x side) grid and are used as-is (no normalization).
    pub fn from_taps(side: usize, taps: Vec<f64>) -> Result<Kernel> {
        if side == 0 || side % 2 == 0 {
            return Err(Error::invalid("kernel side must be odd"));
        }
        if taps.len() != side * side {
            return Err(Error::invalid("kernel tap count does not match side"));
        }
        if !taps.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("kernel taps must be finite"));
        }
        Ok(Kernel { radius: side / 2, taps, separable: None })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at offset (di, dj), each in [-radius, radius].
    pub fn at(&self, di: isize, dj: isize) -> f64 {
        let r = self.radius as isize;
        self.taps[((di + r) * (2 * r + 1) + (dj + r)) as usize]
    }
}

/// Samples the Gaussian on the kernel grid and normalizes to unit sum.
/// Widths below 0.05 px degenerate to a discrete delta at the rounded shift.
pub fn make_kernel(sigma: f64, shift: [f64; 2], radius: usize) -> Result<Kernel> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("kernel sigma must be positive"));
    }
    if radius == 0 {
        return Err(Error::invalid("kernel radius must be positive"));
    }
    if !shift.iter().all(|s| s.is_finite()) {
        return Err(Error::invalid("kernel shift must be finite"));
    }
    let side = 2 * radius + 1;
    let r = radius as isize;
    if sigma < 0.05 {
        let mut taps = vec![0.0; side * side];
        let dr = (shift[0].round() as isize).clamp(-r, r);
        let dc = (shift[1].round() as isize).clamp(-r, r);
        taps[((dr + r) * side as isize + (dc + r)) as usize] = 1.0;
        let mut row = vec![0.0; side];
        let mut col = vec![0.0; side];
        row[(dr + r) as usize] = 1.0;
        col[(dc + r) as usize] = 1.0;
        return Ok(Kernel { radius, taps, separable: Some((row, col)) });
    }
    let axis = |shift: f64| -> Vec<f64> {
        let mut t: Vec<f64> = (-r..=r)
            .map(|i| {
                let d = i as f64 - shift;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = t.iter().sum();
        for v in &mut t {
            *v /= sum;
        }
        t
    };
    let row = axis(shift[0]);
    let col = axis(shift[1]);
    let mut taps = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            taps[i * side + j] = row[i] * col[j];
        }
    }
    Ok(Kernel { radius, taps, separable: Some((row, col)) })
}

/// 1-D Gaussian taps on [-radius, radius] (unnormalized sum and values)
/// and the derivative of the normalized taps with respect to sigma.
fn axis_taps_and_derivative(sigma: f64, shift: f64, radius: usize) -> (Vec<f64>, Vec<f64>) {
    let r = radius as isize;
    let mut raw = Vec::with_capacity(2 * radius + 1);
    let mut draw = Vec::with_capacity(2 * radius + 1);
    let mut sum = 0.0;
    let mut dsum = 0.0;
    for i in -r..=r {
        let d = i as f64 - shift;
        let g = (-d * d / (2.0 * sigma * sigma)).exp();
        let dg = g * d * d / (sigma * sigma * sigma);
        raw.push(g);
        draw.push(dg);
        sum += g;
        dsum += dg;
    }
    let norm: Vec<f64> = raw.iter().map(|g| g / sum).collect();
    let dnorm: Vec<f64> = draw
        .iter()
        .zip(&norm)
        .map(|(dg, n)| (dg - n * dsum) / sum)
        .collect();
    (norm, dnorm)
}

fn clamp_index(v: isize, max: usize) -> usize {
    v.clamp(0, max as isize - 1) as usize
}

/// Two-pass convolution with an outer-product kernel, replicate boundary:
/// vertical pass with `row`, horizontal pass with `col`.
fn conv_separable<T: Scalar>(img: &Image<T>, row: &[f64], col: &[f64]) -> Image<T> {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let r = (row.len() / 2) as isize;
    let mut out = Image::new(h, w, ch);
    let mut tmp = vec![0.0f64; h * w];
    for c0 in 0..ch {
        for rr in 0..h {
            for cc in 0..w {
                let mut acc = 0.0;
                for (i, t) in row.iter().enumerate() {
                    let src = clamp_index(rr as isize - (i as isize - r), h);
                    acc += t * img.at(src, cc, c0).f64();
                }
                tmp[rr * w + cc] = acc;
            }
        }
        for rr in 0..h {
            for cc in 0..w {
                let mut acc = 0.0;
                for (j, t) in col.iter().enumerate() {
                    let src = clamp_index(cc as isize - (j as isize - r), w);
                    acc += t * tmp[rr * w + src];
                }
                out.set(rr, cc, c0, T::cast(acc));
            }
        }
    }
    out
}

/// Adjoint of [`conv_separable`]: the 1-D passes are adjointed (gather
/// becomes scatter) and applied in reverse order.
fn adjoint_separable<T: Scalar>(img: &Image<T>, row: &[f64], col: &[f64]) -> Image<T> {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let r = (row.len() / 2) as isize;
    let mut out = Image::new(h, w, ch);
    let mut tmp = vec![0.0f64; h * w];
    for c0 in 0..ch {
        for v in tmp.iter_mut() {
            *v = 0.0;
        }
        for rr in 0..h {
            for cc in 0..w {
                let v = img.at(rr, cc, c0).f64();
                for (j, t) in col.iter().enumerate() {
                    let dst = clamp_index(cc as isize - (j as isize - r), w);
                    tmp[rr * w + dst] += t * v;
                }
            }
        }
        let mut plane = vec![0.0f64; h * w];
        for rr in 0..h {
            for cc in 0..w {
                let v = tmp[rr * w + cc];
                for (i, t) in row.iter().enumerate() {
                    let dst = clamp_index(rr as isize - (i as isize - r), h);
                    plane[dst * w + cc] += t * v;
                }
            }
        }
        for rr in 0..h {
            for cc in 0..w {
                out.set(rr, cc, c0, T::cast(plane[rr * w + cc]));
            }
        }
    }
    out
}

/// Discrete 2-D convolution per channel with replicate boundary:
/// `out(x) = sum_t k(t) img(x - t)` with out-of-range reads clamped.
pub fn convolve<T: Scalar>(img: &Image<T>, k: &Kernel) -> Image<T> {
    if let Some((row, col)) = &k.separable {
        return conv_separable(img, row, col);
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut out = Image::new(h, w, ch);
    let r = k.radius as isize;
    for c0 in 0..ch {
        for rr in 0..h {
            for cc in 0..w {
                let mut acc = 0.0;
                for i in -r..=r {
                    for j in -r..=r {
                        let sr = clamp_index(rr as isize - i, h);
                        let sc = clamp_index(cc as isize - j, w);
                        acc += k.at(i, j) * img.at(sr, sc, c0).f64();
                    }
                }
                out.set(rr, cc, c0, T::cast(acc));
            }
        }
    }
    out
}

/// Exact adjoint of [`convolve`] under the same replicate boundary: each
/// output sample scatters its weighted value back to the clamped source
/// pixels it read from. In the interior this equals correlation with `k`.
pub fn convolve_adjoint<T: Scalar>(img: &Image<T>, k: &Kernel) -> Image<T> {
    if let Some((row, col)) = &k.separable {
        return adjoint_separable(img, row, col);
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let r = k.radius as isize;
    let mut acc = vec![0.0f64; h * w * ch];
    for c0 in 0..ch {
        for rr in 0..h {
            for cc in 0..w {
                let v = img.at(rr, cc, c0).f64();
                for i in -r..=r {
                    for j in -r..=r {
                        let sr = clamp_index(rr as isize - i, h);
                        let sc = clamp_index(cc as isize - j, w);
                        acc[(sr * w + sc) * ch + c0] += k.at(i, j) * v;
                    }
                }
            }
        }
    }
    let data = acc.into_iter().map(T::cast).collect();
    Image::from_vec(h, w, ch, data).expect("adjoint output is finite")
}

/// Smoothed total variation and its gradient: forward differences with
/// replicate boundary (last row/column differences are zero), integrand
/// sqrt(dr^2 + dc^2 + eps^2), divergence scattered back analytically.
fn tv_value_grad<T: Scalar>(img: &Image<T>, eps: f64) -> (f64, Vec<f64>) {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let n = h * w * ch;
    let mut val = 0.0;
    let mut nr = vec![0.0f64; n];
    let mut nc = vec![0.0f64; n];
    let mut grad = vec![0.0f64; n];
    for c0 in 0..ch {
        for r in 0..h {
            for c in 0..w {
                let v = img.at(r, c, c0).f64();
                let dr = if r + 1 < h { img.at(r + 1, c, c0).f64() - v } else { 0.0 };
                let dc = if c + 1 < w { img.at(r, c + 1, c0).f64() - v } else { 0.0 };
                let phi = (dr * dr + dc * dc + eps * eps).sqrt();
                val += phi;
                let idx = (r * w + c) * ch + c0;
                nr[idx] = dr / phi;
                nc[idx] = dc / phi;
            }
        }
    }
    for c0 in 0..ch {
        for r in 0..h {
            for c in 0..w {
                let idx = (r * w + c) * ch + c0;
                grad[idx] -= nr[idx] + nc[idx];
                if r + 1 < h {
                    grad[((r + 1) * w + c) * ch + c0] += nr[idx];
                }
                if c + 1 < w {
                    grad[(r * w + c + 1) * ch + c0] += nc[idx];
                }
            }
        }
    }
    (val, grad)
}

fn check_pair<T: Scalar>(img: &Image<T>, template: &Image<T>) -> Result<()> {
    if img.height() != template.height()
        || img.width() != template.width()
        || img.channels() != template.channels()
    {
        return Err(Error::invalid("image and template dimensions differ"));
    }
    Ok(())
}

/// Value of the blind-deconvolution objective for image `img` against the
/// observed `template` under blur `kernel`.
pub fn tv_objective<T: Scalar>(
    img: &Image<T>,
    template: &Image<T>,
    kernel: &GaussianKernel,
    alpha: f64,
    tv_epsilon: f64,
) -> Result<f64> {
    check_pair(img, template)?;
    kernel.validate()?;
    let k = make_kernel(kernel.sigma, kernel.shift, kernel.radius)?;
    Ok(objective_with(img, template, &k, alpha, tv_epsilon))
}

fn objective_with<T: Scalar>(
    img: &Image<T>,
    template: &Image<T>,
    k: &Kernel,
    alpha: f64,
    tv_epsilon: f64,
) -> f64 {
    let blurred = convolve(img, k);
    let mut data = 0.0f64;
    for (b, t) in blurred.data().iter().zip(template.data()) {
        let d = b.f64() - t.f64();
        data += d * d;
    }
    let (tv, _) = tv_value_grad(img, tv_epsilon);
    data + alpha * tv
}

fn residual_image<T: Scalar>(img: &Image<T>, template: &Image<T>, k: &Kernel) -> Image<T> {
    let blurred = convolve(img, k);
    let mut residual = Image::new(img.height(), img.width(), img.channels());
    for (r, (b, t)) in residual
        .data_mut()
        .iter_mut()
        .zip(blurred.data().iter().zip(template.data()))
    {
        *r = *b - *t;
    }
    residual
}

fn image_gradient<T: Scalar>(
    img: &Image<T>,
    template: &Image<T>,
    k: &Kernel,
    alpha: f64,
    tv_epsilon: f64,
) -> Image<T> {
    let residual = residual_image(img, template, k);
    let data_grad = convolve_adjoint(&residual, k);
    let (_, tv_grad) = tv_value_grad(img, tv_epsilon);
    let mut grad = Image::new(img.height(), img.width(), img.channels());
    for (g, (d, t)) in grad
        .data_mut()
        .iter_mut()
        .zip(data_grad.data().iter().zip(tv_grad))
    {
        *g = T::cast(2.0 * d.f64() + alpha * t);
    }
    grad
}

/// d(objective)/d(sigma): the derivative kernel of a separable Gaussian is
/// the two-term sum d(row) x col + row x d(col), so two separable passes.
fn sigma_gradient<T: Scalar>(
    img: &Image<T>,
    template: &Image<T>,
    sigma: f64,
    shift: [f64; 2],
    radius: usize,
) -> Result<f64> {
    if sigma < 0.05 {
        // kernel is pinned to the discrete delta below this width
        return Ok(0.0);
    }
    let k = make_kernel(sigma, shift, radius)?;
    let residual = residual_image(img, template, &k);
    let (row, drow) = axis_taps_and_derivative(sigma, shift[0], radius);
    let (col, dcol) = axis_taps_and_derivative(sigma, shift[1], radius);
    let a = conv_separable(img, &drow, &col);
    let b = conv_separable(img, &row, &dcol);
    let mut grad = 0.0f64;
    for (r, (x, y)) in residual.data().iter().zip(a.data().iter().zip(b.data())) {
        grad += 2.0 * r.f64() * (x.f64() + y.f64());
    }
    Ok(grad)
}

/// Gradient of the objective with respect to the image (same shape) and to
/// the kernel width. The data term uses the exact convolution adjoint; the
/// width term differentiates the normalized kernel taps analytically.
pub fn tv_objective_grad<T: Scalar>(
    img: &Image<T>,
    template: &Image<T>,
    kernel: &GaussianKernel,
    alpha: f64,
    tv_epsilon: f64,
) -> Result<(Image<T>, f64)> {
    check_pair(img, template)?;
    kernel.validate()?;
    let k = make_kernel(kernel.sigma, kernel.shift, kernel.radius)?;
    let grad = image_gradient(img, template, &k, alpha, tv_epsilon);
    let sigma_grad = sigma_gradient(img, template, kernel.sigma, kernel.shift, kernel.radius)?;
    Ok((grad, sigma_grad))
}

/// Optimizer settings for [`blind_deconv`].
#[derive(Debug, Clone)]
pub struct DeconvConfig {
    /// Total-variation tradeoff weight.
    pub alpha: f64,
    /// Maximum alternating rounds.
    pub max_iterations: usize,
    /// Initial (and maximum) line-search step for both variables.
    pub step_size: f64,
    /// Smoothing constant inside the TV square root.
    pub tv_epsilon: f64,
    /// Starting kernel width; also sets the kernel support.
    pub sigma_init: f64,
    /// Whether the kernel width is optimized at all.
    pub estimate_sigma: bool,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        DeconvConfig {
            alpha: 0.005,
            max_iterations: 300,
            step_size: 0.5,
            tv_epsilon: 1e-3,
            sigma_init: 1.0,
            estimate_sigma: true,
        }
    }
}

impl DeconvConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.tv_epsilon > 0.0 && self.sigma_init > 0.0) {
            return Err(Error::invalid("alpha, tv_epsilon and sigma_init must be positive"));
        }
        if self.max_iterations == 0 || !(self.step_size > 0.0) {
            return Err(Error::invalid("max_iterations and step_size must be positive"));
        }
        Ok(())
    }
}

/// Outcome of [`blind_deconv`].
#[derive(Debug, Clone)]
pub struct DeconvResult<T> {
    /// Restored image, clamped to [0, 1].
    pub image: Image<T>,
    /// Estimated blur width.
    pub sigma: f64,
    /// Alternating rounds actually run.
    pub iterations: usize,
    /// True when the optimizer stopped before `max_iterations`, either on
    /// the relative-decrease test or because no descent step was accepted.
    pub converged_early: bool,
    /// Final objective value.
    pub objective: f64,
}

const SIGMA_MIN: f64 = 0.05;
const SIGMA_TRUST: f64 = 0.1;
const INNER_IMAGE_STEPS: usize = 30;
const LINE_SEARCH_TRIES: usize = 30;

/// Restores the template by alternating descent: several image steps, then
/// one width step, each accepted only if the objective does not increase.
/// Line-search exhaustion ends the run with `converged_early` set rather
/// than an error; the accepted objective sequence is non-increasing.
pub fn blind_deconv<T: Scalar>(template: &Image<T>, cfg: &DeconvConfig) -> Result<DeconvResult<T>> {
    cfg.validate()?;
    let radius = ((3.0 * cfg.sigma_init).ceil() as usize).max(9);
    let sigma_max = radius as f64 / 3.0;
    let mut sigma = cfg.sigma_init.clamp(SIGMA_MIN, sigma_max);
    let mut img = template.clone();
    let eval = |im: &Image<T>, s: f64| -> f64 {
        let k = make_kernel(s, [0.0, 0.0], radius).expect("sigma stays positive");
        objective_with(im, template, &k, cfg.alpha, cfg.tv_epsilon)
    };

    let f0 = eval(&img, sigma);
    let mut f = f0;
    let mut step_i = cfg.step_size;
    let mut step_s = cfg.step_size;
    let mut small_rounds = 0usize;
    let mut rounds = 0usize;
    let mut converged_early = false;

    for _ in 0..cfg.max_iterations {
        rounds += 1;
        let f_round = f;
        let mut moved = false;
        let k = make_kernel(sigma, [0.0, 0.0], radius)?;

        for _ in 0..INNER_IMAGE_STEPS {
            let grad = image_gradient(&img, template, &k, cfg.alpha, cfg.tv_epsilon);
            let f_before = f;
            let mut accepted = false;
            for _ in 0..LINE_SEARCH_TRIES {
                let mut cand = img.clone();
                let s = T::cast(step_i);
                for (c, g) in cand.data_mut().iter_mut().zip(grad.data()) {
                    *c = *c - s * *g;
                }
                let f2 = eval(&cand, sigma);
                if f2 <= f {
                    img = cand;
                    f = f2;
                    step_i = (step_i * 1.2).min(cfg.step_size);
                    accepted = true;
                    break;
                }
                step_i *= 0.5;
            }
            if !accepted {
                break;
            }
            moved = true;
            if f_before - f < 1e-4 * f.max(f64::MIN_POSITIVE) {
                break;
            }
        }

        if cfg.estimate_sigma {
            let gs = sigma_gradient(&img, template, sigma, [0.0, 0.0], radius)?;
            for _ in 0..LINE_SEARCH_TRIES {
                let delta = (step_s * gs).clamp(-SIGMA_TRUST, SIGMA_TRUST);
                let s2 = (sigma - delta).clamp(SIGMA_MIN, sigma_max);
                if s2 == sigma {
                    break;
                }
                let f2 = eval(&img, s2);
                if f2 <= f {
                    sigma = s2;
                    f = f2;
                    moved = true;
                    break;
                }
                // unlike the image step, the width step never regrows, so
                // sigma settles once the image stops changing around it
                step_s *= 0.5;
            }
        }

        if !moved {
            converged_early = true;
            break;
        }
        if f_round - f <= 1e-6 * f0 {
            small_rounds += 1;
            if small_rounds >= 2 {
                converged_early = true;
                break;
            }
        } else {
            small_rounds = 0;
        }
    }

    for v in img.data_mut() {
        *v = num_traits::clamp(*v, T::zero(), T::one());
    }
    Ok(DeconvResult {
        image: img,
        sigma,
        iterations: rounds,
        converged_early,
        objective: f,
    })
}
