//! Variational optical flow with quadratic regularization, solved by
//! Jacobi iteration inside a coarse-to-fine pyramid with intermediate
//! warping.

use crate::error::{Error, Result};
use crate::filter;
use crate::float::Scalar;
use crate::flow::FlowField;
use crate::imgio::Image;

/// Parameters of the flow estimator.
#[derive(Debug, Clone)]
pub struct HornSchunckParams {
    /// Weight of the quadratic smoothness term (intensities in [0,1]).
    pub smoothness: f64,
    /// Jacobi iterations per pyramid level, split across warp substeps.
    pub iterations_per_level: usize,
    /// Maximum number of pyramid levels.
    pub pyramid_levels: usize,
    /// Downsampling factor between levels, in (0,1).
    pub pyramid_scale: f64,
}

impl Default for HornSchunckParams {
    fn default() -> Self {
        HornSchunckParams {
            smoothness: 0.01,
            iterations_per_level: 100,
            pyramid_levels: 4,
            pyramid_scale: 0.5,
        }
    }
}

impl HornSchunckParams {
    fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0) {
            return Err(Error::invalid("smoothness must be positive"));
        }
        if self.iterations_per_level == 0 {
            return Err(Error::invalid("iterations_per_level must be at least 1"));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::invalid("pyramid_levels must be at least 1"));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::invalid("pyramid_scale must be in (0,1)"));
        }
        Ok(())
    }
}

/// Re-linearizations (warps) per pyramid level; the iteration budget of a
/// level is split evenly across them.
const WARP_SUBSTEPS: usize = 3;

/// Coarsest pyramid level is not shrunk below this edge length.
const MIN_LEVEL_SIZE: usize = 16;

/// Estimates the dense flow that maps `reference` onto `target`: the
/// returned field `w` satisfies target(x + w(x)) ≈ reference(x). Both
/// images must be single-channel.
pub fn horn_schunck<T: Scalar>(
    reference: &Image<T>,
    target: &Image<T>,
    p: &HornSchunckParams,
) -> Result<FlowField<T>> {
    p.validate()?;
    if reference.channels() != 1 || target.channels() != 1 {
        return Err(Error::invalid("flow estimation requires single-channel images"));
    }
    if reference.height() != target.height() || reference.width() != target.width() {
        return Err(Error::invalid(format!(
            "image dimensions {}x{} vs {}x{}",
            reference.height(),
            reference.width(),
            target.height(),
            target.width()
        )));
    }

    let mut pyramid = vec![(reference.clone(), target.clone())];
    while pyramid.len() < p.pyramid_levels {
        let (r, t) = pyramid.last().unwrap();
        if r.height().min(r.width()) <= MIN_LEVEL_SIZE {
            break;
        }
        pyramid.push((
            filter::downsample_gray(r, p.pyramid_scale),
            filter::downsample_gray(t, p.pyramid_scale),
        ));
    }

    let coarsest = &pyramid.last().unwrap().0;
    let mut flow = FlowField::zeros(coarsest.height(), coarsest.width());
    for (r, t) in pyramid.iter().rev() {
        if flow.height() != r.height() || flow.width() != r.width() {
            flow = upsample_flow(&flow, r.height(), r.width());
        }
        refine_level(r, t, &mut flow, p);
    }
    Ok(flow)
}

/// Bilinear flow upsampling with displacement rescaling.
fn upsample_flow<T: Scalar>(flow: &FlowField<T>, nh: usize, nw: usize) -> FlowField<T> {
    let sr = nh as f64 / flow.height() as f64;
    let sc = nw as f64 / flow.width() as f64;
    let mut out = FlowField::zeros(nh, nw);
    for r in 0..nh {
        let fr = T::cast((r as f64 + 0.5) / sr - 0.5);
        for c in 0..nw {
            let fc = T::cast((c as f64 + 0.5) / sc - 0.5);
            out.set(
                r,
                c,
                [
                    flow.sample_component(fr, fc, 0) * T::cast(sr),
                    flow.sample_component(fr, fc, 1) * T::cast(sc),
                ],
            );
        }
    }
    out
}

/// One pyramid level: repeated warp substeps, each linearizing the data
/// term about the current flow and running Jacobi iterations on the full
/// field so the smoothness term regularizes the total displacement.
fn refine_level<T: Scalar>(reference: &Image<T>, target: &Image<T>, flow: &mut FlowField<T>, p: &HornSchunckParams) {
    let (h, w) = (reference.height(), reference.width());
    let n = h * w;
    let alpha = T::cast(p.smoothness);
    let iters = (p.iterations_per_level / WARP_SUBSTEPS).max(1);

    let (ref_dr, ref_dc) = central_diff(reference.data(), h, w);
    let mut u: Vec<T> = flow.data().iter().map(|d| d[0]).collect();
    let mut v: Vec<T> = flow.data().iter().map(|d| d[1]).collect();
    let mut warped = vec![T::zero(); n];
    let mut ix = vec![T::zero(); n];
    let mut iy = vec![T::zero(); n];
    let mut rho = vec![T::zero(); n];
    let mut ua = vec![T::zero(); n];
    let mut va = vec![T::zero(); n];

    let half = T::cast(0.5);
    for _ in 0..WARP_SUBSTEPS {
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                warped[i] = target.sample(T::cast(r as f64) + u[i], T::cast(c as f64) + v[i], 0);
            }
        }
        let (wdr, wdc) = central_diff(&warped, h, w);
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                // the data term applies only where the warp samples inside
                // the grid; elsewhere the smoothness term extends the field
                let pr = T::cast(r as f64) + u[i];
                let pc = T::cast(c as f64) + v[i];
                let inside = pr >= T::zero()
                    && pr <= T::cast((h - 1) as f64)
                    && pc >= T::zero()
                    && pc <= T::cast((w - 1) as f64);
                if inside {
                    ix[i] = half * (ref_dr[i] + wdr[i]);
                    iy[i] = half * (ref_dc[i] + wdc[i]);
                    rho[i] = warped[i] - reference.data()[i] - ix[i] * u[i] - iy[i] * v[i];
                } else {
                    ix[i] = T::zero();
                    iy[i] = T::zero();
                    rho[i] = T::zero();
                }
            }
        }
        for _ in 0..iters {
            neighbor_average(&u, h, w, &mut ua);
            neighbor_average(&v, h, w, &mut va);
            for i in 0..n {
                let t = (ix[i] * ua[i] + iy[i] * va[i] + rho[i]) / (alpha + ix[i] * ix[i] + iy[i] * iy[i]);
                u[i] = ua[i] - ix[i] * t;
                v[i] = va[i] - iy[i] * t;
            }
        }
    }
    for (d, (uu, vv)) in flow.data_mut().iter_mut().zip(u.iter().zip(v.iter())) {
        *d = [*uu, *vv];
    }
}

/// Central differences (one-sided at the borders): returns (d/d_row, d/d_col).
fn central_diff<T: Scalar>(img: &[T], h: usize, w: usize) -> (Vec<T>, Vec<T>) {
    let half = T::cast(0.5);
    let mut dr = vec![T::zero(); h * w];
    let mut dc = vec![T::zero(); h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            dr[i] = if r == 0 {
                img[w + c] - img[c]
            } else if r == h - 1 {
                img[i] - img[i - w]
            } else {
                half * (img[i + w] - img[i - w])
            };
            dc[i] = if c == 0 {
                img[i + 1] - img[i]
            } else if c == w - 1 {
                img[i] - img[i - 1]
            } else {
                half * (img[i + 1] - img[i - 1])
            };
        }
    }
    (dr, dc)
}

/// 8-neighbor weighted average with the [1/12, 1/6] corner/edge stencil,
/// replicate boundary.
fn neighbor_average<T: Scalar>(f: &[T], h: usize, w: usize, out: &mut [T]) {
    let edge = T::cast(1.0 / 6.0);
    let corner = T::cast(1.0 / 12.0);
    // interior: direct indexing
    for r in 1..h.saturating_sub(1) {
        let base = r * w;
        for c in 1..w - 1 {
            let i = base + c;
            let e = f[i - w] + f[i + w] + f[i - 1] + f[i + 1];
            let k = f[i - w - 1] + f[i - w + 1] + f[i + w - 1] + f[i + w + 1];
            out[i] = edge * e + corner * k;
        }
    }
    // borders: clamped indexing
    let clamp = |r: i64, c: i64| -> T {
        let rr = r.clamp(0, h as i64 - 1) as usize;
        let cc = c.clamp(0, w as i64 - 1) as usize;
        f[rr * w + cc]
    };
    let mut border = |r: usize, c: usize| {
        let (ri, ci) = (r as i64, c as i64);
        let e = clamp(ri - 1, ci) + clamp(ri + 1, ci) + clamp(ri, ci - 1) + clamp(ri, ci + 1);
        let k = clamp(ri - 1, ci - 1) + clamp(ri - 1, ci + 1) + clamp(ri + 1, ci - 1) + clamp(ri + 1, ci + 1);
        out[r * w + c] = edge * e + corner * k;
    };
    for c in 0..w {
        border(0, c);
        if h > 1 {
            border(h - 1, c);
        }
    }
    for r in 1..h.saturating_sub(1) {
        border(r, 0);
        if w > 1 {
            border(r, w - 1);
        }
    }
}
