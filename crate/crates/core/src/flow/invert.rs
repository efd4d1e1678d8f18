//! Flow inversion by forward splatting, with harmonic inpainting of
//! uncovered pixels.

use crate::error::{Error, Result};
use crate::float::Scalar;
use crate::flow::FlowField;

/// Accumulated splat weights; a weight of exactly 0 marks a hole that
/// requires inpainting.
#[derive(Debug, Clone)]
pub struct WeightMask<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> WeightMask<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        WeightMask { height, width, data: vec![T::zero(); height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn is_hole(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == T::zero()
    }
}

/// Inverts a displacement field by splatting each negated displacement onto
/// the four integer neighbors of its endpoint, weighted by 2 minus the L1
/// distance; accumulated weights are normalized and uncovered pixels are
/// filled by [`inpaint_flow`]. Neighbors outside the grid are skipped.
/// Accumulation is sequential, so results are reproducible.
pub fn invert_flow<T: Scalar>(w: &FlowField<T>) -> Result<FlowField<T>> {
    let (h, wd) = (w.height(), w.width());
    let mut inv = FlowField::zeros(h, wd);
    let mut alpha = WeightMask::zeros(h, wd);
    let two = T::cast(2.0);
    for i in 0..h {
        for j in 0..wd {
            let [dr, dc] = w.at(i, j);
            if !dr.is_finite() || !dc.is_finite() {
                return Err(Error::invalid("non-finite displacement"));
            }
            let er = T::cast(i as f64) + dr;
            let ec = T::cast(j as f64) + dc;
            let r0 = er.floor().f64() as i64;
            let c0 = ec.floor().f64() as i64;
            for (ri, ci) in [(r0, c0), (r0 + 1, c0), (r0, c0 + 1), (r0 + 1, c0 + 1)] {
                if ri < 0 || ci < 0 || ri >= h as i64 || ci >= wd as i64 {
                    continue;
                }
                let l1 = (er - T::cast(ri as f64)).abs() + (ec - T::cast(ci as f64)).abs();
                let weight = two - l1;
                let (ru, cu) = (ri as usize, ci as usize);
                let mut d = inv.at(ru, cu);
                d[0] = d[0] - weight * dr;
                d[1] = d[1] - weight * dc;
                inv.set(ru, cu, d);
                alpha.data[ru * wd + cu] += weight;
            }
        }
    }
    for r in 0..h {
        for c in 0..wd {
            let a = alpha.at(r, c);
            if a != T::zero() {
                let mut d = inv.at(r, c);
                d[0] = d[0] / a;
                d[1] = d[1] / a;
                inv.set(r, c, d);
            }
        }
    }
    if alpha.data.iter().any(|&a| a == T::zero()) {
        inv = inpaint_flow(&inv, &alpha)?;
    }
    Ok(inv)
}

/// Fills hole pixels (mask weight 0) by iterative 4-neighbor harmonic
/// diffusion: Gauss-Seidel sweeps in row-major order until the largest
/// update falls below 1e-4 px or 500 sweeps have run. Non-hole pixels are
/// returned unchanged.
pub fn inpaint_flow<T: Scalar>(w: &FlowField<T>, mask: &WeightMask<T>) -> Result<FlowField<T>> {
    let (h, wd) = (w.height(), w.width());
    if mask.height() != h || mask.width() != wd {
        return Err(Error::invalid("mask dimensions do not match flow"));
    }
    if mask.data.iter().all(|&a| a == T::zero()) {
        return Err(Error::invalid("all-zero weight mask: nothing anchors the interpolation"));
    }
    let holes: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..wd).map(move |c| (r, c)))
        .filter(|&(r, c)| mask.is_hole(r, c))
        .collect();
    if holes.is_empty() {
        return Ok(w.clone());
    }
    let mut out = w.clone();
    let tol = T::cast(1e-4);
    for _ in 0..500 {
        let mut max_update = T::zero();
        for &(r, c) in &holes {
            let mut acc = [T::zero(); 2];
            let mut n = 0usize;
            if r > 0 {
                let d = out.at(r - 1, c);
                acc[0] += d[0];
                acc[1] += d[1];
                n += 1;
            }
            if r + 1 < h {
                let d = out.at(r + 1, c);
                acc[0] += d[0];
                acc[1] += d[1];
                n += 1;
            }
            if c > 0 {
                let d = out.at(r, c - 1);
                acc[0] += d[0];
                acc[1] += d[1];
                n += 1;
            }
            if c + 1 < wd {
                let d = out.at(r, c + 1);
                acc[0] += d[0];
                acc[1] += d[1];
                n += 1;
            }
            let nn = T::cast(n as f64);
            let new = [acc[0] / nn, acc[1] / nn];
            let old = out.at(r, c);
            let upd = (new[0] - old[0]).abs().max((new[1] - old[1]).abs());
            if upd > max_update {
                max_update = upd;
            }
            out.set(r, c, new);
        }
        if max_update < tol {
            break;
        }
    }
    Ok(out)
}
