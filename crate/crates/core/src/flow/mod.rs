//! Displacement-field algebra: estimation, composition, averaging,
//! inversion, inpainting, and `.flo` file I/O.
//!
//! A flow `w` from frame A to frame B assigns each grid point `x` of A the
//! displacement such that `x + w(x)` is the corresponding location in B;
//! `warp_image(B, w)` pulls B back onto A's grid. Displacements are stored
//! as (d_row, d_col) pairs in pixel units.

mod flo;
mod horn_schunck;
mod invert;

pub use flo::{read_flo, write_flo};
pub use horn_schunck::{horn_schunck, HornSchunckParams};
pub use invert::{inpaint_flow, invert_flow, WeightMask};

use crate::error::{Error, Result};
use crate::float::Scalar;

/// H×W field of (d_row, d_col) displacements in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    height: usize,
    width: usize,
    data: Vec<[T; 2]>,
}

impl<T: Scalar> FlowField<T> {
    /// All-zero field.
    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField { height, width, data: vec![[T::zero(); 2]; height * width] }
    }

    /// Wraps raw row-major displacement pairs.
    pub fn from_vec(height: usize, width: usize, data: Vec<[T; 2]>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "flow data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|d| !d[0].is_finite() || !d[1].is_finite()) {
            return Err(Error::invalid("non-finite displacement"));
        }
        Ok(FlowField { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[[T; 2]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[T; 2]] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> [T; 2] {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, d: [T; 2]) {
        self.data[row * self.width + col] = d;
    }

    /// Bilinear sample of one displacement component at real (row, col),
    /// clamped to the grid.
    pub fn sample_component(&self, row: T, col: T, k: usize) -> T {
        let r = row.max(T::zero()).min(T::cast((self.height - 1) as f64));
        let c = col.max(T::zero()).min(T::cast((self.width - 1) as f64));
        let r0f = r.floor();
        let c0f = c.floor();
        let fr = r - r0f;
        let fc = c - c0f;
        let r0 = r0f.to_usize().unwrap();
        let c0 = c0f.to_usize().unwrap();
        let r1 = (r0 + 1).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let one = T::one();
        (one - fr) * (one - fc) * self.at(r0, c0)[k]
            + (one - fr) * fc * self.at(r0, c1)[k]
            + fr * (one - fc) * self.at(r1, c0)[k]
            + fr * fc * self.at(r1, c1)[k]
    }

    /// RMS displacement magnitude over the field, excluding a border of
    /// `margin` pixels on every side.
    pub fn rms_magnitude(&self, margin: usize) -> T {
        let mut acc = 0.0;
        let mut n = 0usize;
        for r in margin..self.height.saturating_sub(margin) {
            for c in margin..self.width.saturating_sub(margin) {
                let [dr, dc] = self.at(r, c);
                acc += dr.f64() * dr.f64() + dc.f64() * dc.f64();
                n += 1;
            }
        }
        if n == 0 {
            return T::zero();
        }
        T::cast((acc / n as f64).sqrt())
    }
}

/// Composition of two flows: `first` maps A→B, `second` maps B→C, and the
/// result maps A→C with result(x) = first(x) + second(x + first(x)).
pub fn compose_flow<T: Scalar>(first: &FlowField<T>, second: &FlowField<T>) -> Result<FlowField<T>> {
    if first.height != second.height || first.width != second.width {
        return Err(Error::invalid(format!(
            "flow dimensions {}x{} vs {}x{}",
            first.height, first.width, second.height, second.width
        )));
    }
    let mut out = FlowField::zeros(first.height, first.width);
    for r in 0..first.height {
        for c in 0..first.width {
            let [dr, dc] = first.at(r, c);
            let sr = T::cast(r as f64) + dr;
            let sc = T::cast(c as f64) + dc;
            let d2r = second.sample_component(sr, sc, 0);
            let d2c = second.sample_component(sr, sc, 1);
            out.set(r, c, [dr + d2r, dc + d2c]);
        }
    }
    Ok(out)
}

/// Pointwise arithmetic mean of displacement fields. Uses the corrected
/// two-pass mean so that averaging identical fields returns them exactly.
pub fn mean_flow<T: Scalar>(flows: &[FlowField<T>]) -> Result<FlowField<T>> {
    let first = flows.first().ok_or_else(|| Error::invalid("mean_flow of empty list"))?;
    let (h, w) = (first.height, first.width);
    if flows.iter().any(|f| f.height != h || f.width != w) {
        return Err(Error::invalid("mean_flow dimension mismatch"));
    }
    let n = flows.len() as f64;
    let mut acc = vec![[0.0f64; 2]; h * w];
    for f in flows {
        for (a, d) in acc.iter_mut().zip(f.data.iter()) {
            a[0] += d[0].f64();
            a[1] += d[1].f64();
        }
    }
    let mut mean: Vec<[f64; 2]> = acc.iter().map(|a| [a[0] / n, a[1] / n]).collect();
    // second pass: fold the mean of the residuals back in
    let mut res = vec![[0.0f64; 2]; h * w];
    for f in flows {
        for ((r, m), d) in res.iter_mut().zip(mean.iter()).zip(f.data.iter()) {
            r[0] += d[0].f64() - m[0];
            r[1] += d[1].f64() - m[1];
        }
    }
    for (m, r) in mean.iter_mut().zip(res.iter()) {
        m[0] += r[0] / n;
        m[1] += r[1] / n;
    }
    let data = mean.into_iter().map(|m| [T::cast(m[0]), T::cast(m[1])]).collect();
    FlowField::from_vec(h, w, data)
}

/// Mean Euclidean norm of the per-pixel displacement difference.
pub fn flow_endpoint_error<T: Scalar>(a: &FlowField<T>, b: &FlowField<T>) -> Result<T> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::invalid("flow dimension mismatch"));
    }
    let mut acc = 0.0;
    for (da, db) in a.data.iter().zip(b.data.iter()) {
        let dr = da[0].f64() - db[0].f64();
        let dc = da[1].f64() - db[1].f64();
        acc += (dr * dr + dc * dc).sqrt();
    }
    Ok(T::cast(acc / a.data.len() as f64))
}
