//! Template construction and full-pipeline orchestration. Every frame is
//! registered toward the latent stable scene without an explicit reference:
//! flows are estimated from the keyframe to each frame, their mean is
//! inverted and composed with each per-frame flow, and the frames are
//! backward-warped by the composed fields and averaged. The template is then
//! blind-deconvolved.

use rayon::prelude::*;

use crate::deconv::{blind_deconv, convolve, make_kernel, DeconvConfig};
use crate::error::{Error, Result};
use crate::float::Scalar;
use crate::flow::{
    compose_flow, horn_schunck, invert_flow, mean_flow, FlowField, HornSchunckParams,
};
use crate::imgio::{warp_image, Image};

/// Settings for [`build_template`] and [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Frame whose luminance serves as the flow reference.
    pub keyframe_index: usize,
    pub flow_params: HornSchunckParams,
    pub deconv: DeconvConfig,
    /// Number of register+deconvolve passes; later passes use the restored
    /// image as the flow reference. Must be at least 1.
    pub outer_iterations: usize,
    /// Trade memory for compute: per-frame flows are recomputed instead of
    /// retained, and intermediate frame lists are never materialized.
    pub low_memory: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            keyframe_index: 0,
            flow_params: HornSchunckParams::default(),
            deconv: DeconvConfig::default(),
            outer_iterations: 1,
            low_memory: false,
        }
    }
}

impl PipelineConfig {
    fn validate(&self, frame_count: usize) -> Result<()> {
        if frame_count == 0 {
            return Err(Error::invalid("at least one frame is required"));
        }
        if self.keyframe_index >= frame_count {
            return Err(Error::invalid(format!(
                "keyframe index {} out of range for {} frames",
                self.keyframe_index, frame_count
            )));
        }
        if self.outer_iterations == 0 {
            return Err(Error::invalid("outer_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Everything produced while registering a sequence.
#[derive(Debug, Clone)]
pub struct RegistrationResult<T> {
    /// Pointwise mean of `registered_frames`.
    pub template: Image<T>,
    /// Keyframe-to-frame flows; the keyframe's own entry is the zero field.
    pub per_frame_flows: Vec<FlowField<T>>,
    pub mean_flow: FlowField<T>,
    pub inverse_mean_flow: FlowField<T>,
    /// Each frame backward-warped by compose(inverse mean, its flow).
    pub registered_frames: Vec<Image<T>>,
}

fn check_frames<T: Scalar>(frames: &[Image<T>]) -> Result<()> {
    let first = match frames.first() {
        Some(f) => f,
        None => return Err(Error::invalid("at least one frame is required")),
    };
    for f in frames {
        if f.height() != first.height()
            || f.width() != first.width()
            || f.channels() != first.channels()
        {
            return Err(Error::invalid("frames must share dimensions and channel count"));
        }
    }
    Ok(())
}

/// Corrected two-pass pointwise mean, fixed accumulation order.
fn mean_images<T: Scalar>(images: &[Image<T>]) -> Image<T> {
    let first = &images[0];
    let n = images.len() as f64;
    let len = first.data().len();
    let mut acc = vec![0.0f64; len];
    for im in images {
        for (a, v) in acc.iter_mut().zip(im.data()) {
            *a += v.f64();
        }
    }
    for a in &mut acc {
        *a /= n;
    }
    let mut res = vec![0.0f64; len];
    for im in images {
        for ((r, m), v) in res.iter_mut().zip(&acc).zip(im.data()) {
            *r += v.f64() - m;
        }
    }
    let data = acc
        .iter()
        .zip(res)
        .map(|(m, r)| T::cast(m + r / n))
        .collect();
    Image::from_vec(first.height(), first.width(), first.channels(), data)
        .expect("mean of finite images is finite")
}

/// Keyframe-to-frame flows in frame order. `zero_index` marks a frame whose
/// flow is the zero field by definition rather than estimated.
fn flows_from_reference<T: Scalar>(
    reference: &Image<T>,
    grays: &[Image<T>],
    params: &HornSchunckParams,
    zero_index: Option<usize>,
) -> Result<Vec<FlowField<T>>> {
    grays
        .par_iter()
        .enumerate()
        .map(|(t, g)| {
            if zero_index == Some(t) {
                Ok(FlowField::zeros(g.height(), g.width()))
            } else {
                horn_schunck(reference, g, params)
            }
        })
        .collect()
}

fn register_with_reference<T: Scalar>(
    frames: &[Image<T>],
    reference: &Image<T>,
    params: &HornSchunckParams,
    zero_index: Option<usize>,
) -> Result<RegistrationResult<T>> {
    let grays: Vec<Image<T>> = frames.par_iter().map(|f| f.to_gray()).collect();
    let flows = flows_from_reference(reference, &grays, params, zero_index)?;
    let wbar = mean_flow(&flows)?;
    let winv = invert_flow(&wbar)?;
    let registered: Vec<Image<T>> = frames
        .par_iter()
        .zip(&flows)
        .map(|(frame, flow)| {
            let hat = compose_flow(&winv, flow)?;
            warp_image(frame, &hat)
        })
        .collect::<Result<_>>()?;
    let template = mean_images(&registered);
    Ok(RegistrationResult {
        template,
        per_frame_flows: flows,
        mean_flow: wbar,
        inverse_mean_flow: winv,
        registered_frames: registered,
    })
}

/// Streaming variant holding O(1) flow fields: flows are estimated twice
/// (once for the mean, once for warping) in fixed-size batches, and only
/// running sums are kept. Batches preserve frame order, so the result does
/// not depend on the thread count.
fn template_with_reference_low_memory<T: Scalar>(
    frames: &[Image<T>],
    reference: &Image<T>,
    params: &HornSchunckParams,
    zero_index: Option<usize>,
) -> Result<Image<T>> {
    const BATCH: usize = 8;
    let first = &frames[0];
    let (h, w, ch) = (first.height(), first.width(), first.channels());
    let t_count = frames.len();

    let mut flow_acc = vec![[0.0f64; 2]; h * w];
    for batch_start in (0..t_count).step_by(BATCH) {
        let end = (batch_start + BATCH).min(t_count);
        let grays: Vec<Image<T>> = frames[batch_start..end]
            .par_iter()
            .map(|f| f.to_gray())
            .collect();
        let flows = flows_from_reference(
            reference,
            &grays,
            params,
            zero_index.and_then(|z| z.checked_sub(batch_start).filter(|i| *i < end - batch_start)),
        )?;
        for flow in &flows {
            for (a, d) in flow_acc.iter_mut().zip(flow.data()) {
                a[0] += d[0].f64();
                a[1] += d[1].f64();
            }
        }
    }
    let n = t_count as f64;
    let mean: Vec<[T; 2]> = flow_acc
        .iter()
        .map(|a| [T::cast(a[0] / n), T::cast(a[1] / n)])
        .collect();
    let wbar = FlowField::from_vec(h, w, mean)?;
    let winv = invert_flow(&wbar)?;

    let mut img_acc = vec![0.0f64; h * w * ch];
    for batch_start in (0..t_count).step_by(BATCH) {
        let end = (batch_start + BATCH).min(t_count);
        let registered: Vec<Image<T>> = frames[batch_start..end]
            .par_iter()
            .enumerate()
            .map(|(i, frame)| {
                let t = batch_start + i;
                let flow = if zero_index == Some(t) {
                    FlowField::zeros(h, w)
                } else {
                    horn_schunck(reference, &frame.to_gray(), params)?
                };
                let hat = compose_flow(&winv, &flow)?;
                warp_image(frame, &hat)
            })
            .collect::<Result<_>>()?;
        for im in &registered {
            for (a, v) in img_acc.iter_mut().zip(im.data()) {
                *a += v.f64();
            }
        }
    }
    let data = img_acc.into_iter().map(|a| T::cast(a / n)).collect();
    Image::from_vec(h, w, ch, data)
}

/// Registers the sequence against the keyframe and assembles the template.
pub fn build_template<T: Scalar>(
    frames: &[Image<T>],
    cfg: &PipelineConfig,
) -> Result<RegistrationResult<T>> {
    check_frames(frames)?;
    cfg.validate(frames.len())?;
    let reference = frames[cfg.keyframe_index].to_gray();
    register_with_reference(frames, &reference, &cfg.flow_params, Some(cfg.keyframe_index))
}

/// [`build_template`] without retaining per-frame state; returns only the
/// template. Matches the in-memory path within accumulation rounding.
pub fn build_template_low_memory<T: Scalar>(
    frames: &[Image<T>],
    cfg: &PipelineConfig,
) -> Result<Image<T>> {
    check_frames(frames)?;
    cfg.validate(frames.len())?;
    let reference = frames[cfg.keyframe_index].to_gray();
    template_with_reference_low_memory(
        frames,
        &reference,
        &cfg.flow_params,
        Some(cfg.keyframe_index),
    )
}

/// Full restoration: register, average, deconvolve; optionally repeat with
/// the restored image as the new flow reference.
///
/// Later passes re-blur the restored reference by the width estimated in
/// the previous pass before estimating flows. The frames still carry that
/// blur, and flow estimation against a sharper image than the frames
/// systematically misplaces edges; matching the blur restores brightness
/// constancy while the registration target stays the restored geometry.
pub fn run_pipeline<T: Scalar>(frames: &[Image<T>], cfg: &PipelineConfig) -> Result<Image<T>> {
    check_frames(frames)?;
    cfg.validate(frames.len())?;
    let mut restored: Option<(Image<T>, f64)> = None;
    for _ in 0..cfg.outer_iterations {
        let (reference, zero_index) = match &restored {
            None => (frames[cfg.keyframe_index].to_gray(), Some(cfg.keyframe_index)),
            Some((r, sigma)) => {
                let radius = ((3.0 * sigma).ceil() as usize).max(1);
                let kernel = make_kernel(*sigma, [0.0, 0.0], radius)?;
                (convolve(&r.to_gray(), &kernel), None)
            }
        };
        let template = if cfg.low_memory {
            template_with_reference_low_memory(frames, &reference, &cfg.flow_params, zero_index)?
        } else {
            register_with_reference(frames, &reference, &cfg.flow_params, zero_index)?.template
        };
        let result = blind_deconv(&template, &cfg.deconv)?;
        restored = Some((result.image, result.sigma));
    }
    Ok(restored.expect("outer_iterations is at least 1").0)
}
