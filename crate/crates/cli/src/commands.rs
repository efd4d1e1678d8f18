//! Implementations of the six subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use turbreg::deconv::{blind_deconv, DeconvConfig};
use turbreg::flow::{invert_flow as invert_flow_field, read_flo, write_flo, HornSchunckParams};
use turbreg::imgio::list_frames;
use turbreg::metrics::{psnr, ssim, SsimParams};
use turbreg::register::{build_template, build_template_low_memory, run_pipeline, PipelineConfig};
use turbreg::turbsim::{simulate_sequence, TurbulenceParams};
use turbreg::Image;

use crate::config::Overlay;
use crate::manifest::Manifest;
use crate::{
    CliError, CommonArgs, DeconvArgs, InvertFlowArgs, MetricsArgs, RegisterArgs, RunArgs,
    SimulateArgs,
};

/// Pixel type of the CLI lane. Single precision keeps templates exchanged
/// through PFM files bit-exact, so `run` equals `register` piped into
/// `deconv` exactly.
type Px = f32;

fn init(common: &CommonArgs) -> Result<Overlay, CliError> {
    let overlay = Overlay::load(common.config.as_deref())?;
    let threads = match common.threads {
        Some(n) => Some(n),
        None => overlay.get("threads")?,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(overlay)
}

fn load_frame_dir(dir: &Path) -> Result<Vec<Image<Px>>, CliError> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no image files in {}", dir.display())));
    }
    paths.iter().map(|p| Ok(Image::load(p)?)).collect()
}

fn default_manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.txt")
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = init(&args.common)?;
    let gt_path: PathBuf = cfg.resolve_required(args.gt, "gt")?;
    let frames: usize = cfg.resolve_required(args.frames, "frames")?;
    let out_dir: PathBuf = cfg.resolve_required(args.out, "out")?;
    let params = TurbulenceParams {
        amplitude: cfg.resolve(args.amp, "amp", 2.0)?,
        correlation_length: cfg.resolve(args.corr, "corr", 8.0)?,
        blur_sigma_mean: cfg.resolve(args.blur, "blur", 1.0)?,
        blur_sigma_jitter: cfg.resolve(args.blur_jitter, "blur_jitter", 0.0)?,
        noise_sigma: cfg.resolve(args.noise, "noise", 0.01)?,
        seed: cfg.resolve(args.seed, "seed", 0)?,
    };
    let save_flows = cfg.resolve_switch(args.save_flows, "save_flows")?;

    let mut manifest = Manifest::new("simulate");
    manifest.push_path("gt", &gt_path);
    manifest.push("frames", frames);
    manifest.push("amp", params.amplitude);
    manifest.push("corr", params.correlation_length);
    manifest.push("blur", params.blur_sigma_mean);
    manifest.push("blur_jitter", params.blur_sigma_jitter);
    manifest.push("noise", params.noise_sigma);
    manifest.push("seed", params.seed);
    manifest.push("save_flows", save_flows);
    manifest.push_path("out", &out_dir);

    let stage = Instant::now();
    let gt: Image<Px> = Image::load(&gt_path)?;
    manifest.push("height", gt.height());
    manifest.push("width", gt.width());
    manifest.push("channels", gt.channels());
    manifest.push_time("time_load_s", stage);

    let stage = Instant::now();
    let (images, flows) = simulate_sequence(&gt, frames, &params)?;
    manifest.push_time("time_simulate_s", stage);

    let stage = Instant::now();
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    for (t, frame) in images.iter().enumerate() {
        frame.save(out_dir.join(format!("frame_{t:04}.png")))?;
    }
    if save_flows {
        for (t, flow) in flows.iter().enumerate() {
            write_flo(flow, out_dir.join(format!("flow_{t:04}.flo")))?;
        }
    }
    manifest.push_time("time_write_s", stage);
    manifest.write(&out_dir.join("manifest.txt"))
}

pub fn register(args: RegisterArgs) -> Result<(), CliError> {
    let cfg = init(&args.common)?;
    let input: PathBuf = cfg.resolve_required(args.input, "input")?;
    let out: PathBuf = cfg.resolve_required(args.out, "out")?;
    let low_memory = cfg.resolve_switch(args.low_memory, "low_memory")?;
    let pipeline = PipelineConfig {
        keyframe_index: cfg.resolve(args.keyframe, "keyframe", 0)?,
        flow_params: flow_params(&cfg, args.smoothness, args.iterations, args.levels)?,
        low_memory,
        ..Default::default()
    };
    let flows_out: Option<PathBuf> = match args.save_flows {
        Some(p) => Some(p),
        None => cfg.get("save_flows")?,
    };
    if flows_out.is_some() && low_memory {
        return Err(CliError::Usage(
            "--save-flows needs the retained flows that --low-memory discards".to_string(),
        ));
    }

    let mut manifest = Manifest::new("register");
    manifest.push_path("input", &input);
    manifest.push_path("out", &out);
    manifest.push("keyframe", pipeline.keyframe_index);
    manifest.push("smoothness", pipeline.flow_params.smoothness);
    manifest.push("iterations", pipeline.flow_params.iterations_per_level);
    manifest.push("levels", pipeline.flow_params.pyramid_levels);
    manifest.push("low_memory", low_memory);

    let stage = Instant::now();
    let frames = load_frame_dir(&input)?;
    manifest.push("frame_count", frames.len());
    manifest.push("height", frames[0].height());
    manifest.push("width", frames[0].width());
    manifest.push("channels", frames[0].channels());
    manifest.push_time("time_load_s", stage);

    let stage = Instant::now();
    let template = if low_memory {
        build_template_low_memory(&frames, &pipeline)?
    } else {
        let result = build_template(&frames, &pipeline)?;
        if let Some(dir) = &flows_out {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
            for (t, flow) in result.per_frame_flows.iter().enumerate() {
                write_flo(flow, dir.join(format!("w_{t:04}.flo")))?;
            }
            write_flo(&result.mean_flow, dir.join("mean.flo"))?;
            write_flo(&result.inverse_mean_flow, dir.join("mean_inverse.flo"))?;
        }
        result.template
    };
    manifest.push_time("time_register_s", stage);

    let stage = Instant::now();
    template.save(&out)?;
    manifest.push_time("time_write_s", stage);
    let manifest_path = args.manifest.unwrap_or_else(|| default_manifest_path(&out));
    manifest.write(&manifest_path)
}

pub fn deconv(args: DeconvArgs) -> Result<(), CliError> {
    let cfg = init(&args.common)?;
    let input: PathBuf = cfg.resolve_required(args.input, "input")?;
    let out: PathBuf = cfg.resolve_required(args.out, "out")?;
    let dcfg = deconv_config(
        &cfg,
        args.alpha,
        args.iterations,
        args.step,
        args.epsilon,
        args.sigma_init,
        args.no_estimate_sigma,
        "iterations",
    )?;

    let mut manifest = Manifest::new("deconv");
    manifest.push_path("input", &input);
    manifest.push_path("out", &out);
    push_deconv_params(&mut manifest, &dcfg);

    let stage = Instant::now();
    let image: Image<Px> = Image::load(&input)?;
    manifest.push_time("time_load_s", stage);

    let stage = Instant::now();
    let result = blind_deconv(&image, &dcfg)?;
    manifest.push_time("time_deconv_s", stage);
    manifest.push("sigma_hat", result.sigma);
    manifest.push("iterations_run", result.iterations);
    manifest.push("converged_early", result.converged_early);
    manifest.push("objective", result.objective);

    let stage = Instant::now();
    result.image.save(&out)?;
    manifest.push_time("time_write_s", stage);
    let manifest_path = args.manifest.unwrap_or_else(|| default_manifest_path(&out));
    manifest.write(&manifest_path)
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let cfg = init(&args.common)?;
    let input: PathBuf = cfg.resolve_required(args.input, "input")?;
    let out: PathBuf = cfg.resolve_required(args.out, "out")?;
    let low_memory = cfg.resolve_switch(args.low_memory, "low_memory")?;
    let pipeline = PipelineConfig {
        keyframe_index: cfg.resolve(args.keyframe, "keyframe", 0)?,
        flow_params: flow_params(&cfg, args.smoothness, args.iterations, args.levels)?,
        deconv: deconv_config(
            &cfg,
            args.alpha,
            args.deconv_iterations,
            args.step,
            args.epsilon,
            args.sigma_init,
            args.no_estimate_sigma,
            "deconv_iterations",
        )?,
        outer_iterations: cfg.resolve(args.outer_iterations, "outer_iterations", 1)?,
        low_memory,
    };
    let template_out: Option<PathBuf> = match args.template_out {
        Some(p) => Some(p),
        None => cfg.get("template_out")?,
    };

    let mut manifest = Manifest::new("run");
    manifest.push_path("input", &input);
    manifest.push_path("out", &out);
    manifest.push("keyframe", pipeline.keyframe_index);
    manifest.push("smoothness", pipeline.flow_params.smoothness);
    manifest.push("iterations", pipeline.flow_params.iterations_per_level);
    manifest.push("levels", pipeline.flow_params.pyramid_levels);
    push_deconv_params(&mut manifest, &pipeline.deconv);
    manifest.push("outer_iterations", pipeline.outer_iterations);
    manifest.push("low_memory", low_memory);

    let stage = Instant::now();
    let frames = load_frame_dir(&input)?;
    manifest.push("frame_count", frames.len());
    manifest.push_time("time_load_s", stage);

    let restored = if pipeline.outer_iterations == 1 {
        // Single pass runs as the literal register-then-deconvolve
        // composition so both stages can be timed separately.
        let stage = Instant::now();
        let template = if low_memory {
            build_template_low_memory(&frames, &pipeline)?
        } else {
            build_template(&frames, &pipeline)?.template
        };
        manifest.push_time("time_register_s", stage);
        if let Some(p) = &template_out {
            template.save(p)?;
        }
        let stage = Instant::now();
        let result = blind_deconv(&template, &pipeline.deconv)?;
        manifest.push_time("time_deconv_s", stage);
        manifest.push("sigma_hat", result.sigma);
        manifest.push("iterations_run", result.iterations);
        result.image
    } else {
        if template_out.is_some() {
            return Err(CliError::Usage(
                "--template-out is only defined for --outer-iterations 1".to_string(),
            ));
        }
        let stage = Instant::now();
        let restored = run_pipeline(&frames, &pipeline)?;
        manifest.push_time("time_pipeline_s", stage);
        restored
    };

    let stage = Instant::now();
    restored.save(&out)?;
    manifest.push_time("time_write_s", stage);
    let manifest_path = args.manifest.unwrap_or_else(|| default_manifest_path(&out));
    manifest.write(&manifest_path)
}

pub fn metrics(args: MetricsArgs) -> Result<(), CliError> {
    let a: Image<Px> = Image::load(&args.a)?;
    let b: Image<Px> = Image::load(&args.b)?;
    let (a, b) = if args.peak == 1.0 {
        (a, b)
    } else {
        (scale_image(&a, args.peak), scale_image(&b, args.peak))
    };
    let p = psnr(&a, &b, args.peak)?;
    let s = ssim(&a, &b, &SsimParams { dynamic_range: args.peak, ..Default::default() })?;
    println!("PSNR: {p:.6} dB");
    println!("SSIM: {s:.6}");
    if let Some(path) = args.manifest {
        let mut manifest = Manifest::new("metrics");
        manifest.push_path("a", &args.a);
        manifest.push_path("b", &args.b);
        manifest.push("peak", args.peak);
        manifest.push("psnr_db", format!("{p:.6}"));
        manifest.push("ssim", format!("{s:.6}"));
        manifest.write(&path)?;
    }
    Ok(())
}

pub fn invert_flow(args: InvertFlowArgs) -> Result<(), CliError> {
    init(&args.common)?;
    let input: PathBuf = args
        .input
        .ok_or_else(|| CliError::Usage("missing required option --input".to_string()))?;
    let out: PathBuf =
        args.out.ok_or_else(|| CliError::Usage("missing required option --out".to_string()))?;
    let mut manifest = Manifest::new("invert-flow");
    manifest.push_path("input", &input);
    manifest.push_path("out", &out);
    let stage = Instant::now();
    let w = read_flo::<Px>(&input)?;
    manifest.push("height", w.height());
    manifest.push("width", w.width());
    let inv = invert_flow_field(&w)?;
    manifest.push_time("time_invert_s", stage);
    write_flo(&inv, &out)?;
    if let Some(path) = args.manifest {
        manifest.write(&path)?;
    }
    Ok(())
}

fn flow_params(
    cfg: &Overlay,
    smoothness: Option<f64>,
    iterations: Option<usize>,
    levels: Option<usize>,
) -> Result<HornSchunckParams, CliError> {
    let d = HornSchunckParams::default();
    Ok(HornSchunckParams {
        smoothness: cfg.resolve(smoothness, "smoothness", d.smoothness)?,
        iterations_per_level: cfg.resolve(iterations, "iterations", d.iterations_per_level)?,
        pyramid_levels: cfg.resolve(levels, "levels", d.pyramid_levels)?,
        pyramid_scale: d.pyramid_scale,
    })
}

#[allow(clippy::too_many_arguments)]
fn deconv_config(
    cfg: &Overlay,
    alpha: Option<f64>,
    iterations: Option<usize>,
    step: Option<f64>,
    epsilon: Option<f64>,
    sigma_init: Option<f64>,
    no_estimate_sigma: bool,
    iterations_key: &str,
) -> Result<DeconvConfig, CliError> {
    let d = DeconvConfig::default();
    Ok(DeconvConfig {
        alpha: cfg.resolve(alpha, "alpha", d.alpha)?,
        max_iterations: cfg.resolve(iterations, iterations_key, d.max_iterations)?,
        step_size: cfg.resolve(step, "step", d.step_size)?,
        tv_epsilon: cfg.resolve(epsilon, "epsilon", d.tv_epsilon)?,
        sigma_init: cfg.resolve(sigma_init, "sigma_init", d.sigma_init)?,
        estimate_sigma: !cfg.resolve_switch(no_estimate_sigma, "no_estimate_sigma")?,
    })
}

fn push_deconv_params(manifest: &mut Manifest, dcfg: &DeconvConfig) {
    manifest.push("alpha", dcfg.alpha);
    manifest.push("deconv_iterations", dcfg.max_iterations);
    manifest.push("step", dcfg.step_size);
    manifest.push("epsilon", dcfg.tv_epsilon);
    manifest.push("sigma_init", dcfg.sigma_init);
    manifest.push("estimate_sigma", dcfg.estimate_sigma);
}

fn scale_image(img: &Image<Px>, peak: f64) -> Image<Px> {
    let data = img.data().iter().map(|&v| v * peak as Px).collect();
    Image::from_vec(img.height(), img.width(), img.channels(), data)
        .expect("scaling keeps data finite")
}
