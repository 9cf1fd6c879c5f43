use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use splatforge::guidance::{MockGuidance, NoisePredictor, PriorBranch, RemoteGuidance};
use splatforge::init::{
    add_ground_plane, center_at_origin, grow_points, init_gaussians, nearest_neighbor_distances, random_colors,
};
use splatforge::io::{parse_ply, read_mesh, read_splat, save_splat};
use splatforge::optimizer::{render_for_guidance, Background, Trainer};
use splatforge::raster;
use splatforge::{Aabb, Camera, ColoredPointCloud, GaussianCloud};

use crate::config::{GuidanceKind, PipelineConfig, PriorSource};
use crate::fail::{Context, Failure};
use crate::{Common, InitArgs, RenderArgs, TrainArgs};

/// Offsets that keep the random streams of one command apart.
const COLOR_STREAM: u64 = 0x636f_6c6f;
const GROUND_STREAM: u64 = 0x6772_6e64;

fn load(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.grow.rng_seed = seed;
        cfg.train.rng_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(p) = &common.prompt {
        cfg.prompt = p.clone();
    }
    if let Some(url) = &common.guidance_url {
        cfg.guidance.url = Some(url.clone());
    }
    Ok(cfg)
}

fn remote(cfg: &PipelineConfig) -> Result<RemoteGuidance, Failure> {
    let url = cfg.guidance.url.as_deref().ok_or_else(|| {
        Failure::config(format!(
            "no guidance service configured; pass --guidance-url or set {}",
            splatforge::guidance::GUIDANCE_URL_ENV
        ))
    })?;
    let mut client = RemoteGuidance::new(url).with_mode(cfg.guidance.mode);
    client.attempts = cfg.guidance.attempts;
    Ok(client)
}

fn output_dir(cfg: &PipelineConfig) -> Result<&Path, Failure> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e.to_string()))?;
    fs::write(path, text + "\n").context(|| format!("writing {}", path.display()))
}

/// Prior positions and, when the source has them, colors.
type Prior = (Vec<[f32; 3]>, Option<Vec<[f32; 3]>>);

fn read_prior(path: &Path) -> Result<Prior, Failure> {
    let is_obj = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    if is_obj {
        let mesh = read_mesh(path).context(|| format!("reading prior {}", path.display()))?;
        return Ok((mesh.vertices, mesh.vertex_colors));
    }
    let bytes = fs::read(path).context(|| format!("reading prior {}", path.display()))?;
    let ply = parse_ply(&bytes).context(|| format!("parsing prior {}", path.display()))?;
    Ok(ply.points_maybe_colored()?)
}

#[derive(Serialize)]
struct Stats {
    min: f64,
    mean: f64,
    median: f64,
    max: f64,
}

impl Stats {
    fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self { min: v[0], mean: v.iter().sum::<f64>() / n as f64, median, max: v[n - 1] })
    }
}

pub fn init(args: InitArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.common)?;
    if let Some(p) = args.prior {
        cfg.prior.source = Some(PriorSource::File(p));
    }
    if args.remote_prior {
        cfg.prior.source = Some(PriorSource::Remote);
    }
    if args.motion_prompt.is_some() {
        cfg.motion_prompt = args.motion_prompt;
    }
    if args.motion || cfg.motion_prompt.is_some() {
        cfg.prior.branch = PriorBranch::TextToMotion;
    }
    cfg.prior.ground |= args.ground;
    if let Some(n) = args.candidates {
        cfg.grow.num_candidates = n;
    }

    let (source, (positions, colors)) = match &cfg.prior.source {
        None => return Err(Failure::config("no prior given; pass --prior FILE or --remote-prior")),
        Some(PriorSource::File(path)) => (path.display().to_string(), read_prior(path)?),
        Some(PriorSource::Remote) => {
            let client = remote(&cfg)?;
            let asset = client
                .generate_prior(cfg.prior_prompt(), cfg.prior.branch, cfg.grow.rng_seed)
                .context(|| format!("prior service at {}", client.base_url()))?;
            let (p, c) = parse_ply(&asset.ply).context(|| "prior returned by the service".to_string())?.points_maybe_colored()?;
            (client.base_url().to_string(), (p, c.filter(|_| asset.colors_present)))
        }
    };

    let seeds = match cfg.prior.branch {
        PriorBranch::TextToMotion => {
            let colored = random_colors(&positions, cfg.grow.rng_seed ^ COLOR_STREAM)?;
            center_at_origin(&colored)?.0
        }
        PriorBranch::TextTo3d => {
            let colors = colors.ok_or_else(|| {
                Failure::config(format!("prior {source} has no vertex colors; use --motion for uncolored priors"))
            })?;
            ColoredPointCloud::new(positions, colors)?
        }
    };

    let grown = grow_points(&seeds, &cfg.grow)?;
    let mut points = seeds.clone();
    points.positions.extend_from_slice(&grown.positions);
    points.colors.extend_from_slice(&grown.colors);
    let before_ground = points.len();
    if cfg.prior.ground {
        points = add_ground_plane(
            &points,
            cfg.prior.ground_density,
            cfg.prior.ground_margin,
            cfg.grow.rng_seed ^ GROUND_STREAM,
        )?;
    }
    let cloud = init_gaussians(&points)?;

    let dir = output_dir(&cfg)?;
    let ply = dir.join("init.ply");
    save_splat(&ply, &cloud).context(|| format!("writing {}", ply.display()))?;
    let nn = nearest_neighbor_distances(&points.positions);
    let report = json!({
        "prior": source,
        "branch": cfg.prior.branch,
        "seed_count": seeds.len(),
        "candidates": grown.candidates,
        "grown_count": grown.positions.len(),
        "ground_count": points.len() - before_ground,
        "gaussian_count": cloud.len(),
        "bbox": Aabb::of(&points.positions)?,
        "grow_bbox": grown.bbox,
        "nn_distance": Stats::of(&nn),
        "rng_seed": cfg.grow.rng_seed,
    });
    write_json(&dir.join("init_report.json"), &report)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

/// Eight evenly spaced orbit poses, used when mock guidance runs without
/// configured fixed views.
fn default_mock_views(cfg: &PipelineConfig) -> Vec<Camera> {
    let c = &cfg.train.camera;
    let radius = 0.5 * (c.radius[0] + c.radius[1]);
    let size = cfg.train.render_resolution;
    Camera::turntable(radius, 15.0, c.fov_y, size, 8)
}

fn mock_guidance(cfg: &mut PipelineConfig, initial: &GaussianCloud) -> Result<MockGuidance, Failure> {
    let target = match &cfg.guidance.mock_target {
        Some(path) => read_splat(path).context(|| format!("reading mock target {}", path.display()))?,
        None => initial.clone(),
    };
    if cfg.train.fixed_views.is_empty() {
        cfg.train.fixed_views = default_mock_views(cfg);
    }
    let background = match cfg.train.background {
        Background::Fixed(c) => c,
        Background::Random => {
            // Targets are rendered once, so they need a known background.
            eprintln!("note: mock guidance trains against a fixed white background");
            cfg.train.background = Background::Fixed([1.0; 3]);
            [1.0; 3]
        }
    };
    cfg.train.validate()?;
    let factor = cfg.train.downscale_factor();
    let size = cfg.train.render_resolution;
    let mut mock = MockGuidance::new(cfg.guidance.mock_strength);
    for view in &cfg.train.fixed_views {
        let view = view.with_size(size, size);
        mock.add_target(&view, render_for_guidance(&target, &view, background, factor)?);
    }
    Ok(mock)
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.common)?;
    if let Some(kind) = args.guidance {
        cfg.guidance.kind = kind;
    }
    if let Some(p) = args.mock_target {
        cfg.guidance.mock_target = Some(p);
    }
    if let Some(n) = args.iters {
        cfg.train.iterations = n;
    }
    if let Some(k) = args.checkpoint_every {
        cfg.train.checkpoint_every = k;
    }
    if cfg.train.prompt.is_empty() {
        cfg.train.prompt = cfg.prompt.clone();
    }
    let dir = output_dir(&cfg)?.to_path_buf();
    let init_path = args.init.unwrap_or_else(|| dir.join("init.ply"));
    let initial = read_splat(&init_path).context(|| format!("reading initial cloud {}", init_path.display()))?;

    let predictor: Box<dyn NoisePredictor> = match cfg.guidance.kind {
        GuidanceKind::Mock => Box::new(mock_guidance(&mut cfg, &initial)?),
        GuidanceKind::Remote => {
            let client = remote(&cfg)?;
            let health = client.health().context(|| format!("guidance service at {}", client.base_url()))?;
            eprintln!("guidance service {}: {} ({}, {})", client.base_url(), health.status, health.model_2d, health.model_3d);
            Box::new(client)
        }
    };

    let mut trainer = match &args.resume {
        Some(ckpt) => Trainer::resume(ckpt, cfg.train.clone()).context(|| format!("resuming from {}", ckpt.display()))?,
        None => Trainer::new(initial, cfg.train.clone())?,
    };
    let metrics_path = dir.join("metrics.ndjson");
    let metrics_file = if args.resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&metrics_path)
    } else {
        File::create(&metrics_path)
    }
    .context(|| format!("opening {}", metrics_path.display()))?;
    let mut metrics = BufWriter::new(metrics_file);
    let ckpt_dir = dir.join("checkpoints");
    let every = cfg.train.checkpoint_every;

    let result = trainer.run(predictor.as_ref(), |t, m| {
        serde_json::to_writer(&mut metrics, m).map_err(std::io::Error::from)?;
        metrics.write_all(b"\n")?;
        if every > 0 && t.iteration() % every == 0 && !t.is_done() {
            metrics.flush()?;
            t.save_checkpoint(&ckpt_dir)?;
        }
        Ok(())
    });
    metrics.flush().context(|| format!("writing {}", metrics_path.display()))?;
    result?;

    let final_path = dir.join("final.ply");
    save_splat(&final_path, trainer.cloud()).context(|| format!("writing {}", final_path.display()))?;
    eprintln!(
        "trained {} iterations ({} skipped); wrote {}",
        trainer.iteration(),
        trainer.skips(),
        final_path.display()
    );
    Ok(())
}

fn save_png(path: &Path, rgb8: &[u8], width: usize, height: usize) -> Result<(), Failure> {
    image::save_buffer(path, rgb8, width as u32, height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))
}

pub fn render(args: RenderArgs) -> Result<(), Failure> {
    let cloud = read_splat(&args.ply).context(|| format!("reading {}", args.ply.display()))?;
    let views = if args.turntable {
        Camera::turntable(args.radius, args.elevation, args.fov, args.size, args.views)
    } else {
        vec![Camera::orbit(args.radius, args.azimuth, args.elevation, args.fov, args.size)]
    };
    for v in &views {
        v.validate()?;
    }
    if views.is_empty() {
        return Err(Failure::config("--views must be at least 1"));
    }

    if args.bench {
        if args.frames == 0 {
            return Err(Failure::config("--frames must be at least 1"));
        }
        raster::render(&cloud, &views[0], args.background)?;
        let start = Instant::now();
        for _ in 0..args.frames {
            raster::render(&cloud, &views[0], args.background)?;
        }
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{} Gaussians at {}x{}: {:.2} frames/sec over {} renders",
            cloud.len(),
            args.size,
            args.size,
            args.frames as f64 / secs,
            args.frames
        );
        return Ok(());
    }

    fs::create_dir_all(&args.out).context(|| format!("creating {}", args.out.display()))?;
    for (i, v) in views.iter().enumerate() {
        let img = raster::render(&cloud, v, args.background)?;
        let stem: PathBuf = args.out.join(format!("view_{i:03}"));
        save_png(&stem.with_extension("png"), &img.to_rgb8(), img.width, img.height)?;
        if args.dump_buffers {
            let raw = stem.with_extension("raw");
            img.write_raw(&raw).context(|| format!("writing {}", raw.display()))?;
        }
    }
    eprintln!("wrote {} views to {}", views.len(), args.out.display());
    Ok(())
}

pub fn info(path: &Path) -> Result<(), Failure> {
    let bytes = fs::read(path).context(|| format!("reading {}", path.display()))?;
    let ply = parse_ply(&bytes).context(|| format!("parsing {}", path.display()))?;
    let elements: Vec<_> = ply.elements.iter().map(|(d, _)| json!({"name": d.name, "count": d.count})).collect();
    let mut out = json!({
        "file": path.display().to_string(),
        "bytes": bytes.len(),
        "format": format!("{:?}", ply.format),
        "elements": elements,
    });
    if let Ok(cloud) = ply.gaussian_cloud() {
        let act: Vec<_> = (0..cloud.len()).map(|i| cloud.activated(i)).collect();
        let opacity: Vec<f64> = act.iter().map(|a| a.opacity).collect();
        let scale: Vec<f64> = act.iter().map(|a| a.scale.iter().copied().fold(0.0, f64::max)).collect();
        out["gaussians"] = json!({
            "count": cloud.len(),
            "bbox": Aabb::of(&cloud.positions).ok(),
            "opacity": Stats::of(&opacity),
            "max_scale": Stats::of(&scale),
        });
    } else if let Ok((positions, colors)) = ply.points_maybe_colored() {
        out["points"] = json!({
            "count": positions.len(),
            "colored": colors.is_some(),
            "bbox": Aabb::of(&positions).ok(),
        });
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("info serializes"));
    Ok(())
}
