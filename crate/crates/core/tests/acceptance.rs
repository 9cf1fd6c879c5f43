//! Acceptance suite. Prints one line per criterion and exits non-zero if a
//! hard criterion fails. Criterion 8 is a soft, reported threshold.

mod common;

use std::time::Instant;

use common::{gradient_check, random_camera, random_cloud, rng};
use rand::Rng;
use splatforge::guidance::{MockGuidance, TimestepSchedule, Weighting};
use splatforge::init::kdtree::{brute_force_nearest, dist2, KdTree};
use splatforge::init::{
    draw_candidates, grow_and_perturb, grow_points, init_gaussians, GrowConfig, INITIAL_OPACITY,
};
use splatforge::math::{rgb_to_dc, sigmoid};
use splatforge::optimizer::{
    iteration_rng, render_for_guidance, sample_camera, Background, IterationMetrics, TrainConfig,
};
use splatforge::raster::{reference_render, render};
use splatforge::{Aabb, Camera, ColoredPointCloud, GaussianCloud};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_tiled_vs_reference(partition_worst: &mut f64) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(10_000 + seed);
        let n = r.random_range(50..=1000);
        let cloud = random_cloud(&mut r, n, 0.8, (0.01, 0.2));
        let cam = random_camera(&mut r, 64);
        let bg: [f64; 3] = std::array::from_fn(|_| r.random());
        let a = render(&cloud, &cam, bg).unwrap();
        let b = reference_render(&cloud, &cam, bg).unwrap();
        for (x, y) in a.rgb.iter().zip(&b.rgb) {
            worst = worst.max((x - y).abs());
        }
        for img in [&a, &b] {
            for (w, t) in img.weight_sum.iter().zip(&img.final_transmittance) {
                *partition_worst = partition_worst.max((w + t - 1.0).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-5 && secs < 60.0,
        format!("100 scenes, max |tiled - reference| = {worst:.3e} (tol 1e-5), {secs:.1} s (limit 60 s)"),
    )
}

fn c2_gradients() -> Outcome {
    let start = Instant::now();
    let (mut total, mut bad, mut reordered) = (0usize, 0usize, 0usize);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let check = gradient_check(20_000 + seed, 50, 32);
        total += check.errors.len();
        bad += check.errors.iter().filter(|e| **e > 1e-3).count();
        worst = check.errors.iter().cloned().fold(worst, f64::max);
        reordered += check.reordered;
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = 1.0 - bad as f64 / total as f64;
    outcome(
        frac >= 0.95 && worst <= 1e-2 && secs < 300.0,
        format!(
            "20 scenes x 50 Gaussians, {total} coords: {:.2}% within 1e-3, worst rel err {worst:.2e} (limit 1e-2), \
             {reordered} coords excluded for depth reordering, {secs:.1} s",
            100.0 * frac
        ),
    )
}

fn sphere_points(n: usize, radius: f64) -> Vec<[f32; 3]> {
    // Fibonacci lattice.
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [(radius * r * phi.cos()) as f32, (radius * r * phi.sin()) as f32, (radius * z) as f32]
        })
        .collect()
}

fn c3_growing() -> Outcome {
    let mut failures = Vec::new();
    let mut r = rng(30_000);
    let positions: Vec<[f32; 3]> =
        (0..2000).map(|_| std::array::from_fn(|_| r.random_range(-0.5f32..0.5))).collect();
    let colors: Vec<[f32; 3]> = (0..2000).map(|_| std::array::from_fn(|_| r.random_range(0.0f32..1.0))).collect();
    let seeds = ColoredPointCloud::new(positions, colors).unwrap();
    let cfg = GrowConfig { num_candidates: 200_000, rng_seed: 5, ..Default::default() };
    let grown = grow_points(&seeds, &cfg).unwrap();

    let max_dist = grown
        .positions
        .iter()
        .map(|p| brute_force_nearest(&seeds.positions, p.map(f64::from), usize::MAX).unwrap().dist2.sqrt())
        .fold(0.0f64, f64::max);
    if !(max_dist < 0.01) {
        failures.push(format!("kept distance {max_dist}"));
    }
    let offsets_ok = grown.offsets.iter().flatten().all(|o| (0.0..=0.2).contains(o));
    if !offsets_ok {
        failures.push("offset outside [0, 0.2]".into());
    }
    // Brute-force filter over the same candidates.
    let bbox = Aabb::of(&seeds.positions).unwrap();
    let expected_kept = draw_candidates(&bbox, &cfg)
        .iter()
        .filter(|(p, _)| {
            seeds.positions.iter().any(|s| dist2(s.map(f64::from), p.map(f64::from)) < 0.01 * 0.01)
        })
        .count();
    if expected_kept != grown.positions.len() {
        failures.push(format!("kept {} vs brute force {expected_kept}", grown.positions.len()));
    }
    let merged = grow_and_perturb(&seeds, &cfg).unwrap();
    let concat_ok = merged.positions[..seeds.len()] == seeds.positions[..]
        && merged.colors[..seeds.len()] == seeds.colors[..]
        && merged.positions[seeds.len()..] == grown.positions[..]
        && merged.colors[seeds.len()..] == grown.colors[..];
    if !concat_ok {
        failures.push("output is not seeds followed by grown points".into());
    }

    let tree_pts: Vec<[f32; 3]> = (0..1000).map(|_| std::array::from_fn(|_| r.random_range(-1.0f32..1.0))).collect();
    let tree = KdTree::build(&tree_pts);
    let kd_mismatch = (0..1000)
        .filter(|_| {
            let q: [f64; 3] = std::array::from_fn(|_| r.random_range(-1.2..1.2));
            tree.nearest(q) != brute_force_nearest(&tree_pts, q, usize::MAX)
        })
        .count();
    if kd_mismatch > 0 {
        failures.push(format!("{kd_mismatch} KD-tree mismatches"));
    }

    let g = init_gaussians(&merged).unwrap();
    let opacity_err = g.opacities_raw.iter().map(|o| (sigmoid(f64::from(*o)) - INITIAL_OPACITY).abs()).fold(0.0, f64::max);
    if opacity_err > 1e-6 {
        failures.push(format!("opacity off by {opacity_err}"));
    }
    let sample: Vec<usize> = (0..500).map(|_| r.random_range(0..merged.len())).collect();
    let scale_err = sample
        .iter()
        .map(|&i| {
            let nn = brute_force_nearest(&merged.positions, merged.positions[i].map(f64::from), i).unwrap();
            g.scales_raw[i].iter().map(|s| (f64::from(*s).exp() - nn.dist2.sqrt()).abs()).fold(0.0, f64::max)
        })
        .fold(0.0f64, f64::max);
    if scale_err > 1e-6 {
        failures.push(format!("scale off by {scale_err}"));
    }
    let detail = format!(
        "{} grown of 200000, max kept dist {max_dist:.5}, KD mismatches {kd_mismatch}/1000, \
         opacity err {opacity_err:.1e}, scale err {scale_err:.1e}{}",
        grown.positions.len(),
        if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
    );
    outcome(failures.is_empty(), detail)
}

fn eight_views(size: usize) -> Vec<Camera> {
    (0..8)
        .map(|i| Camera::orbit(2.5, -180.0 + 45.0 * i as f64, if i % 2 == 0 { 10.0 } else { 35.0 }, 49.0, size))
        .collect()
}

fn mock_targets(cloud: &GaussianCloud, views: &[Camera], bg: [f64; 3], factor: usize) -> MockGuidance {
    let mut mock = MockGuidance::new(1.0);
    for v in views {
        mock.add_target(v, render_for_guidance(cloud, v, bg, factor).unwrap());
    }
    mock
}

fn c5_fixed_point() -> Outcome {
    let mut r = rng(50_000);
    let cloud = random_cloud(&mut r, 300, 0.6, (0.03, 0.15));
    let views = eight_views(64);
    let bg = [0.2, 0.3, 0.4];
    let mock = mock_targets(&cloud, &views, bg, 1);
    let config = TrainConfig {
        iterations: 50,
        render_resolution: 64,
        guidance_resolution: 64,
        fixed_views: views,
        background: Background::Fixed(bg),
        ..Default::default()
    };
    let out = splatforge::optimizer::train(cloud.clone(), &mock, config, |_, _| Ok(())).unwrap();
    let drift = flatten(&out).iter().zip(flatten(&cloud)).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    outcome(drift < 1e-4, format!("300 Gaussians, 50 iterations, ||delta theta||_inf = {drift:.3e} (tol 1e-4)"))
}

fn flatten(c: &GaussianCloud) -> Vec<f32> {
    let mut v = Vec::new();
    v.extend(c.positions.iter().flatten());
    v.extend(c.colors_dc.iter().flatten());
    v.extend(&c.opacities_raw);
    v.extend(c.scales_raw.iter().flatten());
    v.extend(c.rotations.iter().flatten());
    v
}

fn psnr(cloud: &GaussianCloud, mock: &MockGuidance, views: &[Camera], bg: [f64; 3]) -> f64 {
    let (mut se, mut n) = (0.0, 0usize);
    for v in views {
        let x = render_for_guidance(cloud, v, bg, 1).unwrap();
        for (a, b) in x.iter().zip(mock.target(v).unwrap()) {
            se += (a - b) * (a - b);
        }
        n += x.len();
    }
    10.0 * (n as f64 / se).log10()
}

/// Smooth longitude/latitude bands.
fn sphere_texture(p: [f32; 3]) -> [f32; 3] {
    let [x, y, z] = p.map(f64::from);
    let lon = y.atan2(x);
    let lat = z.clamp(-1.0, 1.0).asin();
    [
        0.5 + 0.4 * (3.0 * lon).sin(),
        0.5 + 0.4 * (4.0 * lat).cos(),
        0.5 + 0.4 * (2.0 * lon + 3.0 * lat).sin(),
    ]
    .map(|v| v as f32)
}

fn c6_end_to_end() -> Outcome {
    let start = Instant::now();
    let bg = [1.0, 1.0, 1.0];
    let views = eight_views(128);

    let truth_pts = sphere_points(8000, 1.0);
    let mut truth = init_gaussians(
        &ColoredPointCloud::new(truth_pts.clone(), truth_pts.iter().map(|p| sphere_texture(*p)).collect()).unwrap(),
    )
    .unwrap();
    truth.opacities_raw.iter_mut().for_each(|o| *o = 3.0);
    let mock = mock_targets(&truth, &views, bg, 1);

    // Coarse prior: a sparse sphere in one flat color, grown and perturbed.
    let seeds_pts = sphere_points(600, 1.0);
    let seeds = ColoredPointCloud::new(seeds_pts, vec![[0.5, 0.5, 0.5]; 600]).unwrap();
    let grow = GrowConfig { num_candidates: 900_000, keep_distance: 0.05, rng_seed: 1, ..Default::default() };
    let mut pts = grow_and_perturb(&seeds, &grow).unwrap();
    pts.positions.truncate(5000);
    pts.colors.truncate(5000);
    let init = init_gaussians(&pts).unwrap();

    let before = psnr(&init, &mock, &views, bg);
    let config = TrainConfig {
        iterations: 500,
        render_resolution: 128,
        guidance_resolution: 128,
        fixed_views: views.clone(),
        background: Background::Fixed(bg),
        weighting: Weighting::Unit,
        learning_rates: splatforge::optimizer::LearningRates { position: 1e-4, ..Default::default() },
        ..Default::default()
    };
    let out = splatforge::optimizer::train(init.clone(), &mock, config, |_, _| Ok(())).unwrap();
    let after = psnr(&out, &mock, &views, bg);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        after - before >= 10.0 && secs <= 300.0,
        format!(
            "{} Gaussians, 500 iterations at 128x128 on {} core(s): PSNR {before:.2} -> {after:.2} dB (+{:.2}, need +10), \
             {secs:.1} s (limit 300 s)",
            init.len(),
            rayon::current_num_threads(),
            after - before
        ),
    )
}

fn ks_uniform(mut samples: Vec<f64>, lo: f64, hi: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn c7_schedule() -> Outcome {
    let ts = TimestepSchedule::default();
    let mut failures = Vec::new();
    let mut r = iteration_rng(70_000, 0);
    let early: Vec<f64> = (0..10_000).map(|_| ts.sample(0, &mut r)).collect();
    let late: Vec<f64> = (0..10_000).map(|_| ts.sample(500, &mut r)).collect();
    let range_ok = early.iter().all(|t| (0.02..=0.98).contains(t)) && late.iter().all(|t| (0.02..=0.55).contains(t));
    let (ks_early, ks_late) = (ks_uniform(early, 0.02, 0.98), ks_uniform(late, 0.02, 0.55));
    if !(range_ok && ks_early < 0.02 && ks_late < 0.02) {
        failures.push("timestep phases");
    }
    let c = TrainConfig::default();
    let lr = &c.learning_rates;
    if [lr.opacity, lr.position, lr.color, lr.scaling, lr.rotation] != [1e-2, 5e-5, 1.25e-2, 1e-3, 1e-2] {
        failures.push("learning rates");
    }
    if (c.iterations, c.batch_size, c.guidance_scale) != (1200, 4, 100.0) {
        failures.push("iterations/batch/guidance scale");
    }
    let cams: Vec<Camera> = (0..10_000).map(|_| sample_camera(&mut r, &c.camera, 64)).collect();
    let cams_ok = cams.iter().all(|c| {
        (1.5..=4.0).contains(&c.radius) && (-180.0..=180.0).contains(&c.azimuth) && (-10.0..=60.0).contains(&c.elevation)
    });
    if !cams_ok || c.camera.radius != [1.5, 4.0] || c.camera.elevation != [-10.0, 60.0] {
        failures.push("camera ranges");
    }
    outcome(
        failures.is_empty(),
        format!(
            "KS early {ks_early:.4}, late {ks_late:.4} (tol 0.02); rates, 1200/4/100 and camera ranges {}",
            if failures.is_empty() { "match".to_string() } else { format!("FAILED: {}", failures.join(", ")) }
        ),
    )
}

fn c8_benchmark() -> Outcome {
    let mut r = rng(80_000);
    let n = 100_000;
    let positions = sphere_points(n, 1.0)
        .into_iter()
        .map(|p| p.map(|v| v * r.random_range(0.7f32..1.0)))
        .collect::<Vec<_>>();
    let cloud = GaussianCloud {
        colors_dc: (0..n).map(|_| std::array::from_fn(|_| rgb_to_dc(r.random_range(0.1..0.9)) as f32)).collect(),
        opacities_raw: vec![0.0; n],
        scales_raw: (0..n).map(|_| [r.random_range(0.005f32..0.02).ln(); 3]).collect(),
        rotations: (0..n).map(|_| std::array::from_fn(|_| r.random_range(-1.0f32..1.0))).collect(),
        positions,
    };
    let cam = Camera::orbit(3.0, 30.0, 20.0, 49.0, 512);
    render(&cloud, &cam, [1.0; 3]).unwrap();
    let frames = 10;
    let start = Instant::now();
    for i in 0..frames {
        let cam = Camera::orbit(3.0, 30.0 + 36.0 * i as f64, 20.0, 49.0, 512);
        render(&cloud, &cam, [1.0; 3]).unwrap();
    }
    let fps = frames as f64 / start.elapsed().as_secs_f64();
    outcome(
        fps >= 5.0,
        format!(
            "100k Gaussians at 512x512: {fps:.2} fps over {frames} frames on {} thread(s) (soft target 5 fps on 8 cores)",
            rayon::current_num_threads()
        ),
    )
}

fn c9_determinism() -> Outcome {
    let mut r = rng(90_000);
    let cloud = random_cloud(&mut r, 200, 0.6, (0.03, 0.15));
    let truth = random_cloud(&mut r, 200, 0.6, (0.03, 0.15));
    let views = eight_views(64);
    let mock = mock_targets(&truth, &views, [0.5; 3], 2);
    let config = TrainConfig {
        iterations: 100,
        render_resolution: 64,
        guidance_resolution: 32,
        fixed_views: views,
        background: Background::Random,
        rng_seed: 9,
        ..Default::default()
    };
    let run = || {
        let mut log: Vec<IterationMetrics> = Vec::new();
        let out = splatforge::optimizer::train(cloud.clone(), &mock, config.clone(), |_, m| {
            log.push(IterationMetrics { ms: 0.0, ..m.clone() });
            Ok(())
        })
        .unwrap();
        (flatten(&out).iter().map(|v| v.to_bits()).collect::<Vec<_>>(), log)
    };
    let (a, la) = run();
    let (b, lb) = run();
    let moved = a != flatten(&cloud).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    outcome(
        a == b && la == lb && moved,
        format!("two 100-iteration runs: parameters bit-identical {}, metrics identical {}", a == b, la == lb),
    )
}

fn main() {
    let mut partition_worst = 0.0;
    let mut hard_failures = 0;
    let mut report = |id: usize, name: &str, soft: bool, o: Outcome| {
        let status = match (o.pass, soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (soft)",
        };
        println!("criterion {id} [{status}] {name}: {}", o.detail);
        if !o.pass && !soft {
            hard_failures += 1;
        }
    };
    let c1 = c1_tiled_vs_reference(&mut partition_worst);
    report(1, "compositing oracle", false, c1);
    report(2, "gradient correctness", false, c2_gradients());
    report(3, "point growing properties", false, c3_growing());
    report(
        4,
        "partition of unity",
        false,
        outcome(
            partition_worst <= 1e-6,
            format!("max |sum weights + T - 1| = {partition_worst:.2e} over criterion-1 scenes, both paths (tol 1e-6)"),
        ),
    );
    report(5, "distillation fixed point", false, c5_fixed_point());
    report(6, "end-to-end descent", false, c6_end_to_end());
    report(7, "schedule and config constants", false, c7_schedule());
    report(8, "render benchmark", true, c8_benchmark());
    report(9, "determinism", false, c9_determinism());
    if hard_failures > 0 {
        println!("{hard_failures} hard criteria failed");
        std::process::exit(1);
    }
}
