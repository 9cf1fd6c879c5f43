//! End-to-end runs of the `splatforge` binary.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatforge::init::{draw_candidates, GrowConfig};
use splatforge::io::{read_splat, save_point_cloud, save_splat, PlyFormat};
use splatforge::math::{logit, rgb_to_dc};
use splatforge::raster::render;
use splatforge::{Aabb, Camera, ColoredPointCloud, GaussianCloud};
use tempfile::TempDir;

fn splatforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatforge"))
        .args(args)
        .env_remove(splatforge::guidance::GUIDANCE_URL_ENV)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = splatforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    splatforge(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_cube_obj(path: &Path) {
    let mut text = String::new();
    for i in 0..8 {
        let (x, y, z) = (i & 1, (i >> 1) & 1, i >> 2);
        text += &format!("v {x} {y} {z} {} {} {}\n", x as f32 * 0.9, y as f32 * 0.5, z as f32 * 0.2);
    }
    for f in ["1 2 4 3", "5 7 8 6", "1 5 6 2", "3 4 8 7", "1 3 7 5", "2 6 8 4"] {
        text += &format!("f {f}\n");
    }
    std::fs::write(path, text).unwrap();
}

fn sphere_points(n: usize, seed: u64) -> ColoredPointCloud {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::new();
    while positions.len() < n {
        let p: [f32; 3] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let norm = p.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm > 0.1 && norm <= 1.0 {
            positions.push(p.map(|v| 0.5 * v / norm));
        }
    }
    let colors = positions.iter().map(|p| p.map(|v| v + 0.5)).collect();
    ColoredPointCloud::new(positions, colors).unwrap()
}

fn random_splats(n: usize, seed: u64) -> GaussianCloud {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = GaussianCloud::default();
    for _ in 0..n {
        cloud.positions.push(std::array::from_fn(|_| r.random_range(-0.5..0.5)));
        cloud.colors_dc.push(std::array::from_fn(|_| rgb_to_dc(r.random()) as f32));
        cloud.opacities_raw.push(logit(r.random_range(0.3..0.9)) as f32);
        cloud.scales_raw.push([r.random_range(0.05f32..0.15).ln(); 3]);
        cloud.rotations.push([1.0, 0.0, 0.0, 0.0]);
    }
    cloud
}

/// A small mock-guidance training setup: initial cloud, target cloud and a
/// config rendering at 32x32.
fn training_setup(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let init = dir.join("start.ply");
    let target = dir.join("target.ply");
    save_splat(&init, &random_splats(40, 1)).unwrap();
    save_splat(&target, &random_splats(40, 2)).unwrap();
    let config = dir.join("config.json");
    let body = serde_json::json!({
        "prompt": "a test object",
        "train": {
            "iterations": 10,
            "batch_size": 2,
            "render_resolution": 32,
            "guidance_resolution": 32,
            "learning_rates": {"position": 1e-3},
            "weighting": "unit",
        },
        "guidance": {"kind": "mock"},
    });
    std::fs::write(&config, body.to_string()).unwrap();
    (init, target, config)
}

#[test]
fn cube_without_growing_gives_eight_gaussians() {
    let dir = TempDir::new().unwrap();
    let obj = dir.path().join("cube.obj");
    write_cube_obj(&obj);
    let out = dir.path().join("out");
    ok(&["init", "--prior", s(&obj), "--candidates", "0", "--out", s(&out)]);
    let cloud = read_splat(&out.join("init.ply")).unwrap();
    assert_eq!(cloud.len(), 8);
    for i in 0..8 {
        assert!((cloud.activated(i).opacity - 0.1).abs() < 1e-6);
    }
    let report = json(&out.join("init_report.json"));
    assert_eq!(report["seed_count"], 8);
    assert_eq!(report["grown_count"], 0);
    assert_eq!(report["gaussian_count"], 8);
    assert_eq!(report["bbox"]["max_bound"], serde_json::json!([1.0, 1.0, 1.0]));
    assert_eq!(report["nn_distance"]["min"], 1.0);
}

#[test]
fn init_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let prior = dir.path().join("prior.ply");
    save_point_cloud(&prior, &sphere_points(300, 3), PlyFormat::BinaryLittleEndian).unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["init", "--prior", s(&prior), "--candidates", "20000", "--seed", seed, "--out", s(&out)]);
        std::fs::read(out.join("init.ply")).unwrap()
    };
    let a = run("a", "7");
    assert_eq!(a, run("b", "7"));
    assert_ne!(a, run("c", "8"));
}

#[test]
fn grown_count_matches_brute_force() {
    let dir = TempDir::new().unwrap();
    let seeds = sphere_points(200, 4);
    let prior = dir.path().join("prior.ply");
    save_point_cloud(&prior, &seeds, PlyFormat::Ascii).unwrap();
    let out = dir.path().join("out");
    ok(&["init", "--prior", s(&prior), "--candidates", "30000", "--seed", "11", "--out", s(&out)]);

    // The prior went through an ASCII round trip, so compare against what
    // the binary actually read.
    let seeds = splatforge::io::read_point_cloud(&prior).unwrap();
    let cfg = GrowConfig { num_candidates: 30000, rng_seed: 11, ..GrowConfig::default() };
    let bbox = Aabb::of(&seeds.positions).unwrap();
    let expected = draw_candidates(&bbox, &cfg)
        .iter()
        .filter(|(c, _)| {
            seeds.positions.iter().any(|p| {
                let d2: f64 = (0..3).map(|k| (f64::from(c[k]) - f64::from(p[k])).powi(2)).sum();
                d2 < cfg.keep_distance * cfg.keep_distance
            })
        })
        .count();
    let report = json(&out.join("init_report.json"));
    assert!(expected > 0);
    assert_eq!(report["grown_count"], expected);
    assert_eq!(report["gaussian_count"], 200 + expected);
}

#[test]
fn motion_branch_centers_and_colors_uncolored_priors() {
    let dir = TempDir::new().unwrap();
    let obj = dir.path().join("body.obj");
    let verts: String = (0..50).map(|i| format!("v {} {} {}\n", 3.0 + (i % 5) as f32 * 0.1, (i / 5) as f32 * 0.1, 1.0)).collect();
    std::fs::write(&obj, verts).unwrap();
    let out = dir.path().join("out");

    assert_eq!(code(&["init", "--prior", s(&obj), "--candidates", "0", "--out", s(&out)]), 2);

    ok(&[
        "init", "--prior", s(&obj), "--candidates", "0", "--motion-prompt", "someone waves", "--out", s(&out),
    ]);
    let report = json(&out.join("init_report.json"));
    assert_eq!(report["branch"], "text-to-motion");
    let cloud = read_splat(&out.join("init.ply")).unwrap();
    for k in 0..3 {
        let mean: f64 = cloud.positions.iter().map(|p| f64::from(p[k])).sum::<f64>() / cloud.len() as f64;
        assert!(mean.abs() < 1e-5, "axis {k} mean {mean}");
    }
    let distinct: std::collections::HashSet<_> = cloud.colors_dc.iter().map(|c| c.map(f32::to_bits)).collect();
    assert!(distinct.len() > 40);
}

#[test]
fn ground_layer_sits_at_the_bottom() {
    let dir = TempDir::new().unwrap();
    let obj = dir.path().join("cube.obj");
    write_cube_obj(&obj);
    let out = dir.path().join("out");
    ok(&["init", "--prior", s(&obj), "--candidates", "0", "--ground", "--out", s(&out)]);
    let report = json(&out.join("init_report.json"));
    let ground = report["ground_count"].as_u64().unwrap() as usize;
    assert!(ground > 1000);
    let cloud = read_splat(&out.join("init.ply")).unwrap();
    assert_eq!(cloud.len(), 8 + ground);
    assert!(cloud.positions[8..].iter().all(|p| p[2] == 0.0));
}

#[test]
fn remote_prior_is_fetched_and_grown() {
    let seeds = sphere_points(100, 5);
    let mut ply = Vec::new();
    splatforge::io::write_point_cloud(&mut ply, &seeds, PlyFormat::BinaryLittleEndian).unwrap();
    let reply = serde_json::json!({
        "ply": base64::engine::general_purpose::STANDARD.encode(&ply),
        "colors_present": true,
    });
    let (url, requests) = serve(vec![(200, reply.to_string())]);
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    ok(&[
        "init", "--remote-prior", "--prompt", "a teapot", "--guidance-url", &url, "--candidates", "1000", "--out", s(&out),
    ]);
    let (path, body) = requests.recv().unwrap();
    assert_eq!(path, "/v1/generate_prior");
    let body: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["prompt"], "a teapot");
    assert_eq!(body["branch"], "text-to-3d");
    assert_eq!(json(&out.join("init_report.json"))["seed_count"], 100);
}

#[test]
fn unreachable_prior_service_is_a_service_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"guidance": {"attempts": 1}}"#).unwrap();
    let out = splatforge(&[
        "init", "--config", s(&config), "--remote-prior", "--guidance-url", "http://127.0.0.1:1",
        "--out", s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("http://127.0.0.1:1"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"train": {"iterations": "many"}}"#).unwrap();
    assert_eq!(code(&["init", "--config", s(&bad)]), 2);
    assert_eq!(code(&["init", "--out", s(&dir.path().join("out"))]), 2);
    assert_eq!(code(&["render", "x.ply", "--background", "2,0,0"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    let (init, _, config) = training_setup(dir.path());
    let zero_batch = dir.path().join("zero.json");
    let mut body = json(&config);
    body["train"]["batch_size"] = 0.into();
    std::fs::write(&zero_batch, body.to_string()).unwrap();
    assert_eq!(code(&["train", "--config", s(&zero_batch), "--init", s(&init), "--out", s(dir.path())]), 2);
    assert_eq!(code(&["train", "--init", s(&init), "--out", s(dir.path())]), 2, "remote without a URL");
}

#[test]
fn missing_ply_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let (_, _, config) = training_setup(dir.path());
    let missing = dir.path().join("nope.ply");
    let out = splatforge(&["train", "--config", s(&config), "--init", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ply"));
    assert_eq!(code(&["info", s(&missing)]), 3);
}

#[test]
fn malformed_ply_reports_byte_offset() {
    let dir = TempDir::new().unwrap();
    let mut bytes = splatforge::io::ply::splat_to_bytes(&random_splats(5, 3)).unwrap();
    bytes.truncate(bytes.len() - 7);
    let path = dir.path().join("short.ply");
    std::fs::write(&path, bytes).unwrap();
    let out = splatforge(&["render", s(&path), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}

#[test]
fn mock_training_writes_one_metrics_record_per_iteration() {
    let dir = TempDir::new().unwrap();
    let (init, target, config) = training_setup(dir.path());
    let out = dir.path().join("out");
    ok(&[
        "train", "--config", s(&config), "--init", s(&init), "--mock-target", s(&target), "--iters", "10",
        "--out", s(&out),
    ]);
    let log = std::fs::read_to_string(out.join("metrics.ndjson")).unwrap();
    let records: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 10);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["iter"], i);
        assert_eq!(r["skipped"], false);
    }
    let start = read_splat(&init).unwrap();
    let end = read_splat(&out.join("final.ply")).unwrap();
    assert_eq!(end.len(), start.len());
    assert_ne!(end, start);
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    let (init, target, config) = training_setup(dir.path());
    let full = dir.path().join("full");
    ok(&[
        "train", "--config", s(&config), "--init", s(&init), "--mock-target", s(&target), "--seed", "5",
        "--checkpoint-every", "4", "--out", s(&full),
    ]);
    let ckpt = full.join("checkpoints").join("ckpt_000004.json");
    assert!(ckpt.exists());
    assert!(full.join("checkpoints").join("ckpt_000008.json").exists());

    let resumed = dir.path().join("resumed");
    ok(&[
        "train", "--config", s(&config), "--init", s(&init), "--mock-target", s(&target), "--seed", "5",
        "--resume", s(&ckpt), "--out", s(&resumed),
    ]);
    let log = std::fs::read_to_string(resumed.join("metrics.ndjson")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["iter"], 4);
    assert_eq!(log.lines().count(), 6);
    assert_eq!(std::fs::read(full.join("final.ply")).unwrap(), std::fs::read(resumed.join("final.ply")).unwrap());

    let other_seed = splatforge(&[
        "train", "--config", s(&config), "--init", s(&init), "--mock-target", s(&target), "--seed", "6",
        "--resume", s(&ckpt), "--out", s(&dir.path().join("x")),
    ]);
    assert_eq!(other_seed.status.code(), Some(2));
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (init, target, config) = training_setup(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "train", "--config", s(&config), "--init", s(&init), "--mock-target", s(&target), "--iters", "4",
            "--out", s(&out),
        ]);
        std::fs::read(out.join("final.ply")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

/// Answers the health probe, then fails every prediction.
fn failing_service() -> String {
    let mut replies = vec![(200, r#"{"status": "ok", "model_2d": "m2", "model_3d": "m3"}"#.to_string())];
    replies.extend((0..10).map(|_| (500, r#"{"error": "out of memory"}"#.to_string())));
    serve(replies).0
}

#[test]
fn persistent_guidance_failure_aborts_with_five() {
    let dir = TempDir::new().unwrap();
    let (init, _, config) = training_setup(dir.path());
    let mut body = json(&config);
    body["guidance"] = serde_json::json!({"kind": "remote", "attempts": 1});
    std::fs::write(&config, body.to_string()).unwrap();
    let url = failing_service();
    let out = splatforge(&[
        "train", "--config", s(&config), "--init", s(&init), "--guidance-url", &url, "--iters", "5",
        "--out", s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of memory"));
}

#[test]
fn turntable_writes_120_views() {
    let dir = TempDir::new().unwrap();
    let ply = dir.path().join("c.ply");
    save_splat(&ply, &random_splats(20, 9)).unwrap();
    let out = dir.path().join("frames");
    ok(&["render", s(&ply), "--turntable", "--size", "8", "--out", s(&out)]);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 120);
    assert_eq!(names[0], "view_000.png");
    assert_eq!(names[119], "view_119.png");
}

#[test]
fn rendered_png_matches_in_memory_render() {
    let dir = TempDir::new().unwrap();
    let cloud = random_splats(30, 10);
    let ply = dir.path().join("c.ply");
    save_splat(&ply, &cloud).unwrap();
    let out = dir.path().join("frames");
    ok(&[
        "render", s(&ply), "--size", "24", "--azimuth", "-30", "--elevation", "20", "--background", "0,0.5,1",
        "--dump-buffers", "--out", s(&out),
    ]);

    let cam = Camera::orbit(3.0, -30.0, 20.0, 49.0, 24);
    let memory = render(&cloud, &cam, [0.0, 0.5, 1.0]).unwrap();
    let reloaded = render(&read_splat(&ply).unwrap(), &cam, [0.0, 0.5, 1.0]).unwrap();
    assert_eq!(memory.rgb, reloaded.rgb);

    let png = image::open(out.join("view_000.png")).unwrap().to_rgb8();
    assert_eq!(png.as_raw(), &memory.to_rgb8());
    let raw = std::fs::read(out.join("view_000.raw")).unwrap();
    assert_eq!(raw.len(), 24 * 24 * (3 * 4 + 4 + 4));
    let first = f32::from_le_bytes(raw[..4].try_into().unwrap());
    assert_eq!(first, memory.rgb[0] as f32);
}

#[test]
fn bench_reports_frames_per_second() {
    let dir = TempDir::new().unwrap();
    let ply = dir.path().join("c.ply");
    save_splat(&ply, &random_splats(50, 11)).unwrap();
    let out = ok(&["render", s(&ply), "--bench", "--frames", "5", "--size", "64"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("frames/sec over 5 renders"), "{text}");
}

#[test]
fn info_describes_splats_and_point_clouds() {
    let dir = TempDir::new().unwrap();
    let ply = dir.path().join("c.ply");
    save_splat(&ply, &random_splats(12, 12)).unwrap();
    let out = ok(&["info", s(&ply)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["gaussians"]["count"], 12);
    assert!(v["gaussians"]["opacity"]["min"].as_f64().unwrap() >= 0.3 - 1e-6);

    let pc = dir.path().join("p.ply");
    save_point_cloud(&pc, &sphere_points(30, 1), PlyFormat::Ascii).unwrap();
    let out = ok(&["info", s(&pc)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["points"]["count"], 30);
    assert_eq!(v["points"]["colored"], true);
}

/// Serves one scripted `(status, body)` reply per connection and reports
/// each request's path and body.
fn serve(replies: Vec<(u16, String)>) -> (String, std::sync::mpsc::Receiver<(String, Vec<u8>)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = std::sync::mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let mut length = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut req = vec![0; length];
            reader.read_exact(&mut req).unwrap();
            let _ = tx.send((path, req));
            let mut out = stream;
            let _ = write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, rx)
}
