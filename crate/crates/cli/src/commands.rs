//! Subcommands. Each returns the JSON it prints.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use scenemem::cache::{read_depth, FrameId, SceneCache, DEFAULT_SUBSAMPLE, MANIFEST_FILE};
use scenemem::contextpack::{assemble_plan, latent_frame_count, parse_layout, DEFAULT_LAYOUT, DEFAULT_PATCH};
use scenemem::flowmatch::{flow_check, AugmentPolicy};
use scenemem::geometry::{Camera, CameraJson};
use scenemem::mesher::{extract_from_cache, write_obj, write_ply, MeshOutput, MeshParams};
use scenemem::report::{coverage_report, render_cache, simulate, SimulationSpec};
use scenemem::retrieval::{select_frames_greedy, RetrievalConfig};

use crate::api;
use crate::lock::CacheLock;
use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "scenemem", version, about = "Per-frame 3D scene memory tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct RetrievalArgs {
    /// Spatial memory slots.
    #[arg(long, default_value_t = 5)]
    pub n_s: usize,
    /// Occlusion threshold in normalized depth.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
}

impl RetrievalArgs {
    fn config(&self) -> RetrievalConfig {
        RetrievalConfig { n_s: self.n_s, delta: self.delta, ..Default::default() }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cache from LYD1 depth files and a camera list, or from a synthetic spec.
    Ingest {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, num_args = 1.., conflicts_with = "synthetic")]
        depth: Vec<PathBuf>,
        /// JSON array of cameras, one per depth file.
        #[arg(long, requires = "depth")]
        cameras: Option<PathBuf>,
        /// Simulation spec; every trajectory pose is rendered unless `ingest` is set.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SUBSAMPLE)]
        subsample: u32,
        /// Add frames to an existing cache.
        #[arg(long)]
        append: bool,
    },
    /// Visibility scores and greedy selection for a camera or trajectory.
    Retrieve {
        #[arg(long)]
        cache: PathBuf,
        /// Camera JSON, camera array or trajectory document.
        #[arg(long)]
        camera: PathBuf,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        /// Include the run-length covered-cell mask.
        #[arg(long)]
        per_cell: bool,
    },
    /// Forward-warp retrieved frames into a camera and write LYC1 maps.
    Warp {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        /// Frame ids in slot order; greedy retrieval when omitted.
        #[arg(long, value_delimiter = ',')]
        frames: Vec<FrameId>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble a context plan.
    Pack {
        #[arg(long, default_value = DEFAULT_LAYOUT)]
        layout: String,
        /// History length in video frames.
        #[arg(long)]
        history_frames: u64,
        #[arg(long, value_delimiter = ',')]
        retrieved: Vec<FrameId>,
        #[arg(long, default_value_t = 60)]
        h_lat: u32,
        #[arg(long, default_value_t = 104)]
        w_lat: u32,
        #[arg(long, default_value_t = DEFAULT_PATCH)]
        patch: u32,
    },
    /// Fuse the cache into a stitched multi-level mesh.
    Mesh {
        #[arg(long)]
        cache: PathBuf,
        /// Voxel size per level, finest first.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        /// Distance from the nearest camera below which the finest level applies.
        #[arg(long)]
        near: f64,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Target face count.
        #[arg(long)]
        decimate: Option<usize>,
        /// Output path; `.ply` writes binary PLY, anything else OBJ.
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded self-augmentation check against the exact velocity.
    Flowcheck {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0.7)]
        p_aug: f64,
        #[arg(long, default_value_t = 0.5)]
        t_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Latent block shape, `frames,channels,height,width`.
        #[arg(long, value_delimiter = ',', default_value = "1,4,6,8")]
        shape: Vec<usize>,
    },
    /// Render a synthetic scene, then run retrieval, warp and mesh end to end.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coverage table, per-step scores and revisit recall over a trajectory.
    Report {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        cache: PathBuf,
        /// Defaults to $SCENEMEM_BIND, then 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
        /// Allowed CORS origin; repeatable.
        #[arg(long)]
        cors: Vec<String>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_cache(dir: &Path) -> Result<SceneCache> {
    SceneCache::load(dir).with_context(|| format!("loading cache {}", dir.display()))
}

fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    api::parse_cameras(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

pub fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Ingest { out, depth, cameras, synthetic, subsample, append } => {
            ingest(&out, &depth, cameras.as_deref(), synthetic.as_deref(), subsample, append)
        }
        Command::Retrieve { cache, camera, retrieval, per_cell } => {
            let cache = load_cache(&cache)?;
            let cfg = retrieval.config();
            let out = load_cameras(&camera)?
                .iter()
                .map(|c| api::retrieve(&cache, c, &cfg, per_cell).map_err(Into::into).and_then(|r| to_value(&r)))
                .collect::<Result<Vec<_>>>()?;
            Ok(if out.len() == 1 { out.into_iter().next().unwrap() } else { Value::Array(out) })
        }
        Command::Warp { cache, camera, frames, retrieval, out } => {
            let cache = load_cache(&cache)?;
            let target = single_camera(&camera)?;
            warp_to_dir(&cache, &target, frames, &retrieval.config(), &out)
        }
        Command::Pack { layout, history_frames, retrieved, h_lat, w_lat, patch } => {
            let layout = parse_layout(&layout)?;
            let history = latent_frame_count(history_frames)?;
            to_value(&assemble_plan(history, &retrieved, &layout, h_lat, w_lat, patch)?)
        }
        Command::Mesh { cache, levels, near, stride, decimate, out } => {
            let cache = load_cache(&cache)?;
            let params = MeshParams { stride, decimate_to: decimate, ..MeshParams::new(levels, near) };
            let result = extract_from_cache(&cache, &params)?;
            write_mesh(&out, &result)?;
            to_value(&result)
        }
        Command::Flowcheck { trials, p_aug, t_max, seed, shape } => {
            let shape: [usize; 4] =
                shape.try_into().map_err(|s: Vec<usize>| anyhow!("shape needs 4 entries, got {}", s.len()))?;
            to_value(&flow_check(trials, &AugmentPolicy { p_aug, t_max, seed }, shape)?)
        }
        Command::Simulate { spec, out } => run_simulation(&spec, &out),
        Command::Report { cache, trajectory, retrieval } => {
            let cache = load_cache(&cache)?;
            let targets = load_cameras(&trajectory)?;
            to_value(&coverage_report(&cache, &targets, &retrieval.config())?)
        }
        Command::Serve { cache, bind, cors, retrieval } => {
            let mut config = ServiceConfig::new(cache);
            if let Some(b) = bind {
                config.bind = b;
            }
            config.cors = cors;
            config.n_s = retrieval.n_s;
            config.delta = retrieval.delta;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(config))?;
            Ok(Value::Null)
        }
    }
}

fn single_camera(path: &Path) -> Result<Camera> {
    let mut cams = load_cameras(path)?;
    if cams.len() != 1 {
        bail!("{} holds {} cameras, expected one", path.display(), cams.len());
    }
    Ok(cams.remove(0))
}

fn ingest(
    out: &Path,
    depth: &[PathBuf],
    cameras: Option<&Path>,
    synthetic: Option<&Path>,
    subsample: u32,
    append: bool,
) -> Result<Value> {
    let exists = out.join(MANIFEST_FILE).exists();
    if exists && !append {
        bail!("{} already holds a cache (pass --append to add frames)", out.display());
    }
    let _lock = CacheLock::acquire(out)?;
    let mut cache = if exists { load_cache(out)? } else { SceneCache::new(subsample)? };
    let before = cache.frame_count();

    if let Some(spec_path) = synthetic {
        let spec: SimulationSpec = serde_json::from_str(&read_text(spec_path)?)
            .with_context(|| format!("parsing {}", spec_path.display()))?;
        let spec = SimulationSpec { subsample_d: cache.subsample(), ..spec };
        let k = scenemem::geometry::Intrinsics::from_hfov(spec.camera.hfov_deg, spec.camera.width, spec.camera.height)?;
        let n = scenemem::synth::make_trajectory(&spec.trajectory, k)?.len();
        let (rendered, _) = render_cache(&spec, spec.ingest.unwrap_or(n))?;
        for f in rendered.frames() {
            cache.insert_frame((*f.depth).clone(), f.camera.pose, f.camera.intrinsics, None)?;
        }
    } else {
        if depth.is_empty() {
            bail!("nothing to ingest: pass --depth files with --cameras, or --synthetic");
        }
        let cam_path = cameras.ok_or_else(|| anyhow!("--depth needs --cameras"))?;
        let cams: Vec<CameraJson> = serde_json::from_str(&read_text(cam_path)?)
            .with_context(|| format!("parsing {} as a camera array", cam_path.display()))?;
        if cams.len() != depth.len() {
            let gap = if cams.len() < depth.len() {
                format!("no camera for {}", depth[cams.len()].display())
            } else {
                format!("camera {} has no depth file", depth.len())
            };
            bail!("{} depth files but {} cameras ({gap})", depth.len(), cams.len());
        }
        let mut problems = Vec::new();
        let mut frames = Vec::new();
        for (i, (path, cj)) in depth.iter().zip(&cams).enumerate() {
            let loaded = read_depth(path).map_err(|e| e.to_string()).and_then(|d| {
                let cam = Camera::try_from(cj).map_err(|e| format!("camera {i}: {e}"))?;
                if !d.matches(&cam.intrinsics) {
                    return Err(format!(
                        "depth is {}x{} but camera {i} is {}x{}",
                        d.width(),
                        d.height(),
                        cam.intrinsics.width,
                        cam.intrinsics.height
                    ));
                }
                Ok((d, cam))
            });
            match loaded {
                Ok(f) => frames.push(f),
                Err(e) => problems.push(format!("{}: {e}", path.display())),
            }
        }
        if !problems.is_empty() {
            bail!("{} of {} inputs failed:\n  {}", problems.len(), depth.len(), problems.join("\n  "));
        }
        for (d, cam) in frames {
            cache.insert_frame(d, cam.pose, cam.intrinsics, None)?;
        }
    }
    cache.save(out)?;
    Ok(json!({
        "cache": out,
        "frames": cache.frame_count(),
        "added": cache.frame_count() - before,
        "subsample_d": cache.subsample(),
        "points": cache.stored_points(),
    }))
}

fn warp_to_dir(cache: &SceneCache, target: &Camera, frames: Vec<FrameId>, cfg: &RetrievalConfig, out: &Path) -> Result<Value> {
    let frames = if frames.is_empty() { select_frames_greedy(cache, target, cfg)? } else { frames };
    let n_s = cfg.n_s.max(frames.len());
    let (maps, resp) = api::warp(cache, target, &frames, n_s)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::with_capacity(maps.len());
    for (j, m) in maps.iter().enumerate() {
        let p = out.join(format!("slot_{j}.lyc"));
        m.write(&p)?;
        files.push(json!({ "slot": j, "frame_id": frames.get(j), "valid": m.valid_count(), "path": p }));
    }
    Ok(json!({ "width": resp.width, "height": resp.height, "n_s": n_s, "maps": files }))
}

fn write_mesh(path: &Path, result: &MeshOutput) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")) {
        write_ply(path, &result.mesh)?;
    } else {
        write_obj(path, &result.mesh)?;
    }
    Ok(())
}

fn run_simulation(spec_path: &Path, out: &Path) -> Result<Value> {
    let spec: SimulationSpec =
        serde_json::from_str(&read_text(spec_path)?).with_context(|| format!("parsing {}", spec_path.display()))?;
    let sim = simulate(&spec)?;
    let cache_dir = out.join("cache");
    sim.cache.save(&cache_dir)?;
    let targets: Vec<CameraJson> = sim.targets.iter().map(CameraJson::from).collect();
    fs::write(out.join("targets.json"), serde_json::to_vec_pretty(&targets)?)?;

    let report = coverage_report(&sim.cache, &sim.targets, &spec.retrieval)?;
    let warp = warp_to_dir(&sim.cache, &sim.targets[0], vec![], &spec.retrieval, &out.join("warp"))?;
    let mesh = match &spec.mesh {
        Some(m) => {
            let params = MeshParams { decimate_to: m.decimate_to, ..MeshParams::new(m.levels.clone(), m.near_radius) };
            let result = extract_from_cache(&sim.cache, &params)?;
            write_mesh(&out.join("mesh.obj"), &result)?;
            to_value(&result)?
        }
        None => Value::Null,
    };
    let metrics = json!({ "report": report, "warp": warp, "mesh": mesh });
    fs::write(out.join("report.json"), serde_json::to_vec_pretty(&metrics)?)?;
    Ok(metrics)
}
