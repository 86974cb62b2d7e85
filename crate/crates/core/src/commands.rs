//! Subcommand implementations behind the `eventsr` binary.
//!
//! Each command reads `key = value` config files plus overrides, writes a
//! frozen copy of its effective settings next to its outputs and returns
//! what it produced so callers can chain commands without re-reading.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::events::io::load_evt1;
use crate::imageio::{load_png, save_png, BitDepth};
use crate::metrics::{evaluate, recon_file_name, EvalReport, RECON_DIR};
use crate::networks::{forward_generator_rd, forward_generator_s};
use crate::sim::scene::MovingScene;
use crate::sim::{build_dataset, AssetKind, DatasetConfig, DatasetManifest, Role, VideoSequence};
use crate::tensor::{DType, Tensor};
use crate::trainer::{
    clean_aps, generator_name, load_event_stacks, load_manifest, load_train_data,
    stacks_from_stream, train_phase_with, Checkpoint, LossRecord, PhaseConfig, StackItem,
    CONFIG_KEYS,
};

/// Keys accepted by `simulate`.
pub const SIMULATE_KEYS: &[&str] = &[
    "role",
    "scale",
    "seed",
    "contrast_threshold",
    "log_eps",
    "refractory_us",
    "threshold_sigma",
    "blur_sigma",
    "noise_sigma",
    "dt_us",
];

/// Keys accepted by `stack`.
pub const STACK_KEYS: &[&str] = &["events_per_frame", "frames_per_stack"];

/// Keys accepted by `reconstruct` and `superresolve`; the rest comes from the checkpoint.
pub const INFER_KEYS: &[&str] = &["events_per_frame"];

/// Frame spacing assumed for video directories without timestamps.
pub const DEFAULT_DT_US: u64 = 10_000;

/// One invocation: config file, overrides, output directory and seed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSpec {
    pub command: String,
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl RunSpec {
    pub fn new(command: &str, out: impl Into<PathBuf>) -> Self {
        Self {
            command: command.into(),
            out: out.into(),
            ..Self::default()
        }
    }

    pub fn with_set(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.push((key.into(), value.to_string()));
        self
    }

    /// Config file pairs, then overrides, then the seed; every key must be in `keys`.
    pub fn pairs(&self, keys: &[&str]) -> Result<Vec<(String, String)>> {
        let mut out = match &self.config {
            Some(p) => split_pairs(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => Vec::new(),
        };
        out.extend(self.overrides.iter().cloned());
        if let Some(s) = self.seed {
            out.push(("seed".into(), s.to_string()));
        }
        if let Some((k, _)) = out.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "unknown config key {k:?} for {}",
                self.command
            )));
        }
        Ok(out)
    }
}

/// `key = value` lines without key checks; blank lines and `#` comments skipped.
fn split_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("expected key=value, got {l:?}")))
        })
        .collect()
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    split_pairs(s)?
        .pop()
        .ok_or_else(|| Error::Config(format!("expected key=value, got {s:?}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(d: &Path) -> Result<()> {
    fs::create_dir_all(d).map_err(|e| Error::io(d, e))
}

fn frozen(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Writes frames as `frame_t<us>.png` (16-bit).
pub fn save_video(video: &VideoSequence, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for (f, t) in video.frames().iter().zip(video.timestamps()) {
        save_png(
            f,
            &dir.join(format!("frame_t{t:010}.png")),
            BitDepth::Sixteen,
        )?;
    }
    Ok(())
}

/// Timestamp from a trailing `t<digits>` in a file stem.
fn stem_timestamp(p: &Path) -> Option<u64> {
    let stem = p.file_stem()?.to_str()?;
    let digits = stem.rsplit_once('t')?.1;
    (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

/// Reads every PNG of `dir` in filename order. Timestamps come from
/// `..t<us>.png` names when every frame has one, else `index * dt_us`.
pub fn load_video(dir: &Path, dt_us: u64) -> Result<VideoSequence> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a directory of frames",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.len() < 2 {
        return Err(Error::MissingAsset(format!(
            "{} holds fewer than two PNG frames",
            dir.display()
        )));
    }
    let frames = files
        .iter()
        .map(|p| load_png(p))
        .collect::<Result<Vec<_>>>()?;
    let stamps: Option<Vec<u64>> = files.iter().map(|p| stem_timestamp(p)).collect();
    let ts = stamps.unwrap_or_else(|| (0..files.len() as u64).map(|k| k * dt_us).collect());
    VideoSequence::new(frames, ts)
}

/// Renders a seeded synthetic scene into a frame directory.
pub fn cmd_gen_scene(
    out: &Path,
    size: usize,
    frames: usize,
    dt_us: u64,
    seed: u64,
) -> Result<VideoSequence> {
    let video = MovingScene::random(seed).video(size, frames, dt_us)?;
    save_video(&video, out)?;
    write_text(
        &out.join("gen_scene.config.txt"),
        &frozen(&[
            ("size", size.to_string()),
            ("frames", frames.to_string()),
            ("dt_us", dt_us.to_string()),
            ("seed", seed.to_string()),
        ]),
    )?;
    Ok(video)
}

/// Settings of `simulate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateConfig {
    pub role: Role,
    pub dataset: DatasetConfig,
    pub dt_us: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            role: Role::EsimData,
            dataset: DatasetConfig::default(),
            dt_us: DEFAULT_DT_US,
        }
    }
}

impl SimulateConfig {
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in pairs {
            let bad = || Error::Config(format!("bad value {v:?} for {k}"));
            let f = || v.parse::<f64>().map_err(|_| bad());
            let u = || v.parse::<u64>().map_err(|_| bad());
            match k.as_str() {
                "role" => c.role = v.parse()?,
                "scale" => c.dataset.scale = v.parse().map_err(|_| bad())?,
                "seed" => {
                    c.dataset.seed = u()?;
                    c.dataset.sim.seed = c.dataset.seed;
                }
                "contrast_threshold" => c.dataset.sim.contrast_threshold = f()?,
                "log_eps" => c.dataset.sim.log_eps = f()?,
                "refractory_us" => c.dataset.sim.refractory_us = u()?,
                "threshold_sigma" => c.dataset.sim.threshold_sigma = f()?,
                "blur_sigma" => c.dataset.blur_sigma = f()?,
                "noise_sigma" => c.dataset.noise_sigma = f()?,
                "dt_us" => c.dt_us = u()?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown config key {other:?} for simulate"
                    )))
                }
            }
        }
        c.dataset.sim.validate()?;
        if c.dataset.scale == 0 || c.dt_us == 0 {
            return Err(Error::Config("scale and dt_us must be at least 1".into()));
        }
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let d = &self.dataset;
        frozen(&[
            ("role", self.role.to_string()),
            ("scale", d.scale.to_string()),
            ("seed", d.seed.to_string()),
            (
                "contrast_threshold",
                format!("{:?}", d.sim.contrast_threshold),
            ),
            ("log_eps", format!("{:?}", d.sim.log_eps)),
            ("refractory_us", d.sim.refractory_us.to_string()),
            ("threshold_sigma", format!("{:?}", d.sim.threshold_sigma)),
            ("blur_sigma", format!("{:?}", d.blur_sigma)),
            ("noise_sigma", format!("{:?}", d.noise_sigma)),
            ("dt_us", self.dt_us.to_string()),
        ])
    }
}

/// Simulates events (and the role's images) for each video directory.
pub fn cmd_simulate(videos: &[PathBuf], run: &RunSpec) -> Result<DatasetManifest> {
    let cfg = SimulateConfig::from_pairs(&run.pairs(SIMULATE_KEYS)?)?;
    if videos.is_empty() {
        return Err(Error::InvalidArgument(
            "simulate needs at least one video directory".into(),
        ));
    }
    let sources = videos
        .iter()
        .map(|d| load_video(d, cfg.dt_us))
        .collect::<Result<Vec<_>>>()?;
    let (h, w) = sources[0].dims();
    if h % cfg.dataset.scale != 0 || w % cfg.dataset.scale != 0 {
        return Err(Error::Shape(format!(
            "{w}x{h} frames are not divisible by scale {}",
            cfg.dataset.scale
        )));
    }
    create_dir(&run.out)?;
    let m = build_dataset(&sources, cfg.role, &cfg.dataset, &run.out)?;
    write_text(&run.out.join("simulate.config.txt"), &cfg.to_text())?;
    Ok(m)
}

/// Settings of `stack`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackConfig {
    pub events_per_frame: usize,
    pub frames_per_stack: usize,
}

impl StackConfig {
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let d = PhaseConfig::for_phase(1)?;
        let mut c = Self {
            events_per_frame: d.events_per_frame,
            frames_per_stack: d.frames_per_stack,
        };
        for (k, v) in pairs {
            let n: usize = v
                .parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {k}")))?;
            match k.as_str() {
                "events_per_frame" => c.events_per_frame = n,
                "frames_per_stack" => c.frames_per_stack = n,
                other => {
                    return Err(Error::Config(format!(
                        "unknown config key {other:?} for stack"
                    )))
                }
            }
        }
        if c.events_per_frame == 0 || c.frames_per_stack == 0 {
            return Err(Error::Config(
                "events_per_frame and frames_per_stack must be at least 1".into(),
            ));
        }
        Ok(c)
    }
}

/// Cuts an EVT1 stream into consecutive stacks saved as `stack<k>_t<end>.tns`.
pub fn cmd_stack(events: &Path, run: &RunSpec) -> Result<Vec<PathBuf>> {
    let cfg = StackConfig::from_pairs(&run.pairs(STACK_KEYS)?)?;
    let stream = load_evt1(events)?;
    let stacks = stacks_from_stream(&stream, cfg.events_per_frame, cfg.frames_per_stack)?;
    create_dir(&run.out)?;
    let mut out = Vec::with_capacity(stacks.len());
    for (k, st) in stacks.iter().enumerate() {
        let p = run
            .out
            .join(format!("stack{k:04}_t{:010}.tns", st.t_span.1));
        st.to_tensor().save(&p, DType::F32)?;
        out.push(p);
    }
    write_text(
        &run.out.join("stack.config.txt"),
        &frozen(&[
            ("events", events.display().to_string()),
            ("events_per_frame", cfg.events_per_frame.to_string()),
            ("frames_per_stack", cfg.frames_per_stack.to_string()),
        ]),
    )?;
    Ok(out)
}

/// Trains one phase and saves the checkpoint to `run.out`.
///
/// `phase` and `iters` override the config; phases after the first need
/// the previous phase's checkpoint as `init`.
pub fn cmd_train(
    run: &RunSpec,
    phase: Option<u8>,
    init: Option<&Path>,
    iters: Option<usize>,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<Checkpoint> {
    let mut pairs = run.pairs(CONFIG_KEYS)?;
    if let Some(n) = iters {
        pairs.push(("iters".into(), n.to_string()));
    }
    let cfg = PhaseConfig::from_pairs(phase, &pairs)?;
    let init = init.map(Checkpoint::load).transpose()?;
    let data = load_train_data(&cfg)?;
    let ckpt = train_phase_with(&data, &cfg, init.as_ref(), |r| on_step(r))?;
    ckpt.save(&run.out)?;
    Ok(ckpt)
}

/// Cleans the APS frames of a manifest with the checkpoint's `G_r`.
/// Outputs keep the source file names.
pub fn cmd_clean_aps(init: &Path, data: &Path, run: &RunSpec) -> Result<Vec<PathBuf>> {
    run.pairs(&[])?;
    let ckpt = Checkpoint::load(init)?;
    let g_r = ckpt.net(generator_name(1))?;
    let m = load_manifest(data)?;
    let assets: Vec<_> = m.assets_of(AssetKind::Aps).collect();
    if assets.is_empty() {
        return Err(Error::MissingAsset(format!("{} has no APS frames", m.role)));
    }
    let images = assets
        .iter()
        .map(|a| load_png(&m.resolve(a)))
        .collect::<Result<Vec<_>>>()?;
    let cleaned = clean_aps(&images, g_r)?;
    create_dir(&run.out)?;
    let mut out = Vec::with_capacity(cleaned.len());
    for (a, img) in assets.iter().zip(&cleaned) {
        let name = a
            .path
            .file_name()
            .ok_or_else(|| Error::MissingAsset(format!("bad asset path {}", a.path.display())))?;
        let p = run.out.join(name);
        save_png(img, &p, BitDepth::Sixteen)?;
        out.push(p);
    }
    write_text(
        &run.out.join("clean_aps.config.txt"),
        &frozen(&[
            ("init", init.display().to_string()),
            ("data", data.display().to_string()),
        ]),
    )?;
    Ok(out)
}

/// Stacks from an EVT1 file (sequence 0) or every stream of a manifest.
fn inference_stacks(events: &Path, events_per_frame: usize, n: usize) -> Result<Vec<StackItem>> {
    let is_evt = events.is_file()
        && events
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("evt1"));
    if is_evt {
        let stream = load_evt1(events)?;
        Ok(stacks_from_stream(&stream, events_per_frame, n)?
            .into_iter()
            .map(|st| StackItem {
                sequence: 0,
                t_end: st.t_span.1,
                tensor: st.to_tensor(),
            })
            .collect())
    } else {
        load_event_stacks(&load_manifest(events)?, events_per_frame, n)
    }
}

/// Runs the phase-`k` cascade of `ckpt` on one `[n, H, W]` stack.
pub fn infer(ckpt: &Checkpoint, phase: u8, stack: &Tensor) -> Result<Tensor> {
    let s = stack.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("stacks are [n, H, W], got {s:?}")));
    }
    let mut x = stack.clone().reshape(&[1, s[0], s[1], s[2]])?;
    for k in 1..=phase {
        let g = ckpt.net(generator_name(k))?;
        x = if k == 3 {
            forward_generator_s(g, &x)?
        } else {
            forward_generator_rd(g, &x)?
        };
    }
    let (h, w) = (x.shape()[2], x.shape()[3]);
    x.reshape(&[h, w])
}

fn run_inference(
    init: &Path,
    events: &Path,
    phase: u8,
    run: &RunSpec,
    ckpt: Checkpoint,
) -> Result<Vec<PathBuf>> {
    if ckpt.phase < phase {
        return Err(Error::Checkpoint(format!(
            "phase {} checkpoint cannot produce phase {phase} outputs",
            ckpt.phase
        )));
    }
    let mut n_e = ckpt.config.events_per_frame;
    for (k, v) in run.pairs(INFER_KEYS)? {
        if k == "events_per_frame" {
            n_e = v
                .parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {k}")))?;
        }
    }
    let stacks = inference_stacks(events, n_e, ckpt.config.frames_per_stack)?;
    let dir = run.out.join(RECON_DIR).join(format!("phase{phase}"));
    create_dir(&dir)?;
    let mut out = Vec::with_capacity(stacks.len());
    for st in &stacks {
        let img = infer(&ckpt, phase, &st.tensor)?;
        let p = dir.join(recon_file_name(st.sequence, st.t_end));
        save_png(&img, &p, BitDepth::Sixteen)?;
        out.push(p);
    }
    write_text(
        &run.out
            .join(format!("{}_phase{phase}.config.txt", run.command)),
        &frozen(&[
            ("init", init.display().to_string()),
            ("events", events.display().to_string()),
            ("phase", phase.to_string()),
            ("events_per_frame", n_e.to_string()),
            ("frames_per_stack", ckpt.config.frames_per_stack.to_string()),
        ]),
    )?;
    Ok(out)
}

/// Phase 1 or 2 reconstructions into `<out>/recon/phase<k>/`; `phase`
/// defaults to the checkpoint's, capped at 2.
pub fn cmd_reconstruct(
    init: &Path,
    events: &Path,
    phase: Option<u8>,
    run: &RunSpec,
) -> Result<Vec<PathBuf>> {
    let ckpt = Checkpoint::load(init)?;
    let phase = phase.unwrap_or(ckpt.phase.min(2));
    if !(1..=2).contains(&phase) {
        return Err(Error::InvalidArgument(format!(
            "reconstruct produces phase 1 or 2 outputs, got {phase}; use superresolve for phase 3"
        )));
    }
    run_inference(init, events, phase, run, ckpt)
}

/// Phase 3 super-resolved outputs into `<out>/recon/phase3/`.
pub fn cmd_superresolve(init: &Path, events: &Path, run: &RunSpec) -> Result<Vec<PathBuf>> {
    let ckpt = Checkpoint::load(init)?;
    ckpt.net(generator_name(3))?;
    run_inference(init, events, 3, run, ckpt)
}

/// Scores `<run_dir>/recon` against a manifest and writes the reports to `out`.
pub fn cmd_eval(run_dir: &Path, manifest: &Path, out: &Path) -> Result<EvalReport> {
    let m = load_manifest(manifest)?;
    let report = evaluate(run_dir, &m)?;
    create_dir(out)?;
    report.write(out)?;
    write_text(
        &out.join("eval.config.txt"),
        &frozen(&[
            ("run", run_dir.display().to_string()),
            ("manifest", manifest.display().to_string()),
        ]),
    )?;
    Ok(report)
}

/// Fixed sizes of the demo recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoSettings {
    /// Side of the high-resolution source videos.
    pub hr_size: usize,
    pub frames: usize,
    pub dt_us: u64,
    /// Source sequences per dataset.
    pub sequences: usize,
    pub events_per_frame: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self {
            hr_size: 128,
            frames: 24,
            dt_us: DEFAULT_DT_US,
            sequences: 2,
            events_per_frame: 500,
            iterations: 200,
            seed: 0,
        }
    }
}

/// Where the demo put things.
#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub checkpoints: [PathBuf; 3],
    pub run_dir: PathBuf,
    pub stacks: Vec<PathBuf>,
    pub outputs: [Vec<PathBuf>; 3],
    pub report: EvalReport,
    pub logs: [Vec<LossRecord>; 3],
}

/// simulate, stack, train three phases, reconstruct and super-resolve,
/// then evaluate. `run.overrides` apply to every training phase.
pub fn cmd_demo(
    run: &RunSpec,
    s: &DemoSettings,
    mut progress: impl FnMut(&str),
) -> Result<DemoOutcome> {
    let seed = run.seed.unwrap_or(s.seed);
    let out = &run.out;
    let train_pairs = RunSpec {
        seed: None,
        ..run.clone()
    }
    .pairs(CONFIG_KEYS)?;
    create_dir(out)?;
    let mut text = frozen(&[
        ("hr_size", s.hr_size.to_string()),
        ("frames", s.frames.to_string()),
        ("dt_us", s.dt_us.to_string()),
        ("sequences", s.sequences.to_string()),
        ("events_per_frame", s.events_per_frame.to_string()),
        ("iters", s.iterations.to_string()),
        ("seed", seed.to_string()),
    ]);
    for (k, v) in &train_pairs {
        let _ = writeln!(text, "{k} = {v}");
    }
    write_text(&out.join("demo.config.txt"), &text)?;

    // Disjoint scene seeds per dataset so the evaluation set is held out.
    let sets = [Role::EsimRw, Role::EvRw, Role::SrRw, Role::EsimSr2];
    let mut manifests = Vec::new();
    for (i, role) in sets.iter().enumerate() {
        progress(&format!("simulate {role}"));
        let mut dirs = Vec::new();
        for q in 0..s.sequences {
            let scene_seed = seed.wrapping_mul(1009).wrapping_add((i * 100 + q) as u64);
            let d = out
                .join("videos")
                .join(role.name())
                .join(format!("seq{q:03}"));
            cmd_gen_scene(&d, s.hr_size, s.frames, s.dt_us, scene_seed)?;
            dirs.push(d);
        }
        let data_dir = out.join("data").join(role.name());
        let spec = RunSpec::new("simulate", &data_dir)
            .with_set("role", role)
            .with_set("dt_us", s.dt_us)
            .with_set("seed", seed.wrapping_add(i as u64));
        cmd_simulate(&dirs, &spec)?;
        manifests.push(data_dir);
    }
    let [esim_rw, ev_rw, sr_rw, esim_sr2] =
        <[PathBuf; 4]>::try_from(manifests).expect("four datasets");

    progress("stack");
    let n_e = s.events_per_frame.to_string();
    let stack_spec = RunSpec::new("stack", out.join("stacks")).with_set("events_per_frame", &n_e);
    let stacks = cmd_stack(&esim_sr2.join("events").join("seq000.evt1"), &stack_spec)?;

    let ckpts = [1, 2, 3].map(|k| out.join(format!("ckpt_phase{k}")));
    let phase_data = |k: u8| -> Vec<(String, String)> {
        let mut p = vec![
            ("events_per_frame".to_string(), n_e.clone()),
            ("iters".into(), s.iterations.to_string()),
            ("seed".into(), seed.wrapping_add(k as u64).to_string()),
        ];
        p.extend(train_pairs.iter().cloned());
        p
    };
    let mut logs: [Vec<LossRecord>; 3] = Default::default();
    let clean_dir = out.join("clean_aps");
    for k in 1..=3u8 {
        progress(&format!("train phase {k}"));
        let (data, targets) = match k {
            1 => (&esim_rw, esim_rw.clone()),
            2 => {
                cmd_clean_aps(&ckpts[0], &ev_rw, &RunSpec::new("clean-aps", &clean_dir))?;
                (&ev_rw, clean_dir.clone())
            }
            _ => (&esim_rw, sr_rw.clone()),
        };
        let mut spec = RunSpec::new("train", &ckpts[k as usize - 1]);
        spec.overrides = phase_data(k);
        spec.overrides
            .push(("data".into(), data.display().to_string()));
        spec.overrides
            .push(("targets".into(), targets.display().to_string()));
        let init = (k > 1).then(|| ckpts[k as usize - 2].as_path());
        let ckpt = cmd_train(&spec, Some(k), init, None, |_| {})?;
        logs[k as usize - 1] = ckpt.log;
    }

    progress("reconstruct");
    let run_dir = out.join("run");
    let infer_spec = |cmd: &str| RunSpec::new(cmd, &run_dir);
    let o1 = cmd_reconstruct(&ckpts[0], &esim_sr2, Some(1), &infer_spec("reconstruct"))?;
    let o2 = cmd_reconstruct(&ckpts[1], &esim_sr2, Some(2), &infer_spec("reconstruct"))?;
    let o3 = cmd_superresolve(&ckpts[2], &esim_sr2, &infer_spec("superresolve"))?;

    progress("eval");
    let report = cmd_eval(&run_dir, &esim_sr2, &run_dir)?;
    Ok(DemoOutcome {
        checkpoints: ckpts,
        run_dir,
        stacks,
        outputs: [o1, o2, o3],
        report,
        logs,
    })
}

/// Mean total loss over the first and last `window` steps of a log.
pub fn loss_trend(log: &[LossRecord], window: usize) -> Option<(f64, f64)> {
    if window == 0 || log.len() < window {
        return None;
    }
    let mean = |r: &[LossRecord]| r.iter().map(|x| x.total).sum::<f64>() / r.len() as f64;
    Some((mean(&log[..window]), mean(&log[log.len() - window..])))
}
