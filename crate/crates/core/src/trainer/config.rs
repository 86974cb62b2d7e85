use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::events::{DEFAULT_EVENTS_PER_FRAME, DEFAULT_FRAMES_PER_STACK};
use crate::losses::{GeneratorMode, LossWeights, DEFAULT_FEATURE_LAYER};
use crate::networks::AdvMode;
use crate::optim::AdamConfig;
use crate::sim::AssetKind;

/// Everything one training phase needs. Defaults follow the published
/// settings where they exist; the rest are recorded here so runs are pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub phase: u8,
    pub weights: LossWeights,
    pub adv_mode: AdvMode,
    /// Generator side of the standard adversarial loss.
    pub gen_mode: GeneratorMode,
    pub iterations: usize,
    pub lr: f64,
    /// Fractions of `iterations` at which the learning rate is multiplied by `lr_gamma`.
    pub lr_decay: Vec<f64>,
    pub lr_gamma: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub batch: usize,
    pub augment: bool,
    pub events_per_frame: usize,
    pub frames_per_stack: usize,
    pub channels: usize,
    pub g_blocks: usize,
    pub f_blocks: usize,
    pub d_stages: usize,
    pub scale: usize,
    pub feature_layer: usize,
    pub feature_seed: u64,
    /// Drop this phase's feedback network and its similarity term.
    pub ablate_f: bool,
    /// Drop this phase's discriminator and its adversarial term.
    pub ablate_d: bool,
    /// Dataset manifests supplying event stacks.
    pub data: Vec<PathBuf>,
    /// Manifest or image directory supplying unpaired targets.
    pub targets: Option<PathBuf>,
    /// Asset kind read from a target manifest; phase default when unset.
    pub target_kind: Option<AssetKind>,
}

/// Documented config keys, in file order.
pub const CONFIG_KEYS: &[&str] = &[
    "phase",
    "alpha",
    "lambda1",
    "lambda2",
    "lambda3",
    "adv_mode",
    "gen_mode",
    "iters",
    "lr",
    "lr_decay",
    "lr_gamma",
    "beta1",
    "beta2",
    "eps",
    "seed",
    "batch",
    "augment",
    "events_per_frame",
    "frames_per_stack",
    "channels",
    "g_blocks",
    "f_blocks",
    "d_stages",
    "scale",
    "feature_layer",
    "feature_seed",
    "ablate_f",
    "ablate_d",
    "data",
    "targets",
    "target_kind",
];

impl PhaseConfig {
    pub fn for_phase(phase: u8) -> Result<Self> {
        let (lambda3, adv_mode) = match phase {
            1 => (0.5, AdvMode::Standard),
            2 => (2.0, AdvMode::Standard),
            3 => (3.0, AdvMode::Relativistic),
            _ => {
                return Err(Error::Config(format!(
                    "phase must be 1, 2 or 3, got {phase}"
                )))
            }
        };
        Ok(Self {
            phase,
            weights: LossWeights {
                lambda1: 10.0,
                lambda2: 5.0,
                lambda3,
                alpha: 0.6,
            },
            adv_mode,
            gen_mode: GeneratorMode::NonSaturating,
            iterations: 200,
            lr: 2e-4,
            lr_decay: vec![0.5, 0.75],
            lr_gamma: 0.5,
            adam: AdamConfig::default(),
            seed: 0,
            batch: 1,
            augment: true,
            events_per_frame: DEFAULT_EVENTS_PER_FRAME,
            frames_per_stack: DEFAULT_FRAMES_PER_STACK,
            channels: 16,
            g_blocks: 4,
            f_blocks: 3,
            d_stages: 3,
            scale: 4,
            feature_layer: DEFAULT_FEATURE_LAYER,
            feature_seed: 0,
            ablate_f: false,
            ablate_d: false,
            data: Vec::new(),
            targets: None,
            target_kind: None,
        })
    }

    /// Learning rate in effect at `step` (0-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        let drops = self
            .lr_decay
            .iter()
            .filter(|&&f| step >= (f * self.iterations as f64).floor() as u64)
            .count();
        self.lr * self.lr_gamma.powi(drops as i32)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(1..=3).contains(&self.phase) {
            return Err(Error::Config(format!(
                "phase must be 1, 2 or 3, got {}",
                self.phase
            )));
        }
        if self.batch == 0 || self.frames_per_stack == 0 || self.events_per_frame == 0 {
            return Err(Error::Config(
                "batch, frames_per_stack and events_per_frame must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr {} must be finite and non-negative",
                self.lr
            )));
        }
        if self.lr_decay.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(
                "lr_decay points are fractions in [0, 1]".into(),
            ));
        }
        if !matches!(self.scale, 2 | 4) {
            return Err(Error::Config(format!(
                "scale must be 2 or 4, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = || Error::Config(format!("bad value {v:?} for {key}"));
        let f = || v.parse::<f64>().map_err(|_| bad());
        let u = || v.parse::<usize>().map_err(|_| bad());
        let b = || match v {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(bad()),
        };
        match key.trim() {
            "phase" => self.phase = v.parse().map_err(|_| bad())?,
            "alpha" => self.weights.alpha = f()?,
            "lambda1" => self.weights.lambda1 = f()?,
            "lambda2" => self.weights.lambda2 = f()?,
            "lambda3" => self.weights.lambda3 = f()?,
            "adv_mode" => {
                self.adv_mode = match v {
                    "standard" => AdvMode::Standard,
                    "relativistic" => AdvMode::Relativistic,
                    _ => return Err(bad()),
                }
            }
            "gen_mode" => {
                self.gen_mode = match v {
                    "paper" => GeneratorMode::Paper,
                    "nonsaturating" => GeneratorMode::NonSaturating,
                    _ => return Err(bad()),
                }
            }
            "iters" => self.iterations = u()?,
            "lr" => self.lr = f()?,
            "lr_decay" => {
                self.lr_decay = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                }
            }
            "lr_gamma" => self.lr_gamma = f()?,
            "beta1" => self.adam.beta1 = f()?,
            "beta2" => self.adam.beta2 = f()?,
            "eps" => self.adam.eps = f()?,
            "seed" => self.seed = v.parse().map_err(|_| bad())?,
            "batch" => self.batch = u()?,
            "augment" => self.augment = b()?,
            "events_per_frame" => self.events_per_frame = u()?,
            "frames_per_stack" => self.frames_per_stack = u()?,
            "channels" => self.channels = u()?,
            "g_blocks" => self.g_blocks = u()?,
            "f_blocks" => self.f_blocks = u()?,
            "d_stages" => self.d_stages = u()?,
            "scale" => self.scale = u()?,
            "feature_layer" => self.feature_layer = u()?,
            "feature_seed" => self.feature_seed = v.parse().map_err(|_| bad())?,
            "ablate_f" => self.ablate_f = b()?,
            "ablate_d" => self.ablate_d = b()?,
            "data" => {
                self.data = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "targets" => self.targets = (!v.is_empty()).then(|| PathBuf::from(v)),
            "target_kind" => {
                self.target_kind = if v.is_empty() {
                    None
                } else {
                    Some(
                        serde_json::from_value(serde_json::Value::String(v.into()))
                            .map_err(|_| bad())?,
                    )
                }
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Builds a config from `key=value` pairs. The phase (from `phase`
    /// unless overridden) selects the defaults the pairs are applied to.
    pub fn from_pairs(phase: Option<u8>, pairs: &[(String, String)]) -> Result<Self> {
        let from_pairs = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "phase")
            .map(|(_, v)| {
                v.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::Config(format!("bad phase {v:?}")))
            })
            .transpose()?;
        let mut cfg = Self::for_phase(phase.or(from_pairs).unwrap_or(1))?;
        for (k, v) in pairs {
            if k == "phase" {
                continue;
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flat `key = value` text with every documented key.
    pub fn to_text(&self) -> String {
        let w = &self.weights;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("phase", self.phase.to_string());
        kv("alpha", fmt_f(w.alpha));
        kv("lambda1", fmt_f(w.lambda1));
        kv("lambda2", fmt_f(w.lambda2));
        kv("lambda3", fmt_f(w.lambda3));
        kv(
            "adv_mode",
            match self.adv_mode {
                AdvMode::Standard => "standard",
                AdvMode::Relativistic => "relativistic",
            }
            .into(),
        );
        kv(
            "gen_mode",
            match self.gen_mode {
                GeneratorMode::Paper => "paper",
                GeneratorMode::NonSaturating => "nonsaturating",
            }
            .into(),
        );
        kv("iters", self.iterations.to_string());
        kv("lr", fmt_f(self.lr));
        kv(
            "lr_decay",
            self.lr_decay
                .iter()
                .map(|f| fmt_f(*f))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("lr_gamma", fmt_f(self.lr_gamma));
        kv("beta1", fmt_f(self.adam.beta1));
        kv("beta2", fmt_f(self.adam.beta2));
        kv("eps", fmt_f(self.adam.eps));
        kv("seed", self.seed.to_string());
        kv("batch", self.batch.to_string());
        kv("augment", self.augment.to_string());
        kv("events_per_frame", self.events_per_frame.to_string());
        kv("frames_per_stack", self.frames_per_stack.to_string());
        kv("channels", self.channels.to_string());
        kv("g_blocks", self.g_blocks.to_string());
        kv("f_blocks", self.f_blocks.to_string());
        kv("d_stages", self.d_stages.to_string());
        kv("scale", self.scale.to_string());
        kv("feature_layer", self.feature_layer.to_string());
        kv("feature_seed", self.feature_seed.to_string());
        kv("ablate_f", self.ablate_f.to_string());
        kv("ablate_d", self.ablate_d.to_string());
        kv(
            "data",
            self.data
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "targets",
            self.targets
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv(
            "target_kind",
            self.target_kind
                .map(|k| {
                    serde_json::to_value(k)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default()
                })
                .unwrap_or_default(),
        );
        s
    }

    pub fn from_text(text: &str, phase: Option<u8>) -> Result<Self> {
        Self::from_pairs(phase, &parse_pairs(text)?)
    }
}

/// Shortest text that parses back to the same `f64`.
fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

/// Splits `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| {
            parse_pair(l).map_err(|_| {
                Error::Config(format!("line {}: expected key=value, got {l:?}", i + 1))
            })
        })
        .collect()
}

pub fn parse_pair(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got {s:?}")))?;
    let k = k.trim();
    if !CONFIG_KEYS.contains(&k) {
        return Err(Error::Config(format!("unknown config key {k:?}")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}
