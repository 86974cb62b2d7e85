//! Dataset roles and the on-disk manifest.
//!
//! Every role records which training phases use it. Desk-scale resolutions
//! stand in for the full-size ones: 32x32 for the 256-class roles and 128x128
//! for the 1024-class roles, keeping the x4 relation.
//!
//! Manifest JSON keys: `role`, `width`, `height`, `scale`, `usage`, `assets[]`
//! where each asset has `kind`, `path` (relative to the manifest), `sequence`
//! and, for images, `t_us`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::io::save_evt1;
use crate::imageio::{save_png, BitDepth};

use super::{degrade_aps, downsample_bicubic, simulate_events, SimConfig, VideoSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "ESIM-data")]
    EsimData,
    #[serde(rename = "ESIM-RW")]
    EsimRw,
    #[serde(rename = "ESIM-SR1")]
    EsimSr1,
    #[serde(rename = "ESIM-SR2")]
    EsimSr2,
    #[serde(rename = "Ev-RW")]
    EvRw,
    #[serde(rename = "SR-RW")]
    SrRw,
}

/// Which phases and evaluations a role feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub real: bool,
    pub p1: bool,
    pub p2: bool,
    pub p3: bool,
    pub eval: bool,
    pub generalization: bool,
}

impl Usage {
    pub fn phase(&self, phase: u8) -> bool {
        match phase {
            1 => self.p1,
            2 => self.p2,
            3 => self.p3,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    /// EVT1 event file at LR resolution.
    Events,
    /// Degraded sensor frame at LR resolution.
    Aps,
    /// Clean LR frame (identity targets and evaluation reference).
    Clean,
    /// High-resolution frame.
    Hr,
    /// Bicubic-downsampled HR frame.
    Lr,
}

impl AssetKind {
    fn dir(self) -> &'static str {
        match self {
            AssetKind::Events => "events",
            AssetKind::Aps => "aps",
            AssetKind::Clean => "clean",
            AssetKind::Hr => "hr",
            AssetKind::Lr => "lr",
        }
    }
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::EsimData,
        Role::EsimRw,
        Role::EsimSr1,
        Role::EsimSr2,
        Role::EvRw,
        Role::SrRw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::EsimData => "ESIM-data",
            Role::EsimRw => "ESIM-RW",
            Role::EsimSr1 => "ESIM-SR1",
            Role::EsimSr2 => "ESIM-SR2",
            Role::EvRw => "Ev-RW",
            Role::SrRw => "SR-RW",
        }
    }

    pub fn usage(self) -> Usage {
        let u = |real, p1, p2, p3, eval, generalization| Usage {
            real,
            p1,
            p2,
            p3,
            eval,
            generalization,
        };
        match self {
            Role::EsimData => u(false, true, true, true, true, false),
            Role::EsimRw => u(false, true, true, true, false, true),
            Role::EsimSr1 => u(false, true, true, true, false, true),
            Role::EsimSr2 => u(false, true, true, true, true, false),
            Role::EvRw => u(true, false, true, false, true, true),
            Role::SrRw => u(true, false, true, true, false, true),
        }
    }

    /// Whether the role's nominal resolution is the large (1024-class) one.
    pub fn is_high_res(self) -> bool {
        matches!(self, Role::EsimSr2 | Role::SrRw)
    }

    pub fn required_assets(self) -> &'static [AssetKind] {
        use AssetKind::*;
        match self {
            Role::EsimData | Role::EsimRw | Role::EsimSr1 => &[Events, Aps, Clean],
            Role::EsimSr2 => &[Events, Hr, Lr],
            Role::EvRw => &[Events, Aps],
            Role::SrRw => &[Hr],
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset role {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub kind: AssetKind,
    pub path: PathBuf,
    pub sequence: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub role: Role,
    pub width: usize,
    pub height: usize,
    pub scale: usize,
    pub usage: Usage,
    pub assets: Vec<Asset>,
    /// Directory the asset paths are relative to; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn assets_of(&self, kind: AssetKind) -> impl Iterator<Item = &Asset> {
        self.assets.iter().filter(move |a| a.kind == kind)
    }

    pub fn resolve(&self, asset: &Asset) -> PathBuf {
        self.root.join(&asset.path)
    }

    pub fn validate(&self) -> Result<()> {
        for &kind in self.role.required_assets() {
            if self.assets_of(kind).next().is_none() {
                return Err(Error::MissingAsset(format!(
                    "role {} requires {kind:?} assets",
                    self.role
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub scale: usize,
    pub sim: SimConfig,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scale: 4,
            sim: SimConfig::default(),
            blur_sigma: 0.8,
            noise_sigma: 0.03,
            seed: 0,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the role's assets under `out_dir` and returns the manifest (also
/// saved as `out_dir/manifest.json`).
///
/// Sources are high-resolution videos; LR frames are their bicubic
/// downsampling by `cfg.scale`, and events are simulated on the LR video.
pub fn build_dataset(
    sources: &[VideoSequence],
    role: Role,
    cfg: &DatasetConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("no source videos".into()));
    }
    if cfg.scale == 0 {
        return Err(Error::InvalidArgument("scale must be at least 1".into()));
    }
    let required = role.required_assets();
    let wants = |k| required.contains(&k);
    for kind in required {
        let d = out_dir.join(kind.dir());
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    let (hr_h, hr_w) = sources[0].dims();
    let (lr_h, lr_w) = (hr_h / cfg.scale, hr_w / cfg.scale);
    let mut assets = Vec::new();
    for (seq, video) in sources.iter().enumerate() {
        if video.dims() != (hr_h, hr_w) {
            return Err(Error::Shape(format!(
                "source {seq} is {:?}, expected {:?}",
                video.dims(),
                (hr_h, hr_w)
            )));
        }
        let lr = if cfg.scale == 1 {
            video.clone()
        } else {
            video.map_frames(|f| downsample_bicubic(f, cfg.scale))?
        };
        let seq_seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(seq as u64);

        if wants(AssetKind::Events) {
            let sim = SimConfig {
                seed: seq_seed,
                ..cfg.sim
            };
            let stream = simulate_events(&lr, &sim)?;
            let rel = PathBuf::from(AssetKind::Events.dir()).join(format!("seq{seq:03}.evt1"));
            save_evt1(&stream, &out_dir.join(&rel))?;
            assets.push(Asset {
                kind: AssetKind::Events,
                path: rel,
                sequence: seq,
                t_us: None,
            });
        }

        for (k, &t) in video.timestamps().iter().enumerate() {
            let mut put = |kind: AssetKind, img: &crate::tensor::Tensor| -> Result<()> {
                let rel = PathBuf::from(kind.dir()).join(format!("seq{seq:03}_t{t:010}.png"));
                save_png(img, &out_dir.join(&rel), BitDepth::Sixteen)?;
                assets.push(Asset {
                    kind,
                    path: rel,
                    sequence: seq,
                    t_us: Some(t),
                });
                Ok(())
            };
            if wants(AssetKind::Aps) {
                let frame_seed = seq_seed.wrapping_mul(31).wrapping_add(k as u64);
                let aps =
                    degrade_aps(&lr.frames()[k], cfg.blur_sigma, cfg.noise_sigma, frame_seed)?;
                put(AssetKind::Aps, &aps)?;
            }
            if wants(AssetKind::Clean) {
                put(AssetKind::Clean, &lr.frames()[k])?;
            }
            if wants(AssetKind::Hr) {
                put(AssetKind::Hr, &video.frames()[k])?;
            }
            if wants(AssetKind::Lr) {
                put(AssetKind::Lr, &lr.frames()[k])?;
            }
        }
    }

    let (width, height) = if role.is_high_res() {
        (hr_w, hr_h)
    } else {
        (lr_w, lr_h)
    };
    let manifest = DatasetManifest {
        role,
        width,
        height,
        scale: cfg.scale,
        usage: role.usage(),
        assets,
        root: out_dir.to_path_buf(),
    };
    manifest.validate()?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
