use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::Params;
use crate::optim::Adam;

use super::{LossRecord, PhaseConfig};

pub const SPEC_FILE: &str = "spec.json";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const CONFIG_FILE: &str = "config.txt";
const OPT_DIR: &str = "opt";

/// Trained networks of one phase with their optimizer state and loss log.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub phase: u8,
    pub config: PhaseConfig,
    pub nets: BTreeMap<String, Params>,
    pub optim: BTreeMap<String, Adam>,
    pub log: Vec<LossRecord>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointSpec {
    phase: u8,
    networks: Vec<String>,
}

impl Checkpoint {
    /// A network by name, e.g. `g_r`.
    pub fn net(&self, name: &str) -> Result<&Params> {
        self.nets.get(name).ok_or_else(|| {
            let pretty = match name.split_once('_') {
                Some((a, b)) => format!("{}_{b}", a.to_uppercase()),
                None => name.to_string(),
            };
            Error::Checkpoint(format!("checkpoint lacks {pretty} (phase {})", self.phase))
        })
    }

    /// Writes to a sibling temporary directory, then renames it into place.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let name = dir
            .file_name()
            .ok_or_else(|| {
                Error::InvalidArgument(format!("bad checkpoint path {}", dir.display()))
            })?
            .to_string_lossy()
            .into_owned();
        let parent = dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        self.write_into(&tmp)?;
        let old = parent.join(format!(".{name}.old-{}", std::process::id()));
        let had_old = dir.exists();
        if had_old {
            fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
        if had_old {
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        }
        Ok(())
    }

    fn write_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join(OPT_DIR)).map_err(|e| Error::io(dir, e))?;
        let spec = CheckpointSpec {
            phase: self.phase,
            networks: self.nets.keys().cloned().collect(),
        };
        write(
            &dir.join(SPEC_FILE),
            &(serde_json::to_string_pretty(&spec)? + "\n"),
        )?;
        for (name, p) in &self.nets {
            p.save(dir, name)?;
        }
        for (name, o) in &self.optim {
            o.save(&dir.join(OPT_DIR), name)?;
        }
        write(&dir.join(LOSS_LOG_FILE), &loss_log_csv(&self.log))?;
        write(&dir.join(CONFIG_FILE), &self.config.to_text())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let spec_path = dir.join(SPEC_FILE);
        if !spec_path.exists() {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint (no {SPEC_FILE})",
                dir.display()
            )));
        }
        let text = fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        let spec: CheckpointSpec = serde_json::from_str(&text)?;
        let cfg_path = dir.join(CONFIG_FILE);
        let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config = PhaseConfig::from_text(&cfg_text, Some(spec.phase))?;
        let mut nets = BTreeMap::new();
        let mut optim = BTreeMap::new();
        for name in &spec.networks {
            let p = Params::load(dir, name)?;
            if dir.join(OPT_DIR).join(format!("{name}.step.tns")).exists() {
                optim.insert(
                    name.clone(),
                    Adam::load(&dir.join(OPT_DIR), name, &p, config.adam)?,
                );
            }
            nets.insert(name.clone(), p);
        }
        let log_path = dir.join(LOSS_LOG_FILE);
        let log =
            parse_loss_log(&fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?)?;
        Ok(Self {
            phase: spec.phase,
            config,
            nets,
            optim,
            log,
        })
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `step,l_adv,l_sim,l_id,l_var,total`, values in round-trip precision.
pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut s = String::from("step,l_adv,l_sim,l_id,l_var,total\n");
    for r in log {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?}",
            r.step, r.adv, r.sim, r.id, r.var, r.total
        );
    }
    s
}

pub fn parse_loss_log(text: &str) -> Result<Vec<LossRecord>> {
    let bad = |l: &str| Error::format("loss log", format!("bad row {l:?}"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(l));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(l));
            Ok(LossRecord {
                step: f[0].parse().map_err(|_| bad(l))?,
                adv: num(1)?,
                sim: num(2)?,
                id: num(3)?,
                var: num(4)?,
                total: num(5)?,
            })
        })
        .collect()
}
