//! Image quality metrics, timestamp pairing and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::load_png;
use crate::sim::{AssetKind, DatasetManifest};
use crate::tensor::Tensor;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
/// PSNR values are rounded to `1 / PSNR_STEPS_PER_DB` dB.
pub const PSNR_STEPS_PER_DB: f64 = 1e10;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
/// Per-phase outputs live in `<run>/recon/phase<k>/`.
pub const RECON_DIR: &str = "recon";

fn same_hw(a: &Tensor, b: &Tensor, what: &str) -> Result<(usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    match *a.shape() {
        [h, w] | [1, h, w] | [1, 1, h, w] => Ok((h, w)),
        ref s => Err(Error::Shape(format!(
            "{what}: expected a single-channel image, got {s:?}"
        ))),
    }
}

/// `10 log10(1 / MSE)` for images in [0, 1]; [`PSNR_CAP_DB`] when equal.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_hw(a, b, "psnr")?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let db = (-10.0 * mse.log10()).min(PSNR_CAP_DB);
    Ok((db * PSNR_STEPS_PER_DB).round() / PSNR_STEPS_PER_DB)
}

/// Mean SSIM over every `window x window` patch (stride 1, uniform weights,
/// population statistics), with `C1 = (k1)^2`, `C2 = (k2)^2` for unit range.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    ssim_with(a, b, SSIM_WINDOW, SSIM_K1, SSIM_K2)
}

pub fn ssim_with(a: &Tensor, b: &Tensor, window: usize, k1: f64, k2: f64) -> Result<f64> {
    let (h, w) = same_hw(a, b, "ssim")?;
    if window == 0 || h < window || w < window {
        return Err(Error::Shape(format!(
            "ssim: {h}x{w} image is smaller than the {window}x{window} window"
        )));
    }
    let (c1, c2) = (k1 * k1, k2 * k2);
    // Summed-area tables of a, b, a^2, b^2 and ab, one row and column of padding.
    let (da, db) = (a.data(), b.data());
    let sw = w + 1;
    let mut tables = vec![[0.0f64; 5]; (h + 1) * sw];
    for y in 0..h {
        let mut row = [0.0f64; 5];
        for x in 0..w {
            let (p, q) = (da[y * w + x], db[y * w + x]);
            for (r, v) in row.iter_mut().zip([p, q, p * p, q * q, p * q]) {
                *r += v;
            }
            let above = tables[y * sw + x + 1];
            let cell = &mut tables[(y + 1) * sw + x + 1];
            for i in 0..5 {
                cell[i] = above[i] + row[i];
            }
        }
    }
    let n = (window * window) as f64;
    let (ny, nx) = (h - window + 1, w - window + 1);
    let total: f64 = (0..ny)
        .into_par_iter()
        .map(|y| {
            let mut acc = 0.0;
            for x in 0..nx {
                let s = |i: usize| {
                    tables[(y + window) * sw + x + window][i]
                        - tables[y * sw + x + window][i]
                        - tables[(y + window) * sw + x][i]
                        + tables[y * sw + x][i]
                };
                let (ma, mb) = (s(0) / n, s(1) / n);
                let va = (s(2) / n - ma * ma).max(0.0);
                let vb = (s(3) / n - mb * mb).max(0.0);
                let cov = s(4) / n - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total / (ny * nx) as f64)
}

/// One reconstruction paired with its nearest reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pairing {
    pub recon: usize,
    pub aps: usize,
    pub dt_us: u64,
}

/// Pairs every reconstruction timestamp with the reference timestamp of
/// least `|dt|`; ties go to the earlier reference. Both lists sorted.
pub fn match_by_timestamp(recon: &[u64], aps: &[u64]) -> Result<Vec<Pairing>> {
    if recon.is_empty() || aps.is_empty() {
        return Err(Error::InvalidArgument(
            "match_by_timestamp needs two non-empty lists".into(),
        ));
    }
    if !recon.is_sorted() || !aps.is_sorted() {
        return Err(Error::InvalidArgument("timestamps must be sorted".into()));
    }
    Ok(recon
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let hi = aps.partition_point(|&a| a < t);
            let best = if hi == 0 {
                0
            } else if hi == aps.len() {
                aps.partition_point(|&a| a < aps[hi - 1])
            } else {
                // First of the run of equal timestamps before `t`.
                let lo = aps.partition_point(|&a| a < aps[hi - 1]);
                if t - aps[hi - 1] <= aps[hi] - t {
                    lo
                } else {
                    hi
                }
            };
            Pairing {
                recon: i,
                aps: best,
                dt_us: t.abs_diff(aps[best]),
            }
        })
        .collect())
}

pub type MetricFn = Arc<dyn Fn(&Tensor, &Tensor) -> Result<f64> + Send + Sync>;

/// Named full-reference metrics. PSNR and SSIM are built in; others such as
/// FSIM or LPIPS can be registered by callers.
#[derive(Clone)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, MetricFn>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut r = Self {
            metrics: BTreeMap::new(),
        };
        r.register("psnr", psnr);
        r.register("ssim", ssim);
        r
    }
}

impl MetricRegistry {
    pub fn register(
        &mut self,
        name: &str,
        f: impl Fn(&Tensor, &Tensor) -> Result<f64> + Send + Sync + 'static,
    ) {
        self.metrics.insert(name.to_string(), Arc::new(f));
    }

    pub fn get(&self, name: &str) -> Result<&MetricFn> {
        self.metrics.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "metric {name:?} is not registered (built in: psnr, ssim)"
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.metrics.keys()
    }
}

/// Output file name of a reconstruction: sequence and stack end timestamp.
pub fn recon_file_name(sequence: usize, t_us: u64) -> String {
    format!("seq{sequence:03}_t{t_us:010}.png")
}

/// Inverse of [`recon_file_name`] (any `seqNNN_tNNN` stem).
pub fn parse_recon_name(path: &Path) -> Option<(usize, u64)> {
    let stem = path.file_stem()?.to_str()?;
    let (s, t) = stem.strip_prefix("seq")?.split_once("_t")?;
    Some((s.parse().ok()?, t.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub phase: u8,
    pub recon_id: String,
    pub aps_id: String,
    pub dt_us: u64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub pairs: usize,
    pub psnr: MeanStd,
    pub ssim: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// Keyed by `phase<k>`.
    pub summary: BTreeMap<String, PhaseSummary>,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let mut summary = BTreeMap::new();
        let mut phases: Vec<u8> = rows.iter().map(|r| r.phase).collect();
        phases.dedup();
        phases.sort_unstable();
        phases.dedup();
        for k in phases {
            let sel: Vec<&ReportRow> = rows.iter().filter(|r| r.phase == k).collect();
            let p: Vec<f64> = sel.iter().map(|r| r.psnr_db).collect();
            let s: Vec<f64> = sel.iter().map(|r| r.ssim).collect();
            summary.insert(
                format!("phase{k}"),
                PhaseSummary {
                    pairs: sel.len(),
                    psnr: MeanStd::of(&p),
                    ssim: MeanStd::of(&s),
                },
            );
        }
        Self { rows, summary }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,recon_id,aps_id,dt_us,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:?},{:?}",
                r.phase, r.recon_id, r.aps_id, r.dt_us, r.psnr_db, r.ssim
            );
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
        let bad = |l: &str| Error::format("report csv", format!("bad row {l:?}"));
        text.lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 6 {
                    return Err(bad(l));
                }
                Ok(ReportRow {
                    phase: f[0].parse().map_err(|_| bad(l))?,
                    recon_id: f[1].to_string(),
                    aps_id: f[2].to_string(),
                    dt_us: f[3].parse().map_err(|_| bad(l))?,
                    psnr_db: f[4].parse().map_err(|_| bad(l))?,
                    ssim: f[5].parse().map_err(|_| bad(l))?,
                })
            })
            .collect()
    }

    /// Writes `report.csv` and `report.json` (summary only) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(REPORT_CSV);
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(REPORT_JSON);
        fs::write(&json, serde_json::to_string_pretty(&self.summary)? + "\n")
            .map_err(|e| Error::io(&json, e))?;
        Ok((csv, json))
    }
}

/// Reference kind compared against phase `k` outputs.
fn reference_kind(manifest: &DatasetManifest, phase: u8) -> Result<AssetKind> {
    let order: &[AssetKind] = if phase == 3 {
        &[AssetKind::Hr]
    } else {
        &[AssetKind::Clean, AssetKind::Lr, AssetKind::Aps]
    };
    order
        .iter()
        .copied()
        .find(|k| manifest.assets_of(*k).next().is_some())
        .ok_or_else(|| {
            Error::MissingAsset(format!(
                "{} has no reference frames for phase {phase}",
                manifest.role
            ))
        })
}

/// Pairs every `<run>/recon/phase<k>/*.png` with the closest-in-time
/// reference frame of the same sequence and scores the pairs.
pub fn evaluate(run_dir: &Path, manifest: &DatasetManifest) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for phase in 1..=3u8 {
        let dir = run_dir.join(RECON_DIR).join(format!("phase{phase}"));
        if !dir.is_dir() {
            continue;
        }
        let mut recons: Vec<(usize, u64, PathBuf)> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| parse_recon_name(&p).map(|(s, t)| (s, t, p)))
            .collect();
        recons.sort();
        if recons.is_empty() {
            continue;
        }
        let kind = reference_kind(manifest, phase)?;
        let mut by_seq: BTreeMap<usize, Vec<(u64, PathBuf)>> = BTreeMap::new();
        for a in manifest.assets_of(kind) {
            let t = a.t_us.ok_or_else(|| {
                Error::MissingAsset(format!("{} lacks a timestamp", a.path.display()))
            })?;
            by_seq
                .entry(a.sequence)
                .or_default()
                .push((t, manifest.resolve(a)));
        }
        let mut jobs = Vec::new();
        for (seq, t, path) in &recons {
            let refs = by_seq.get_mut(seq).ok_or_else(|| {
                Error::MissingAsset(format!("no {kind:?} frames for sequence {seq}"))
            })?;
            refs.sort();
            let ts: Vec<u64> = refs.iter().map(|r| r.0).collect();
            let p = match_by_timestamp(&[*t], &ts)?[0];
            jobs.push((path.clone(), refs[p.aps].1.clone(), p.dt_us));
        }
        let scored: Vec<ReportRow> = jobs
            .par_iter()
            .map(|(rp, ap, dt)| {
                let (r, a) = (load_png(rp)?, load_png(ap)?);
                Ok(ReportRow {
                    phase,
                    recon_id: stem(rp),
                    aps_id: stem(ap),
                    dt_us: *dt,
                    psnr_db: psnr(&r, &a)?,
                    ssim: ssim(&r, &a)?,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(scored);
    }
    if rows.is_empty() {
        return Err(Error::MissingAsset(format!(
            "no reconstructions under {}",
            run_dir.join(RECON_DIR).display()
        )));
    }
    Ok(EvalReport::from_rows(rows))
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
