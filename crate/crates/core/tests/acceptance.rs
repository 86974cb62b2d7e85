//! Acceptance criteria. Each test prints one `criterion N ... PASS|FAIL` line.
//!
//! The tests hold a shared lock so they run one at a time; elapsed wall time
//! then stands in for CPU time on the single worker thread.

mod common;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use eventsr::autograd::Graph;
use eventsr::events::io::{read_evt1, write_evt1};
use eventsr::events::{
    stack_by_number, Event, EventStream, StackOptions, DEFAULT_EVENTS_PER_FRAME,
    DEFAULT_FRAMES_PER_STACK,
};
use eventsr::imageio::load_png;
use eventsr::losses::{
    adversarial_discriminator_value, adversarial_generator_value, event_similarity,
    event_similarity_value, identity, identity_value, phase_total, relativistic_adversarial,
    relativistic_adversarial_value, total_variation, total_variation_value, FeatureExtractor,
    GeneratorMode,
};
use eventsr::metrics::{match_by_timestamp, psnr, ssim};
use eventsr::networks::{forward_feedback, forward_generator_s, AdvMode, NetSpec, Params};
use eventsr::sim::{simulate_events, SimConfig, VideoSequence};
use eventsr::tensor::DType;
use eventsr::trainer::{
    clean_aps, feature_extractor, parse_loss_log, stacks_from_stream, train_step, Batch,
    PhaseConfig, Sampler, StackItem, TrainData, TrainState,
};
use eventsr::{Error, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the criterion line, then fails the test on a miss.
fn verdict(n: u32, name: &str, elapsed: Duration, limit: Duration, result: Result<(), String>) {
    let in_time = elapsed < limit;
    let ok = result.is_ok() && in_time;
    let mut detail = match &result {
        Ok(()) => String::new(),
        Err(e) => format!(": {e}"),
    };
    if !in_time {
        detail.push_str(&format!(" (over the {:.0} s limit)", limit.as_secs_f64()));
    }
    let line = format!(
        "criterion {n:>2} {name}: {} in {:.2} s{detail}\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    // Written past the test harness capture so every line lands in the log.
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "{}", line.trim());
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_stream(rng: &mut ChaCha8Rng, len: usize, w: u16, h: u16) -> EventStream {
    let mut t = 0u64;
    let ev = (0..len)
        .map(|_| {
            t += rng.random_range(0..3);
            Event::new(
                t,
                rng.random_range(0..w),
                rng.random_range(0..h),
                if rng.random_bool(0.5) { 1 } else { -1 },
            )
        })
        .collect();
    EventStream::new(ev, w, h).unwrap()
}

#[test]
fn criterion_01_stacking_partition() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let result = (|| {
        for case in 0..1000 {
            let len = rng.random_range(0..=50_000usize);
            let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
            let stream = random_stream(&mut rng, len, w, h);
            let n = rng.random_range(1..=5usize);
            let n_e = rng.random_range(1..=(len / n).max(1));
            let start_at = rng.random_range(0..=len.saturating_sub(n * n_e).max(0));
            let got = stack_by_number(&stream, n_e, n, start_at, StackOptions::default());
            if start_at + n * n_e > len {
                let want = start_at + n * n_e - len;
                match got {
                    Err(Error::InsufficientEvents { shortfall, .. }) if shortfall == want => {
                        continue
                    }
                    other => {
                        return Err(format!(
                            "case {case}: expected shortfall {want}, got {other:?}"
                        ))
                    }
                }
            }
            let st = got.map_err(|e| format!("case {case}: {e}"))?;
            let oracle = brute_force_frames(len, n_e, n, start_at);
            let ev = stream.events();
            for (k, (&(lo, hi), want)) in st.frame_event_ranges.iter().zip(&oracle).enumerate() {
                let mut a: Vec<(u64, u16, u16, i8)> =
                    ev[lo..hi].iter().map(|e| (e.t, e.x, e.y, e.p)).collect();
                let mut b: Vec<(u64, u16, u16, i8)> = want
                    .iter()
                    .map(|&i| (ev[i].t, ev[i].x, ev[i].y, ev[i].p))
                    .collect();
                a.sort_unstable();
                b.sort_unstable();
                check(a == b, || {
                    format!("case {case} frame {k}: multisets differ")
                })?;
            }
            let consumed: usize = oracle.iter().map(Vec::len).sum();
            check(consumed == n * n_e, || {
                format!("case {case}: oracle consumed {consumed}")
            })?;
        }
        Ok(())
    })();
    verdict(
        1,
        "stacking partition",
        start.elapsed(),
        Duration::from_secs(10),
        result,
    );
}

/// 50 random 8x8x10 videos with their frame data.
fn simulator_cases() -> Vec<(VideoSequence, Vec<Vec<f64>>, Vec<u64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..50)
        .map(|_| {
            let frames: Vec<Vec<f64>> = (0..10)
                .map(|_| random_values(&mut rng, 64, 0.0, 1.0))
                .collect();
            let mut t = rng.random_range(0..1000u64);
            let ts: Vec<u64> = (0..10)
                .map(|_| {
                    t += rng.random_range(1..5000u64);
                    t
                })
                .collect();
            let video = VideoSequence::new(
                frames
                    .iter()
                    .map(|f| Tensor::new(vec![8, 8], f.clone()).unwrap())
                    .collect(),
                ts.clone(),
            )
            .unwrap();
            (video, frames, ts)
        })
        .collect()
}

#[test]
fn criterion_02_simulator_oracle() {
    let _g = serial();
    let start = Instant::now();
    let cfg = SimConfig::default();
    let result = (|| {
        for (i, (video, frames, ts)) in simulator_cases().iter().enumerate() {
            let got = simulate_events(video, &cfg).map_err(|e| e.to_string())?;
            let want = reference_events(frames, ts, 8, cfg.contrast_threshold, cfg.log_eps);
            check(tuples(got.events()) == want, || {
                format!(
                    "video {i}: {} events vs {} from the reference",
                    got.len(),
                    want.len()
                )
            })?;
        }
        Ok(())
    })();
    verdict(
        2,
        "simulator oracle equivalence",
        start.elapsed(),
        Duration::from_secs(10),
        result,
    );
}

#[test]
fn criterion_03_integration_consistency() {
    let _g = serial();
    let start = Instant::now();
    let cfg = SimConfig::default();
    let c = cfg.contrast_threshold;
    let result = (|| {
        for (i, (video, frames, _)) in simulator_cases().iter().enumerate() {
            let got = simulate_events(video, &cfg).map_err(|e| e.to_string())?;
            let mut sums = [0i64; 64];
            for e in got.events() {
                sums[e.y as usize * 8 + e.x as usize] += e.p as i64;
            }
            for (p, &s) in sums.iter().enumerate() {
                let l0 = (frames[0][p] + cfg.log_eps).ln();
                let l1 = (frames[9][p] + cfg.log_eps).ln();
                let r = (l1 - l0 - c * s as f64).abs();
                check(r < c, || {
                    format!("video {i} pixel {p}: residual {r} >= {c}")
                })?;
            }
        }
        Ok(())
    })();
    verdict(
        3,
        "simulator integration consistency",
        start.elapsed(),
        Duration::from_secs(10),
        result,
    );
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_04_loss_formula_oracles() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = FeatureExtractor::seeded(1, 40);
    let result = (|| {
        let e = |r: eventsr::Result<f64>| r.map_err(|e| e.to_string());
        for case in 0..50 {
            let a = random_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0);
            let b = random_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0);
            let d = random_tensor(&mut rng, &[1, 8, 8], 0.01, 0.99);
            let d2 = random_tensor(&mut rng, &[1, 8, 8], 0.01, 0.99);
            let (ad, bd, dd, d2d) = (a.data(), b.data(), d.data(), d2.data());
            let tag =
                |what: &str, got: f64, want: f64| format!("case {case} {what}: {got} vs {want}");

            let want = -mean(&dd.iter().map(|p| (1.0 - p).ln()).collect::<Vec<_>>());
            let got = e(adversarial_generator_value(&d, GeneratorMode::Paper))?;
            check(rel_close(got, want, 1e-10), || {
                tag("adversarial (paper)", got, want)
            })?;
            let want = -mean(&dd.iter().map(|p| p.ln()).collect::<Vec<_>>());
            let got = e(adversarial_generator_value(
                &d,
                GeneratorMode::NonSaturating,
            ))?;
            check(rel_close(got, want, 1e-10), || {
                tag("adversarial (non-saturating)", got, want)
            })?;
            let want = -mean(&d2d.iter().map(|p| p.ln()).collect::<Vec<_>>())
                - mean(&dd.iter().map(|p| (1.0 - p).ln()).collect::<Vec<_>>());
            let got = e(adversarial_discriminator_value(&d2, &d))?;
            check(rel_close(got, want, 1e-10), || {
                tag("discriminator", got, want)
            })?;
            let (wg, wd) = reference_relativistic(ad, bd);
            let (gg, gd) = relativistic_adversarial_value(&a, &b).map_err(|e| e.to_string())?;
            check(rel_close(gg, wg, 1e-10) && rel_close(gd, wd, 1e-10), || {
                format!("case {case} relativistic: ({gg}, {gd}) vs ({wg}, {wd})")
            })?;

            for alpha in [1.0, 0.6, 0.0] {
                let want = reference_event_similarity(ad, bd, 1, 8, 8, alpha, &phi);
                let got = e(event_similarity_value(&a, &b, alpha, &phi))?;
                check(rel_close(got, want, 1e-10), || {
                    tag(&format!("event similarity a={alpha}"), got, want)
                })?;
            }
            let want = l2(ad, bd);
            let got = e(identity_value(&a, &b))?;
            check(rel_close(got, want, 1e-10), || tag("identity", got, want))?;
            let want = reference_tv(ad, 8, 8);
            let got = e(total_variation_value(&a))?;
            check(rel_close(got, want, 1e-10), || {
                tag("total variation", got, want)
            })?;
        }
        let expected = [(10.0, 5.0, 0.5), (10.0, 5.0, 2.0), (10.0, 5.0, 3.0)];
        for (k, &(l1, l2w, l3)) in (1..=3u8).zip(&expected) {
            let w = PhaseConfig::for_phase(k)
                .map_err(|e| e.to_string())?
                .weights;
            check(
                (w.lambda1, w.lambda2, w.lambda3, w.alpha) == (l1, l2w, l3, 0.6),
                || format!("phase {k} weights {w:?}"),
            )?;
            for _ in 0..100 {
                let c: Vec<f64> = random_values(&mut rng, 4, 0.0, 10.0);
                let want = c[0] + l1 * c[1] + l2w * c[2] + l3 * c[3];
                let got = phase_total(c[0], c[1], c[2], c[3], &w);
                check(rel_close(got, want, 1e-12), || {
                    format!("phase {k} total {got} vs {want}")
                })?;
            }
        }
        Ok(())
    })();
    verdict(
        4,
        "loss formula oracles",
        start.elapsed(),
        Duration::from_secs(10),
        result,
    );
}

/// Analytic gradient of `loss(x)` at `x` against central differences at
/// 20 random coordinates.
fn grad_check(
    name: &str,
    x: &Tensor,
    rng: &mut ChaCha8Rng,
    graph_loss: impl Fn(&mut Graph, eventsr::autograd::Var) -> eventsr::Result<eventsr::autograd::Var>,
    value: impl Fn(&Tensor) -> f64,
) -> Result<(), String> {
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let loss = graph_loss(&mut g, v).map_err(|e| e.to_string())?;
    let grads = g.backward(loss).map_err(|e| e.to_string())?;
    let grad = grads
        .get(v)
        .ok_or_else(|| format!("{name}: no gradient"))?
        .clone();
    let mut coords: Vec<usize> = (0..x.len()).collect();
    coords.shuffle(rng);
    for &i in &coords[..20] {
        let fd = central_difference(x, i, 1e-4, &value);
        let err = relative_error(grad.data()[i], fd);
        check(err < 1e-4, || {
            format!(
                "{name} coord {i}: analytic {} vs numeric {fd} (rel {err:.2e})",
                grad.data()[i]
            )
        })?;
    }
    Ok(())
}

#[test]
fn criterion_05_gradient_checks() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = FeatureExtractor::seeded(1, 50);
    let result = (|| {
        let x = random_tensor(&mut rng, &[1, 1, 8, 8], 0.0, 1.0);
        let y = random_tensor(&mut rng, &[1, 1, 8, 8], 0.0, 1.0);
        for alpha in [1.0, 0.6] {
            let yc = y.clone();
            grad_check(
                &format!("event similarity a={alpha}"),
                &x,
                &mut rng,
                |g, v| {
                    let t = g.constant(yc.clone());
                    event_similarity(g, v, t, alpha, &phi)
                },
                |t| event_similarity_value(t, &y, alpha, &phi).unwrap(),
            )?;
        }
        let yc = y.clone();
        grad_check(
            "identity",
            &x,
            &mut rng,
            |g, v| {
                let t = g.constant(yc.clone());
                identity(g, v, t)
            },
            |t| identity_value(t, &y).unwrap(),
        )?;
        grad_check("total variation", &x, &mut rng, total_variation, |t| {
            total_variation_value(t).unwrap()
        })?;

        let real = random_tensor(&mut rng, &[64], -2.0, 2.0);
        let fake = random_tensor(&mut rng, &[64], -2.0, 2.0);
        for (which, pick) in [("generator", 0usize), ("discriminator", 1)] {
            let (fc, rc) = (fake.clone(), real.clone());
            let sel = move |p: (f64, f64)| if pick == 0 { p.0 } else { p.1 };
            grad_check(
                &format!("relativistic {which} wrt real"),
                &real,
                &mut rng,
                |g, v| {
                    let f = g.constant(fc.clone());
                    let (gl, dl) = relativistic_adversarial(g, v, f)?;
                    Ok(if pick == 0 { gl } else { dl })
                },
                |t| sel(relativistic_adversarial_value(t, &fake).unwrap()),
            )?;
            grad_check(
                &format!("relativistic {which} wrt fake"),
                &fake,
                &mut rng,
                |g, v| {
                    let r = g.constant(rc.clone());
                    let (gl, dl) = relativistic_adversarial(g, r, v)?;
                    Ok(if pick == 0 { gl } else { dl })
                },
                |t| sel(relativistic_adversarial_value(&real, t).unwrap()),
            )?;
        }
        Ok(())
    })();
    verdict(
        5,
        "gradient checks",
        start.elapsed(),
        Duration::from_secs(60),
        result,
    );
}

fn small_phase(phase: u8) -> PhaseConfig {
    let mut c = PhaseConfig::for_phase(phase).unwrap();
    c.events_per_frame = 50;
    c
}

#[test]
fn criterion_06_shapes_and_backprop() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let result = (|| {
        let gs = Params::build(&NetSpec::generator_s(4), 60).map_err(|e| e.to_string())?;
        let fs = Params::build(&NetSpec::feedback_s(3, 4), 61).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let (h, w) = (rng.random_range(2..=24usize), rng.random_range(2..=24usize));
            let x = random_tensor(&mut rng, &[1, 1, h, w], 0.0, 1.0);
            let y = forward_generator_s(&gs, &x).map_err(|e| e.to_string())?;
            check(y.shape() == [1, 1, 4 * h, 4 * w], || {
                format!("G_s {h}x{w} gave {:?}", y.shape())
            })?;
            let back = forward_feedback(&fs, &y).map_err(|e| e.to_string())?;
            check(back.shape() == [1, 3, h, w], || {
                format!("F_s on {:?} gave {:?}", y.shape(), back.shape())
            })?;
        }

        let stack = random_stack(&mut rng, 3, 16, 16);
        let lr_img = random_tensor(&mut rng, &[16, 16], 0.0, 1.0);
        let hr_img = random_tensor(&mut rng, &[64, 64], 0.0, 1.0);
        let err = |e: Error| e.to_string();
        let c1 = small_phase(1);
        let p1 = TrainState::new(&c1, None)
            .map_err(err)?
            .into_checkpoint(&c1, vec![]);
        let c2 = small_phase(2);
        let mut s2 = TrainState::new(&c2, Some(&p1)).map_err(err)?;
        let before = s2.nets["g_r"].clone();
        let batch = Batch::new(&[stack.clone()], &[lr_img]).map_err(err)?;
        train_step(&mut s2, &batch, &c2, &feature_extractor(&c2).map_err(err)?).map_err(err)?;
        let moved = s2.nets["g_r"].max_abs_diff(&before);
        check(moved > 0.0, || "phase-2 step left G_r unchanged".into())?;

        let p2 = s2.into_checkpoint(&c2, vec![]);
        let c3 = small_phase(3);
        let mut s3 = TrainState::new(&c3, Some(&p2)).map_err(err)?;
        let before = s3.nets["g_r"].clone();
        let batch = Batch::new(&[stack], &[hr_img]).map_err(err)?;
        train_step(&mut s3, &batch, &c3, &feature_extractor(&c3).map_err(err)?).map_err(err)?;
        let moved = s3.nets["g_r"].max_abs_diff(&before);
        check(moved > 0.0, || "phase-3 step left G_r unchanged".into())
    })();
    verdict(
        6,
        "shape and back-propagation contracts",
        start.elapsed(),
        Duration::from_secs(60),
        result,
    );
}

#[test]
fn criterion_07_overfit() {
    let _g = serial();
    let start = Instant::now();
    let result = (|| {
        let err = |e: Error| e.to_string();
        let scene = eventsr::sim::scene::MovingScene::random(3);
        let video = scene.video(32, 20, 10_000).map_err(err)?;
        let stream = simulate_events(&video, &SimConfig::default()).map_err(err)?;
        let image = scene.render(32, 0);
        let mut cfg = PhaseConfig::for_phase(1).map_err(err)?;
        cfg.weights.lambda1 = 0.0;
        cfg.weights.lambda2 = 50.0;
        cfg.weights.lambda3 = 0.0;
        cfg.events_per_frame = 500;
        cfg.iterations = 2000;
        let stacks = stacks_from_stream(&stream, cfg.events_per_frame, cfg.frames_per_stack)
            .map_err(err)?
            .into_iter()
            .map(|s| StackItem {
                sequence: 0,
                t_end: s.t_span.1,
                tensor: s.to_tensor(),
            })
            .collect();
        let data = TrainData::new(stacks, vec![image.clone()]).map_err(err)?;
        let mut state = TrainState::new(&cfg, None).map_err(err)?;
        let phi = feature_extractor(&cfg).map_err(err)?;
        let mut sampler = Sampler::new(cfg.seed);
        let mut best = f64::NEG_INFINITY;
        for step in 1..=cfg.iterations {
            let batch = sampler.next_batch(&data, &cfg).map_err(err)?;
            train_step(&mut state, &batch, &cfg, &phi).map_err(err)?;
            if step % 100 == 0 {
                let out =
                    clean_aps(std::slice::from_ref(&image), &state.nets["g_r"]).map_err(err)?;
                best = best.max(psnr(&out[0], &image).map_err(err)?);
                if best > 30.0 {
                    let _ = std::io::stdout().lock().write_all(
                        format!("  overfit reached {best:.2} dB after {step} steps\n").as_bytes(),
                    );
                    return Ok(());
                }
            }
        }
        Err(format!(
            "best PSNR {best:.2} dB after {} steps",
            cfg.iterations
        ))
    })();
    verdict(
        7,
        "overfit convergence",
        start.elapsed(),
        Duration::from_secs(300),
        result,
    );
}

struct DemoRun {
    root: PathBuf,
    elapsed: Duration,
    status: Result<(), String>,
}

fn run_demo(tag: &str) -> DemoRun {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance_demo_{tag}"));
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).unwrap();
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_eventsr"))
        .args(["demo", "--out", "demo", "--seed", "11"])
        .env("EVENTSR_THREADS", "1")
        .current_dir(&root)
        .output();
    let elapsed = start.elapsed();
    let status = match out {
        Ok(o) if o.status.success() => Ok(()),
        Ok(o) => Err(format!(
            "demo exited with {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
                .lines()
                .last()
                .unwrap_or("")
        )),
        Err(e) => Err(format!("could not start the binary: {e}")),
    };
    DemoRun {
        root,
        elapsed,
        status,
    }
}

fn first_demo() -> &'static DemoRun {
    static RUN: OnceLock<DemoRun> = OnceLock::new();
    RUN.get_or_init(|| run_demo("a"))
}

fn check_demo(run: &DemoRun) -> Result<(), String> {
    run.status.clone()?;
    let demo = run.root.join("demo");
    for k in 1..=3 {
        let text = fs::read_to_string(demo.join(format!("ckpt_phase{k}/loss_log.csv")))
            .map_err(|e| e.to_string())?;
        let log = parse_loss_log(&text).map_err(|e| e.to_string())?;
        check(log.len() == 200, || {
            format!("phase {k} logged {} steps", log.len())
        })?;
        let (first, last) = eventsr::commands::loss_trend(&log, 50).unwrap();
        check(last < first, || {
            format!("phase {k}: trailing mean {last} not below leading mean {first}")
        })?;
    }
    let stacks: Vec<_> = fs::read_dir(demo.join("stacks"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tns"))
        .collect();
    check(!stacks.is_empty(), || "no stacks written".into())?;
    for p in &stacks {
        let (t, _) = Tensor::load(p).map_err(|e| e.to_string())?;
        check(t.shape() == [3, 32, 32], || {
            format!("{} is {:?}", p.display(), t.shape())
        })?;
    }
    let sr: Vec<_> = fs::read_dir(demo.join("run/recon/phase3"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    check(!sr.is_empty(), || "no super-resolved outputs".into())?;
    for p in &sr {
        let img = load_png(p).map_err(|e| e.to_string())?;
        check(img.hw() == (128, 128), || {
            format!("{} is {:?}", p.display(), img.hw())
        })?;
    }
    for f in ["report.csv", "report.json"] {
        check(demo.join("run").join(f).is_file(), || {
            format!("missing {f}")
        })?;
    }
    Ok(())
}

#[test]
fn criterion_08_end_to_end_smoke() {
    let _g = serial();
    let run = first_demo();
    verdict(
        8,
        "end-to-end demo",
        run.elapsed,
        Duration::from_secs(15 * 60),
        check_demo(run),
    );
}

/// Every file under `dir`, relative path and bytes, sorted.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut todo = vec![dir.to_path_buf()];
    while let Some(d) = todo.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                todo.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_09_determinism() {
    let _g = serial();
    let a = first_demo();
    let b = run_demo("b");
    let elapsed = a.elapsed + b.elapsed;
    let result = (|| {
        a.status.clone()?;
        b.status.clone()?;
        let (da, db) = (a.root.join("demo"), b.root.join("demo"));
        for k in 1..=3 {
            let sub = format!("ckpt_phase{k}");
            let (ta, tb) = (tree(&da.join(&sub)), tree(&db.join(&sub)));
            check(!ta.is_empty() && ta == tb, || {
                format!("{sub} differs between runs")
            })?;
        }
        for f in ["run/report.csv", "run/report.json"] {
            let (x, y) = (fs::read(da.join(f)), fs::read(db.join(f)));
            check(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), || {
                format!("{f} differs between runs")
            })?;
        }
        Ok(())
    })();
    verdict(
        9,
        "determinism",
        elapsed,
        Duration::from_secs(30 * 60),
        result,
    );
}

#[test]
fn criterion_10_metric_sanity() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let result = (|| {
        for case in 0..20 {
            let (h, w) = (rng.random_range(8..40usize), rng.random_range(8..40usize));
            let a = random_tensor(&mut rng, &[h, w], 0.0, 1.0);
            let b = a.map(|v| v + 0.1);
            let p = psnr(&a, &b).map_err(|e| e.to_string())?;
            check(p == 20.0, || format!("case {case}: psnr {p:?}"))?;
            let s = ssim(&a, &a).map_err(|e| e.to_string())?;
            check((s - 1.0).abs() <= 1e-9, || {
                format!("case {case}: ssim(a, a) = {s:?}")
            })?;
        }
        for case in 0..200 {
            let mut recon: Vec<u64> = (0..rng.random_range(1..40))
                .map(|_| rng.random_range(0..10_000))
                .collect();
            let mut aps: Vec<u64> = (0..rng.random_range(1..40))
                .map(|_| rng.random_range(0..10_000))
                .collect();
            if case % 4 == 0 {
                // Coarse grid to force equal distances and duplicate references.
                recon.iter_mut().for_each(|t| *t = *t / 1000 * 1000);
                aps.iter_mut().for_each(|t| *t = *t / 2000 * 2000 + 500);
            }
            recon.sort_unstable();
            aps.sort_unstable();
            let pairs = match_by_timestamp(&recon, &aps).map_err(|e| e.to_string())?;
            check(pairs.len() == recon.len(), || {
                format!("list {case}: {} pairs", pairs.len())
            })?;
            for p in &pairs {
                let want = exhaustive_match(recon[p.recon], &aps);
                check(
                    p.aps == want && p.dt_us == recon[p.recon].abs_diff(aps[want]),
                    || {
                        format!(
                            "list {case}: recon {} paired with {} not {want}",
                            p.recon, p.aps
                        )
                    },
                )?;
            }
        }
        Ok(())
    })();
    verdict(
        10,
        "metric sanity",
        start.elapsed(),
        Duration::from_secs(10),
        result,
    );
}

#[test]
fn criterion_11_format_round_trips() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let result = (|| {
        for case in 0..100 {
            let len = rng.random_range(0..2000);
            let (w, h) = (rng.random_range(1..=640), rng.random_range(1..=480));
            let stream = random_stream(&mut rng, len, w, h);
            let mut first = Vec::new();
            write_evt1(&stream, &mut first).map_err(|e| e.to_string())?;
            let back = read_evt1(first.as_slice()).map_err(|e| e.to_string())?;
            let mut second = Vec::new();
            write_evt1(&back, &mut second).map_err(|e| e.to_string())?;
            check(first == second, || {
                format!("EVT1 payload {case} changed on rewrite")
            })?;

            let ndim = rng.random_range(0..=4);
            let shape: Vec<usize> = (0..ndim).map(|_| rng.random_range(1..6)).collect();
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape, random_values(&mut rng, n, -1e6, 1e6)).unwrap();
            for dtype in [DType::F32, DType::F64] {
                let mut first = Vec::new();
                t.write_tns(&mut first, dtype).map_err(|e| e.to_string())?;
                let (back, d) = Tensor::read_tns(first.as_slice()).map_err(|e| e.to_string())?;
                let mut second = Vec::new();
                back.write_tns(&mut second, d).map_err(|e| e.to_string())?;
                check(first == second, || {
                    format!("TNS1 payload {case} ({dtype:?}) changed on rewrite")
                })?;
            }
        }
        Ok(())
    })();
    verdict(
        11,
        "format round trips",
        start.elapsed(),
        Duration::from_secs(10),
        result,
    );
}

#[test]
fn criterion_12_config_fidelity() {
    let _g = serial();
    let start = Instant::now();
    let result = (|| {
        let lambdas = [(10.0, 5.0, 0.5), (10.0, 5.0, 2.0), (10.0, 5.0, 3.0)];
        for (k, &(l1, l2, l3)) in (1..=3u8).zip(&lambdas) {
            let c = PhaseConfig::for_phase(k).map_err(|e| e.to_string())?;
            check(c.weights.alpha == 0.6, || {
                format!("phase {k} alpha {}", c.weights.alpha)
            })?;
            check(
                (c.weights.lambda1, c.weights.lambda2, c.weights.lambda3) == (l1, l2, l3),
                || format!("phase {k} lambdas {:?}", c.weights),
            )?;
            check((c.adam.beta1, c.adam.beta2) == (0.9, 0.999), || {
                format!("phase {k} betas {:?}", c.adam)
            })?;
            check(c.batch == 1, || format!("phase {k} batch {}", c.batch))?;
            check(
                (c.events_per_frame, c.frames_per_stack) == (10_000, 3),
                || {
                    format!(
                        "phase {k} stacking ({}, {})",
                        c.events_per_frame, c.frames_per_stack
                    )
                },
            )?;
            let mode = if k == 3 {
                AdvMode::Relativistic
            } else {
                AdvMode::Standard
            };
            check(c.adv_mode == mode, || {
                format!("phase {k} adversarial mode {:?}", c.adv_mode)
            })?;
        }
        check(
            (DEFAULT_EVENTS_PER_FRAME, DEFAULT_FRAMES_PER_STACK) == (10_000, 3),
            || "stacking defaults".into(),
        )
    })();
    verdict(
        12,
        "config fidelity",
        start.elapsed(),
        Duration::from_secs(1),
        result,
    );
}
