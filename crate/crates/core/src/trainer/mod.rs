//! Phase-to-phase training.
//!
//! Phase `k` trains the cascade `G_r`, `G_d(G_r)`, `G_s(G_d(G_r))` up to its
//! own generator, together with that phase's discriminator and feedback
//! network. New networks start from `Params::build(spec, network_seed(..))`;
//! earlier generators come from the previous checkpoint and keep training.

mod checkpoint;
mod config;
mod data;

pub use checkpoint::{
    loss_log_csv, parse_loss_log, Checkpoint, CONFIG_FILE, LOSS_LOG_FILE, SPEC_FILE,
};
pub use config::{parse_pair, parse_pairs, PhaseConfig, CONFIG_KEYS};
pub use data::{
    augment, load_event_stacks, load_manifest, load_targets, stacks_from_stream, AugDraw,
    StackItem, TrainData,
};

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_discriminator_logits, adversarial_generator_logits, as_batch, event_similarity,
    identity, phase_total, phase_total_graph, relativistic_adversarial, total_variation,
    FeatureExtractor,
};
use crate::networks::{forward_generator_rd, AdvMode, Bound, NetSpec, Params};
use crate::optim::Adam;
use crate::sim::{downsample_bicubic, AssetKind};
use crate::tensor::Tensor;

/// Loss history kept on a [`TrainState`].
pub const HISTORY_LEN: usize = 256;

/// One generator step's loss components and weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub adv: f64,
    pub sim: f64,
    pub id: f64,
    pub var: f64,
    pub total: f64,
}

/// The generator trained in `phase`: `g_r`, `g_d` or `g_s`.
pub fn generator_name(phase: u8) -> &'static str {
    ["g_r", "g_d", "g_s"][phase as usize - 1]
}

pub fn discriminator_name(phase: u8) -> &'static str {
    ["d_r", "d_d", "d_s"][phase as usize - 1]
}

pub fn feedback_name(phase: u8) -> &'static str {
    ["f_r", "f_d", "f_s"][phase as usize - 1]
}

/// Generators of phases `1..=phase`, in application order.
pub fn cascade(phase: u8) -> &'static [&'static str] {
    &["g_r", "g_d", "g_s"][..phase as usize]
}

/// Initialization seed of a network, derived from the run seed and its name.
pub fn network_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Spec of the network `name` under `cfg`.
pub fn network_spec(cfg: &PhaseConfig, name: &str) -> Result<NetSpec> {
    let n = cfg.frames_per_stack;
    let spec = match name {
        "g_r" => NetSpec::generator_rd(n).with_width(cfg.channels, cfg.g_blocks),
        "g_d" => NetSpec::generator_rd(1).with_width(cfg.channels, cfg.g_blocks),
        "g_s" => NetSpec::generator_s(cfg.scale).with_width(cfg.channels, cfg.g_blocks),
        "d_r" | "d_d" | "d_s" => NetSpec::discriminator().with_width(cfg.channels, cfg.d_stages),
        "f_r" | "f_d" => NetSpec::feedback(n).with_width(cfg.channels, cfg.f_blocks),
        "f_s" => NetSpec::feedback_s(n, cfg.scale).with_width(cfg.channels, cfg.f_blocks),
        other => return Err(Error::InvalidArgument(format!("unknown network {other:?}"))),
    };
    spec.validate()?;
    Ok(spec)
}

/// A batch in NCHW layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B, n, h, w]`.
    pub stacks: Tensor,
    /// `[B, 1, H, W]` with `H = h` (phases 1, 2) or `H = scale * h` (phase 3).
    pub targets: Tensor,
}

impl Batch {
    pub fn new(stacks: &[Tensor], targets: &[Tensor]) -> Result<Self> {
        let lift = |items: &[Tensor]| -> Result<Tensor> {
            let b: Vec<Tensor> = items.iter().map(as_batch).collect::<Result<_>>()?;
            let first = b
                .first()
                .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
            let s = first.shape().to_vec();
            let mut data = Vec::with_capacity(first.len() * b.len());
            for t in &b {
                if t.shape() != s.as_slice() {
                    return Err(Error::Shape(format!(
                        "batch items differ: {:?} vs {s:?}",
                        t.shape()
                    )));
                }
                data.extend_from_slice(t.data());
            }
            Tensor::new(vec![b.len(), s[1], s[2], s[3]], data)
        };
        let batch = Self {
            stacks: lift(stacks)?,
            targets: lift(targets)?,
        };
        if batch.stacks.shape()[0] != batch.targets.shape()[0] {
            return Err(Error::Shape(
                "stacks and targets need the same batch size".into(),
            ));
        }
        Ok(batch)
    }
}

/// Parameters and optimizer state of every active network.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub phase: u8,
    pub nets: BTreeMap<String, Params>,
    pub optim: BTreeMap<String, Adam>,
    pub step: u64,
    pub history: VecDeque<LossRecord>,
}

impl TrainState {
    /// Fresh networks for `cfg.phase`, earlier generators from `init`.
    pub fn new(cfg: &PhaseConfig, init: Option<&Checkpoint>) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.phase;
        let mut nets = BTreeMap::new();
        match (k, init) {
            (1, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "phase 1 trains from scratch; drop --init".into(),
                ));
            }
            (1, None) => {}
            (_, None) => {
                return Err(Error::Checkpoint(format!(
                    "phase {k} requires a phase {} checkpoint",
                    k - 1
                )));
            }
            (_, Some(ck)) => {
                if ck.phase + 1 != k {
                    return Err(Error::Checkpoint(format!(
                        "phase {k} needs a phase {} checkpoint, got phase {}",
                        k - 1,
                        ck.phase
                    )));
                }
                for name in cascade(k - 1) {
                    let p = ck.net(name)?.clone();
                    if *name == "g_r" && p.spec().in_channels != cfg.frames_per_stack {
                        return Err(Error::Shape(format!(
                            "checkpoint G_r takes {} frames, config stacks {}",
                            p.spec().in_channels,
                            cfg.frames_per_stack
                        )));
                    }
                    nets.insert(name.to_string(), p);
                }
            }
        }
        let mut fresh = vec![generator_name(k)];
        if !cfg.ablate_d {
            fresh.push(discriminator_name(k));
        }
        if !cfg.ablate_f {
            fresh.push(feedback_name(k));
        }
        for name in fresh {
            let spec = network_spec(cfg, name)?;
            nets.insert(
                name.to_string(),
                Params::build(&spec, network_seed(cfg.seed, name))?,
            );
        }
        let optim = nets
            .iter()
            .map(|(n, p)| (n.clone(), Adam::new(p, cfg.adam)))
            .collect();
        Ok(Self {
            phase: k,
            nets,
            optim,
            step: 0,
            history: VecDeque::with_capacity(HISTORY_LEN),
        })
    }

    fn net(&self, name: &str) -> Result<&Params> {
        self.nets
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("training state lacks {name}")))
    }

    fn apply(
        &mut self,
        bound: &Bound,
        name: &str,
        grads: &mut crate::autograd::Gradients,
        lr: f64,
    ) -> Result<()> {
        let g: BTreeMap<String, Tensor> = bound
            .vars()
            .filter_map(|(n, v)| grads.take(*v).map(|t| (n.clone(), t)))
            .collect();
        let params = self.nets.get_mut(name).expect("bound from this state");
        let opt = self.optim.get_mut(name).expect("optimizer per network");
        opt.update(params, &g, lr)
    }

    pub fn into_checkpoint(self, cfg: &PhaseConfig, log: Vec<LossRecord>) -> Checkpoint {
        Checkpoint {
            phase: self.phase,
            config: cfg.clone(),
            nets: self.nets,
            optim: self.optim,
            log,
        }
    }
}

fn run_cascade(g: &mut Graph, gens: &[Bound], x: Var) -> Result<Var> {
    gens.iter().try_fold(x, |h, b| b.forward(g, h))
}

fn check_finite(step: u64, what: &str, values: &[(&str, f64)], lr: f64) -> Result<()> {
    if values.iter().all(|(_, v)| v.is_finite()) {
        return Ok(());
    }
    let parts: Vec<String> = values.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Err(Error::NonFinite {
        step,
        snapshot: format!("{what}: {} lr={lr}", parts.join(" ")),
    })
}

/// Identity-path inputs: targets as they are (phases 1, 2) or downsampled
/// to stack resolution (phase 3).
fn identity_inputs(targets: &Tensor, cfg: &PhaseConfig) -> Result<Tensor> {
    if cfg.phase < 3 {
        return Ok(targets.clone());
    }
    let s = targets.shape();
    let (b, h, w) = (s[0], s[2], s[3]);
    let mut items = Vec::with_capacity(b);
    for i in 0..b {
        let img = Tensor::new(
            vec![h, w],
            targets.data()[i * h * w..(i + 1) * h * w].to_vec(),
        )?;
        items.push(downsample_bicubic(&img, cfg.scale)?);
    }
    let (ho, wo) = items[0].hw();
    Tensor::new(
        vec![b, 1, ho, wo],
        items.into_iter().flat_map(Tensor::into_data).collect(),
    )
}

/// One discriminator update followed by one update of the cascade and the
/// feedback network. Returns the generator-side loss record.
pub fn train_step(
    state: &mut TrainState,
    batch: &Batch,
    cfg: &PhaseConfig,
    phi: &FeatureExtractor,
) -> Result<LossRecord> {
    let k = cfg.phase;
    if state.phase != k {
        return Err(Error::InvalidArgument(format!(
            "state is phase {}, config phase {k}",
            state.phase
        )));
    }
    let n = cfg.frames_per_stack;
    let bs = batch.stacks.shape();
    if bs[1] != n {
        return Err(Error::Shape(format!(
            "stack has {} frames, config expects {n}",
            bs[1]
        )));
    }
    let up = if k == 3 { cfg.scale } else { 1 };
    let ts = batch.targets.shape();
    if ts[1] != 1 || ts[2] != bs[2] * up || ts[3] != bs[3] * up {
        return Err(Error::Shape(format!(
            "phase {k} targets must be [B, 1, {}, {}], got {ts:?}",
            bs[2] * up,
            bs[3] * up
        )));
    }
    let lr = cfg.lr_at(state.step);
    let gens = cascade(k);
    let (d_name, f_name) = (discriminator_name(k), feedback_name(k));

    if !cfg.ablate_d {
        let mut g = Graph::new();
        let x = g.constant(batch.stacks.clone());
        let frozen: Vec<Bound> = gens
            .iter()
            .map(|name| Ok(state.net(name)?.bind(&mut g, false)))
            .collect::<Result<_>>()?;
        let fake = run_cascade(&mut g, &frozen, x)?;
        let real = g.constant(batch.targets.clone());
        let d = state.net(d_name)?.bind(&mut g, true);
        let lr_real = d.forward(&mut g, real)?;
        let lr_fake = d.forward(&mut g, fake)?;
        let loss = match cfg.adv_mode {
            AdvMode::Standard => adversarial_discriminator_logits(&mut g, lr_real, lr_fake)?,
            AdvMode::Relativistic => relativistic_adversarial(&mut g, lr_real, lr_fake)?.1,
        };
        check_finite(
            state.step,
            "discriminator",
            &[("d_loss", g.scalar(loss))],
            lr,
        )?;
        let mut grads = g.backward(loss)?;
        state.apply(&d, d_name, &mut grads, lr)?;
    }

    let mut g = Graph::new();
    let x = g.constant(batch.stacks.clone());
    let bound: Vec<Bound> = gens
        .iter()
        .map(|name| Ok(state.net(name)?.bind(&mut g, true)))
        .collect::<Result<_>>()?;
    let fake = run_cascade(&mut g, &bound, x)?;
    let real = g.constant(batch.targets.clone());

    let adv = if cfg.ablate_d {
        g.constant(Tensor::zeros(&[]))
    } else {
        let d = state.net(d_name)?.bind(&mut g, false);
        let c_fake = d.forward(&mut g, fake)?;
        match cfg.adv_mode {
            AdvMode::Standard => adversarial_generator_logits(&mut g, c_fake, cfg.gen_mode),
            AdvMode::Relativistic => {
                let c_real = d.forward(&mut g, real)?;
                relativistic_adversarial(&mut g, c_real, c_fake)?.0
            }
        }
    };
    let (sim, f_bound) = if cfg.ablate_f {
        (g.constant(Tensor::zeros(&[])), None)
    } else {
        let f = state.net(f_name)?.bind(&mut g, true);
        let rec = f.forward(&mut g, fake)?;
        (
            event_similarity(&mut g, rec, x, cfg.weights.alpha, phi)?,
            Some(f),
        )
    };
    let id_in = g.constant(identity_inputs(&batch.targets, cfg)?);
    let id_in = g.repeat_channels(id_in, n)?;
    let id_out = run_cascade(&mut g, &bound, id_in)?;
    let id = identity(&mut g, id_out, real)?;
    let var = total_variation(&mut g, fake)?;
    let total = phase_total_graph(&mut g, adv, sim, id, var, &cfg.weights)?;

    let (a, s, i, v) = (g.scalar(adv), g.scalar(sim), g.scalar(id), g.scalar(var));
    let record = LossRecord {
        step: state.step,
        adv: a,
        sim: s,
        id: i,
        var: v,
        total: phase_total(a, s, i, v, &cfg.weights),
    };
    check_finite(
        state.step,
        "generator",
        &[
            ("adv", a),
            ("sim", s),
            ("id", i),
            ("var", v),
            ("total", g.scalar(total)),
        ],
        lr,
    )?;
    let mut grads = g.backward(total)?;
    for (name, b) in gens.iter().zip(&bound) {
        state.apply(b, name, &mut grads, lr)?;
    }
    if let Some(f) = f_bound {
        state.apply(&f, f_name, &mut grads, lr)?;
    }

    state.step += 1;
    if state.history.len() == HISTORY_LEN {
        state.history.pop_front();
    }
    state.history.push_back(record);
    Ok(record)
}

/// Fixed feature extractor for the event similarity term.
pub fn feature_extractor(cfg: &PhaseConfig) -> Result<FeatureExtractor> {
    FeatureExtractor::seeded(cfg.frames_per_stack, cfg.feature_seed).with_layer(cfg.feature_layer)
}

/// Deterministic batch order: stacks visited in per-epoch shuffled order,
/// targets drawn uniformly with replacement.
pub struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(network_seed(seed, "data")),
            order: Vec::new(),
            cursor: 0,
        }
    }

    pub fn next_batch(&mut self, data: &TrainData, cfg: &PhaseConfig) -> Result<Batch> {
        let mut stacks = Vec::with_capacity(cfg.batch);
        let mut targets = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            if self.cursor == self.order.len() {
                self.order = (0..data.stacks.len()).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let s = &data.stacks[self.order[self.cursor]].tensor;
            self.cursor += 1;
            let t = &data.targets[self.rng.random_range(0..data.targets.len())];
            let (s, t) = if cfg.augment {
                augment(s, t, &mut self.rng)?
            } else {
                (s.clone(), t.clone())
            };
            stacks.push(s);
            targets.push(t);
        }
        Batch::new(&stacks, &targets)
    }
}

/// Runs `cfg.iterations` steps and returns the resulting checkpoint.
pub fn train_phase(
    data: &TrainData,
    cfg: &PhaseConfig,
    init: Option<&Checkpoint>,
) -> Result<Checkpoint> {
    train_phase_with(data, cfg, init, |_| {})
}

/// [`train_phase`] with a callback after every step.
pub fn train_phase_with(
    data: &TrainData,
    cfg: &PhaseConfig,
    init: Option<&Checkpoint>,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<Checkpoint> {
    let (n, h, w) = data.stack_dims();
    if n != cfg.frames_per_stack {
        return Err(Error::Shape(format!(
            "stacks have {n} frames, config expects {}",
            cfg.frames_per_stack
        )));
    }
    let up = if cfg.phase == 3 { cfg.scale } else { 1 };
    if data.target_dims() != (h * up, w * up) {
        return Err(Error::Shape(format!(
            "phase {} targets are {:?}, expected {:?}",
            cfg.phase,
            data.target_dims(),
            (h * up, w * up)
        )));
    }
    let mut state = TrainState::new(cfg, init)?;
    let phi = feature_extractor(cfg)?;
    let mut sampler = Sampler::new(cfg.seed);
    let mut log = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let batch = sampler.next_batch(data, cfg)?;
        let rec = train_step(&mut state, &batch, cfg, &phi)?;
        on_step(&rec);
        log.push(rec);
    }
    Ok(state.into_checkpoint(cfg, log))
}

/// Default target asset kind per phase.
pub fn default_target_kind(phase: u8) -> AssetKind {
    match phase {
        1 => AssetKind::Clean,
        2 => AssetKind::Clean,
        _ => AssetKind::Hr,
    }
}

/// Loads the stacks and targets named by `cfg.data` and `cfg.targets`.
pub fn load_train_data(cfg: &PhaseConfig) -> Result<TrainData> {
    if cfg.data.is_empty() {
        return Err(Error::Config(
            "no event data given (set data=<manifest>)".into(),
        ));
    }
    let mut stacks = Vec::new();
    for p in &cfg.data {
        stacks.extend(load_event_stacks(
            &load_manifest(p)?,
            cfg.events_per_frame,
            cfg.frames_per_stack,
        )?);
    }
    let tpath = cfg.targets.as_ref().ok_or_else(|| {
        Error::Config("no target images given (set targets=<manifest or dir>)".into())
    })?;
    let kind = cfg.target_kind.unwrap_or(default_target_kind(cfg.phase));
    TrainData::new(stacks, load_targets(tpath, kind)?)
}

/// Passes each image through `G_r` on the identity path (tiled to the
/// stack depth). Outputs keep the input order and size.
pub fn clean_aps(images: &[Tensor], g_r: &Params) -> Result<Vec<Tensor>> {
    let n = g_r.spec().in_channels;
    images
        .iter()
        .map(|img| {
            let (h, w) = match *img.shape() {
                [h, w] => (h, w),
                ref s => return Err(Error::Shape(format!("APS images are HxW, got {s:?}"))),
            };
            let tiled = Tensor::from_fn(&[1, n, h, w], |i| img.data()[i % (h * w)]);
            forward_generator_rd(g_r, &tiled)?.reshape(&[h, w])
        })
        .collect()
}

/// Sum of the three per-phase totals; logged, never optimised.
pub fn total_end_to_end_loss(records: &[LossRecord; 3]) -> f64 {
    records.iter().map(|r| r.total).sum()
}
