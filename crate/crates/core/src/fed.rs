//! Federated loop: local training (plain, Stage 1, Stage 2), participation
//! sampling and size-weighted FedAvg.

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, HeadError};
use crate::feature_store::FeatureDataset;
use crate::heads::{ova_grad, softmax_grad, ClassMask, HeadKind, HeadModel};
use crate::metrics::{accuracy, head_wire_bytes};
use crate::noise::{inject_noise, NoiseKind, NoiseSpec};
use crate::optimizer::{Optimizer, OptimizerConfig};
use crate::partition::{partition, Partition, Scheme};
use crate::seeding::{self, tag};

/// Training arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Softmax linear probe.
    LpSoftmax,
    /// OvA heads trained on every pair from round one.
    OvaPlain,
    /// OvA heads with the positive-only then anchored schedule.
    #[serde(rename = "ova-2stage")]
    OvaTwoStage,
}

pub const METHOD_CHOICES: &str = "lp-softmax, ova-plain, ova-2stage";

impl Method {
    pub const ALL: [Method; 3] = [Method::LpSoftmax, Method::OvaPlain, Method::OvaTwoStage];

    pub fn head_kind(self) -> HeadKind {
        match self {
            Method::LpSoftmax => HeadKind::Softmax,
            Method::OvaPlain | Method::OvaTwoStage => HeadKind::Ova,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::LpSoftmax => "lp-softmax",
            Method::OvaPlain => "ova-plain",
            Method::OvaTwoStage => "ova-2stage",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| format!("unknown method `{s}`; choices: {METHOD_CHOICES}"))
    }
}

/// Which local procedure a round runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Plain,
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage1_rounds: usize,
    /// Share of each class's local positives kept as anchors in Stage 2.
    pub anchor_fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Redraw anchors every epoch instead of once per round.
    pub anchors_per_epoch: bool,
    pub anchor_rounding: AnchorRounding,
}

/// How `fraction · n_c` becomes an integer anchor count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorRounding {
    /// `⌈fraction · n_c⌉`: every local class keeps at least one anchor when
    /// the fraction is positive.
    Ceil,
    /// `⌊fraction · n_c⌋` plus one more with probability equal to the
    /// remainder, so the expected count is exactly `fraction · n_c`.
    Stochastic,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            stage1_rounds: 1,
            anchor_fraction: 0.1,
            local_epochs: 3,
            batch_size: 50,
            anchors_per_epoch: false,
            anchor_rounding: AnchorRounding::Stochastic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeadInit {
    Zeros,
    Gaussian { std: f64 },
}

/// Label noise applied to client training labels; the seed comes from the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSetting {
    pub kind: NoiseKind,
    pub ratio: f64,
}

impl NoiseSetting {
    pub fn slug(&self) -> String {
        let kind = match self.kind {
            NoiseKind::Symmetric => "sym",
            NoiseKind::Asymmetric => "asym",
        };
        format!("{kind}{}", self.ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub rounds: usize,
    pub num_clients: usize,
    pub participation: f64,
    pub seeds: Vec<u64>,
    pub method: Method,
    pub stage: StageConfig,
    pub optimizer: OptimizerConfig,
    /// Fresh optimizer state at the start of every round.
    pub reset_optimizer: bool,
    pub bias: bool,
    pub init: HeadInit,
    pub scheme: Scheme,
    pub noise: Option<NoiseSetting>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            num_clients: 100,
            participation: 1.0,
            seeds: vec![0, 42, 777, 1337, 15254],
            method: Method::OvaTwoStage,
            stage: StageConfig::default(),
            optimizer: OptimizerConfig::default(),
            reset_optimizer: true,
            bias: true,
            init: HeadInit::Zeros,
            scheme: Scheme::Iid,
            noise: None,
        }
    }
}

impl RunConfig {
    pub fn stage_for(&self, round: usize) -> Stage {
        match self.method {
            Method::OvaTwoStage if round < self.stage.stage1_rounds => Stage::Stage1,
            Method::OvaTwoStage => Stage::Stage2,
            _ => Stage::Plain,
        }
    }

    pub fn participants_per_round(&self) -> usize {
        ((self.participation * self.num_clients as f64).ceil() as usize).clamp(1, self.num_clients)
    }
}

/// One client's local data (features widened to f64 once).
#[derive(Debug, Clone)]
pub struct ClientData {
    pub id: usize,
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
}

impl ClientData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn from_indices(id: usize, dataset: &FeatureDataset, labels: &[u32], indices: &[usize]) -> Self {
        Self {
            id,
            features: dataset.features().select(Axis(0), indices).mapv(f64::from),
            labels: indices.iter().map(|&i| labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub head: HeadModel,
    pub num_samples: usize,
    pub wall_seconds: f64,
    pub bytes_up: u64,
}

/// Everything local training needs besides the data and the global head.
#[derive(Debug, Clone, Copy)]
pub struct LocalContext<'a> {
    pub stage: &'a StageConfig,
    pub seed: u64,
    pub round: usize,
}

fn batch_gradient(
    model: &HeadModel,
    features: &Array2<f64>,
    labels: &[u32],
    mask: Option<&ClassMask>,
) -> Result<crate::heads::BatchGradient, HeadError> {
    match (model.kind, mask) {
        (HeadKind::Softmax, _) => softmax_grad(model, features.view(), labels),
        (HeadKind::Ova, Some(m)) => ova_grad(model, features.view(), labels, m),
        (HeadKind::Ova, None) => ova_grad(model, features.view(), labels, &ClassMask::All),
    }
}

/// Anchor subset of each local class's positives, drawn from `rng`.
fn draw_anchors(
    labels: &[u32],
    num_classes: usize,
    fraction: f64,
    rounding: AnchorRounding,
    rng: &mut seeding::SimRng,
) -> Vec<bool> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    let mut anchor = vec![false; labels.len()];
    for idx in by_class.iter_mut().filter(|v| !v.is_empty()) {
        let exact = fraction * idx.len() as f64;
        let take = match rounding {
            AnchorRounding::Ceil => exact.ceil() as usize,
            AnchorRounding::Stochastic => {
                let base = exact.floor();
                base as usize + usize::from(rng.random::<f64>() < exact - base)
            }
        }
        .min(idx.len());
        let (chosen, _) = idx.partial_shuffle(rng, take);
        for &i in chosen.iter() {
            anchor[i] = true;
        }
    }
    anchor
}

fn train_local(
    global: &HeadModel,
    client: &ClientData,
    stage: Stage,
    ctx: LocalContext<'_>,
    optimizer: &mut Optimizer,
) -> Result<ClientUpdate, Error> {
    let start = Instant::now();
    if stage != Stage::Plain {
        global.require(HeadKind::Ova)?;
    }
    let mut head = global.clone();
    let n = client.len();
    let cfg = ctx.stage;
    let client_tag = client.id as u64;
    let round_tag = ctx.round as u64;
    let mut order_rng = seeding::rng_from(ctx.seed, &[tag::CLIENT, round_tag, client_tag]);
    let mut anchors = None;
    if n > 0 {
        for epoch in 0..cfg.local_epochs {
            if stage == Stage::Stage2 && (anchors.is_none() || cfg.anchors_per_epoch) {
                let mut parts = vec![tag::ANCHOR, round_tag, client_tag];
                if cfg.anchors_per_epoch {
                    parts.push(epoch as u64);
                }
                let mut rng = seeding::rng_from(ctx.seed, &parts);
                anchors = Some(draw_anchors(
                    &client.labels,
                    head.num_classes(),
                    cfg.anchor_fraction,
                    cfg.anchor_rounding,
                    &mut rng,
                ));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut order_rng);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                let x = client.features.select(Axis(0), batch);
                let y: Vec<u32> = batch.iter().map(|&i| client.labels[i]).collect();
                let mask = match stage {
                    Stage::Plain => None,
                    Stage::Stage1 => Some(ClassMask::OwnLabel),
                    Stage::Stage2 => {
                        let a = anchors.as_ref().expect("anchors drawn");
                        let k = head.num_classes();
                        Some(ClassMask::Pairs(Array2::from_shape_fn((batch.len(), k), |(r, c)| {
                            c != y[r] as usize || a[batch[r]]
                        })))
                    }
                };
                let grad = batch_gradient(&head, &x, &y, mask.as_ref())?;
                optimizer.step(&mut head, &grad)?;
            }
        }
    }
    Ok(ClientUpdate {
        client_id: client.id,
        bytes_up: head_wire_bytes(&head),
        head,
        num_samples: n,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Positive-only local training: each sample updates only its own label's head.
pub fn local_train_stage1(
    global: &HeadModel,
    client: &ClientData,
    ctx: LocalContext<'_>,
    opt: &OptimizerConfig,
) -> Result<ClientUpdate, Error> {
    let mut o = Optimizer::new(opt, global);
    train_local(global, client, Stage::Stage1, ctx, &mut o)
}

/// Anchored local training: head `c` sees every non-`c` sample as a negative
/// and only the anchor subset of its own positives.
pub fn local_train_stage2(
    global: &HeadModel,
    client: &ClientData,
    ctx: LocalContext<'_>,
    opt: &OptimizerConfig,
) -> Result<ClientUpdate, Error> {
    let mut o = Optimizer::new(opt, global);
    train_local(global, client, Stage::Stage2, ctx, &mut o)
}

/// Ordinary mini-batch training (cross-entropy or full-mask OvA).
pub fn local_train_plain(
    global: &HeadModel,
    client: &ClientData,
    ctx: LocalContext<'_>,
    opt: &OptimizerConfig,
) -> Result<ClientUpdate, Error> {
    let mut o = Optimizer::new(opt, global);
    train_local(global, client, Stage::Plain, ctx, &mut o)
}

/// Weighted mean with weights `n_i / Σn`, summed in ascending client id.
/// Returns `fallback` when no update carries samples.
pub fn fedavg(updates: &[ClientUpdate], fallback: &HeadModel) -> Result<HeadModel, HeadError> {
    for u in updates {
        if !u.head.same_shape(fallback) {
            return Err(HeadError::Shape(format!(
                "update from client {} has shape {:?}, expected {:?}",
                u.client_id,
                u.head.weights.dim(),
                fallback.weights.dim()
            )));
        }
    }
    let total: usize = updates.iter().map(|u| u.num_samples).sum();
    if total == 0 {
        return Ok(fallback.clone());
    }
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    let mut out = HeadModel {
        weights: Array2::zeros(fallback.weights.dim()),
        bias: fallback.bias.as_ref().map(|b| ndarray::Array1::zeros(b.len())),
        kind: fallback.kind,
    };
    for u in ordered.into_iter().filter(|u| u.num_samples > 0) {
        let w = u.num_samples as f64 / total as f64;
        out.weights.scaled_add(w, &u.head.weights);
        if let (Some(b), Some(ub)) = (out.bias.as_mut(), u.head.bias.as_ref()) {
            b.scaled_add(w, ub);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    /// 1-indexed round.
    pub t: usize,
    pub stage: Stage,
    pub accuracy: f64,
    /// Filled in once paired with an IID reference.
    pub relative: Option<f64>,
    pub participants: Vec<usize>,
    pub client_seconds_mean: f64,
    pub server_seconds: f64,
    pub bytes_up_per_client: u64,
    pub bytes_down_per_client: u64,
    pub bytes_up_total: u64,
    pub bytes_down_total: u64,
}

/// Mutable simulation state for one seed.
#[derive(Debug, Clone)]
pub struct FedState {
    pub global: HeadModel,
    pub round: usize,
    optimizers: Vec<Option<Optimizer>>,
}

impl FedState {
    pub fn new(global: HeadModel, num_clients: usize) -> Self {
        Self {
            global,
            round: 0,
            optimizers: vec![None; num_clients],
        }
    }
}

pub fn sample_participants(cfg: &RunConfig, seed: u64, round: usize) -> Vec<usize> {
    let m = cfg.num_clients;
    let count = cfg.participants_per_round();
    if count == m {
        return (0..m).collect();
    }
    let mut rng = seeding::rng_from(seed, &[tag::PARTICIPATION, round as u64]);
    let mut chosen = rand::seq::index::sample(&mut rng, m, count).into_vec();
    chosen.sort_unstable();
    chosen
}

/// One communication round. Clients train in parallel on the ambient rayon
/// pool; results are gathered in participant order.
pub fn run_round(
    state: &mut FedState,
    clients: &[ClientData],
    eval: (&Array2<f64>, &[u32]),
    cfg: &RunConfig,
    seed: u64,
) -> Result<RoundRecord, Error> {
    let round = state.round;
    let stage = cfg.stage_for(round);
    let participants = sample_participants(cfg, seed, round);
    let ctx = LocalContext {
        stage: &cfg.stage,
        seed,
        round,
    };
    let global = &state.global;
    let mut slots: Vec<(usize, Option<Optimizer>)> = participants
        .iter()
        .map(|&i| {
            let saved = if cfg.reset_optimizer {
                None
            } else {
                state.optimizers[i].take()
            };
            (i, saved)
        })
        .collect();
    let results: Vec<Result<(ClientUpdate, Optimizer), Error>> = slots
        .par_iter_mut()
        .map(|(i, saved)| {
            let mut opt = saved.take().unwrap_or_else(|| Optimizer::new(&cfg.optimizer, global));
            let update = train_local(global, &clients[*i], stage, ctx, &mut opt)?;
            Ok((update, opt))
        })
        .collect();
    let mut updates = Vec::with_capacity(results.len());
    for r in results {
        let (u, opt) = r?;
        if !cfg.reset_optimizer {
            state.optimizers[u.client_id] = Some(opt);
        }
        updates.push(u);
    }
    let server = Instant::now();
    let next = fedavg(&updates, &state.global)?;
    let server_seconds = server.elapsed().as_secs_f64();
    if !next.is_finite() {
        return Err(crate::error::OptimError::NonFiniteGradient {
            location: format!("aggregated head after round {}", round + 1),
            value: f64::NAN,
        }
        .into());
    }
    state.global = next;
    state.round += 1;
    let acc = accuracy(&state.global, eval.0.view(), eval.1)?;
    let per_client = head_wire_bytes(&state.global);
    let count = participants.len() as u64;
    Ok(RoundRecord {
        t: state.round,
        stage,
        accuracy: acc,
        relative: None,
        client_seconds_mean: if updates.is_empty() {
            0.0
        } else {
            updates.iter().map(|u| u.wall_seconds).sum::<f64>() / updates.len() as f64
        },
        server_seconds,
        bytes_up_per_client: per_client,
        bytes_down_per_client: per_client,
        bytes_up_total: per_client * count,
        bytes_down_total: per_client * count,
        participants,
    })
}

pub fn initial_head(cfg: &RunConfig, num_classes: usize, dim: usize, seed: u64) -> HeadModel {
    let kind = cfg.method.head_kind();
    match cfg.init {
        HeadInit::Zeros => HeadModel::zeros(kind, num_classes, dim, cfg.bias),
        HeadInit::Gaussian { std } => {
            let mut rng = seeding::rng_from(seed, &[tag::INIT]);
            HeadModel::gaussian(kind, num_classes, dim, cfg.bias, std, &mut rng)
        }
    }
}

/// Partition, corrupt labels, and cut client datasets for one seed.
pub fn prepare_clients(
    cfg: &RunConfig,
    train: &FeatureDataset,
    seed: u64,
) -> Result<(Partition, Vec<ClientData>), Error> {
    let part = partition(train, cfg.scheme, cfg.num_clients, seed)?;
    let labels = match cfg.noise {
        Some(n) if n.ratio > 0.0 => {
            inject_noise(
                train.labels(),
                train.num_classes(),
                &NoiseSpec {
                    kind: n.kind,
                    ratio: n.ratio,
                    seed,
                },
            )?
            .labels
        }
        _ => train.labels().to_vec(),
    };
    let clients = part
        .assignments
        .iter()
        .enumerate()
        .map(|(i, idx)| ClientData::from_indices(i, train, &labels, idx))
        .collect();
    Ok((part, clients))
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub final_head: HeadModel,
}

impl SeedRun {
    pub fn curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.accuracy).collect()
    }
}

pub fn run_seed(cfg: &RunConfig, train: &FeatureDataset, eval: &FeatureDataset, seed: u64) -> Result<SeedRun, Error> {
    let (_, clients) = prepare_clients(cfg, train, seed)?;
    let eval_x = eval.features_f64();
    let mut state = FedState::new(initial_head(cfg, train.num_classes(), train.dim(), seed), cfg.num_clients);
    let mut records = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        records.push(run_round(&mut state, &clients, (&eval_x, eval.labels()), cfg, seed)?);
    }
    Ok(SeedRun {
        seed,
        records,
        final_head: state.global,
    })
}

/// Runs every configured seed.
pub fn run_experiment(cfg: &RunConfig, train: &FeatureDataset, eval: &FeatureDataset) -> Result<Vec<SeedRun>, Error> {
    cfg.seeds.iter().map(|&s| run_seed(cfg, train, eval, s)).collect()
}

/// Fills `relative` on `records` from a paired IID run with the same seed.
pub fn pair_with_reference(records: &mut [RoundRecord], reference: &[RoundRecord]) -> Result<(), Error> {
    let r = crate::metrics::relative_ratio(
        &records.iter().map(|r| r.accuracy).collect::<Vec<_>>(),
        &reference.iter().map(|r| r.accuracy).collect::<Vec<_>>(),
    )?;
    for (rec, v) in records.iter_mut().zip(r) {
        rec.relative = Some(v);
    }
    Ok(())
}
