//! Joint supervised training of every module from annotated dialogues.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{confirmation_of, memory_features, Ablation, Confirmation, Model, ModelConfig};
use crate::corpus::{build_vocab, masks_in, Action, CorpusSplit, DialogueRecord};
use crate::encoders::vocab::{EOS, SELECT};
use crate::encoders::Speaker;
use crate::error::{Error, Result};
use crate::neural::{Adam, Graph, ParamCheckpoint, PlateauSchedule, Var};
use crate::spans::Span;
use crate::structcrf::{map_and_kbest, sequence_nll, PotentialSet, ReferentSequence};
use crate::world::Player;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub selection_loss_weight: f64,
    /// Weight of the span detector's tagging loss.
    pub detector_loss_weight: f64,
    pub ablation: Ablation,
    pub seed: u64,
    pub fold: usize,
    pub clip_norm: f64,
    pub plateau_threshold: f64,
    pub plateau_patience: usize,
    pub decay_factor: f64,
    pub min_learning_rate: f64,
    /// Update memory from the resolver's predictions instead of gold referents.
    pub predicted_memory: bool,
    /// Stop once validation loss has not improved for this many epochs.
    pub early_stop_patience: Option<usize>,
    /// Evaluate the training loss once before the first update.
    pub report_initial_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 12,
            selection_loss_weight: 1.0 / 32.0,
            detector_loss_weight: 1.0,
            ablation: Ablation::FULL,
            seed: 0,
            fold: 0,
            clip_norm: 5.0,
            plateau_threshold: 1e-3,
            plateau_patience: 1,
            decay_factor: 0.5,
            min_learning_rate: 1e-5,
            predicted_memory: false,
            early_stop_patience: None,
            report_initial_loss: false,
        }
    }
}

/// Per-subtask negative log-likelihoods; `total` is the weighted objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub selection: f64,
    pub resolution: f64,
    pub mention: f64,
    pub utterance: f64,
    pub detector: f64,
    pub total: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.selection += o.selection;
        self.resolution += o.resolution;
        self.mention += o.mention;
        self.utterance += o.utterance;
        self.detector += o.detector;
        self.total += o.total;
    }

    fn scaled(mut self, s: f64) -> Self {
        for v in [&mut self.selection, &mut self.resolution, &mut self.mention, &mut self.utterance, &mut self.detector, &mut self.total] {
            *v *= s;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per record.
    pub train: LossParts,
    pub validation: LossParts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_train: Option<LossParts>,
    pub epochs: Vec<EpochReport>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainReport {
    pub fn best_validation(&self) -> f64 {
        self.epochs[self.best_epoch - 1].validation.total
    }
}

fn sum(g: &mut Graph, terms: &[Var]) -> Option<Var> {
    let mut it = terms.iter().copied();
    let first = it.next()?;
    Some(it.fold(first, |a, b| g.add(a, b)))
}

struct Terms {
    resolution: Vec<Var>,
    mention: Vec<Var>,
    utterance: Vec<Var>,
    detector: Vec<Var>,
    selection: Option<Var>,
}

fn annotations(record: &DialogueRecord, i: usize) -> Result<&[crate::corpus::Annotation]> {
    match &record.events[i].action {
        Action::Message { annotations: Some(a), .. } => Ok(a),
        Action::Message { annotations: None, .. } => Err(Error::MissingAnnotation(format!("{} event {i}", record.id))),
        Action::Select { .. } => Ok(&[]),
    }
}

/// `-log` of the halting decisions for a plan of `k` mentions: continue `k` times, then
/// halt unless the cap was reached.
fn halting_nll(g: &mut Graph, halts: &[Var], k: usize, cap: usize) -> Option<Var> {
    let mut terms = Vec::new();
    for &h in &halts[..k] {
        let c = g.one_minus(h);
        let l = g.log(c);
        terms.push(g.scale(l, -1.0));
    }
    if k < cap {
        let l = g.log(halts[k]);
        terms.push(g.scale(l, -1.0));
    }
    sum(g, &terms)
}

/// Teacher-forced loss of one record from `player`'s perspective:
/// `w_sel·(-log P_S) + (1/T)·Σ (-log P_R - log P_M - log P_U) + w_det·(1/T)·Σ detector`.
pub fn perspective_loss(model: &Model, g: &mut Graph, record: &DialogueRecord, player: Player, cfg: &TrainConfig) -> Result<(Var, LossParts)> {
    let view = record.context.view(player);
    let dots = model.encode_view(g, view)?;
    let mut h = model.net.history.initial(g);
    let mut memory = g.constant(model.zero_memory());
    let mut confirmation = Confirmation::NA;
    let mut t = Terms { resolution: vec![], mention: vec![], utterance: vec![], detector: vec![], selection: None };
    let mut own_turns = 0usize;
    let cap = model.config.max_mentions;

    for (i, event) in record.events.iter().enumerate() {
        let anns = annotations(record, i)?;
        let gold = masks_in(view, anns);
        let spans: Vec<Span> = anns.iter().map(|a| a.span()).collect();
        let ids = match &event.action {
            Action::Message { tokens, .. } => model.vocab.encode(tokens),
            Action::Select { .. } => vec![SELECT],
        };
        let own = event.speaker == player;
        if own {
            own_turns += 1;
            if gold.len() > cap {
                return Err(Error::InvalidRecord(format!("{}: {} mentions exceed the cap of {cap}", record.id, gold.len())));
            }
            let input = model.mention_input(g, h.writer, confirmation, memory)?;
            let steps = model.mention_steps(g, input, (gold.len() + 1).min(cap))?;
            if let Some(l) = halting_nll(g, &steps.halts, gold.len(), cap) {
                t.mention.push(l);
            }
            if !gold.is_empty() {
                let p = model.mention_potentials(g, dots, memory, &steps.xs[..gold.len()])?;
                t.mention.push(sequence_nll(g, &p, &gold)?);
            }
            let init = model.decoder_init(g, dots, h.writer, &gold, confirmation)?;
            let targets: Vec<usize> = if event.is_select() { vec![SELECT] } else { ids.iter().copied().chain([EOS]).collect() };
            t.utterance.push(model.utterance_nll(g, &init, &targets)?);
            if let Action::Select { dot } = event.action {
                let idx = view.index_of(dot).ok_or_else(|| Error::InvalidRecord(format!("{}: selection outside view", record.id)))?;
                let lp = model.selection_log_probs(g, dots, memory, h.reader_summary)?;
                let p = g.pick(lp, idx);
                t.selection = Some(g.scale(p, -1.0));
            } else if cfg.detector_loss_weight > 0.0 {
                t.detector.push(model.net.tagger.nll(g, &ids, &spans)?);
            }
        }
        let speaker = if own { Speaker::Own } else { Speaker::Partner };
        let (next, enc) = model.net.history.advance(g, &h, speaker, &ids)?;
        if let (Some(enc), false) = (enc, gold.is_empty()) {
            let p = model.resolution_potentials(g, dots, memory, &enc, &spans)?;
            t.resolution.push(sequence_nll(g, &p, &gold)?);
            let features = if cfg.predicted_memory && !own {
                let r = map_and_kbest(&PotentialSet::from_graph(g, &p), 1)?;
                memory_features(r.map_sequence.masks(), &r.marginal_argmax())
            } else {
                memory_features(gold.masks(), gold.masks())
            };
            memory = model.update_memory(g, memory, features)?;
        }
        confirmation = if own { Confirmation::NA } else { confirmation_of(&gold) };
        h = next;
    }

    let inv_t = 1.0 / own_turns.max(1) as f64;
    let value = |g: &Graph, v: Option<Var>| v.map_or(0.0, |v| g.value(v).item());
    let mut parts = LossParts::default();
    let mut total_terms = Vec::new();
    let mut group = |g: &mut Graph, terms: &[Var], weight: f64, slot: &mut f64| {
        if let Some(s) = sum(g, terms) {
            *slot = g.value(s).item();
            total_terms.push(g.scale(s, weight));
        }
    };
    group(g, &t.resolution, inv_t, &mut parts.resolution);
    group(g, &t.mention, inv_t, &mut parts.mention);
    group(g, &t.utterance, inv_t, &mut parts.utterance);
    group(g, &t.detector, inv_t * cfg.detector_loss_weight, &mut parts.detector);
    parts.selection = value(g, t.selection);
    if let Some(s) = t.selection {
        total_terms.push(g.scale(s, cfg.selection_loss_weight));
    }
    let total = match sum(g, &total_terms) {
        Some(v) => v,
        None => g.scalar(0.0),
    };
    parts.total = g.value(total).item();
    Ok((total, parts))
}

/// Sum of both players' perspective losses.
pub fn dialogue_loss(model: &Model, g: &mut Graph, record: &DialogueRecord, cfg: &TrainConfig) -> Result<(Var, LossParts)> {
    let (a, mut pa) = perspective_loss(model, g, record, Player::A, cfg)?;
    let (b, pb) = perspective_loss(model, g, record, Player::B, cfg)?;
    pa.add(&pb);
    Ok((g.add(a, b), pa))
}

/// Mean loss per record without dropout.
pub fn evaluate_loss(model: &Model, records: &[DialogueRecord], cfg: &TrainConfig) -> Result<LossParts> {
    let mut acc = LossParts::default();
    for r in records {
        let mut g = Graph::new(&model.params);
        let (_, parts) = dialogue_loss(model, &mut g, r, cfg)?;
        acc.add(&parts);
    }
    Ok(acc.scaled(1.0 / records.len().max(1) as f64))
}

/// Train `model` in place; on return it holds the best-validation parameters.
pub fn train_model(model: &mut Model, train: &[DialogueRecord], validation: &[DialogueRecord], cfg: &TrainConfig, mut progress: impl FnMut(&EpochReport)) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    model.ablation = cfg.ablation;
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    adam.clip_norm = Some(cfg.clip_norm);
    let mut schedule = PlateauSchedule::new(cfg.decay_factor, cfg.plateau_patience, cfg.plateau_threshold, cfg.min_learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial_train = if cfg.report_initial_loss { Some(evaluate_loss(model, train, cfg)?) } else { None };
    let monitor = if validation.is_empty() { train } else { validation };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ParamCheckpoint)> = None;
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = LossParts::default();
        for &i in &order {
            step += 1;
            let record = &train[i];
            let grads = {
                let mut g = Graph::training(&model.params, cfg.seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let (loss, parts) = dialogue_loss(model, &mut g, record, cfg)?;
                if !parts.total.is_finite() {
                    return Err(Error::Diverged(format!("epoch {epoch}, record {}: loss {:?}", record.id, parts)));
                }
                acc.add(&parts);
                g.backward(loss)
            };
            if !grads.all_finite() {
                return Err(Error::Diverged(format!("epoch {epoch}, record {}: non-finite gradient", record.id)));
            }
            adam.update(&mut model.params, &grads);
        }
        let val = evaluate_loss(model, monitor, cfg)?;
        let report = EpochReport { epoch, learning_rate: adam.lr, train: acc.scaled(1.0 / train.len() as f64), validation: val };
        progress(&report);
        epochs.push(report);
        if best.as_ref().is_none_or(|(b, _, _)| val.total < *b) {
            best = Some((val.total, epoch, model.params.to_checkpoint()));
        }
        adam.lr = schedule.observe(val.total, adam.lr);
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if cfg.early_stop_patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }
    let (_, best_epoch, ckpt) = best.expect("at least one epoch");
    model.params.load_checkpoint(&ckpt)?;
    Ok(TrainReport { initial_train, stopped_epoch: epochs.len(), epochs, best_epoch })
}

/// Build a fresh model over the split's vocabulary and train it.
pub fn train(split: &CorpusSplit, model_config: &ModelConfig, cfg: &TrainConfig, progress: impl FnMut(&EpochReport)) -> Result<(Model, TrainReport)> {
    let vocab = build_vocab(&split.train);
    let mut model = Model::new(model_config.clone(), vocab, cfg.ablation, cfg.seed)?;
    let report = train_model(&mut model, &split.train, &split.validation, cfg, progress)?;
    Ok((model, report))
}

/// Gold referents of each annotated message of `record` in `player`'s view.
pub fn gold_referents(record: &DialogueRecord, player: Player) -> Vec<(usize, ReferentSequence)> {
    let view = record.context.view(player);
    record
        .events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match &e.action {
            Action::Message { annotations: Some(a), .. } => Some((i, masks_in(view, a))),
            _ => None,
        })
        .collect()
}
