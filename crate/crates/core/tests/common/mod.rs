//! Synthetic-corpus models shared by the slow integration tests. Trained once, then cached
//! under the cargo target directory.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use onecommon::agent::{Ablation, Model, ModelConfig};
use onecommon::corpus::{build_vocab, synth_corpus, DialogueRecord, GrammarConfig};
use onecommon::training::{train_model, TrainConfig};

pub const TRAIN_DIALOGUES: usize = 5_000;
pub const VALIDATION_DIALOGUES: usize = 200;
pub const TEST_DIALOGUES: usize = 500;
pub const EPOCHS: usize = 2;
const CORPUS_SEED: u64 = 2024;
const CACHE_TAG: &str = "v1";

pub struct SynthData {
    pub train: Vec<DialogueRecord>,
    pub validation: Vec<DialogueRecord>,
    pub test: Vec<DialogueRecord>,
}

pub fn data() -> &'static SynthData {
    static DATA: OnceLock<SynthData> = OnceLock::new();
    DATA.get_or_init(|| {
        let all = synth_corpus(TRAIN_DIALOGUES + VALIDATION_DIALOGUES + TEST_DIALOGUES, CORPUS_SEED, &GrammarConfig::default()).expect("synthetic corpus");
        let (train, rest) = all.split_at(TRAIN_DIALOGUES);
        let (validation, test) = rest.split_at(VALIDATION_DIALOGUES);
        SynthData { train: train.to_vec(), validation: validation.to_vec(), test: test.to_vec() }
    })
}

fn cache_path(ablation: Ablation) -> PathBuf {
    let name = format!(
        "synth-{CACHE_TAG}-n{TRAIN_DIALOGUES}-e{EPOCHS}-s{CORPUS_SEED}-{}{}.json",
        if ablation.disable_memory { "nomem" } else { "mem" },
        if ablation.disable_structure { "-nostruct" } else { "" }
    );
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

/// The desk-scale model trained on the synthetic corpus with `ablation`.
pub fn trained(ablation: Ablation) -> Arc<Model> {
    static CACHE: Mutex<Vec<(Ablation, Arc<Model>)>> = Mutex::new(Vec::new());
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if let Some((_, m)) = cache.iter().find(|(a, _)| *a == ablation) {
        return m.clone();
    }
    let path = cache_path(ablation);
    let model = match Model::load(&path) {
        Ok(m) if m.config == ModelConfig::desk() && m.ablation == ablation => m,
        _ => {
            let d = data();
            let mut model = Model::new(ModelConfig::desk(), build_vocab(&d.train), ablation, 7).expect("model");
            let cfg = TrainConfig { epochs: EPOCHS, ablation, seed: 7, ..Default::default() };
            let started = std::time::Instant::now();
            train_model(&mut model, &d.train, &d.validation, &cfg, |r| {
                eprintln!("[fixture {ablation:?}] epoch {} val {:.3} ({:.0}s)", r.epoch, r.validation.total, started.elapsed().as_secs_f64())
            })
            .expect("training");
            model.save(&path).expect("cache checkpoint");
            model
        }
    };
    let model = Arc::new(model);
    cache.push((ablation, model.clone()));
    model
}
