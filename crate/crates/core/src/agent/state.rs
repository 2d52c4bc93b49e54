use serde::{Deserialize, Serialize};

use super::model::{Model, MEMORY_FEATURES};
use crate::encoders::DialogueState;
use crate::neural::Tensor;
use crate::structcrf::{ReferentMask, ReferentSequence, ScoredSequence};
use crate::world::{WorldView, VIEW_SIZE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Confirmation {
    #[default]
    NA,
    Yes,
    No,
}

impl Confirmation {
    pub fn index(self) -> usize {
        match self {
            Confirmation::NA => 0,
            Confirmation::Yes => 1,
            Confirmation::No => 2,
        }
    }
}

/// NA without referring expressions, Yes if every referent is nonempty, No otherwise.
pub fn confirmation_of(referents: &ReferentSequence) -> Confirmation {
    if referents.is_empty() {
        Confirmation::NA
    } else if referents.masks().iter().all(|m| !m.is_empty()) {
        Confirmation::Yes
    } else {
        Confirmation::No
    }
}

/// `ι(d)` for all dots, `7 × 4`: max and mean over referents of the joint-MAP activity,
/// then max and mean of the marginal-MAP activity.
pub fn memory_features(joint: &[ReferentMask], marginal: &[ReferentMask]) -> Tensor {
    let mut t = Tensor::zeros(VIEW_SIZE, MEMORY_FEATURES);
    for (col, masks) in [(0, joint), (2, marginal)] {
        if masks.is_empty() {
            continue;
        }
        for d in 0..VIEW_SIZE {
            let active = masks.iter().filter(|m| m.contains(d)).count();
            t.set(d, col, if active > 0 { 1.0 } else { 0.0 });
            t.set(d, col + 1, active as f64 / masks.len() as f64);
        }
    }
    t
}

/// Planned mentions for the next utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MentionPlan {
    pub referents: ReferentSequence,
    /// Top sequences under the mention CRF, best first (one empty sequence when K = 0).
    pub kbest: Vec<ScoredSequence>,
    /// `log P_M` of each entry of `kbest`, halting included.
    pub log_probs: Vec<f64>,
    pub halts: Vec<f64>,
}

/// Everything one agent carries between turns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub view: WorldView,
    pub dialogue: DialogueState,
    /// `7 × memory_dim`.
    pub memory: Tensor,
    pub confirmation: Confirmation,
    pub has_selected: bool,
    /// Own turns taken so far.
    pub turn: usize,
}

impl AgentState {
    pub fn new(model: &Model, view: WorldView) -> Self {
        AgentState {
            view,
            dialogue: model.net.history.initial_state(),
            memory: model.zero_memory(),
            confirmation: Confirmation::NA,
            has_selected: false,
            turn: 0,
        }
    }
}
