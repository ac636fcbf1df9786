//! Action-branching Q-network trained with a per-branch double-DQN loss.

mod adam;
mod dqn;
mod network;
mod replay;

pub use adam::{adam_step, Adam};
pub use dqn::{backward, greedy, loss, select_action, sync_target, td_target, td_targets};
pub use network::{Activations, NetShape, QNetwork, LAYER_NORM_EPS};
pub use replay::ReplayBuffer;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::encoder::SparseInput;

/// One index per local branch plus the shared global index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchAction {
    pub local_indices: Vec<usize>,
    pub global_index: usize,
}

impl BranchAction {
    pub fn new(local_indices: Vec<usize>, global_index: usize) -> Self {
        BranchAction {
            local_indices,
            global_index,
        }
    }

    /// Indices in head order, the global branch last.
    pub fn heads(&self) -> impl Iterator<Item = usize> + '_ {
        self.local_indices.iter().copied().chain(core::iter::once(self.global_index))
    }

    pub fn from_heads(heads: &[usize]) -> Self {
        let (global, local) = heads.split_last().expect("at least one head");
        BranchAction::new(local.to_vec(), *global)
    }
}

/// Replay record. States are kept as normalized sparse network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: SparseInput,
    pub action: BranchAction,
    pub reward: f64,
    pub next_state: SparseInput,
    pub terminal: bool,
    /// Discount periods spanned; the bootstrap term is weighted by
    /// `gamma^periods`.
    pub periods: f64,
}
