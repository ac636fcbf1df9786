//! Policy checkpoints as self-describing JSON.

use std::path::Path;

use corridor_core::encoder::StateLayout;
use corridor_core::qnet::QNetwork;
use corridor_core::signal_control::ActionSpaceSpec;
use corridor_core::trainer::{ActionDecoder, BranchMode, Environment};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT: &str = "corridor-rl-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub scenario: String,
    /// "best" or "final".
    pub kind: String,
    pub episode: u32,
    pub cumulative_reward: Option<f64>,
    pub branch_mode: BranchMode,
    pub action_space: ActionSpaceSpec,
    pub num_intersections: usize,
    pub cells_per_lane: usize,
    pub network: QNetwork,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("malformed checkpoint {}: {e}", path.display())))?;
        if ckpt.format != FORMAT {
            return Err(CliError::Validation(format!(
                "checkpoint {} has format `{}`, expected `{FORMAT}`",
                path.display(),
                ckpt.format
            )));
        }
        Ok(ckpt)
    }

    /// Checks that the network fits the scenario's state and action layout
    /// and returns the matching action decoder.
    pub fn decoder_for(&self, env: &Environment) -> Result<ActionDecoder, CliError> {
        let mismatch = |what: &str, ours: String, theirs: String| {
            CliError::Validation(format!("checkpoint does not match scenario: {what} is {theirs} in the checkpoint but {ours} in the scenario"))
        };
        if self.num_intersections != env.corridor.num_intersections {
            return Err(mismatch(
                "num_intersections",
                env.corridor.num_intersections.to_string(),
                self.num_intersections.to_string(),
            ));
        }
        if self.cells_per_lane != env.corridor.cells_per_lane {
            return Err(mismatch(
                "cells_per_lane",
                env.corridor.cells_per_lane.to_string(),
                self.cells_per_lane.to_string(),
            ));
        }
        if self.action_space != env.action_space {
            return Err(mismatch(
                "action_space",
                format!("{:?}", env.action_space),
                format!("{:?}", self.action_space),
            ));
        }
        let decoder = ActionDecoder::new(env, self.branch_mode);
        let shape = self.network.shape();
        let input = StateLayout::new(env.corridor.num_intersections, env.corridor.cells_per_lane).len();
        if shape.input != input || shape.heads != decoder.head_sizes() {
            return Err(mismatch(
                "network shape",
                format!("input {input}, heads {:?}", decoder.head_sizes()),
                format!("input {}, heads {:?}", shape.input, shape.heads),
            ));
        }
        if self.network.params().len() != shape.num_params() {
            return Err(CliError::Validation(format!(
                "checkpoint holds {} parameters, its shape needs {}",
                self.network.params().len(),
                shape.num_params()
            )));
        }
        if self.network.params().iter().any(|p| !p.is_finite()) {
            return Err(CliError::Validation("checkpoint holds non-finite parameters".into()));
        }
        Ok(decoder)
    }
}
