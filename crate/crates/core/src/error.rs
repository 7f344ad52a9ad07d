use thiserror::Error;

use crate::frame::{FlowId, VnoId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid frame config: {0}")]
    InvalidFrame(String),

    #[error("burst of {size_words} words cannot fit a {capacity_words}-word frame")]
    Unschedulable {
        size_words: u32,
        capacity_words: u32,
    },

    #[error("allocation of flow {flow_id} in vno {vno_id} is invalid: {reason}")]
    InvalidAllocation {
        vno_id: VnoId,
        flow_id: FlowId,
        reason: String,
    },

    #[error("virtual bandwidth maps belong to different frames ({first} and {other})")]
    MixedFrames { first: u64, other: u64 },

    #[error("duplicate flow id {0} in SLA table")]
    DuplicateFlow(FlowId),

    #[error("exact instance has {count} SLA allocations, limit is {limit}")]
    InstanceTooLarge { count: usize, limit: usize },

    #[error("cannot generate frame {frame_index}: {constraint}")]
    Generation {
        frame_index: u64,
        constraint: String,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("no frame reports to accumulate")]
    EmptyRun,
}
