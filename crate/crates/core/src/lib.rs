//! Merging of per-VNO virtual bandwidth maps into one collision-free
//! physical bandwidth map per PON upstream frame.
//!
//! * [`frame`]: frames, SLA classes, requests, bandwidth maps and validation
//! * [`hypervisor`]: the stateful SLA-aware merging engine
//! * [`baseline`]: stateless strict-priority merging
//! * [`oracle`]: exact minimum of flow-level SLA breaches for one frame
//! * [`trafficgen`]: seeded synthetic workloads
//! * [`metrics`]: breach accounting and merge-time profiling
//! * [`cli`]: experiment sweeps, CSV and SVG output

pub mod baseline;
pub mod cli;
pub mod engine;
pub mod error;
pub mod frame;
pub mod hypervisor;
pub mod metrics;
pub mod oracle;
pub mod placement;
pub mod trafficgen;

pub use engine::{run_frame, MergeEngine, SchedulerKind};
pub use error::{Error, Result};
pub use frame::{
    AllocationRequest, FlowId, FrameConfig, Grant, PhysicalBMap, SlaClass, SlaType, VirtualBMap,
    VnoId,
};
pub use hypervisor::{FlowBreachTable, Hypervisor};
