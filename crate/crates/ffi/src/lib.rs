//! C ABI for the merging engines.
//!
//! Every fallible function returns a [`VdbaStatus`]. On failure a message is
//! kept per thread and can be read with [`vdba_last_error`]. Hypervisors are
//! opaque handles owned by the caller: create with [`vdba_hypervisor_new`],
//! release with [`vdba_hypervisor_free`]. A handle must not be used from two
//! threads at once.
//!
//! Requests are passed as one flat array; they are grouped into per-VNO
//! virtual maps by `vno_id`. Merges write exactly one grant per request, so
//! an output buffer as long as the input always suffices.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::time::Duration;

use vdba::baseline::schedule_frame_stateless;
use vdba::frame::{validate_physical_bmap, words_from_time};
use vdba::hypervisor::FlowBreachRecord;
use vdba::oracle::{solve_exact, ExactInstance, ExactLimits};
use vdba::{
    AllocationRequest, Error, FlowId, FrameConfig, Grant, Hypervisor, PhysicalBMap, SlaClass,
    SlaType, VirtualBMap, VnoId,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdbaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidFrame = 3,
    MixedFrames = 4,
    Unschedulable = 5,
    InstanceTooLarge = 6,
    BufferTooSmall = 7,
    NotFound = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdbaSlaType {
    Type1 = 0,
    Type2 = 1,
    BestEffort = 2,
}

/// Class of a raw `VdbaSlaType` value coming from C.
fn sla_type(raw: u32) -> Result<SlaType, VdbaStatus> {
    match raw {
        0 => Ok(SlaType::Type1),
        1 => Ok(SlaType::Type2),
        2 => Ok(SlaType::BestEffort),
        other => Err(fail(
            VdbaStatus::InvalidArgument,
            format!("{other} is not a VdbaSlaType"),
        )),
    }
}

impl From<SlaType> for VdbaSlaType {
    fn from(t: SlaType) -> Self {
        match t {
            SlaType::Type1 => VdbaSlaType::Type1,
            SlaType::Type2 => VdbaSlaType::Type2,
            SlaType::BestEffort => VdbaSlaType::BestEffort,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VdbaFrameConfig {
    pub capacity_words: u32,
    pub guard_words: u32,
}

impl From<VdbaFrameConfig> for FrameConfig {
    fn from(c: VdbaFrameConfig) -> Self {
        FrameConfig {
            capacity_words: c.capacity_words,
            guard_words: c.guard_words,
        }
    }
}

impl From<FrameConfig> for VdbaFrameConfig {
    fn from(c: FrameConfig) -> Self {
        VdbaFrameConfig {
            capacity_words: c.capacity_words,
            guard_words: c.guard_words,
        }
    }
}

/// One burst request of a virtual map. `sla` holds a `VdbaSlaType` value;
/// latency targets follow from it and the frame configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VdbaRequest {
    pub vno_id: u32,
    pub flow_id: u32,
    pub requested_start: u32,
    pub size_words: u32,
    pub sla: u32,
}

/// One burst of the physical map. `start` is meaningless when `scheduled`
/// is false. `sla` holds a `VdbaSlaType` value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VdbaGrant {
    pub vno_id: u32,
    pub flow_id: u32,
    pub requested_start: u32,
    pub size_words: u32,
    pub start: u32,
    pub scheduled: bool,
    pub delayed: bool,
    pub sla: u32,
}

impl From<&Grant> for VdbaGrant {
    fn from(g: &Grant) -> Self {
        VdbaGrant {
            vno_id: g.vno_id.0,
            flow_id: g.flow_id.0,
            requested_start: g.origin_requested_start,
            size_words: g.size_words,
            start: g.start.unwrap_or(0),
            scheduled: g.start.is_some(),
            delayed: g.delayed,
            sla: VdbaSlaType::from(g.sla.kind) as u32,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdbaFlowRecord {
    pub flow_id: u32,
    pub sla: VdbaSlaType,
    pub cum_total: u64,
    pub cum_delayed: u64,
    pub flow_breach_frames: u64,
    /// Allowed non-compliance minus the observed delayed fraction.
    pub headroom: f64,
}

impl From<&FlowBreachRecord> for VdbaFlowRecord {
    fn from(r: &FlowBreachRecord) -> Self {
        VdbaFlowRecord {
            flow_id: r.flow_id.0,
            sla: r.sla.kind.into(),
            cum_total: r.cum_total,
            cum_delayed: r.cum_delayed,
            flow_breach_frames: r.flow_breach_frames,
            headroom: r.headroom(),
        }
    }
}

/// Stateful merging engine.
pub struct VdbaHypervisor {
    inner: Hypervisor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: VdbaStatus, msg: impl Into<String>) -> VdbaStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> VdbaStatus {
    match e {
        Error::InvalidFrame(_) => VdbaStatus::InvalidFrame,
        Error::Unschedulable { .. } => VdbaStatus::Unschedulable,
        Error::MixedFrames { .. } => VdbaStatus::MixedFrames,
        Error::InstanceTooLarge { .. } => VdbaStatus::InstanceTooLarge,
        _ => VdbaStatus::InvalidArgument,
    }
}

fn from_error(e: Error) -> VdbaStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning panics into [`VdbaStatus::Panic`].
fn guarded(f: impl FnOnce() -> VdbaStatus) -> VdbaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(VdbaStatus::Panic, format!("internal error: {msg}"))
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(ptr, len))
    }
}

/// Groups requests into one virtual map per VNO and checks each map.
fn virtual_maps(
    requests: &[VdbaRequest],
    frame_index: u64,
    cfg: &FrameConfig,
) -> Result<Vec<VirtualBMap>, VdbaStatus> {
    cfg.validate().map_err(from_error)?;
    let mut maps: BTreeMap<u32, VirtualBMap> = BTreeMap::new();
    for r in requests {
        maps.entry(r.vno_id)
            .or_insert_with(|| VirtualBMap::new(VnoId(r.vno_id), frame_index))
            .allocations
            .push(AllocationRequest {
                vno_id: VnoId(r.vno_id),
                flow_id: FlowId(r.flow_id),
                requested_start: r.requested_start,
                size_words: r.size_words,
                sla: SlaClass::new(sla_type(r.sla)?, cfg),
            });
    }
    let maps: Vec<VirtualBMap> = maps.into_values().collect();
    for vb in &maps {
        vb.validate(cfg).map_err(from_error)?;
    }
    Ok(maps)
}

unsafe fn write_grants(
    bmap: &PhysicalBMap,
    out: *mut VdbaGrant,
    out_len: usize,
    written: *mut usize,
) -> VdbaStatus {
    let n = bmap.grants.len();
    if !written.is_null() {
        *written = n;
    }
    if n > out_len {
        return fail(
            VdbaStatus::BufferTooSmall,
            format!("{n} grants do not fit a buffer of {out_len}"),
        );
    }
    if n > 0 {
        if out.is_null() {
            return fail(VdbaStatus::NullPointer, "grant buffer is null");
        }
        let dst = slice::from_raw_parts_mut(out, n);
        for (d, g) in dst.iter_mut().zip(&bmap.grants) {
            *d = g.into();
        }
    }
    VdbaStatus::Ok
}

/// Frame configuration for a 125 µs frame of 38,880 words.
#[no_mangle]
pub extern "C" fn vdba_frame_config_default() -> VdbaFrameConfig {
    FrameConfig::default().into()
}

/// 125 µs frame of `capacity_words` words with the guard derived from 0.1 µs.
#[no_mangle]
pub extern "C" fn vdba_frame_config_with_capacity(capacity_words: u32) -> VdbaFrameConfig {
    FrameConfig::with_capacity(capacity_words).into()
}

/// Words spanned by `t_us` microseconds in frames of `cfg`.
#[no_mangle]
pub extern "C" fn vdba_words_from_time_us(t_us: f64, cfg: VdbaFrameConfig) -> u32 {
    words_from_time(t_us, &cfg.into())
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn vdba_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a hypervisor with an empty flow-breach table.
#[no_mangle]
pub unsafe extern "C" fn vdba_hypervisor_new(
    cfg: VdbaFrameConfig,
    out: *mut *mut VdbaHypervisor,
) -> VdbaStatus {
    guarded(|| {
        if out.is_null() {
            return fail(VdbaStatus::NullPointer, "output handle pointer is null");
        }
        let cfg: FrameConfig = cfg.into();
        if let Err(e) = cfg.validate() {
            return from_error(e);
        }
        *out = Box::into_raw(Box::new(VdbaHypervisor {
            inner: Hypervisor::new(cfg),
        }));
        VdbaStatus::Ok
    })
}

/// Releases a handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vdba_hypervisor_free(hv: *mut VdbaHypervisor) {
    if !hv.is_null() {
        drop(Box::from_raw(hv));
    }
}

/// Merges one frame and updates the handle's flow-breach table.
/// `written` receives the grant count even when the buffer is too small,
/// in which case the table is left untouched.
#[no_mangle]
pub unsafe extern "C" fn vdba_hypervisor_merge(
    hv: *mut VdbaHypervisor,
    frame_index: u64,
    requests: *const VdbaRequest,
    n_requests: usize,
    out: *mut VdbaGrant,
    out_len: usize,
    written: *mut usize,
) -> VdbaStatus {
    guarded(|| {
        let Some(hv) = hv.as_mut() else {
            return fail(VdbaStatus::NullPointer, "hypervisor handle is null");
        };
        let Some(requests) = input(requests, n_requests) else {
            return fail(VdbaStatus::NullPointer, "request array is null");
        };
        if n_requests > out_len {
            if !written.is_null() {
                *written = n_requests;
            }
            return fail(
                VdbaStatus::BufferTooSmall,
                format!("{n_requests} grants do not fit a buffer of {out_len}"),
            );
        }
        let cfg = *vdba::engine::MergeEngine::frame_config(&hv.inner);
        let maps = match virtual_maps(requests, frame_index, &cfg) {
            Ok(m) => m,
            Err(status) => return status,
        };
        match hv.inner.merge_frame(&maps) {
            Ok((bmap, _)) => write_grants(&bmap, out, out_len, written),
            Err(e) => from_error(e),
        }
    })
}

/// Copies the table entry of `flow_id`.
#[no_mangle]
pub unsafe extern "C" fn vdba_hypervisor_flow_record(
    hv: *const VdbaHypervisor,
    flow_id: u32,
    out: *mut VdbaFlowRecord,
) -> VdbaStatus {
    guarded(|| {
        let (Some(hv), false) = (hv.as_ref(), out.is_null()) else {
            return fail(VdbaStatus::NullPointer, "null handle or output pointer");
        };
        match hv.inner.table().get(FlowId(flow_id)) {
            Some(r) => {
                *out = r.into();
                VdbaStatus::Ok
            }
            None => fail(
                VdbaStatus::NotFound,
                format!("flow {flow_id} has no record"),
            ),
        }
    })
}

/// Merges one frame with fixed class priority and no history.
#[no_mangle]
pub unsafe extern "C" fn vdba_merge_stateless(
    cfg: VdbaFrameConfig,
    frame_index: u64,
    requests: *const VdbaRequest,
    n_requests: usize,
    out: *mut VdbaGrant,
    out_len: usize,
    written: *mut usize,
) -> VdbaStatus {
    guarded(|| {
        let Some(requests) = input(requests, n_requests) else {
            return fail(VdbaStatus::NullPointer, "request array is null");
        };
        let cfg: FrameConfig = cfg.into();
        let maps = match virtual_maps(requests, frame_index, &cfg) {
            Ok(m) => m,
            Err(status) => return status,
        };
        match schedule_frame_stateless(&maps, &cfg) {
            Ok(bmap) => write_grants(&bmap, out, out_len, written),
            Err(e) => from_error(e),
        }
    })
}

/// Solves one frame exactly. Instances with more than `max_allocations`
/// SLA requests are refused. When `time_budget_ms` runs out the best
/// schedule found is returned with `*proven_optimal` set to false.
#[no_mangle]
pub unsafe extern "C" fn vdba_solve_exact(
    cfg: VdbaFrameConfig,
    requests: *const VdbaRequest,
    n_requests: usize,
    max_allocations: usize,
    time_budget_ms: u64,
    out: *mut VdbaGrant,
    out_len: usize,
    written: *mut usize,
    flow_breaches: *mut u32,
    proven_optimal: *mut bool,
) -> VdbaStatus {
    guarded(|| {
        let Some(requests) = input(requests, n_requests) else {
            return fail(VdbaStatus::NullPointer, "request array is null");
        };
        let cfg: FrameConfig = cfg.into();
        let maps = match virtual_maps(requests, 0, &cfg) {
            Ok(m) => m,
            Err(status) => return status,
        };
        let limits = ExactLimits {
            max_allocations,
            time_budget: Duration::from_millis(time_budget_ms),
        };
        let solved =
            ExactInstance::from_vbmaps(&maps, cfg, limits).and_then(|inst| solve_exact(&inst));
        match solved {
            Ok(sol) => {
                if !flow_breaches.is_null() {
                    *flow_breaches = sol.flow_breaches;
                }
                if !proven_optimal.is_null() {
                    *proven_optimal = sol.proven_optimal;
                }
                write_grants(&sol.bmap, out, out_len, written)
            }
            Err(e) => from_error(e),
        }
    })
}

/// Checks a physical map for overlaps, guard gaps, out-of-frame bursts,
/// early starts and duplicates. `violations` receives the number found.
#[no_mangle]
pub unsafe extern "C" fn vdba_validate(
    cfg: VdbaFrameConfig,
    grants: *const VdbaGrant,
    n_grants: usize,
    violations: *mut usize,
) -> VdbaStatus {
    guarded(|| {
        let Some(grants) = input(grants, n_grants) else {
            return fail(VdbaStatus::NullPointer, "grant array is null");
        };
        if violations.is_null() {
            return fail(VdbaStatus::NullPointer, "violation count pointer is null");
        }
        let cfg: FrameConfig = cfg.into();
        let mut converted = Vec::with_capacity(grants.len());
        for g in grants {
            let kind = match sla_type(g.sla) {
                Ok(kind) => kind,
                Err(status) => return status,
            };
            converted.push(Grant {
                flow_id: FlowId(g.flow_id),
                vno_id: VnoId(g.vno_id),
                start: g.scheduled.then_some(g.start),
                size_words: g.size_words,
                origin_requested_start: g.requested_start,
                sla: SlaClass::new(kind, &cfg),
                delayed: g.delayed,
            });
        }
        let bmap = PhysicalBMap {
            frame_index: 0,
            grants: converted,
        };
        let found = validate_physical_bmap(&bmap, &cfg);
        *violations = found.len();
        if let Some(first) = found.first() {
            set_error(format!("{} violation(s), first: {first}", found.len()));
        }
        VdbaStatus::Ok
    })
}
