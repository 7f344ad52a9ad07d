use std::ffi::CStr;
use std::ptr;

use vdba_ffi::*;

const T1: u32 = VdbaSlaType::Type1 as u32;
const T2: u32 = VdbaSlaType::Type2 as u32;
const BE: u32 = VdbaSlaType::BestEffort as u32;

fn req(vno_id: u32, flow_id: u32, start: u32, size: u32, sla: u32) -> VdbaRequest {
    VdbaRequest {
        vno_id,
        flow_id,
        requested_start: start,
        size_words: size,
        sla,
    }
}

fn blank() -> VdbaGrant {
    VdbaGrant {
        vno_id: 0,
        flow_id: 0,
        requested_start: 0,
        size_words: 0,
        start: 0,
        scheduled: false,
        delayed: false,
        sla: 0,
    }
}

fn last_error() -> String {
    let p = vdba_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn grant_for(grants: &[VdbaGrant], flow: u32) -> VdbaGrant {
    *grants.iter().find(|g| g.flow_id == flow).unwrap()
}

#[test]
fn default_frame_and_word_conversion() {
    let cfg = vdba_frame_config_default();
    assert_eq!(cfg.capacity_words, 38_880);
    assert_eq!(cfg.guard_words, 31);
    assert_eq!(vdba_words_from_time_us(12.5, cfg), 3_888);
    assert_eq!(vdba_words_from_time_us(25.0, cfg), 7_776);
    let half = vdba_frame_config_with_capacity(19_440);
    assert_eq!(half.guard_words, 16);
}

#[test]
fn hypervisor_round_trip() {
    let cfg = vdba_frame_config_default();
    let mut hv = ptr::null_mut();
    assert_eq!(unsafe { vdba_hypervisor_new(cfg, &mut hv) }, VdbaStatus::Ok);
    let reqs = [req(0, 1, 0, 325, T2), req(1, 2, 0, 325, T1)];
    let mut out = [blank(); 2];
    let mut written = 0;
    let status = unsafe {
        vdba_hypervisor_merge(
            hv,
            0,
            reqs.as_ptr(),
            reqs.len(),
            out.as_mut_ptr(),
            out.len(),
            &mut written,
        )
    };
    assert_eq!(status, VdbaStatus::Ok);
    assert_eq!(written, 2);
    let t1 = grant_for(&out, 2);
    let t2 = grant_for(&out, 1);
    assert!(t1.scheduled && t2.scheduled);
    assert_eq!(t1.start, 0);
    assert_eq!(t2.start, 356);
    assert!(!t1.delayed && !t2.delayed);

    let mut rec = VdbaFlowRecord {
        flow_id: 0,
        sla: VdbaSlaType::BestEffort,
        cum_total: 0,
        cum_delayed: 0,
        flow_breach_frames: 0,
        headroom: 0.0,
    };
    assert_eq!(
        unsafe { vdba_hypervisor_flow_record(hv, 1, &mut rec) },
        VdbaStatus::Ok
    );
    assert_eq!(rec.flow_id, 1);
    assert_eq!(rec.sla, VdbaSlaType::Type2);
    assert_eq!(rec.cum_total, 1);
    assert_eq!(rec.cum_delayed, 0);
    assert!((rec.headroom - 0.10).abs() < 1e-12);

    assert_eq!(
        unsafe { vdba_hypervisor_flow_record(hv, 99, &mut rec) },
        VdbaStatus::NotFound
    );
    assert!(last_error().contains("99"));

    let mut violations = usize::MAX;
    assert_eq!(
        unsafe { vdba_validate(cfg, out.as_ptr(), out.len(), &mut violations) },
        VdbaStatus::Ok
    );
    assert_eq!(violations, 0);
    unsafe { vdba_hypervisor_free(hv) };
}

#[test]
fn small_buffer_reports_needed_length() {
    let cfg = vdba_frame_config_default();
    let mut hv = ptr::null_mut();
    unsafe { vdba_hypervisor_new(cfg, &mut hv) };
    let reqs = [req(0, 1, 0, 325, T1), req(0, 2, 1_000, 325, BE)];
    let mut out = [blank(); 1];
    let mut written = 0;
    let status = unsafe {
        vdba_hypervisor_merge(
            hv,
            0,
            reqs.as_ptr(),
            reqs.len(),
            out.as_mut_ptr(),
            out.len(),
            &mut written,
        )
    };
    assert_eq!(status, VdbaStatus::BufferTooSmall);
    assert_eq!(written, 2);
    let mut rec = unsafe { std::mem::zeroed::<VdbaFlowRecord>() };
    assert_eq!(
        unsafe { vdba_hypervisor_flow_record(hv, 1, &mut rec) },
        VdbaStatus::NotFound
    );
    unsafe { vdba_hypervisor_free(hv) };
}

#[test]
fn null_pointers_are_refused() {
    let cfg = vdba_frame_config_default();
    assert_eq!(
        unsafe { vdba_hypervisor_new(cfg, ptr::null_mut()) },
        VdbaStatus::NullPointer
    );
    assert!(last_error().contains("null"));
    let mut written = 0;
    let status = unsafe {
        vdba_hypervisor_merge(
            ptr::null_mut(),
            0,
            ptr::null(),
            0,
            ptr::null_mut(),
            0,
            &mut written,
        )
    };
    assert_eq!(status, VdbaStatus::NullPointer);
    let status =
        unsafe { vdba_merge_stateless(cfg, 0, ptr::null(), 3, ptr::null_mut(), 3, &mut written) };
    assert_eq!(status, VdbaStatus::NullPointer);
    unsafe { vdba_hypervisor_free(ptr::null_mut()) };
}

#[test]
fn empty_frame_and_cleared_error() {
    let cfg = vdba_frame_config_default();
    let mut written = 7;
    let status =
        unsafe { vdba_merge_stateless(cfg, 0, ptr::null(), 0, ptr::null_mut(), 0, &mut written) };
    assert_eq!(status, VdbaStatus::Ok);
    assert_eq!(written, 0);
    assert!(vdba_last_error().is_null());
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let cfg = vdba_frame_config_default();
    let mut out = [blank(); 2];
    let mut written = 0;
    let bad_sla = [req(0, 1, 0, 325, 7)];
    let status = unsafe {
        vdba_merge_stateless(
            cfg,
            0,
            bad_sla.as_ptr(),
            1,
            out.as_mut_ptr(),
            2,
            &mut written,
        )
    };
    assert_eq!(status, VdbaStatus::InvalidArgument);
    assert!(last_error().contains("VdbaSlaType"));

    let too_big = [req(0, 1, 0, 40_000, T1)];
    let status = unsafe {
        vdba_merge_stateless(
            cfg,
            0,
            too_big.as_ptr(),
            1,
            out.as_mut_ptr(),
            2,
            &mut written,
        )
    };
    assert_ne!(status, VdbaStatus::Ok);

    let zero = VdbaFrameConfig {
        capacity_words: 0,
        guard_words: 0,
    };
    let mut hv = ptr::null_mut();
    assert_eq!(
        unsafe { vdba_hypervisor_new(zero, &mut hv) },
        VdbaStatus::InvalidFrame
    );
    assert!(hv.is_null());
}

#[test]
fn stateless_serves_type1_first() {
    let cfg = vdba_frame_config_default();
    let reqs = [
        req(0, 1, 0, 325, BE),
        req(1, 2, 0, 325, T2),
        req(2, 3, 0, 325, T1),
    ];
    let mut out = [blank(); 3];
    let mut written = 0;
    let status = unsafe {
        vdba_merge_stateless(cfg, 0, reqs.as_ptr(), 3, out.as_mut_ptr(), 3, &mut written)
    };
    assert_eq!(status, VdbaStatus::Ok);
    assert_eq!(grant_for(&out, 3).start, 0);
    assert_eq!(grant_for(&out, 2).start, 356);
    assert_eq!(grant_for(&out, 1).start, 712);
}

#[test]
fn exact_solver_and_limit() {
    let cfg = vdba_frame_config_default();
    let reqs = [req(0, 1, 0, 325, T1), req(1, 2, 0, 325, T2)];
    let mut out = [blank(); 2];
    let mut written = 0;
    let mut breaches = u32::MAX;
    let mut proven = false;
    let status = unsafe {
        vdba_solve_exact(
            cfg,
            reqs.as_ptr(),
            2,
            12,
            2_000,
            out.as_mut_ptr(),
            2,
            &mut written,
            &mut breaches,
            &mut proven,
        )
    };
    assert_eq!(status, VdbaStatus::Ok);
    assert_eq!(written, 2);
    assert_eq!(breaches, 0);
    assert!(proven);

    let status = unsafe {
        vdba_solve_exact(
            cfg,
            reqs.as_ptr(),
            2,
            1,
            2_000,
            out.as_mut_ptr(),
            2,
            &mut written,
            &mut breaches,
            &mut proven,
        )
    };
    assert_eq!(status, VdbaStatus::InstanceTooLarge);
}

#[test]
fn validate_counts_overlaps() {
    let cfg = vdba_frame_config_default();
    let mut a = blank();
    a.flow_id = 1;
    a.size_words = 325;
    a.scheduled = true;
    let mut b = a;
    b.flow_id = 2;
    b.vno_id = 1;
    b.start = 100;
    b.requested_start = 0;
    let mut violations = 0;
    let grants = [a, b];
    assert_eq!(
        unsafe { vdba_validate(cfg, grants.as_ptr(), 2, &mut violations) },
        VdbaStatus::Ok
    );
    assert!(violations >= 1);
    assert!(last_error().contains("violation"));
}

#[test]
fn header_is_generated() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/vdba.h")).unwrap();
    for name in [
        "vdba_hypervisor_new",
        "vdba_hypervisor_merge",
        "vdba_solve_exact",
        "VDBA_STATUS_BUFFER_TOO_SMALL",
        "typedef struct VdbaHypervisor VdbaHypervisor",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
