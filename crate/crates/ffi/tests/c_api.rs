use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use eventsr_ffi::*;

fn last_error() -> String {
    let n = esr_last_error_length();
    let mut buf = vec![0 as c_char; n.max(1)];
    let w = unsafe { esr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(w >= 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn sample_events() -> *mut EsrEvents {
    let n = 60;
    let t: Vec<u64> = (0..n as u64).map(|i| 10 * i).collect();
    let x: Vec<u16> = (0..n).map(|i| (i % 4) as u16).collect();
    let y: Vec<u16> = (0..n).map(|i| (i / 4 % 3) as u16).collect();
    let p: Vec<i8> = (0..n).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
    let mut ev = ptr::null_mut();
    let s = unsafe {
        esr_events_new(
            t.as_ptr(),
            x.as_ptr(),
            y.as_ptr(),
            p.as_ptr(),
            n,
            4,
            3,
            &mut ev,
        )
    };
    assert_eq!(s, EsrStatus::Ok);
    ev
}

#[test]
fn events_round_trip_through_evt1() {
    let dir = tempfile::tempdir().unwrap();
    let path = cpath(&dir.path().join("a.evt1"));
    let ev = sample_events();
    unsafe {
        assert_eq!(esr_events_len(ev), 60);
        assert_eq!(esr_events_save(ev, path.as_ptr()), EsrStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(esr_events_load(path.as_ptr(), &mut back), EsrStatus::Ok);
        assert_eq!(esr_events_len(back), 60);
        let (mut w, mut h) = (0, 0);
        assert_eq!(esr_events_dims(back, &mut w, &mut h), EsrStatus::Ok);
        assert_eq!((w, h), (4, 3));
        let (mut t, mut x, mut y, mut p) = (0, 0, 0, 0);
        assert_eq!(
            esr_events_get(back, 5, &mut t, &mut x, &mut y, &mut p),
            EsrStatus::Ok
        );
        assert_eq!((t, x, y, p), (50, 1, 1, 1));
        assert_eq!(
            esr_events_get(back, 60, &mut t, &mut x, &mut y, &mut p),
            EsrStatus::InvalidArgument
        );
        esr_events_free(back);
        esr_events_free(ev);
    }
}

#[test]
fn out_of_bounds_events_are_rejected() {
    let (t, x, y, p) = ([0u64], [9u16], [0u16], [1i8]);
    let mut ev = ptr::null_mut();
    let s = unsafe {
        esr_events_new(
            t.as_ptr(),
            x.as_ptr(),
            y.as_ptr(),
            p.as_ptr(),
            1,
            4,
            3,
            &mut ev,
        )
    };
    assert_eq!(s, EsrStatus::Data);
    assert!(ev.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn stacking_reports_shape_and_shortfall() {
    let ev = sample_events();
    unsafe {
        let mut st = ptr::null_mut();
        assert_eq!(esr_stack_by_number(ev, 10, 3, 0, &mut st), EsrStatus::Ok);
        assert_eq!(esr_tensor_ndim(st), 3);
        let mut dims = [0usize; 3];
        assert_eq!(esr_tensor_shape(st, dims.as_mut_ptr(), 3), EsrStatus::Ok);
        assert_eq!(dims, [3, 3, 4]);
        assert_eq!(
            esr_tensor_shape(st, dims.as_mut_ptr(), 2),
            EsrStatus::InvalidArgument
        );
        let mut buf = vec![0.0; esr_tensor_len(st)];
        assert_eq!(
            esr_tensor_copy_data(st, buf.as_mut_ptr(), buf.len()),
            EsrStatus::Ok
        );
        assert!(buf.iter().all(|v| (0.0..=1.0).contains(v)));
        esr_tensor_free(st);

        let mut none = ptr::null_mut();
        assert_eq!(
            esr_stack_by_number(ev, 30, 3, 0, &mut none),
            EsrStatus::Data
        );
        assert!(last_error().contains("30"), "{}", last_error());
        esr_events_free(ev);
    }
}

#[test]
fn null_pointers_and_bad_dtype() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            esr_events_load(ptr::null(), &mut out),
            EsrStatus::NullPointer
        );
        assert!(last_error().contains("path"));
        assert_eq!(esr_events_len(ptr::null()), 0);
        assert_eq!(esr_checkpoint_phase(ptr::null()), 0);
        esr_events_free(ptr::null_mut());
        esr_tensor_free(ptr::null_mut());
        esr_checkpoint_free(ptr::null_mut());
        let mut byte = 0 as c_char;
        assert_eq!(esr_last_error_message(&mut byte, 0), -1);

        let data = [0.5f64; 4];
        let shape = [2usize, 2];
        let mut t = ptr::null_mut();
        assert_eq!(
            esr_tensor_new(shape.as_ptr(), 2, data.as_ptr(), 4, &mut t),
            EsrStatus::Ok
        );
        let dir = tempfile::tempdir().unwrap();
        let p = cpath(&dir.path().join("t.tns"));
        assert_eq!(
            esr_tensor_save(t, p.as_ptr(), 7),
            EsrStatus::InvalidArgument
        );
        assert_eq!(esr_tensor_save(t, p.as_ptr(), 2), EsrStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(esr_tensor_load(p.as_ptr(), &mut back), EsrStatus::Ok);
        let mut v = 0.0;
        assert_eq!(esr_psnr(t, back, &mut v), EsrStatus::Ok);
        assert_eq!(v, 99.0);
        let mut bad = ptr::null_mut();
        assert_eq!(
            esr_tensor_new(shape.as_ptr(), 2, data.as_ptr(), 3, &mut bad),
            EsrStatus::Data
        );
        esr_tensor_free(back);
        esr_tensor_free(t);
    }
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = cpath(dir.path());
    let mut c = ptr::null_mut();
    assert_eq!(
        unsafe { esr_checkpoint_load(p.as_ptr(), &mut c) },
        EsrStatus::Data
    );
    assert!(last_error().contains("not a checkpoint"));
}

#[test]
fn simulating_a_constant_video_gives_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let img = eventsr::Tensor::full(&[4, 4], 0.4);
    for k in 0..3 {
        let p = dir.path().join(format!("f_t{:04}.png", k * 100));
        eventsr::imageio::save_png(&img, &p, eventsr::imageio::BitDepth::Sixteen).unwrap();
    }
    let d = cpath(dir.path());
    let mut ev = ptr::null_mut();
    unsafe {
        assert_eq!(
            esr_simulate_video_dir(d.as_ptr(), 0.15, 0, &mut ev),
            EsrStatus::Ok
        );
        assert_eq!(esr_events_len(ev), 0);
        esr_events_free(ev);
        assert_eq!(
            esr_simulate_video_dir(d.as_ptr(), -1.0, 0, &mut ev),
            EsrStatus::InvalidArgument
        );
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(esr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/eventsr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "esr_events_load",
        "esr_stack_by_number",
        "esr_checkpoint_infer",
        "esr_last_error_message",
        "typedef struct EsrEvents EsrEvents",
        "ESR_STATUS_NULL_POINTER = 4",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax-check as C when a compiler is around.
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"])
        .arg(&header)
        .output()
    {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
