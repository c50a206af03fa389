use std::ffi::{CStr, CString};
use std::ptr;

use bloch_topo_ffi::*;

fn last_error() -> String {
    let p = bt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handle(*mut BtModel);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { bt_model_free(self.0) }
    }
}

fn sphere() -> Handle {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { bt_model_sphere(5.0, 1.0, &mut m) }, BtStatus::Ok);
    assert!(!m.is_null());
    Handle(m)
}

#[test]
fn sphere_euler_and_chern() {
    let m = sphere();
    let mut s = BtEulerSummary::default();
    assert_eq!(
        unsafe { bt_euler_characteristic(m.0, BtPart::Re, 64, &mut s) },
        BtStatus::Ok
    );
    assert_eq!(s.chi, 2);
    assert_eq!((s.n_source, s.n_sink, s.n_saddle), (1, 1, 0));
    assert_eq!(s.matches_expected, 1);

    let mut c = BtChernResult::default();
    assert_eq!(
        unsafe { bt_chern_quadrature(m.0, 128, &mut c) },
        BtStatus::Ok
    );
    assert!(c.has_int && c.c_int == 1);
    assert!((c.c_re - 1.0).abs() < 1e-4 && c.c_im.abs() < 1e-12);
    assert_eq!(unsafe { bt_chern_lattice(m.0, 64, &mut c) }, BtStatus::Ok);
    assert_eq!((c.has_int, c.c_int), (true, 1));
}

#[test]
fn energy_and_velocity() {
    let m = sphere();
    let (mut re, mut im) = (0.0, 0.0);
    let kx = std::f64::consts::FRAC_PI_2;
    assert_eq!(
        unsafe { bt_band_energy(m.0, kx, 0.0, &mut re, &mut im) },
        BtStatus::Ok
    );
    // h = (r + a, 0, 0) at (π/2, 0).
    assert!((re - 6.0).abs() < 1e-12 && im == 0.0);
    let mut v = [f64::NAN; 4];
    assert_eq!(
        unsafe { bt_velocity(m.0, kx, 0.0, v.as_mut_ptr()) },
        BtStatus::Ok
    );
    assert!(v.iter().all(|x| x.abs() < 1e-9), "{v:?}");
}

#[test]
fn json_report_round_trips() {
    let m = sphere();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { bt_euler_report_json(m.0, BtPart::Re, 64, &mut s) },
        BtStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { bt_string_free(s) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["chi"], 2);
    assert_eq!(v["zeros"].as_array().unwrap().len(), 2);
}

#[test]
fn error_codes() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { bt_model_torus(1.0, 2.0, 0.5, &mut m) },
        BtStatus::InvalidParameter
    );
    assert!(m.is_null());
    assert!(last_error().contains("R"));

    assert_eq!(
        unsafe { bt_model_sphere(5.0, 1.0, ptr::null_mut()) },
        BtStatus::NullPointer
    );
    let mut s = BtEulerSummary::default();
    assert_eq!(
        unsafe { bt_euler_characteristic(ptr::null(), BtPart::Re, 64, &mut s) },
        BtStatus::NullPointer
    );

    let nh = {
        let mut p = ptr::null_mut();
        assert_eq!(
            unsafe { bt_model_nh_torus(2.0, 1.0, 0.5, 0.5, 0.5, 0.2, &mut p) },
            BtStatus::Ok
        );
        Handle(p)
    };
    let mut herm = true;
    assert_eq!(
        unsafe { bt_model_is_hermitian(nh.0, &mut herm) },
        BtStatus::Ok
    );
    assert!(!herm);
    let mut c = BtChernResult::default();
    assert_eq!(
        unsafe { bt_chern_lattice(nh.0, 64, &mut c) },
        BtStatus::NotHermitian
    );

    let torus = {
        let mut p = ptr::null_mut();
        assert_eq!(
            unsafe { bt_model_torus(2.0, 1.0, 1.0, &mut p) },
            BtStatus::Ok
        );
        Handle(p)
    };
    assert_eq!(
        unsafe { bt_chern_lattice(torus.0, 64, &mut c) },
        BtStatus::Gapless
    );
    assert_eq!(
        unsafe { bt_chern_quadrature(torus.0, 8, &mut c) },
        BtStatus::Precondition
    );
    assert_eq!(
        unsafe { bt_euler_characteristic(torus.0, BtPart::Re, 4, &mut s) },
        BtStatus::Precondition
    );
}

#[test]
fn config_loading() {
    let dir = std::env::temp_dir().join(format!("bt_ffi_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("torus.json");
    std::fs::write(
        &path,
        r#"{"model": "torus", "params": {"R": 2, "r": 1, "a": 0.5}}"#,
    )
    .unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { bt_model_from_config(c_path.as_ptr(), &mut m) },
        BtStatus::Ok
    );
    let m = Handle(m);
    let mut s = BtEulerSummary::default();
    assert_eq!(
        unsafe { bt_euler_characteristic(m.0, BtPart::Re, 64, &mut s) },
        BtStatus::Ok
    );
    assert_eq!(s.chi, 0);

    let missing = CString::new(dir.join("nope.json").to_str().unwrap()).unwrap();
    let mut m2 = ptr::null_mut();
    let st = unsafe { bt_model_from_config(missing.as_ptr(), &mut m2) };
    assert!(matches!(st, BtStatus::Config | BtStatus::Io), "{st:?}");
    assert_eq!(
        unsafe { bt_model_from_config(ptr::null(), &mut m2) },
        BtStatus::NullPointer
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(bt_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bloch_topo.h"))
            .unwrap();
    for name in [
        "BtModel",
        "BT_STATUS_OK",
        "BT_STATUS_PANIC",
        "BtEulerSummary",
        "BtChernResult",
        "bt_model_sphere",
        "bt_model_torus",
        "bt_model_nh_torus",
        "bt_model_from_config",
        "bt_model_free",
        "bt_band_energy",
        "bt_velocity",
        "bt_euler_characteristic",
        "bt_euler_report_json",
        "bt_string_free",
        "bt_chern_quadrature",
        "bt_chern_lattice",
        "bt_last_error_message",
        "bt_version",
    ] {
        assert!(header.contains(name), "header is missing {name}");
    }
}
