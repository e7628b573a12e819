use std::ffi::{CStr, CString};
use std::ptr;

use abflux_ffi::*;

const MODEL: &str = r#"{"type":"poisson","rho":1.0,"flux":{"law":"constant","value":0.5}}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(abflux_last_error()) }.to_string_lossy().into_owned()
}

fn sample(k: u32, seed: u64) -> *mut AbfluxConfiguration {
    let model = CString::new(MODEL).unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { abflux_configuration_sample(model.as_ptr(), k, seed, &mut c) }, AbfluxStatus::Ok);
    assert!(!c.is_null());
    c
}

#[test]
fn configuration_round_trips_through_json() {
    unsafe {
        let c = sample(2, 3);
        let mut json = ptr::null_mut();
        assert_eq!(abflux_configuration_to_json(c, &mut json), AbfluxStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(abflux_configuration_from_json(json, &mut back), AbfluxStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(abflux_configuration_to_json(back, &mut again), AbfluxStatus::Ok);
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(again));
        let (mut a, mut b) = (0usize, 0usize);
        abflux_configuration_len(c, &mut a);
        abflux_configuration_len(back, &mut b);
        assert_eq!(a, b);
        abflux_string_free(json);
        abflux_string_free(again);
        abflux_configuration_free(c);
        abflux_configuration_free(back);
    }
}

#[test]
fn operator_spectrum_matches_core() {
    unsafe {
        let c = sample(1, 9);
        let mut op = ptr::null_mut();
        assert_eq!(abflux_operator_assemble(c, 4, AbfluxBoundary::Neumann, &mut op), AbfluxStatus::Ok);
        let mut dim = 0usize;
        assert_eq!(abflux_operator_dim(op, &mut dim), AbfluxStatus::Ok);
        assert_eq!(dim, 13 * 13);
        let mut e1 = f64::NAN;
        assert_eq!(abflux_lowest_eigenvalue(op, &mut e1), AbfluxStatus::Ok);
        assert!(e1 >= 0.0);
        let energies = [e1 - 1e-6, e1 + 1e-6, 2.0, 4.0];
        let mut counts = [0u64; 4];
        assert_eq!(abflux_count_below(op, energies.as_ptr(), 4, counts.as_mut_ptr()), AbfluxStatus::Ok);
        assert_eq!(counts[0], 0);
        assert!(counts[1] >= 1);
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        abflux_operator_free(op);
        abflux_configuration_free(c);
    }
}

#[test]
fn ids_estimate_returns_a_curve() {
    let params = CString::new(format!(
        r#"{{"model":{MODEL},"k":1,"m":4,"boundary":"dirichlet","energies":[0.5,1.0,2.0],"seed":2}}"#
    ))
    .unwrap();
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(abflux_estimate_ids(params.as_ptr(), 20, &mut out), AbfluxStatus::Ok, "{}", last_error());
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
        assert_eq!(v["n_hat"].as_array().unwrap().len(), 3);
        assert_eq!(v["samples"], 20);
        abflux_string_free(out);
    }
}

#[test]
fn errors_are_reported_by_code_and_message() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(abflux_configuration_sample(ptr::null(), 1, 0, &mut c), AbfluxStatus::NullPointer);
        assert!(last_error().contains("model_json"));

        let bad = CString::new(r#"{"type":"lattice_gas"}"#).unwrap();
        assert_eq!(abflux_configuration_sample(bad.as_ptr(), 1, 0, &mut c), AbfluxStatus::InvalidArgument);
        assert!(last_error().contains("unknown variant"));
        assert!(c.is_null());

        let garbage = CString::new("{").unwrap();
        assert_eq!(abflux_configuration_from_json(garbage.as_ptr(), &mut c), AbfluxStatus::InvalidArgument);

        let cfg = sample(1, 0);
        assert!(last_error().is_empty());
        let mut op = ptr::null_mut();
        assert_eq!(abflux_operator_assemble(cfg, 0, AbfluxBoundary::Dirichlet, &mut op), AbfluxStatus::InvalidArgument);
        assert_eq!(abflux_operator_assemble(ptr::null(), 4, AbfluxBoundary::Dirichlet, &mut op), AbfluxStatus::NullPointer);
        assert_eq!(abflux_lowest_eigenvalue(ptr::null(), ptr::null_mut()), AbfluxStatus::NullPointer);
        abflux_configuration_free(cfg);
        abflux_configuration_free(ptr::null_mut());
        abflux_operator_free(ptr::null_mut());
        abflux_string_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(abflux_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/abflux.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 14);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    for t in ["typedef struct AbfluxConfiguration AbfluxConfiguration;", "typedef struct AbfluxOperator AbfluxOperator;", "ABFLUX_STATUS_PANIC = 4"] {
        assert!(header.contains(t), "{t} missing");
    }
}
