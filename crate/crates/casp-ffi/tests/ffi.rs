//! Exercises the C entry points exactly as a foreign caller would: raw
//! pointers, status codes, out-buffers.

use casp_ffi::{
    casp_last_error_message, casp_model_free, casp_model_len, casp_model_new,
    casp_project_omega, casp_project_simplex_box, casp_repair, casp_version, CaspMethod,
    CaspQpReport, CaspStatus,
};

fn last_error() -> String {
    unsafe {
        let needed = casp_last_error_message(std::ptr::null_mut(), 0);
        let mut buf = vec![0i8; needed + 1];
        casp_last_error_message(buf.as_mut_ptr() as *mut _, buf.len());
        let bytes: Vec<u8> = buf[..needed].iter().map(|&b| b as u8).collect();
        String::from_utf8(bytes).unwrap()
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

#[test]
fn version_is_nul_terminated_semver() {
    let ptr = casp_version();
    let s = unsafe { std::ffi::CStr::from_ptr(ptr) }.to_str().unwrap();
    assert_eq!(s, env!("CARGO_PKG_VERSION"));
}

#[test]
fn model_roundtrip_and_len() {
    let n = 4;
    let omega = identity(n);
    let mu = [0.1, 0.2, 0.05, 0.15];
    let mut handle: *mut casp_ffi::CaspModel = std::ptr::null_mut();
    let status = unsafe {
        casp_model_new(n, mu.as_ptr(), omega.as_ptr(), std::ptr::null(), &mut handle)
    };
    assert_eq!(status, CaspStatus::Ok);
    assert!(!handle.is_null());
    assert_eq!(unsafe { casp_model_len(handle) }, n);
    unsafe { casp_model_free(handle) };
}

#[test]
fn model_new_rejects_nulls_and_nonfinite() {
    let mut handle: *mut casp_ffi::CaspModel = std::ptr::null_mut();
    let status = unsafe {
        casp_model_new(3, std::ptr::null(), std::ptr::null(), std::ptr::null(), &mut handle)
    };
    assert_eq!(status, CaspStatus::NullArgument);

    let mut omega = identity(2);
    omega[1] = f64::NAN;
    let status = unsafe {
        casp_model_new(2, std::ptr::null(), omega.as_ptr(), std::ptr::null(), &mut handle)
    };
    assert_eq!(status, CaspStatus::InvalidArgument);
    assert!(last_error().contains("non-finite"));
}

#[test]
fn repair_matches_library_path() {
    // A correlated 4-asset covariance; repair with both the C surface and
    // the Rust library, expecting identical dense weights.
    let n = 4;
    let omega = vec![
        0.04, 0.01, 0.00, 0.00, //
        0.01, 0.09, 0.02, 0.00, //
        0.00, 0.02, 0.06, 0.01, //
        0.00, 0.00, 0.01, 0.05,
    ];
    let mu = vec![0.10, 0.20, 0.15, 0.05];
    let z = vec![0.9, 0.2, 0.4, -0.1];

    let mut handle: *mut casp_ffi::CaspModel = std::ptr::null_mut();
    let status = unsafe {
        casp_model_new(n, mu.as_ptr(), omega.as_ptr(), std::ptr::null(), &mut handle)
    };
    assert_eq!(status, CaspStatus::Ok);

    let mut weights = vec![0.0; n];
    let mut report = CaspQpReport {
        objective_value: 0.0,
        kkt_residual: 0.0,
        iterations: 0,
        regularized: 0,
        degenerate_selection: 0,
    };
    let status = unsafe {
        casp_repair(
            handle,
            2,
            0.02,
            0.9,
            CaspMethod::CaspBasic,
            0.0,
            0.0,
            0.045,
            z.as_ptr(),
            weights.as_mut_ptr(),
            &mut report,
        )
    };
    assert_eq!(status, CaspStatus::Ok);
    unsafe { casp_model_free(handle) };

    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    assert_eq!(weights.iter().filter(|w| **w != 0.0).count(), 2);
    assert!(report.kkt_residual <= 1e-7);

    // Library-side reference.
    let model = casp::market::MarketModel::from_raw(
        (0..n).map(|i| format!("A{i}")).collect(),
        mu,
        omega,
        vec![0.0; n],
    )
    .unwrap();
    let constraints = casp::projection::ConstraintSet::new(2, 0.02, 0.9).unwrap();
    let method = casp::repair::RepairMethod::preset(
        casp::repair::MethodName::CaspBasic,
        casp::repair::RaParams::default(),
        0.045,
    );
    let candidate = casp::projection::Candidate::new(z).unwrap();
    let (portfolio, _) = casp::repair::repair(&candidate, &model, &constraints, &method).unwrap();
    let expected = portfolio.to_dense(n);
    assert!(weights
        .iter()
        .zip(&expected)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn repair_infeasible_constraints_status() {
    let n = 3;
    let omega = identity(n);
    let mut handle: *mut casp_ffi::CaspModel = std::ptr::null_mut();
    unsafe {
        assert_eq!(
            casp_model_new(n, std::ptr::null(), omega.as_ptr(), std::ptr::null(), &mut handle),
            CaspStatus::Ok
        );
    }
    let z = [0.5, 0.3, 0.2];
    let mut weights = vec![0.0; n];
    let status = unsafe {
        casp_repair(
            handle,
            2,
            0.8, // k·lower = 1.6 > 1: empty simplex
            1.0,
            CaspMethod::Euclidean,
            0.0,
            0.0,
            0.045,
            z.as_ptr(),
            weights.as_mut_ptr(),
            std::ptr::null_mut(),
        )
    };
    assert_eq!(status, CaspStatus::InfeasibleConstraints);
    assert!(last_error().contains("simplex"));
    unsafe { casp_model_free(handle) };
}

#[test]
fn simplex_projection_buffer_roundtrip() {
    let z = [10.0, 0.0];
    let mut out = vec![0.0; 2];
    let status = unsafe {
        casp_project_simplex_box(z.as_ptr(), 2, 0.0, 1.0, 1e-10, out.as_mut_ptr())
    };
    assert_eq!(status, CaspStatus::Ok);
    assert!((out[0] - 1.0).abs() < 1e-9);
    assert!(out[1].abs() < 1e-9);
}

#[test]
fn omega_projection_identity_matches_simplex() {
    let z = [0.8, -0.2, 0.6];
    let omega = identity(3);
    let mut out_omega = vec![0.0; 3];
    let mut out_euc = vec![0.0; 3];
    unsafe {
        assert_eq!(
            casp_project_omega(
                z.as_ptr(),
                omega.as_ptr(),
                3,
                0.0,
                1.0,
                1e-10,
                out_omega.as_mut_ptr(),
                std::ptr::null_mut(),
            ),
            CaspStatus::Ok
        );
        assert_eq!(
            casp_project_simplex_box(z.as_ptr(), 3, 0.0, 1.0, 1e-10, out_euc.as_mut_ptr()),
            CaspStatus::Ok
        );
    }
    for (a, b) in out_omega.iter().zip(&out_euc) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn error_message_truncation() {
    // Force an error, then read it into a tiny buffer.
    let mut out = vec![0.0; 2];
    let status = unsafe {
        casp_project_simplex_box(std::ptr::null(), 2, 0.0, 1.0, 1e-10, out.as_mut_ptr())
    };
    assert_eq!(status, CaspStatus::NullArgument);
    let needed = unsafe { casp_last_error_message(std::ptr::null_mut(), 0) };
    assert!(needed > 4);
    let mut buf = vec![0i8; 5];
    unsafe { casp_last_error_message(buf.as_mut_ptr() as *mut _, buf.len()) };
    assert_eq!(buf[4], 0, "buffer must be NUL-terminated");
}

#[test]
fn generated_header_exists_and_declares_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/casp.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header present");
    for symbol in [
        "casp_model_new",
        "casp_model_free",
        "casp_repair",
        "casp_project_simplex_box",
        "casp_project_omega",
        "casp_last_error_message",
        "casp_version",
        "CASP_METHOD_RA_CASP",
        "CASP_STATUS_OK",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
