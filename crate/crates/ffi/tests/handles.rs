use std::ptr;

use riesz_ellipsoid_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { rz_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn isotropic_round_trip() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(rz_profile_isotropic(3, 1.0, &mut p), RzStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(rz_solve(p, &mut sol), RzStatus::Ok);
        assert_eq!(rz_solution_dim(sol), 3);
        assert!(rz_solution_residual(sol) < 1e-10);
        let mut a = [0.0; 3];
        assert_eq!(rz_solution_semi_axes(sol, a.as_mut_ptr(), 3), RzStatus::Ok);
        assert!((a[0] - a[2]).abs() < 1e-12);

        let mut r = [0.0; 9];
        assert_eq!(rz_solution_rotation(sol, r.as_mut_ptr(), 4), RzStatus::BufferTooSmall);
        assert_eq!(rz_solution_rotation(sol, r.as_mut_ptr(), 9), RzStatus::Ok);

        let mut pot = ptr::null_mut();
        assert_eq!(rz_potential_new(sol, p, &mut pot), RzStatus::Ok);
        // P_E is constant on the support
        let mut c0 = 0.0;
        let mut c1 = 0.0;
        let x0 = [0.0, 0.0, 0.0];
        let x1 = [0.3 * a[0], -0.2 * a[0], 0.4 * a[0]];
        assert_eq!(rz_potential_eval(pot, x0.as_ptr(), 3, &mut c0), RzStatus::Ok);
        assert_eq!(rz_potential_eval(pot, x1.as_ptr(), 3, &mut c1), RzStatus::Ok);
        assert!((c0 - c1).abs() < 1e-9 * c0.abs());
        assert!(rz_potential_energy(pot).is_finite());

        let mut v = 0.0;
        assert_eq!(rz_potential_convolve(pot, x0.as_ptr(), 2, &mut v), RzStatus::InvalidInput);
        assert!(last_error().contains("expected 3"));

        rz_potential_free(pot);
        rz_solution_free(sol);
        rz_profile_free(p);
    }
}

#[test]
fn anisotropic_profile_from_harmonics() {
    let c0 = (4.0 * std::f64::consts::PI).sqrt();
    let n = [0u32, 2, 2];
    let m = [0i32, 0, 1];
    let coeff = [c0, 0.3 * c0, 0.15 * c0];
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(rz_profile_harmonics(3, 1.5, n.as_ptr(), m.as_ptr(), coeff.as_ptr(), 3, 1, &mut p), RzStatus::Ok);
        let mut v = 0.0;
        let w = [0.0, 1.0, 0.0];
        assert_eq!(rz_profile_eval_hat(p, w.as_ptr(), 3, &mut v), RzStatus::Ok);
        assert!(v > 0.0);
        let mut sol = ptr::null_mut();
        assert_eq!(rz_solve(p, &mut sol), RzStatus::Ok);
        let mut a = [0.0; 3];
        assert_eq!(rz_solution_semi_axes(sol, a.as_mut_ptr(), 3), RzStatus::Ok);
        assert!(a[0] > a[1] && a[1] > a[2]);
        rz_solution_free(sol);
        rz_profile_free(p);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(rz_profile_isotropic(3, 3.5, &mut p), RzStatus::Domain);
        assert!(p.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(rz_profile_isotropic(3, 1.0, ptr::null_mut()), RzStatus::NullPointer);

        // Psi-hat negative somewhere: rejected by the audit
        let c0 = (4.0 * std::f64::consts::PI).sqrt();
        let n = [0u32, 2];
        let m = [0i32, 0];
        let coeff = [c0, 2.0 * c0];
        assert_eq!(rz_profile_harmonics(3, 1.0, n.as_ptr(), m.as_ptr(), coeff.as_ptr(), 2, 1, &mut p), RzStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(rz_solve(p, &mut sol), RzStatus::PositivityAuditFailed);
        assert!(sol.is_null());
        rz_profile_free(p);

        assert_eq!(rz_solution_dim(ptr::null()), 0);
        assert!(rz_solution_residual(ptr::null()).is_nan());
        rz_solution_free(ptr::null_mut());
    }
}

#[test]
fn header_is_current() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/riesz_ellipsoid.h")).unwrap();
    for sym in ["rz_solve", "rz_potential_eval", "RZ_STATUS_POSITIVITY_AUDIT_FAILED", "typedef struct RzProfile RzProfile"] {
        assert!(h.contains(sym), "{sym}");
    }
    let v = unsafe { std::ffi::CStr::from_ptr(rz_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
