//! C interface over the ellipsoid solver.
//!
//! Every handle is opaque and owned by the caller once returned; free it with the
//! matching `rz_*_free`. Functions return an [`RzStatus`]; on failure the message is
//! kept per thread and can be read with [`rz_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use riesz_ellipsoid::measure::BarenblattMeasure;
use riesz_ellipsoid::potential::{PotentialConfig, PotentialField};
use riesz_ellipsoid::profile::{HarmonicTerm, Profile};
use riesz_ellipsoid::solver::{homotopy_solve, Solution, SolverConfig};
use riesz_ellipsoid::specfun::Homogeneity;
use riesz_ellipsoid::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    PositivityAuditFailed = 3,
    ContinuationFailed = 4,
    Domain = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Anisotropy profile together with `(d, s)`.
pub struct RzProfile(Profile);

/// Solved support ellipsoid.
pub struct RzSolution(Solution);

/// Potential of the Barenblatt measure on a solved ellipsoid.
pub struct RzPotential(PotentialField);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RzStatus {
    match e {
        Error::InvalidInput(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => RzStatus::InvalidInput,
        Error::PositivityAuditFailed { .. } => RzStatus::PositivityAuditFailed,
        Error::StepUnderflow { .. } | Error::LostPositivity(_) | Error::MaxIterations { .. } => {
            RzStatus::ContinuationFailed
        }
        Error::Domain(_) | Error::Pole(_) => RzStatus::Domain,
        _ => RzStatus::Numerical,
    }
}

fn guard<F: FnOnce() -> Result<(), RzStatus>>(f: F) -> RzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RzStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            RzStatus::Panic
        }
    }
}

fn lift<T>(r: riesz_ellipsoid::Result<T>) -> Result<T, RzStatus> {
    r.map_err(|e| {
        let s = status_of(&e);
        set_error(e.to_string());
        s
    })
}

fn null() -> RzStatus {
    set_error("null pointer argument".into());
    RzStatus::NullPointer
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], RzStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), RzStatus> {
    if out.is_null() {
        return Err(null());
    }
    if len < src.len() {
        set_error(format!("buffer holds {len} values, {} needed", src.len()));
        return Err(RzStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn homogeneity(d: usize, s: f64) -> Result<Homogeneity, RzStatus> {
    lift(Homogeneity::new(s, d))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated
/// to `len - 1` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rz_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// `Psi-hat = 1`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rz_profile_isotropic(d: usize, s: f64, out: *mut *mut RzProfile) -> RzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let h = homogeneity(d, s)?;
        *out = Box::into_raw(Box::new(RzProfile(Profile::isotropic(h))));
        Ok(())
    })
}

/// Profile given by real spherical-harmonic coefficients of `Psi-hat` (`fourier != 0`)
/// or of `Psi` (`fourier == 0`). Arrays `n`, `m`, `coeff` have `len` entries.
///
/// # Safety
/// The arrays must hold `len` values; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rz_profile_harmonics(
    d: usize,
    s: f64,
    n: *const u32,
    m: *const i32,
    coeff: *const f64,
    len: usize,
    fourier: c_int,
    out: *mut *mut RzProfile,
) -> RzStatus {
    guard(|| {
        if out.is_null() || (len > 0 && (n.is_null() || m.is_null() || coeff.is_null())) {
            return Err(null());
        }
        let h = homogeneity(d, s)?;
        let terms: Vec<HarmonicTerm> = (0..len)
            .map(|k| HarmonicTerm { n: *n.add(k) as usize, m: *m.add(k) as i64, coeff: *coeff.add(k) })
            .collect();
        let p = if fourier != 0 { Profile::from_fourier_harmonics(h, &terms) } else { Profile::from_harmonics(h, &terms) };
        *out = Box::into_raw(Box::new(RzProfile(lift(p)?)));
        Ok(())
    })
}

/// `Psi-hat` at the unit vector `w` (length `d`).
///
/// # Safety
/// `p` must be a live profile, `w` must hold `len` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rz_profile_eval_hat(p: *const RzProfile, w: *const f64, len: usize, out: *mut f64) -> RzStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(null)?;
        let w = slice(w, len)?;
        if w.len() != p.0.d() {
            set_error(format!("direction has {} components, expected {}", w.len(), p.0.d()));
            return Err(RzStatus::InvalidInput);
        }
        if out.is_null() {
            return Err(null());
        }
        *out = p.0.eval_hat(w);
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from `rz_profile_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rz_profile_free(p: *mut RzProfile) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Solves for the support ellipsoid with default solver settings.
///
/// # Safety
/// `p` must be a live profile and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rz_solve(p: *const RzProfile, out: *mut *mut RzSolution) -> RzStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let sol = lift(homotopy_solve(&p.0, &SolverConfig::default()))?;
        *out = Box::into_raw(Box::new(RzSolution(sol)));
        Ok(())
    })
}

/// # Safety
/// `sol` must be a live solution.
#[no_mangle]
pub unsafe extern "C" fn rz_solution_dim(sol: *const RzSolution) -> usize {
    sol.as_ref().map(|s| s.0.spec.d()).unwrap_or(0)
}

/// Final residual `|L(1, M)|_inf`, NaN for a null handle.
///
/// # Safety
/// `sol` must be a live solution.
#[no_mangle]
pub unsafe extern "C" fn rz_solution_residual(sol: *const RzSolution) -> f64 {
    sol.as_ref().map(|s| s.0.residual).unwrap_or(f64::NAN)
}

/// Semi-axes, descending, into `out[0..d]`.
///
/// # Safety
/// `sol` must be a live solution; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn rz_solution_semi_axes(sol: *const RzSolution, out: *mut f64, len: usize) -> RzStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(null)?;
        write_out(&sol.0.spec.a, out, len)
    })
}

/// Rotation `R` (columns are the principal axes), row-major into `out[0..d*d]`.
///
/// # Safety
/// `sol` must be a live solution; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn rz_solution_rotation(sol: *const RzSolution, out: *mut f64, len: usize) -> RzStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(null)?;
        let r = &sol.0.spec.r;
        let d = sol.0.spec.d();
        let flat: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| r[(i, j)])).collect();
        write_out(&flat, out, len)
    })
}

/// # Safety
/// `sol` must be null or a handle from `rz_solve` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rz_solution_free(sol: *mut RzSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Potential field of the Barenblatt measure on `sol` for the kernel of `p`.
///
/// # Safety
/// `sol` and `p` must be live handles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rz_potential_new(
    sol: *const RzSolution,
    p: *const RzProfile,
    out: *mut *mut RzPotential,
) -> RzStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(null)?;
        let p = p.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let h = homogeneity(p.0.d(), p.0.s())?;
        let measure = lift(BarenblattMeasure::new(sol.0.spec.clone(), h))?;
        let field = lift(PotentialField::new(measure, &p.0, PotentialConfig::default()))?;
        *out = Box::into_raw(Box::new(RzPotential(field)));
        Ok(())
    })
}

unsafe fn eval_with(
    pot: *const RzPotential,
    x: *const f64,
    len: usize,
    out: *mut f64,
    f: fn(&PotentialField, &[f64]) -> riesz_ellipsoid::Result<f64>,
) -> RzStatus {
    guard(|| {
        let pot = pot.as_ref().ok_or_else(null)?;
        let x = slice(x, len)?;
        if x.len() != pot.0.d() {
            set_error(format!("point has {} components, expected {}", x.len(), pot.0.d()));
            return Err(RzStatus::InvalidInput);
        }
        if out.is_null() {
            return Err(null());
        }
        *out = lift(f(&pot.0, x))?;
        Ok(())
    })
}

/// `(W * mu)(x)`.
///
/// # Safety
/// `pot` must be live; `x` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rz_potential_convolve(pot: *const RzPotential, x: *const f64, len: usize, out: *mut f64) -> RzStatus {
    eval_with(pot, x, len, out, PotentialField::convolve)
}

/// `P_E(x) = (W * mu)(x) + |x|^2 / 2`.
///
/// # Safety
/// As for [`rz_potential_convolve`].
#[no_mangle]
pub unsafe extern "C" fn rz_potential_eval(pot: *const RzPotential, x: *const f64, len: usize, out: *mut f64) -> RzStatus {
    eval_with(pot, x, len, out, PotentialField::p_field)
}

/// Total energy of the measure.
///
/// # Safety
/// `pot` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rz_potential_energy(pot: *const RzPotential) -> f64 {
    pot.as_ref().map(|p| p.0.energy()).unwrap_or(f64::NAN)
}

/// # Safety
/// `pot` must be null or a handle from `rz_potential_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rz_potential_free(pot: *mut RzPotential) {
    if !pot.is_null() {
        drop(Box::from_raw(pot));
    }
}
