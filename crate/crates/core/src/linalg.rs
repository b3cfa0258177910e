//! Thin safe wrappers over the LAPACK routines the physics code needs.
//!
//! Matrices are passed row-major; symmetric/hermitian inputs make the layout irrelevant for
//! the eigen-solver, and the general routines transpose on the way in and out.
//!
//! LAPACK is loaded at run time from the system OpenBLAS (or any shared `liblapack`). OpenBLAS
//! 0.3.20 selects its Cooperlake kernels on AVX-512 BF16 machines and those return wrong `dtrmm`
//! and large `dgemm` products, so unless `OPENBLAS_CORETYPE` is already set it is pinned to
//! `Haswell` before the library initialises. `PDANET_LAPACK` names an alternative library.

use std::ffi::{c_void, CString};
use std::os::raw::{c_char, c_int};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{CoreError, Result};

type Syevd = unsafe extern "C" fn(
    *const c_char,
    *const c_char,
    *const c_int,
    *mut f64,
    *const c_int,
    *mut f64,
    *mut f64,
    *const c_int,
    *mut c_int,
    *const c_int,
    *mut c_int,
);
type Zlange = unsafe extern "C" fn(*const c_char, *const c_int, *const c_int, *const Complex64, *const c_int, *mut f64) -> f64;
type Zgetrf = unsafe extern "C" fn(*const c_int, *const c_int, *mut Complex64, *const c_int, *mut c_int, *mut c_int);
type Zgecon = unsafe extern "C" fn(
    *const c_char,
    *const c_int,
    *const Complex64,
    *const c_int,
    *const f64,
    *mut f64,
    *mut Complex64,
    *mut f64,
    *mut c_int,
);
type Zgetrs = unsafe extern "C" fn(
    *const c_char,
    *const c_int,
    *const c_int,
    *const Complex64,
    *const c_int,
    *const c_int,
    *mut Complex64,
    *const c_int,
    *mut c_int,
);
type Zgetri = unsafe extern "C" fn(*const c_int, *mut Complex64, *const c_int, *const c_int, *mut Complex64, *const c_int, *mut c_int);

struct Lapack {
    dsyevd: Syevd,
    zlange: Zlange,
    zgetrf: Zgetrf,
    zgecon: Zgecon,
    zgetrs: Zgetrs,
    zgetri: Zgetri,
}

const CANDIDATES: [&str; 4] = ["libopenblas.so.0", "libopenblas.so", "liblapack.so.3", "liblapack.so"];

fn open_library() -> std::result::Result<Lapack, String> {
    #[cfg(target_arch = "x86_64")]
    if std::env::var_os("OPENBLAS_CORETYPE").is_none() && is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
        std::env::set_var("OPENBLAS_CORETYPE", "Haswell");
    }
    let names: Vec<String> = match std::env::var("PDANET_LAPACK") {
        Ok(name) => vec![name],
        Err(_) => CANDIDATES.iter().map(|s| s.to_string()).collect(),
    };
    for name in &names {
        let cname = CString::new(name.as_str()).map_err(|e| e.to_string())?;
        // SAFETY: dlopen with a valid C string; the handle is intentionally never closed.
        let handle = unsafe { libc::dlopen(cname.as_ptr(), libc::RTLD_NOW | libc::RTLD_LOCAL) };
        if handle.is_null() {
            continue;
        }
        let sym = |s: &str| -> std::result::Result<*mut c_void, String> {
            let c = CString::new(s).unwrap();
            // SAFETY: handle is a live library handle.
            let p = unsafe { libc::dlsym(handle, c.as_ptr()) };
            if p.is_null() {
                Err(format!("{name} lacks symbol {s}"))
            } else {
                Ok(p)
            }
        };
        // SAFETY: the symbols are the standard Fortran LAPACK entry points with these signatures.
        return unsafe {
            Ok(Lapack {
                dsyevd: std::mem::transmute::<*mut c_void, Syevd>(sym("dsyevd_")?),
                zlange: std::mem::transmute::<*mut c_void, Zlange>(sym("zlange_")?),
                zgetrf: std::mem::transmute::<*mut c_void, Zgetrf>(sym("zgetrf_")?),
                zgecon: std::mem::transmute::<*mut c_void, Zgecon>(sym("zgecon_")?),
                zgetrs: std::mem::transmute::<*mut c_void, Zgetrs>(sym("zgetrs_")?),
                zgetri: std::mem::transmute::<*mut c_void, Zgetri>(sym("zgetri_")?),
            })
        };
    }
    Err(format!("no LAPACK library found (tried {})", names.join(", ")))
}

fn lapack() -> Result<&'static Lapack> {
    static LIB: OnceLock<std::result::Result<Lapack, String>> = OnceLock::new();
    LIB.get_or_init(open_library).as_ref().map_err(|e| CoreError::Resource(e.clone()))
}

fn transpose<T: Copy>(a: &[T], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * n);
    for c in 0..n {
        for r in 0..n {
            out.push(a[r * n + c]);
        }
    }
    out
}

/// Eigen-decomposition of a real symmetric `n x n` matrix (divide and conquer).
///
/// Returns ascending eigenvalues and the eigenvectors as rows: `vectors[a * n + i]` is component
/// `i` of eigenvector `a`.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(matrix.len(), n * n);
    let lib = lapack()?;
    // Column-major eigenvectors of a symmetric matrix == row-major rows after the call.
    let mut a = matrix.to_vec();
    let mut w = vec![0.0; n];
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    let nn = n as c_int;
    let mut info: c_int = 0;
    let mut work_query = [0.0f64];
    let mut iwork_query = [0 as c_int];
    // SAFETY: buffers are sized per LAPACK's workspace query.
    unsafe {
        (lib.dsyevd)(&jobz, &uplo, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(), work_query.as_mut_ptr(), &-1, iwork_query.as_mut_ptr(), &-1, &mut info);
    }
    if info != 0 {
        return Err(CoreError::Numeric(format!("dsyevd workspace query failed (info={info})")));
    }
    let lwork = work_query[0] as c_int;
    let liwork = iwork_query[0];
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
    unsafe {
        (lib.dsyevd)(&jobz, &uplo, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(), work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info);
    }
    if info != 0 {
        return Err(CoreError::Numeric(format!("dsyevd failed to converge (info={info})")));
    }
    Ok((w, a))
}

/// LU factorisation in column-major storage; returns pivots and the reciprocal condition number.
fn lu_factor(a_colmajor: &mut [Complex64], n: usize, context: &str) -> Result<(Vec<c_int>, f64)> {
    let lib = lapack()?;
    let nn = n as c_int;
    let one_norm = b'1' as c_char;
    let mut rwork = vec![0.0; 2 * n];
    // SAFETY: a has n*n elements; work buffers sized per routine documentation.
    let anorm = unsafe { (lib.zlange)(&one_norm, &nn, &nn, a_colmajor.as_mut_ptr(), &nn, rwork.as_mut_ptr()) };
    let mut ipiv = vec![0 as c_int; n];
    let mut info: c_int = 0;
    unsafe { (lib.zgetrf)(&nn, &nn, a_colmajor.as_mut_ptr(), &nn, ipiv.as_mut_ptr(), &mut info) };
    if info > 0 {
        return Err(CoreError::SingularMatrix { context: context.to_string(), condition: f64::INFINITY });
    }
    let mut rcond = 0.0;
    let mut work = vec![Complex64::new(0.0, 0.0); 2 * n];
    unsafe {
        (lib.zgecon)(
            &one_norm,
            &nn,
            a_colmajor.as_mut_ptr(),
            &nn,
            &anorm,
            &mut rcond,
            work.as_mut_ptr(),
            rwork.as_mut_ptr(),
            &mut info,
        )
    };
    Ok((ipiv, rcond))
}

/// Solve `a x = b` for a general complex `n x n` matrix and `nrhs` right-hand sides (row-major).
///
/// Fails when the reciprocal condition number drops below `min_rcond`.
pub fn complex_solve(a: &[Complex64], b: &[Complex64], n: usize, nrhs: usize, min_rcond: f64, context: &str) -> Result<Vec<Complex64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * nrhs);
    let mut acm = transpose(a, n);
    let (ipiv, rcond) = lu_factor(&mut acm, n, context)?;
    if !(rcond >= min_rcond) {
        return Err(CoreError::SingularMatrix { context: context.to_string(), condition: 1.0 / rcond });
    }
    let mut bcm = vec![Complex64::new(0.0, 0.0); n * nrhs];
    for r in 0..n {
        for c in 0..nrhs {
            bcm[c * n + r] = b[r * nrhs + c];
        }
    }
    let lib = lapack()?;
    let trans = b'N' as c_char;
    let nn = n as c_int;
    let nr = nrhs as c_int;
    let mut info: c_int = 0;
    // SAFETY: factored matrix and pivots from lu_factor; b sized n*nrhs.
    unsafe {
        (lib.zgetrs)(&trans, &nn, &nr, acm.as_mut_ptr(), &nn, ipiv.as_ptr(), bcm.as_mut_ptr(), &nn, &mut info)
    };
    if info != 0 {
        return Err(CoreError::Numeric(format!("zgetrs failed (info={info})")));
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n * nrhs];
    for r in 0..n {
        for c in 0..nrhs {
            x[r * nrhs + c] = bcm[c * n + r];
        }
    }
    Ok(x)
}

/// Full inverse of a general complex matrix (row-major in and out).
pub fn complex_inverse(a: &[Complex64], n: usize, context: &str) -> Result<Vec<Complex64>> {
    assert_eq!(a.len(), n * n);
    let mut acm = transpose(a, n);
    let (ipiv, rcond) = lu_factor(&mut acm, n, context)?;
    if rcond == 0.0 {
        return Err(CoreError::SingularMatrix { context: context.to_string(), condition: f64::INFINITY });
    }
    let lib = lapack()?;
    let nn = n as c_int;
    let mut info: c_int = 0;
    let mut query = [Complex64::new(0.0, 0.0)];
    unsafe { (lib.zgetri)(&nn, acm.as_mut_ptr(), &nn, ipiv.as_ptr(), query.as_mut_ptr(), &-1, &mut info) };
    let lwork = (query[0].re as c_int).max(1);
    let mut work = vec![Complex64::new(0.0, 0.0); lwork as usize];
    // SAFETY: workspace sized per query.
    unsafe { (lib.zgetri)(&nn, acm.as_mut_ptr(), &nn, ipiv.as_ptr(), work.as_mut_ptr(), &lwork, &mut info) };
    if info != 0 {
        return Err(CoreError::SingularMatrix { context: context.to_string(), condition: f64::INFINITY });
    }
    Ok(transpose(&acm, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs_matrix() {
        let n = 3;
        let a = [2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let (w, v) = symmetric_eigen(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| v[k * n + i] * w[k] * v[k * n + j]).sum();
                assert!((s - a[i * n + j]).abs() < 1e-12);
            }
        }
        assert!(w[0] < w[1] && w[1] < w[2]);
    }

    #[test]
    fn solve_and_inverse_agree() {
        let c = |re, im| Complex64::new(re, im);
        let a = [c(1.0, 0.5), c(2.0, 0.0), c(0.0, -1.0), c(3.0, 1.0)];
        let b = [c(1.0, 0.0), c(0.0, 1.0)];
        let x = complex_solve(&a, &b, 2, 1, 1e-14, "test").unwrap();
        let inv = complex_inverse(&a, 2, "test").unwrap();
        for r in 0..2 {
            let via_inv = inv[r * 2] * b[0] + inv[r * 2 + 1] * b[1];
            assert!((via_inv - x[r]).norm() < 1e-12);
            let back = a[r * 2] * x[0] + a[r * 2 + 1] * x[1];
            assert!((back - b[r]).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_reports_condition() {
        let c = |re| Complex64::new(re, 0.0);
        let a = [c(1.0), c(2.0), c(2.0), c(4.0)];
        let err = complex_solve(&a, &[c(1.0), c(1.0)], 2, 1, 1e-12, "rank one").unwrap_err();
        assert!(matches!(err, CoreError::SingularMatrix { .. }));
    }

    #[test]
    fn eigenvectors_of_a_2d_lattice_are_orthonormal() {
        // Large enough that blocked level-3 kernels are exercised.
        let nx = 20;
        let n = nx * nx;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 4.0 + (i % 7) as f64 * 0.01;
            if i % nx + 1 < nx {
                a[i * n + i + 1] = -1.0;
                a[(i + 1) * n + i] = -1.0;
            }
            if i + nx < n {
                a[i * n + i + nx] = -1.0;
                a[(i + nx) * n + i] = -1.0;
            }
        }
        let (w, v) = symmetric_eigen(&a, n).unwrap();
        for k in (0..n).step_by(13) {
            let norm: f64 = v[k * n..(k + 1) * n].iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[i * n + j] * v[k * n + j]).sum();
                assert!((av - w[k] * v[k * n + i]).abs() < 1e-11);
            }
        }
    }
}

