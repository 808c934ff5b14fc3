//! Central finite-difference engine used as ground truth for every
//! analytic derivative in the crate, plus the comparison report type.
//!
//! Central differences are second-order accurate, which is what makes the
//! 1e-6 relative tolerances reachable at per-unit scale. Oracle output is
//! dense; oracle runs are restricted to small cases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdError {
    #[error("non-finite function value while probing coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("shape mismatch: analytic {analytic:?}, numeric {numeric:?}")]
    ShapeMismatch {
        analytic: (usize, usize),
        numeric: (usize, usize),
    },
}

/// Dense Jacobian of a complex-vector function of a real vector:
/// column k is (f(x + h·e_k) − f(x − h·e_k)) / 2h.
pub fn fd_jacobian<F>(f: F, x0: &[f64], step: f64) -> Result<DMatrix<Complex64>, FdError>
where
    F: Fn(&[f64]) -> Vec<Complex64>,
{
    assert!(step > 0.0);
    let n = x0.len();
    let f0 = f(x0);
    let m = f0.len();
    let mut jac = DMatrix::from_element(m, n, Complex64::new(0.0, 0.0));
    let mut x = x0.to_vec();
    for k in 0..n {
        x[k] = x0[k] + step;
        let fp = f(&x);
        x[k] = x0[k] - step;
        let fm = f(&x);
        x[k] = x0[k];
        for i in 0..m {
            let d = (fp[i] - fm[i]) / (2.0 * step);
            if !d.re.is_finite() || !d.im.is_finite() {
                return Err(FdError::NonFinite { coordinate: k });
            }
            jac[(i, k)] = d;
        }
    }
    Ok(jac)
}

/// Central differences of an analytic contracted gradient; the result is
/// compared against analytic Hessian blocks.
pub fn fd_hessian_contract<G>(g: G, x0: &[f64], step: f64) -> Result<DMatrix<f64>, FdError>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let jac = fd_jacobian(
        |x| g(x).into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        x0,
        step,
    )?;
    Ok(jac.map(|z| z.re))
}

/// Comparison outcome for one named derivative block.
#[derive(Debug, Clone, Serialize)]
pub struct FDReport {
    pub block_name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: (usize, usize),
    pub pass: bool,
    pub step: f64,
}

/// Compare an analytic matrix against a numeric oracle. The relative error
/// is |a − n| normalized by the numeric matrix's max magnitude (entrywise
/// normalization would blow up on near-zero entries).
/// Passes iff max_rel_err ≤ rtol or max_abs_err ≤ atol.
pub fn compare(
    analytic: &DMatrix<Complex64>,
    numeric: &DMatrix<Complex64>,
    rtol: f64,
    atol: f64,
    name: &str,
    step: f64,
) -> Result<FDReport, FdError> {
    if analytic.shape() != numeric.shape() {
        return Err(FdError::ShapeMismatch {
            analytic: analytic.shape(),
            numeric: numeric.shape(),
        });
    }
    let scale = numeric.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-12);
    let mut max_abs = 0.0;
    let mut worst = (0, 0);
    for c in 0..numeric.ncols() {
        for r in 0..numeric.nrows() {
            let err = (analytic[(r, c)] - numeric[(r, c)]).norm();
            if err > max_abs {
                max_abs = err;
                worst = (r, c);
            }
        }
    }
    let max_rel = max_abs / scale;
    Ok(FDReport {
        block_name: name.to_string(),
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        worst_index: worst,
        pass: max_rel <= rtol || max_abs <= atol,
        step,
    })
}

pub fn compare_real(
    analytic: &DMatrix<f64>,
    numeric: &DMatrix<f64>,
    rtol: f64,
    atol: f64,
    name: &str,
    step: f64,
) -> Result<FDReport, FdError> {
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    compare(&to_c(analytic), &to_c(numeric), rtol, atol, name, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_recovered_exactly() {
        // f(x) = Ax with complex A
        let a = DMatrix::from_row_slice(2, 2, &[1.5, -2.0, 0.25, 3.0])
            .map(|v| Complex64::new(v, 0.5 * v));
        let f = |x: &[f64]| {
            let xv = nalgebra::DVector::from_iterator(2, x.iter().map(|&v| Complex64::new(v, 0.0)));
            (&a * xv).iter().copied().collect::<Vec<_>>()
        };
        let jac = fd_jacobian(f, &[0.3, -0.7], 1e-6).unwrap();
        let report = compare(&jac, &a, 1e-9, 0.0, "linear", 1e-6).unwrap();
        assert!(report.pass, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn scalar_square_derivative() {
        let f = |x: &[f64]| vec![Complex64::new(x[0] * x[0], 0.0)];
        let jac = fd_jacobian(f, &[3.0], 1e-6).unwrap();
        assert!((jac[(0, 0)].re - 6.0).abs() < 1e-8);
    }

    #[test]
    fn quadratic_hessian_exact() {
        // g = gradient of x² + 3xy ⇒ Hessian [[2, 3], [3, 0]]
        let g = |x: &[f64]| vec![2.0 * x[0] + 3.0 * x[1], 3.0 * x[0]];
        let h = fd_hessian_contract(g, &[0.4, -1.2], 1e-6).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 3.0, 0.0]);
        let report = compare_real(&h, &expect, 1e-8, 0.0, "quadratic", 1e-6).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn oracle_self_test_trig() {
        // d/dx sin(2x) = 2cos(2x) at a few points, step 1e-6, ≤ 1e-7 rel err
        for &x0 in &[0.0, 0.3, 1.1, -2.0] {
            let f = |x: &[f64]| vec![Complex64::new((2.0 * x[0]).sin(), 0.0)];
            let jac = fd_jacobian(f, &[x0], 1e-6).unwrap();
            let exact = 2.0 * (2.0 * x0).cos();
            assert!((jac[(0, 0)].re - exact).abs() <= 1e-7 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn step_halving_sanity() {
        let f = |x: &[f64]| vec![Complex64::new(x[0].exp() * (3.0 * x[0]).cos(), 0.0)];
        let exact = |x: f64| x.exp() * ((3.0 * x).cos() - 3.0 * (3.0 * x).sin());
        let x0 = 0.37;
        let e1 = (fd_jacobian(&f, &[x0], 1e-4).unwrap()[(0, 0)].re - exact(x0)).abs();
        let e2 = (fd_jacobian(&f, &[x0], 5e-5).unwrap()[(0, 0)].re - exact(x0)).abs();
        // halving the step must not increase the error more than 4×
        assert!(e2 <= 4.0 * e1 + 1e-12, "e1 {} e2 {}", e1, e2);
    }

    #[test]
    fn compare_flags_worst_entry() {
        let n = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        let mut a = n.clone();
        a[(1, 0)] += Complex64::new(1e-3, 0.0);
        let report = compare(&a, &n, 1e-6, 0.0, "constructed", 1e-6).unwrap();
        assert!(!report.pass);
        assert_eq!(report.worst_index, (1, 0));

        let exact = compare(&n, &n, 1e-6, 0.0, "identical", 1e-6).unwrap();
        assert!(exact.pass);
        assert_eq!(exact.max_rel_err, 0.0);
    }

    #[test]
    fn empty_matrices_pass_vacuously() {
        let a = DMatrix::from_element(3, 0, Complex64::new(0.0, 0.0));
        let report = compare(&a, &a, 1e-6, 0.0, "empty", 1e-6).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn non_finite_probe_detected() {
        // the lower probe lands at a negative argument of ln
        let f = |x: &[f64]| vec![Complex64::new(x[0].ln(), 0.0)];
        let err = fd_jacobian(f, &[5e-7], 1e-6);
        assert!(matches!(err, Err(FdError::NonFinite { coordinate: 0 })));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        let b = DMatrix::from_element(2, 3, Complex64::new(0.0, 0.0));
        assert!(matches!(
            compare(&a, &b, 1e-6, 0.0, "shapes", 1e-6),
            Err(FdError::ShapeMismatch { .. })
        ));
    }
}
