//! Branch admittances, Ybus/Yf/Yt assembly, and the derivatives of
//! Ybus·γ with respect to tap ratio magnitudes τ and shift angles θ.
//!
//! Branch model (tap on the from side, complex turns ratio τ·e^{jθ}):
//!
//! ```text
//!   Yff = (ys + j·bc/2) / τ²        Yft = −ys / (τ·e^{−jθ})
//!   Ytf = −ys / (τ·e^{jθ})          Ytt =  ys + j·bc/2
//! ```
//!
//! so that Yft carries e^{+jθ} in the numerator and the derivative
//! identities Yft_θ = jYft, Ytf_θ = −jYtf hold literally. Derivatives of
//! the matrix itself are only ever represented contracted with a vector γ.

use crate::model::InternalModel;
use crate::sparse::{Coo, Csc};
use num_complex::Complex64;

/// Per-branch tap state over all `nl` branches (radians). Non-adjustable
/// branches hold their fixed values.
#[derive(Debug, Clone, PartialEq)]
pub struct TapState {
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
}

impl TapState {
    pub fn nominal(m: &InternalModel) -> TapState {
        TapState {
            tau: m.tau0.clone(),
            theta: m.theta0.clone(),
        }
    }
}

/// The four per-branch admittance vectors.
#[derive(Debug, Clone)]
pub struct BranchAdmittances {
    pub yff: Vec<Complex64>,
    pub yft: Vec<Complex64>,
    pub ytf: Vec<Complex64>,
    pub ytt: Vec<Complex64>,
}

/// Ybus plus the branch matrices Yf = [Yff]Cf + [Yft]Ct and
/// Yt = [Ytf]Cf + [Ytt]Ct.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub ybus: Csc<Complex64>,
    pub yf: Csc<Complex64>,
    pub yt: Csc<Complex64>,
}

pub fn branch_admittances(m: &InternalModel, taps: &TapState) -> BranchAdmittances {
    assert_eq!(taps.tau.len(), m.nl);
    assert_eq!(taps.theta.len(), m.nl);
    let mut yff = Vec::with_capacity(m.nl);
    let mut yft = Vec::with_capacity(m.nl);
    let mut ytf = Vec::with_capacity(m.nl);
    let mut ytt = Vec::with_capacity(m.nl);
    for k in 0..m.nl {
        let tau = taps.tau[k];
        assert!(tau > 0.0, "tap ratio must be positive (branch {})", k);
        let tap = Complex64::from_polar(tau, taps.theta[k]);
        let yc = m.ys[k] + Complex64::new(0.0, m.bc[k] / 2.0);
        ytt.push(yc);
        yff.push(yc / (tau * tau));
        yft.push(-m.ys[k] / tap.conj());
        ytf.push(-m.ys[k] / tap);
    }
    BranchAdmittances { yff, yft, ytf, ytt }
}

/// Assemble Ybus = Cfᵀ[Yff]Cf + Cfᵀ[Yft]Ct + Ctᵀ[Ytf]Cf + Ctᵀ[Ytt]Ct + [Ysh]
/// together with Yf and Yt.
pub fn build_system(m: &InternalModel, ba: &BranchAdmittances) -> SystemMatrices {
    let mut ybus = Coo::new(m.nb, m.nb);
    let mut yf = Coo::new(m.nl, m.nb);
    let mut yt = Coo::new(m.nl, m.nb);
    for k in 0..m.nl {
        let (f, t) = (m.fbus[k], m.tbus[k]);
        ybus.push(f, f, ba.yff[k]);
        ybus.push(f, t, ba.yft[k]);
        ybus.push(t, f, ba.ytf[k]);
        ybus.push(t, t, ba.ytt[k]);
        yf.push(k, f, ba.yff[k]);
        yf.push(k, t, ba.yft[k]);
        yt.push(k, f, ba.ytf[k]);
        yt.push(k, t, ba.ytt[k]);
    }
    for (i, &ysh) in m.ysh.iter().enumerate() {
        ybus.push(i, i, ysh);
    }
    SystemMatrices {
        ybus: ybus.to_csc(),
        yf: yf.to_csc(),
        yt: yt.to_csc(),
    }
}

/// ∂(Ybus·γ)/∂τ, returned as the nb × nl matrix
/// Cfᵀ[Cfγ][−2Yff][τ]⁻¹ + Cfᵀ[Ctγ][−Yft][τ]⁻¹ + Ctᵀ[Cfγ][−Ytf][τ]⁻¹.
/// Columns for non-adjustable branches are included; masking is the
/// caller's concern.
pub fn d_ybus_gamma_dtau(
    m: &InternalModel,
    ba: &BranchAdmittances,
    taps: &TapState,
    gamma: &[Complex64],
) -> Csc<Complex64> {
    assert_eq!(gamma.len(), m.nb);
    let mut out = Coo::new(m.nb, m.nl);
    for k in 0..m.nl {
        let (f, t) = (m.fbus[k], m.tbus[k]);
        let inv_tau = 1.0 / taps.tau[k];
        out.push(f, k, (gamma[f] * -2.0 * ba.yff[k] + gamma[t] * -ba.yft[k]) * inv_tau);
        out.push(t, k, gamma[f] * -ba.ytf[k] * inv_tau);
    }
    out.to_csc()
}

/// ∂(Ybus·γ)/∂θ as the nb × nl matrix Cfᵀ[Ctγ][jYft] + Ctᵀ[Cfγ][−jYtf].
pub fn d_ybus_gamma_dtheta(
    m: &InternalModel,
    ba: &BranchAdmittances,
    gamma: &[Complex64],
) -> Csc<Complex64> {
    assert_eq!(gamma.len(), m.nb);
    let j = Complex64::new(0.0, 1.0);
    let mut out = Coo::new(m.nb, m.nl);
    for k in 0..m.nl {
        let (f, t) = (m.fbus[k], m.tbus[k]);
        out.push(f, k, gamma[t] * j * ba.yft[k]);
        out.push(t, k, gamma[f] * -j * ba.ytf[k]);
    }
    out.to_csc()
}
