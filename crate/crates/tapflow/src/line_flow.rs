//! Branch currents I_f = Yf·V, I_t = Yt·V, the current-magnitude flow
//! constraints, and their derivatives over the extended variable vector.
//!
//! Flow limits use the squared-magnitude form h = |I|² − Imax², which has
//! the same zero set as |I| − Imax for Imax > 0 and stays differentiable
//! at zero current. Imax = 0 means unconstrained.

use crate::admittance::{branch_admittances, build_system, SystemMatrices};
use crate::model::InternalModel;
use crate::sparse::{Coo, Csc};
use crate::variables::{DerivativeBundle, HessianBlocks, Layout, VarGroup, VariableVector, GROUPS};
use num_complex::Complex64;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Which end of each branch the current is measured at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    From,
    To,
}

/// Currents at both ends plus the squared-magnitude constraint values for
/// the constrained branches (those with Imax > 0).
#[derive(Debug, Clone)]
pub struct FlowConstraintEval {
    pub i_f: Vec<Complex64>,
    pub i_t: Vec<Complex64>,
    pub hf: Vec<f64>,
    pub ht: Vec<f64>,
}

pub fn branch_currents(v: &[Complex64], sys: &SystemMatrices) -> (Vec<Complex64>, Vec<Complex64>) {
    (sys.yf.mul_vec(v), sys.yt.mul_vec(v))
}

fn currents_at(x: &VariableVector, m: &InternalModel) -> (Vec<Complex64>, Vec<Complex64>) {
    let ba = branch_admittances(m, &x.tap_state(m));
    let sys = build_system(m, &ba);
    branch_currents(&x.voltage(), &sys)
}

pub fn flow_constraints(x: &VariableVector, m: &InternalModel) -> FlowConstraintEval {
    let (i_f, i_t) = currents_at(x, m);
    let hf = m
        .constrained
        .iter()
        .map(|&k| i_f[k].norm_sqr() - m.imax[k] * m.imax[k])
        .collect();
    let ht = m
        .constrained
        .iter()
        .map(|&k| i_t[k].norm_sqr() - m.imax[k] * m.imax[k])
        .collect();
    FlowConstraintEval { i_f, i_t, hf, ht }
}

/// First derivatives of the branch current at one end w.r.t. all six
/// variable groups. The tau/theta blocks are diagonal in branch index:
/// the current on branch k depends only on tau_k and theta_k.
pub fn d_currents(x: &VariableVector, m: &InternalModel, side: Side) -> DerivativeBundle {
    let taps = x.tap_state(m);
    let ba = branch_admittances(m, &taps);
    let sys = build_system(m, &ba);
    let v = x.voltage();
    let vnorm: Vec<Complex64> = v.iter().zip(&x.vm).map(|(&vi, &vm)| vi / vm).collect();

    let ybr = match side {
        Side::From => &sys.yf,
        Side::To => &sys.yt,
    };
    let d_va = ybr.scale_cols(&v).scale(J);
    let d_vm = ybr.scale_cols(&vnorm);

    let mut d_tau = Coo::new(m.nl, m.nl);
    let mut d_theta = Coo::new(m.nl, m.nl);
    for k in 0..m.nl {
        let (f, t) = (m.fbus[k], m.tbus[k]);
        let it = 1.0 / taps.tau[k];
        match side {
            // ∂I_f/∂τ = [CfV][−2Yff][τ]⁻¹ + [CtV][−Yft][τ]⁻¹,  ∂I_f/∂θ = [CtV][jYft]
            Side::From => {
                d_tau.push(k, k, (v[f] * -2.0 * ba.yff[k] + v[t] * -ba.yft[k]) * it);
                d_theta.push(k, k, v[t] * J * ba.yft[k]);
            }
            // ∂I_t/∂τ = [CfV][−Ytf][τ]⁻¹,  ∂I_t/∂θ = [CfV][−jYtf]
            Side::To => {
                d_tau.push(k, k, v[f] * -ba.ytf[k] * it);
                d_theta.push(k, k, v[f] * -J * ba.ytf[k]);
            }
        }
    }

    DerivativeBundle {
        layout: Layout::of(m),
        n_out: m.nl,
        d_va,
        d_vm,
        d_pg: Csc::zeros(m.nl, m.ng),
        d_qg: Csc::zeros(m.nl, m.ng),
        d_tau: d_tau.to_csc().select_cols(&m.adjustable),
        d_theta: d_theta.to_csc().select_cols(&m.adjustable),
    }
}

/// Second derivatives of μᵀI for one end, as the 6×6 block grid.
/// μ has length nl with zeros for branches that don't participate.
pub fn d2_currents(
    x: &VariableVector,
    m: &InternalModel,
    mu: &[Complex64],
    side: Side,
) -> HessianBlocks {
    assert_eq!(mu.len(), m.nl);
    let taps = x.tap_state(m);
    let ba = branch_admittances(m, &taps);
    let sys = build_system(m, &ba);
    let v = x.voltage();
    let layout = Layout::of(m);
    let mut h = HessianBlocks::zero(layout);

    let ybr = match side {
        Side::From => &sys.yf,
        Side::To => &sys.yt,
    };

    // Voltage blocks: I_ΘΘ(μ) = [−(Ybrᵀμ)∘V], I_VΘ = −j·I_ΘΘ·[Vm]⁻¹, I_VV = 0.
    let w = ybr.tr_mul_vec(mu);
    let haa: Vec<Complex64> = w.iter().zip(&v).map(|(&wi, &vi)| -wi * vi).collect();
    let hva: Vec<Complex64> = haa
        .iter()
        .zip(&x.vm)
        .map(|(&hi, &vm)| -J * hi / vm)
        .collect();
    h.set(VarGroup::Va, VarGroup::Va, Csc::from_diag(&haa));
    h.set_pair(VarGroup::Vm, VarGroup::Va, Csc::from_diag(&hva));

    let mut th_tau = Coo::new(m.nb, m.nl);
    let mut th_theta = Coo::new(m.nb, m.nl);
    let mut vm_tau = Coo::new(m.nb, m.nl);
    let mut vm_theta = Coo::new(m.nb, m.nl);
    let mut tau_tau = Coo::new(m.nl, m.nl);
    let mut tau_theta = Coo::new(m.nl, m.nl);
    let mut theta_theta = Coo::new(m.nl, m.nl);

    for k in 0..m.nl {
        if mu[k] == Complex64::new(0.0, 0.0) {
            continue;
        }
        let (f, t) = (m.fbus[k], m.tbus[k]);
        let it = 1.0 / taps.tau[k];
        let muk = mu[k];
        match side {
            Side::From => {
                // I_f_Θτ = j[V](Cfᵀ[μ][−2Yff] + Ctᵀ[μ][−Yft])[τ]⁻¹
                th_tau.push(f, k, J * v[f] * muk * -2.0 * ba.yff[k] * it);
                th_tau.push(t, k, J * v[t] * muk * -ba.yft[k] * it);
                // I_f_Θθ = j[V]Ctᵀ[μ][jYft]
                th_theta.push(t, k, J * v[t] * muk * J * ba.yft[k]);
                // I_f_Vτ = [Vm]⁻¹[V](Cfᵀ[μ][−2Yff] + Ctᵀ[μ][−Yft])[τ]⁻¹
                vm_tau.push(f, k, v[f] / x.vm[f] * muk * -2.0 * ba.yff[k] * it);
                vm_tau.push(t, k, v[t] / x.vm[t] * muk * -ba.yft[k] * it);
                // I_f_Vθ = [Vm]⁻¹[V]Ctᵀ[μ][jYft]
                vm_theta.push(t, k, v[t] / x.vm[t] * muk * J * ba.yft[k]);
                // I_f_ττ = 6[τ]⁻²[CfV][μ][Yff] + 2[τ]⁻²[CtV][μ][Yft]
                tau_tau.push(
                    k,
                    k,
                    (v[f] * muk * 6.0 * ba.yff[k] + v[t] * muk * 2.0 * ba.yft[k]) * (it * it),
                );
                // I_f_τθ = −[τ]⁻¹[CtV][μ][jYft]
                tau_theta.push(k, k, -(v[t] * muk * J * ba.yft[k]) * it);
                // I_f_θθ = [CtV][μ][−Yft]
                theta_theta.push(k, k, v[t] * muk * -ba.yft[k]);
            }
            Side::To => {
                // I_t_Θτ = j[V]Cfᵀ[μ][−Ytf][τ]⁻¹
                th_tau.push(f, k, J * v[f] * muk * -ba.ytf[k] * it);
                // I_t_Θθ = j[V]Cfᵀ[μ][−jYtf]
                th_theta.push(f, k, J * v[f] * muk * -J * ba.ytf[k]);
                // I_t_Vτ = [Vm]⁻¹[V]Cfᵀ[μ][−Ytf][τ]⁻¹
                vm_tau.push(f, k, v[f] / x.vm[f] * muk * -ba.ytf[k] * it);
                // I_t_Vθ = [Vm]⁻¹[V]Cfᵀ[μ][−jYtf]
                vm_theta.push(f, k, v[f] / x.vm[f] * muk * -J * ba.ytf[k]);
                // I_t_ττ = 2[τ]⁻²[CfV][μ][Ytf]
                tau_tau.push(k, k, v[f] * muk * 2.0 * ba.ytf[k] * (it * it));
                // I_t_τθ = −[τ]⁻¹[CfV][μ][−jYtf]
                tau_theta.push(k, k, -(v[f] * muk * -J * ba.ytf[k]) * it);
                // I_t_θθ = [CfV][μ][−Ytf]
                theta_theta.push(k, k, v[f] * muk * -ba.ytf[k]);
            }
        }
    }

    let adj = &m.adjustable;
    let cols = |coo: Coo<Complex64>| coo.to_csc().select_cols(adj);
    let diag = |coo: Coo<Complex64>| coo.to_csc().select_cols(adj).select_rows(adj);

    h.set_pair(VarGroup::Va, VarGroup::Tau, cols(th_tau));
    h.set_pair(VarGroup::Va, VarGroup::Theta, cols(th_theta));
    h.set_pair(VarGroup::Vm, VarGroup::Tau, cols(vm_tau));
    h.set_pair(VarGroup::Vm, VarGroup::Theta, cols(vm_theta));
    h.set(VarGroup::Tau, VarGroup::Tau, diag(tau_tau));
    h.set_pair(VarGroup::Tau, VarGroup::Theta, diag(tau_theta));
    h.set(VarGroup::Theta, VarGroup::Theta, diag(theta_theta));

    h
}

/// Real Jacobians of the squared-magnitude flow constraints, one row per
/// constrained branch, columns over the stacked variable vector.
#[derive(Debug, Clone)]
pub struct FlowJacobians {
    pub layout: Layout,
    pub hf: Csc<f64>,
    pub ht: Csc<f64>,
}

/// ∂|I|²/∂x = 2·Re([I*]·∂I/∂x), rows restricted to constrained branches.
pub fn d_flow_constraints(x: &VariableVector, m: &InternalModel) -> FlowJacobians {
    let layout = Layout::of(m);
    let n = layout.len();
    let nc = m.constrained.len();
    let mut pos = vec![usize::MAX; m.nl];
    for (p, &k) in m.constrained.iter().enumerate() {
        pos[k] = p;
    }

    let jac = |side: Side, current: &[Complex64]| -> Csc<f64> {
        let bundle = d_currents(x, m, side);
        let mut out = Coo::new(nc, n);
        for g in GROUPS {
            let off = layout.offset(g);
            for (k, c, v) in bundle.group(g).triplets() {
                if pos[k] != usize::MAX {
                    out.push(pos[k], off + c, 2.0 * (current[k].conj() * v).re);
                }
            }
        }
        out.to_csc()
    };

    let (i_f, i_t) = currents_at(x, m);
    FlowJacobians {
        layout,
        hf: jac(Side::From, &i_f),
        ht: jac(Side::To, &i_t),
    }
}

/// Aᴴ·diag(w)·B for conformable sparse matrices.
fn herm_scaled_product(a: &Csc<Complex64>, w: &[Complex64], b: &Csc<Complex64>) -> Csc<Complex64> {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(w.len(), a.nrows());
    let at = a.transpose();
    let bt = b.transpose();
    let mut out = Coo::new(a.ncols(), b.ncols());
    for k in 0..w.len() {
        if w[k] == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (p, va) in at.col(k) {
            for (q, vb) in bt.col(k) {
                out.push(p, q, va.conj() * w[k] * vb);
            }
        }
    }
    out.to_csc()
}

/// Multiplier-contracted Hessian of νfᵀhf + νtᵀht over the stacked vector:
/// 2·Re( Jᴴ[ν]J + ∂²I(μ) ) with μ = ν∘I* per side. ν entries are indexed
/// by constrained-branch position.
pub fn d2_flow_constraints(
    x: &VariableVector,
    m: &InternalModel,
    nu_f: &[f64],
    nu_t: &[f64],
) -> Csc<f64> {
    assert_eq!(nu_f.len(), m.constrained.len());
    assert_eq!(nu_t.len(), m.constrained.len());
    let layout = Layout::of(m);
    let n = layout.len();
    let (i_f, i_t) = currents_at(x, m);

    let mut acc = Coo::new(n, n);
    for (side, nu, current) in [(Side::From, nu_f, &i_f), (Side::To, nu_t, &i_t)] {
        let mut w = vec![Complex64::new(0.0, 0.0); m.nl];
        let mut mu = vec![Complex64::new(0.0, 0.0); m.nl];
        for (p, &k) in m.constrained.iter().enumerate() {
            w[k] = Complex64::new(nu[p], 0.0);
            mu[k] = Complex64::new(nu[p], 0.0) * current[k].conj();
        }

        for (r, c, v) in d2_currents(x, m, &mu, side).to_stacked().triplets() {
            acc.push(r, c, v);
        }

        let bundle = d_currents(x, m, side);
        for ga in GROUPS {
            for gb in GROUPS {
                let prod = herm_scaled_product(bundle.group(ga), &w, bundle.group(gb));
                let (ra, cb) = (layout.offset(ga), layout.offset(gb));
                for (r, c, v) in prod.triplets() {
                    acc.push(ra + r, cb + c, v);
                }
            }
        }
    }
    acc.to_csc().re().scale(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittance::TapState;
    use crate::case::{CaseFormat, parse_case};
    use crate::model::to_internal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus_model(imax: f64) -> InternalModel {
        let text = format!(
            r#"{{
            "baseMVA": 100.0,
            "bus": [{{"id": 1, "type": "REF"}}, {{"id": 2, "type": "PQ", "Pd": 40.0}}],
            "branch": [{{"fbus": 1, "tbus": 2, "r": 0.0, "x": 0.1, "Imax": {},
                        "adjustable": true, "tauMin": 0.8, "tauMax": 1.2,
                        "thetaMin": -20.0, "thetaMax": 20.0}}],
            "gen": [{{"bus": 1, "Pmax": 100.0}}]
        }}"#,
            imax
        );
        to_internal(&parse_case(&text, CaseFormat::Json).unwrap().case).unwrap()
    }

    #[test]
    fn flat_lossless_currents_vanish() {
        let m = two_bus_model(1.0);
        let x = VariableVector::flat_start(&m);
        let (i_f, i_t) = currents_at(&x, &m);
        assert!(i_f[0].norm() < 1e-14);
        assert!(i_t[0].norm() < 1e-14);
    }

    #[test]
    fn two_bus_current_scalar_evaluation() {
        // V = (1, e^{−j0.1}), ys = −j10: If = −j10(1 − e^{−j0.1})
        let m = two_bus_model(0.0);
        let mut x = VariableVector::flat_start(&m);
        x.va[1] = -0.1;
        let (i_f, _) = currents_at(&x, &m);
        let expect = c(0.0, -10.0) * (c(1.0, 0.0) - Complex64::from_polar(1.0, -0.1));
        assert!((i_f[0] - expect).norm() < 1e-12);
    }

    #[test]
    fn tap_halves_yft_contribution() {
        let m = two_bus_model(0.0);
        let mut x = VariableVector::flat_start(&m);
        x.va[1] = -0.1;
        let base = branch_admittances(&m, &TapState::nominal(&m));
        x.tau[0] = 2.0;
        let ba = branch_admittances(&m, &x.tap_state(&m));
        assert!((ba.yft[0] - base.yft[0] * 0.5).norm() < 1e-12);
        let v = x.voltage();
        let sys = build_system(&m, &ba);
        let (i_f, _) = branch_currents(&v, &sys);
        let expect = ba.yff[0] * v[0] + ba.yft[0] * v[1];
        assert!((i_f[0] - expect).norm() < 1e-12);
    }

    #[test]
    fn zero_current_constraint_value() {
        let m = two_bus_model(1.0);
        let x = VariableVector::flat_start(&m);
        let eval = flow_constraints(&x, &m);
        assert!((eval.hf[0] - (-1.0)).abs() < 1e-12);
        assert!((eval.ht[0] - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn boundary_current_gives_zero_constraint() {
        let m = two_bus_model(1.0);
        let mut x = VariableVector::flat_start(&m);
        // pick the angle so |If| = 10·|1 − e^{−jδ}| = 1  ⇒  δ = 2·asin(0.05)
        let delta = 2.0 * (0.05f64).asin();
        x.va[1] = -delta;
        let eval = flow_constraints(&x, &m);
        assert!(eval.hf[0].abs() < 1e-12);
    }

    #[test]
    fn unconstrained_case_empty_jacobian() {
        let m = two_bus_model(0.0);
        let x = VariableVector::flat_start(&m);
        let jac = d_flow_constraints(&x, &m);
        assert_eq!(jac.hf.nrows(), 0);
        assert_eq!(jac.ht.nrows(), 0);
    }

    #[test]
    fn current_derivative_zero_in_injections() {
        let m = two_bus_model(1.0);
        let x = VariableVector::flat_start(&m);
        let d = d_currents(&x, &m, Side::From);
        assert_eq!(d.d_pg.nnz(), 0);
        assert_eq!(d.d_qg.nnz(), 0);
    }

    #[test]
    fn dit_dtheta_scalar_check() {
        // ∂I_t/∂θ at θ=0, single branch: −j·Ytf·(CfV)
        let m = two_bus_model(0.0);
        let mut x = VariableVector::flat_start(&m);
        x.va[1] = -0.07;
        x.vm[0] = 1.03;
        let d = d_currents(&x, &m, Side::To);
        let ba = branch_admittances(&m, &x.tap_state(&m));
        let v = x.voltage();
        let expect = -J * ba.ytf[0] * v[0];
        assert!((d.d_theta.get(0, 0) - expect).norm() < 1e-13);
    }

    #[test]
    fn d2_if_tau_tau_scalar_check() {
        // single-branch I_f_ττ diagonal at τ=1: (6Yff(CfV) + 2Yft(CtV))μ
        let m = two_bus_model(0.0);
        let mut x = VariableVector::flat_start(&m);
        x.va[1] = -0.11;
        x.vm[1] = 0.97;
        let mu = vec![c(0.8, -0.6)];
        let h = d2_currents(&x, &m, &mu, Side::From);
        let ba = branch_admittances(&m, &x.tap_state(&m));
        let v = x.voltage();
        let expect = (ba.yff[0] * 6.0 * v[0] + ba.yft[0] * 2.0 * v[1]) * mu[0];
        assert!((h.get(VarGroup::Tau, VarGroup::Tau).get(0, 0) - expect).norm() < 1e-13);
    }

    #[test]
    fn zero_multiplier_zero_current_hessian() {
        let m = two_bus_model(1.0);
        let x = VariableVector::flat_start(&m);
        let h = d2_currents(&x, &m, &[c(0.0, 0.0)], Side::From);
        assert!(h.to_dense().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn angle_shift_invariance_of_flow_constraints() {
        let m = two_bus_model(1.5);
        let mut x = VariableVector::flat_start(&m);
        x.va = vec![0.03, -0.09];
        x.vm = vec![1.02, 0.97];
        x.tau[0] = 1.04;
        x.theta[0] = 0.05;
        let base = flow_constraints(&x, &m);
        x.va.iter_mut().for_each(|a| *a += 0.7);
        let shifted = flow_constraints(&x, &m);
        for (a, b) in base.hf.iter().zip(&shifted.hf) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in base.ht.iter().zip(&shifted.ht) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
