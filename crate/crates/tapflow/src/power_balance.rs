//! Power balance mismatch G(X) = Sbus + Sd − Cg·Sg and its first and
//! multiplier-contracted second derivatives over the extended variable
//! vector, including the tau/theta blocks.
//!
//! All tau/theta derivatives are computed for every branch and then sliced
//! to the adjustable columns, so the formulas stay uniform. Blocks that are
//! transposes of computed blocks are constructed by transposition.

use crate::admittance::{branch_admittances, build_system, BranchAdmittances, SystemMatrices};
use crate::model::InternalModel;
use crate::sparse::{Coo, Csc};
use crate::variables::{DerivativeBundle, HessianBlocks, Layout, VarGroup, VariableVector};
use num_complex::Complex64;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Sbus = [V]·(Ybus·V)*.
pub fn bus_injections(v: &[Complex64], sys: &SystemMatrices) -> Vec<Complex64> {
    let ibus = sys.ybus.mul_vec(v);
    v.iter().zip(&ibus).map(|(&vi, &ii)| vi * ii.conj()).collect()
}

/// Complex power-balance mismatch G(X) = Sbus + Sd − Cg·Sg. Real part is
/// the active balance, imaginary part the reactive balance.
pub fn mismatch(x: &VariableVector, m: &InternalModel) -> Vec<Complex64> {
    let ba = branch_admittances(m, &x.tap_state(m));
    let sys = build_system(m, &ba);
    let v = x.voltage();
    let sbus = bus_injections(&v, &sys);
    let cg_sg = m.cg.to_complex().mul_vec(&x.sg());
    (0..m.nb).map(|i| sbus[i] + m.sd[i] - cg_sg[i]).collect()
}

/// Scalars shared by every tau/theta block of one branch:
/// conj(V) gathered at both ends and [V]λ gathered at both ends.
struct BranchCtx {
    a_f: Complex64, // (Cf V*)_k
    a_t: Complex64, // (Ct V*)_k
    yff_c: Complex64,
    yft_c: Complex64,
    ytf_c: Complex64,
    inv_tau: f64,
}

fn branch_ctx(m: &InternalModel, ba: &BranchAdmittances, v: &[Complex64], x: &VariableVector) -> Vec<BranchCtx> {
    let taps = x.tap_state(m);
    (0..m.nl)
        .map(|k| BranchCtx {
            a_f: v[m.fbus[k]].conj(),
            a_t: v[m.tbus[k]].conj(),
            yff_c: ba.yff[k].conj(),
            yft_c: ba.yft[k].conj(),
            ytf_c: ba.ytf[k].conj(),
            inv_tau: 1.0 / taps.tau[k],
        })
        .collect()
}

/// First derivatives of the mismatch w.r.t. all six variable groups.
pub fn d_mismatch(x: &VariableVector, m: &InternalModel) -> DerivativeBundle {
    let ba = branch_admittances(m, &x.tap_state(m));
    let sys = build_system(m, &ba);
    let v = x.voltage();
    let ibus = sys.ybus.mul_vec(&v);
    let vnorm: Vec<Complex64> = v
        .iter()
        .zip(&x.vm)
        .map(|(&vi, &vm)| vi / vm)
        .collect();

    // dSbus/dVa = j[V]([Ibus] − Ybus[V])*
    let jv: Vec<Complex64> = v.iter().map(|&vi| J * vi).collect();
    let d_va = Csc::from_diag(&ibus)
        .sub(&sys.ybus.scale_cols(&v))
        .conj()
        .scale_rows(&jv);

    // dSbus/dVm = [V](Ybus[Vnorm])* + [Ibus*][Vnorm]
    let ibus_conj_vnorm: Vec<Complex64> = ibus
        .iter()
        .zip(&vnorm)
        .map(|(&ii, &ni)| ii.conj() * ni)
        .collect();
    let d_vm = sys
        .ybus
        .scale_cols(&vnorm)
        .conj()
        .scale_rows(&v)
        .add(&Csc::from_diag(&ibus_conj_vnorm));

    let d_pg = m.cg.to_complex().scale(Complex64::new(-1.0, 0.0));
    let d_qg = m.cg.to_complex().scale(-J);

    // G_tau = [V](Cfᵀ[CfV*][−2Yff*][τ]⁻¹ + Cfᵀ[CtV*][−Yft*][τ]⁻¹ + Ctᵀ[CfV*][−Ytf*][τ]⁻¹)
    // G_theta = [V](Cfᵀ[CtV*][−jYft*] + Ctᵀ[CfV*][jYtf*])
    let ctx = branch_ctx(m, &ba, &v, x);
    let mut d_tau = Coo::new(m.nb, m.nl);
    let mut d_theta = Coo::new(m.nb, m.nl);
    for (k, c) in ctx.iter().enumerate() {
        let (f, t) = (m.fbus[k], m.tbus[k]);
        d_tau.push(f, k, v[f] * (c.a_f * -2.0 * c.yff_c + c.a_t * -c.yft_c) * c.inv_tau);
        d_tau.push(t, k, v[t] * c.a_f * -c.ytf_c * c.inv_tau);
        d_theta.push(f, k, v[f] * c.a_t * (-J * c.yft_c));
        d_theta.push(t, k, v[t] * c.a_f * (J * c.ytf_c));
    }

    DerivativeBundle {
        layout: Layout::of(m),
        n_out: m.nb,
        d_va,
        d_vm,
        d_pg,
        d_qg,
        d_tau: d_tau.to_csc().select_cols(&m.adjustable),
        d_theta: d_theta.to_csc().select_cols(&m.adjustable),
    }
}

/// Second derivatives of λᵀG(X), as the full 6×6 block grid. Linear in λ;
/// Pg/Qg rows and columns are identically zero.
pub fn d2_mismatch(x: &VariableVector, m: &InternalModel, lam: &[Complex64]) -> HessianBlocks {
    assert_eq!(lam.len(), m.nb);
    let ba = branch_admittances(m, &x.tap_state(m));
    let sys = build_system(m, &ba);
    let v = x.voltage();
    let ibus = sys.ybus.mul_vec(&v);
    let layout = Layout::of(m);
    let mut h = HessianBlocks::zero(layout);

    // Voltage-only blocks:
    //   A = [λ∘V],  B = Ybus[V],  C = A·B*,  D = Ybusᴴ[V]
    //   E = [V*](D[λ] − [Dλ]),    F = C − A[Ibus*]
    //   G_ΘΘ = E + F,  G_VΘ = j[Vm]⁻¹(E − F),  G_ΘV = G_VΘᵀ,
    //   G_VV = [Vm]⁻¹(C + Cᵀ)[Vm]⁻¹
    let lam_v: Vec<Complex64> = lam.iter().zip(&v).map(|(&l, &vi)| l * vi).collect();
    let c_mat = sys.ybus.scale_cols(&v).conj().scale_rows(&lam_v);
    let d_mat = sys.ybus.transpose().conj().scale_cols(&v);
    let v_conj: Vec<Complex64> = v.iter().map(|vi| vi.conj()).collect();
    let e_mat = d_mat
        .scale_cols(lam)
        .sub(&Csc::from_diag(&d_mat.mul_vec(lam)))
        .scale_rows(&v_conj);
    let a_ibus_conj: Vec<Complex64> = lam_v
        .iter()
        .zip(&ibus)
        .map(|(&av, &ii)| av * ii.conj())
        .collect();
    let f_mat = c_mat.sub(&Csc::from_diag(&a_ibus_conj));
    let j_inv_vm: Vec<Complex64> = x.vm.iter().map(|&vm| J / vm).collect();
    let inv_vm: Vec<Complex64> = x.vm.iter().map(|&vm| Complex64::new(1.0 / vm, 0.0)).collect();

    h.set(VarGroup::Va, VarGroup::Va, e_mat.add(&f_mat));
    h.set_pair(
        VarGroup::Vm,
        VarGroup::Va,
        e_mat.sub(&f_mat).scale_rows(&j_inv_vm),
    );
    h.set(
        VarGroup::Vm,
        VarGroup::Vm,
        c_mat.add(&c_mat.transpose()).scale_rows(&inv_vm).scale_cols(&inv_vm),
    );

    // Tap blocks, assembled per branch. b_f/b_t are (Cf[V]λ)_k and (Ct[V]λ)_k.
    let ctx = branch_ctx(m, &ba, &v, x);
    let mut th_tau = Coo::new(m.nb, m.nl); // G_Θτ
    let mut th_theta = Coo::new(m.nb, m.nl); // G_Θθ
    let mut vm_tau = Coo::new(m.nb, m.nl); // G_Vτ
    let mut vm_theta = Coo::new(m.nb, m.nl); // G_Vθ
    let mut tau_tau = Coo::new(m.nl, m.nl);
    let mut tau_theta = Coo::new(m.nl, m.nl);
    let mut theta_theta = Coo::new(m.nl, m.nl);

    for (k, c) in ctx.iter().enumerate() {
        let (f, t) = (m.fbus[k], m.tbus[k]);
        let b_f = lam_v[f];
        let b_t = lam_v[t];
        let it = c.inv_tau;

        // G_Θτ = j([V][λ](Cfᵀ[CfV*][−2Yff*] + Cfᵀ[CtV*][−Yft*] + Ctᵀ[CfV*][−Ytf*])
        //          − [V*](Cfᵀ[Cf[V]λ][−2Yff*] + Ctᵀ[Cf[V]λ][−Yft*] + Cfᵀ[Ct[V]λ][−Ytf*]))[τ]⁻¹
        th_tau.push(
            f,
            k,
            J * (b_f * (c.a_f * -2.0 * c.yff_c + c.a_t * -c.yft_c)
                - c.a_f * (b_f * -2.0 * c.yff_c + b_t * -c.ytf_c))
                * it,
        );
        th_tau.push(
            t,
            k,
            J * (b_t * (c.a_f * -c.ytf_c) - c.a_t * (b_f * -c.yft_c)) * it,
        );

        // G_Θθ = j([V][λ](Cfᵀ[CtV*][−jYft*] + Ctᵀ[CfV*][jYtf*])
        //          − [V*](Ctᵀ[Cf[V]λ][−jYft*] + Cfᵀ[Ct[V]λ][jYtf*]))
        th_theta.push(
            f,
            k,
            J * (b_f * (c.a_t * (-J * c.yft_c)) - c.a_f * (b_t * (J * c.ytf_c))),
        );
        th_theta.push(
            t,
            k,
            J * (b_t * (c.a_f * (J * c.ytf_c)) - c.a_t * (b_f * (-J * c.yft_c))),
        );

        // G_Vτ: same structure with [Vm]⁻¹ in front and a plus sign.
        vm_tau.push(
            f,
            k,
            (b_f * (c.a_f * -2.0 * c.yff_c + c.a_t * -c.yft_c)
                + c.a_f * (b_f * -2.0 * c.yff_c + b_t * -c.ytf_c))
                * (it / x.vm[f]),
        );
        vm_tau.push(
            t,
            k,
            (b_t * (c.a_f * -c.ytf_c) + c.a_t * (b_f * -c.yft_c)) * (it / x.vm[t]),
        );

        vm_theta.push(
            f,
            k,
            (b_f * (c.a_t * (-J * c.yft_c)) + c.a_f * (b_t * (J * c.ytf_c))) / x.vm[f],
        );
        vm_theta.push(
            t,
            k,
            (b_t * (c.a_f * (J * c.ytf_c)) + c.a_t * (b_f * (-J * c.yft_c))) / x.vm[t],
        );

        // G_ττ = [τ]⁻²([6Yff*][CfV*][Cf[V]λ] + [2Yft*][CtV*][Cf[V]λ] + [2Ytf*][CfV*][Ct[V]λ])
        tau_tau.push(
            k,
            k,
            (c.yff_c * 6.0 * c.a_f * b_f + c.yft_c * 2.0 * c.a_t * b_f + c.ytf_c * 2.0 * c.a_f * b_t)
                * (it * it),
        );

        // G_τθ = [τ]⁻¹([CtV*][Cf[V]λ][jYft*] + [CfV*][Ct[V]λ][−jYtf*])
        tau_theta.push(
            k,
            k,
            (c.a_t * b_f * (J * c.yft_c) + c.a_f * b_t * (-J * c.ytf_c)) * it,
        );

        // G_θθ = −[CtV*][Cf[V]λ][Yft*] − [CfV*][Ct[V]λ][Ytf*]
        theta_theta.push(k, k, -(c.a_t * b_f * c.yft_c) - c.a_f * b_t * c.ytf_c);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittance::TapState;
    use crate::case::{CaseFormat, parse_case};
    use crate::model::to_internal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus_model() -> InternalModel {
        let text = r#"{
            "baseMVA": 100.0,
            "bus": [{"id": 1, "type": "REF"}, {"id": 2, "type": "PQ", "Pd": 50.0, "Qd": 10.0}],
            "branch": [{"fbus": 1, "tbus": 2, "r": 0.0, "x": 0.1,
                        "adjustable": true, "tauMin": 0.8, "tauMax": 1.2,
                        "thetaMin": -20.0, "thetaMax": 20.0}],
            "gen": [{"bus": 1, "Pmax": 100.0, "Qmin": -50.0, "Qmax": 50.0}]
        }"#;
        to_internal(&parse_case(text, CaseFormat::Json).unwrap().case).unwrap()
    }

    #[test]
    fn flat_lossless_injections_vanish() {
        let m = two_bus_model();
        let ba = branch_admittances(&m, &TapState::nominal(&m));
        let sys = build_system(&m, &ba);
        let v = vec![c(1.0, 0.0); 2];
        let s = bus_injections(&v, &sys);
        assert!(s.iter().all(|si| si.norm() < 1e-14));
    }

    #[test]
    fn two_bus_injection_matches_dense_evaluation() {
        let m = two_bus_model();
        let ba = branch_admittances(&m, &TapState::nominal(&m));
        let sys = build_system(&m, &ba);
        let v = vec![c(1.0, 0.0), Complex64::from_polar(0.98, -0.05)];
        let s = bus_injections(&v, &sys);
        // direct 2×2 evaluation
        for i in 0..2 {
            let mut ii = c(0.0, 0.0);
            for k in 0..2 {
                ii += sys.ybus.get(i, k) * v[k];
            }
            assert!((s[i] - v[i] * ii.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn mismatch_is_load_at_flat_zero_generation() {
        let m = two_bus_model();
        let mut x = VariableVector::flat_start(&m);
        x.pg = vec![0.0];
        x.qg = vec![0.0];
        let g = mismatch(&x, &m);
        assert!((g[0] - c(0.0, 0.0)).norm() < 1e-14);
        assert!((g[1] - m.sd[1]).norm() < 1e-14);
    }

    #[test]
    fn mismatch_affine_in_generation() {
        let m = two_bus_model();
        let mut x = VariableVector::flat_start(&m);
        x.pg = vec![0.3];
        x.qg = vec![0.1];
        let g1 = mismatch(&x, &m);
        x.pg = vec![0.6];
        x.qg = vec![0.2];
        let g2 = mismatch(&x, &m);
        assert!((g2[0] - (g1[0] - c(0.3, 0.1))).norm() < 1e-14);
    }

    #[test]
    fn dpg_block_is_minus_cg() {
        let m = two_bus_model();
        let x = VariableVector::flat_start(&m);
        let d = d_mismatch(&x, &m);
        assert_eq!(d.d_pg.get(0, 0), c(-1.0, 0.0));
        assert_eq!(d.d_qg.get(0, 0), c(0.0, -1.0));
        assert_eq!(d.d_pg.get(1, 0), c(0.0, 0.0));
    }

    #[test]
    fn no_adjustable_branches_means_empty_tap_columns() {
        let text = r#"{
            "baseMVA": 100.0,
            "bus": [{"id": 1, "type": "REF"}, {"id": 2, "type": "PQ"}],
            "branch": [{"fbus": 1, "tbus": 2, "r": 0.01, "x": 0.1}],
            "gen": [{"bus": 1}]
        }"#;
        let m = to_internal(&parse_case(text, CaseFormat::Json).unwrap().case).unwrap();
        let x = VariableVector::flat_start(&m);
        let d = d_mismatch(&x, &m);
        assert_eq!(d.d_tau.ncols(), 0);
        assert_eq!(d.d_theta.ncols(), 0);
    }

    #[test]
    fn zero_multiplier_zero_hessian() {
        let m = two_bus_model();
        let x = VariableVector::flat_start(&m);
        let h = d2_mismatch(&x, &m, &[c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(h.to_dense().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn pg_qg_hessian_rows_are_zero() {
        let m = two_bus_model();
        let mut x = VariableVector::flat_start(&m);
        x.va[1] = -0.07;
        x.vm[1] = 0.97;
        let h = d2_mismatch(&x, &m, &[c(0.4, -0.3), c(-1.0, 0.2)]);
        for g in [VarGroup::Pg, VarGroup::Qg] {
            for other in crate::variables::GROUPS {
                assert_eq!(h.get(g, other).nnz(), 0);
                assert_eq!(h.get(other, g).nnz(), 0);
            }
        }
    }

    #[test]
    fn single_branch_tau_tau_scalar_expansion() {
        // G_ττ diagonal entry at τ=1 equals
        // 6Yff*(CfV*)(Cf[V]λ) + 2Yft*(CtV*)(Cf[V]λ) + 2Ytf*(CfV*)(Ct[V]λ)
        let m = two_bus_model();
        let mut x = VariableVector::flat_start(&m);
        x.va = vec![0.0, -0.12];
        x.vm = vec![1.02, 0.96];
        let lam = vec![c(0.7, -0.1), c(-0.4, 0.9)];
        let h = d2_mismatch(&x, &m, &lam);

        let ba = branch_admittances(&m, &x.tap_state(&m));
        let v = x.voltage();
        let (a_f, a_t) = (v[0].conj(), v[1].conj());
        let (b_f, b_t) = (v[0] * lam[0], v[1] * lam[1]);
        let expect = ba.yff[0].conj() * 6.0 * a_f * b_f
            + ba.yft[0].conj() * 2.0 * a_t * b_f
            + ba.ytf[0].conj() * 2.0 * a_f * b_t;
        assert!((h.get(VarGroup::Tau, VarGroup::Tau).get(0, 0) - expect).norm() < 1e-13);
    }
}
