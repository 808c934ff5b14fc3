//! Tap-adjusting optimal power flow: a primal-dual interior-point method
//! with Mehrotra-style predictor-corrector over the extended variable
//! vector. The tau/theta Hessian blocks enter the Lagrangian exactly like
//! the classical voltage blocks.
//!
//! Equalities are the real and imaginary mismatch rows with independent
//! multipliers λ_P, λ_Q; the complex contraction fed to the power-balance
//! Hessian is λ_P − jλ_Q, so that Re(G_XX(λ)) = λ_Pᵀ∂²Re(G) + λ_Qᵀ∂²Im(G).
//! Inequalities are the squared-current flow limits plus variable bounds
//! with slacks. Variables with equal bounds (including the slack bus angle
//! and frozen taps) are eliminated from the KKT system.

use crate::admittance::TapState;
use crate::line_flow::{d2_flow_constraints, d_flow_constraints, flow_constraints};
use crate::model::InternalModel;
use crate::power_balance::{d2_mismatch, d_mismatch, mismatch};
use crate::sparse::{Coo, Csc};
use crate::variables::{Layout, VarGroup, VariableVector};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterLimit,
    Infeasible,
    NumericFailure,
}

/// Lagrange multipliers at the solution. Bound multipliers are stacked
/// over the variable layout, zero where no bound row existed.
#[derive(Debug, Clone, Default)]
pub struct Multipliers {
    pub lam_p: Vec<f64>,
    pub lam_q: Vec<f64>,
    pub mu_flow_f: Vec<f64>,
    pub mu_flow_t: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: VariableVector,
    pub objective: f64,
    pub multipliers: Multipliers,
    pub iterations: usize,
    pub status: SolveStatus,
    /// max(‖g‖∞, bound/flow violation)
    pub feas_residual: f64,
    /// ‖∇f + Jgᵀλ + Jhᵀμ‖∞ over free variables
    pub opt_residual: f64,
    /// mean complementarity gap zᵀμ/niq
    pub comp_residual: f64,
    /// merit residual per iteration (for non-monotonicity diagnostics)
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct OpfOptions {
    pub max_iter: usize,
    /// Raw feasibility/complementarity target.
    pub tol: f64,
    pub verbose: bool,
}

impl Default for OpfOptions {
    fn default() -> Self {
        OpfOptions {
            max_iter: 150,
            tol: 1e-9,
            verbose: false,
        }
    }
}

/// The OPF problem data: model, stacked bounds, objective coefficients.
/// Equal lower/upper bounds pin a variable (it is eliminated in the KKT
/// system); the slack bus angle is always pinned.
#[derive(Debug, Clone)]
pub struct OpfProblem {
    pub model: InternalModel,
    pub layout: Layout,
    pub xmin: Vec<f64>,
    pub xmax: Vec<f64>,
}

impl OpfProblem {
    pub fn new(model: InternalModel) -> OpfProblem {
        let layout = Layout::of(&model);
        let n = layout.len();
        let mut xmin = vec![f64::NEG_INFINITY; n];
        let mut xmax = vec![f64::INFINITY; n];

        let ref_off = layout.offset(VarGroup::Va) + model.slack;
        xmin[ref_off] = model.va0[model.slack];
        xmax[ref_off] = model.va0[model.slack];

        let mut set = |g: VarGroup, lov: &[f64], hiv: &[f64]| {
            let off = layout.offset(g);
            for (i, (&l, &h)) in lov.iter().zip(hiv).enumerate() {
                xmin[off + i] = l;
                xmax[off + i] = h;
            }
        };
        set(VarGroup::Vm, &model.vm_min, &model.vm_max);
        set(VarGroup::Pg, &model.pg_min, &model.pg_max);
        set(VarGroup::Qg, &model.qg_min, &model.qg_max);
        set(VarGroup::Tau, &model.tau_min, &model.tau_max);
        set(VarGroup::Theta, &model.theta_min, &model.theta_max);

        OpfProblem {
            model,
            layout,
            xmin,
            xmax,
        }
    }

    /// Same problem with tau/theta frozen at the given tap state.
    pub fn with_fixed_taps(model: InternalModel, taps: &TapState) -> OpfProblem {
        let mut p = OpfProblem::new(model);
        let tau_off = p.layout.offset(VarGroup::Tau);
        let theta_off = p.layout.offset(VarGroup::Theta);
        for (a, &k) in p.model.adjustable.iter().enumerate() {
            p.xmin[tau_off + a] = taps.tau[k];
            p.xmax[tau_off + a] = taps.tau[k];
            p.xmin[theta_off + a] = taps.theta[k];
            p.xmax[theta_off + a] = taps.theta[k];
        }
        p
    }

    /// Σ c2·Pg² + c1·Pg + c0, with Pg in per-unit.
    pub fn objective(&self, x: &VariableVector) -> f64 {
        self.model
            .cost
            .iter()
            .zip(&x.pg)
            .map(|(c, &pg)| c.c2 * pg * pg + c.c1 * pg + c.c0)
            .sum()
    }

    pub fn grad_objective(&self, x: &VariableVector) -> Vec<f64> {
        let mut g = vec![0.0; self.layout.len()];
        let off = self.layout.offset(VarGroup::Pg);
        for (i, (c, &pg)) in self.model.cost.iter().zip(&x.pg).enumerate() {
            g[off + i] = 2.0 * c.c2 * pg + c.c1;
        }
        g
    }

    /// Real equality constraints: [Re(G); Im(G)].
    pub fn equalities(&self, x: &VariableVector) -> Vec<f64> {
        let g = mismatch(x, &self.model);
        g.iter().map(|z| z.re).chain(g.iter().map(|z| z.im)).collect()
    }

    pub fn eq_jacobian(&self, x: &VariableVector) -> DMatrix<f64> {
        let nb = self.model.nb;
        let n = self.layout.len();
        let d = d_mismatch(x, &self.model).to_dense();
        let mut jg = DMatrix::zeros(2 * nb, n);
        for r in 0..nb {
            for c in 0..n {
                jg[(r, c)] = d[(r, c)].re;
                jg[(nb + r, c)] = d[(r, c)].im;
            }
        }
        jg
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.layout.len())
            .filter(|&i| self.xmin[i] < self.xmax[i])
            .collect()
    }

    fn pinned_value(&self, i: usize) -> Option<f64> {
        (self.xmin[i] == self.xmax[i]).then_some(self.xmin[i])
    }
}

/// Row order of the inequality set: flow-from, flow-to, upper bounds,
/// lower bounds (bounds over free variables only, ascending index).
struct IneqLayout {
    nc: usize,
    upper: Vec<usize>, // stacked variable index per row
    lower: Vec<usize>,
}

impl IneqLayout {
    fn of(p: &OpfProblem) -> IneqLayout {
        let free = p.free_indices();
        IneqLayout {
            nc: p.model.constrained.len(),
            upper: free.iter().copied().filter(|&i| p.xmax[i].is_finite()).collect(),
            lower: free.iter().copied().filter(|&i| p.xmin[i].is_finite()).collect(),
        }
    }

    fn len(&self) -> usize {
        2 * self.nc + self.upper.len() + self.lower.len()
    }
}

fn inequalities(p: &OpfProblem, iq: &IneqLayout, x: &VariableVector) -> Vec<f64> {
    let eval = flow_constraints(x, &p.model);
    let xs = x.stack();
    let mut h = Vec::with_capacity(iq.len());
    h.extend_from_slice(&eval.hf);
    h.extend_from_slice(&eval.ht);
    h.extend(iq.upper.iter().map(|&i| xs[i] - p.xmax[i]));
    h.extend(iq.lower.iter().map(|&i| p.xmin[i] - xs[i]));
    h
}

fn ineq_jacobian(p: &OpfProblem, iq: &IneqLayout, x: &VariableVector) -> DMatrix<f64> {
    let n = p.layout.len();
    let mut jh = DMatrix::zeros(iq.len(), n);
    let jac = d_flow_constraints(x, &p.model);
    for (r, c, v) in jac.hf.triplets() {
        jh[(r, c)] = v;
    }
    for (r, c, v) in jac.ht.triplets() {
        jh[(iq.nc + r, c)] = v;
    }
    let mut row = 2 * iq.nc;
    for &i in &iq.upper {
        jh[(row, i)] = 1.0;
        row += 1;
    }
    for &i in &iq.lower {
        jh[(row, i)] = -1.0;
        row += 1;
    }
    jh
}

/// Hessian of the Lagrangian f + λᵀg + μᵀh over the stacked vector:
/// objective term, Re(G_XX(λ_P − jλ_Q)), and the flow-constraint term.
/// Symmetrized after assembly.
pub fn lagrangian_hessian(
    x: &VariableVector,
    p: &OpfProblem,
    lam: &[f64],
    mu_f: &[f64],
    mu_t: &[f64],
) -> Csc<f64> {
    let nb = p.model.nb;
    assert_eq!(lam.len(), 2 * nb);
    let n = p.layout.len();

    let mut obj = Coo::new(n, n);
    let off = p.layout.offset(VarGroup::Pg);
    for (i, c) in p.model.cost.iter().enumerate() {
        obj.push(off + i, off + i, 2.0 * c.c2);
    }

    let lam_c: Vec<Complex64> = (0..nb)
        .map(|i| Complex64::new(lam[i], -lam[nb + i]))
        .collect();
    let h_bal = d2_mismatch(x, &p.model, &lam_c).to_stacked().re();
    let h_flow = d2_flow_constraints(x, &p.model, mu_f, mu_t);

    let total = obj.to_csc().add(&h_bal).add(&h_flow);
    let asym = total.max_abs_diff(&total.transpose(), f64::abs);
    debug_assert!(asym <= 1e-9, "pre-symmetrization asymmetry {}", asym);
    total.add(&total.transpose()).scale(0.5)
}

/// Largest step in [0, xi·(distance to boundary)], the
/// fraction-to-boundary rule.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>, xi: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-xi * v[i] / dv[i]);
        }
    }
    alpha.min(1.0)
}

struct KktSolve {
    dx: DVector<f64>,
    dlam: DVector<f64>,
}

/// Solve [M Jgᵀ; Jg 0][dx; dlam] = [rx; rg] with growing diagonal
/// regularization on factorization failure.
fn solve_kkt(
    m_mat: &DMatrix<f64>,
    jg: &DMatrix<f64>,
    rx: &DVector<f64>,
    rg: &DVector<f64>,
) -> Option<(KktSolve, f64)> {
    let nf = m_mat.nrows();
    let neq = jg.nrows();
    let dim = nf + neq;
    let mut reg = 0.0;
    let mut reg_next = 1e-8;
    loop {
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (nf, nf)).copy_from(m_mat);
        for i in 0..nf {
            kkt[(i, i)] += reg;
        }
        kkt.view_mut((0, nf), (nf, neq)).copy_from(&jg.transpose());
        kkt.view_mut((nf, 0), (neq, nf)).copy_from(jg);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, nf).copy_from(rx);
        rhs.rows_mut(nf, neq).copy_from(rg);

        if let Some(sol) = kkt.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                return Some((
                    KktSolve {
                        dx: sol.rows(0, nf).into_owned(),
                        dlam: sol.rows(nf, neq).into_owned(),
                    },
                    reg,
                ));
            }
        }
        if reg_next > 1e2 {
            return None;
        }
        reg = reg_next;
        reg_next *= 10.0;
    }
}

/// Primal-dual interior-point solve.
pub fn solve_opf(p: &OpfProblem, opts: &OpfOptions) -> SolveResult {
    let m = &p.model;
    let layout = p.layout;
    let n = layout.len();
    let nb = m.nb;
    let neq = 2 * nb;
    let iq = IneqLayout::of(p);
    let niq = iq.len();
    let free = p.free_indices();
    let nf = free.len();
    let xi = 0.995; // fraction-to-boundary
    let sigma = 0.1; // centering

    // start: flat voltage, midpoint injections, taps at their fixed values,
    // pinned entries forced
    let mut xs = VariableVector::flat_start(m).stack();
    for i in 0..n {
        if let Some(v) = p.pinned_value(i) {
            xs[i] = v;
        }
    }
    let mut x = VariableVector::unstack(layout, &xs);

    let h0 = inequalities(p, &iq, &x);
    let mut z = DVector::from_iterator(niq, h0.iter().map(|&hi| (-hi).max(0.1)));
    let mut mu = DVector::from_iterator(niq, z.iter().map(|&zi| 0.1 / zi));
    let mut lam: DVector<f64> = DVector::zeros(neq);

    let mut history = Vec::new();
    let mut status = SolveStatus::IterLimit;
    let mut iterations = 0;
    let mut last_metrics = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

    let reduce = |v: &DVector<f64>, idx: &[usize]| DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]));
    let reduce_cols = |m_full: &DMatrix<f64>, idx: &[usize]| {
        let mut out = DMatrix::zeros(m_full.nrows(), idx.len());
        for (c, &i) in idx.iter().enumerate() {
            out.set_column(c, &m_full.column(i));
        }
        out
    };

    for it in 0..=opts.max_iter {
        iterations = it;

        let g = DVector::from_vec(p.equalities(&x));
        let h = DVector::from_vec(inequalities(p, &iq, &x));
        let jg_full = p.eq_jacobian(&x);
        let jh_full = ineq_jacobian(p, &iq, &x);
        let jg = reduce_cols(&jg_full, &free);
        let jh = reduce_cols(&jh_full, &free);

        let grad_f = DVector::from_vec(p.grad_objective(&x));
        let lx_full = &grad_f + jg_full.transpose() * &lam + jh_full.transpose() * &mu;
        let lx = reduce(&lx_full, &free);

        let feas_g = g.amax();
        let viol_h = h.iter().fold(0.0f64, |acc, &hi| acc.max(hi));
        let comp_gap = z.dot(&mu) / niq.max(1) as f64;
        let grad_raw = if nf > 0 { lx.amax() } else { 0.0 };
        let grad_cond = grad_raw / (1.0 + lam.amax().max(mu.amax()));
        last_metrics = (feas_g.max(viol_h), grad_raw, comp_gap);
        history.push(feas_g.max(viol_h) + comp_gap + grad_cond);

        if opts.verbose {
            let (mut worst, mut wi) = (0.0f64, 0usize);
            for (r, &i) in free.iter().enumerate() {
                if lx[r].abs() > worst {
                    worst = lx[r].abs();
                    wi = i;
                }
            }
            eprintln!(
                "it {:3}  f {:12.6e}  feas {:9.3e}  grad {:9.3e}  comp {:9.3e}  |lam| {:9.3e} |mu| {:9.3e} worstLx@{} {:9.3e}",
                it,
                p.objective(&x),
                feas_g.max(viol_h),
                grad_cond,
                comp_gap,
                lam.amax(),
                mu.amax(),
                wi,
                worst,
            );
        }

        if feas_g <= opts.tol && viol_h <= opts.tol && comp_gap <= opts.tol && grad_cond <= opts.tol.max(1e-10) {
            status = SolveStatus::Converged;
            break;
        }
        if it == opts.max_iter {
            status = if last_metrics.0 > 1e-6 {
                SolveStatus::Infeasible
            } else {
                SolveStatus::IterLimit
            };
            break;
        }

        // Lagrangian Hessian over free coordinates
        let hess_full = lagrangian_hessian(
            &x,
            p,
            lam.as_slice(),
            &mu.as_slice()[0..iq.nc],
            &mu.as_slice()[iq.nc..2 * iq.nc],
        )
        .to_dense();
        let mut m_mat = DMatrix::zeros(nf, nf);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                m_mat[(r, c)] = hess_full[(i, j)];
            }
        }

        // M += Jhᵀ[μ/z]Jh
        let zinv_mu: Vec<f64> = (0..niq).map(|i| mu[i] / z[i]).collect();
        for i in 0..niq {
            let row = jh.row(i);
            for a in 0..nf {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..nf {
                    m_mat[(a, b)] += ra * zinv_mu[i] * row[b];
                }
            }
        }

        // Newton step on the perturbed KKT conditions with constant
        // centering. A predictor-based adaptive barrier collapses the
        // complementarity products before the dual residual settles on
        // problems with generators pinned at a bound, so the barrier
        // tracks the complementarity gap with a fixed factor instead.
        let gamma = sigma * comp_gap;
        let rg = -&g;
        let w = DVector::from_iterator(
            niq,
            (0..niq).map(|i| (gamma + mu[i] * h[i]) / z[i]),
        );
        let n_cor = &lx + jh.transpose() * w;
        let Some((step, _)) = solve_kkt(&m_mat, &jg, &(-&n_cor), &rg) else {
            status = SolveStatus::NumericFailure;
            break;
        };
        let dz = -&h - &z - &jh * &step.dx;
        let dmu = DVector::from_iterator(
            niq,
            (0..niq).map(|i| -mu[i] + (gamma - mu[i] * dz[i]) / z[i]),
        );

        let mut alpha_p = max_step(&z, &dz, xi);
        let alpha_d = max_step(&mu, &dmu, xi);

        // keep tap and voltage magnitudes physical
        let apply = |xs: &[f64], dx: &DVector<f64>, alpha: f64| -> Vec<f64> {
            let mut out = xs.to_vec();
            for (r, &i) in free.iter().enumerate() {
                out[i] += alpha * dx[r];
            }
            out
        };
        let physical = |xs: &[f64]| -> bool {
            layout.range(VarGroup::Vm).all(|i| xs[i] > 1e-3)
                && layout.range(VarGroup::Tau).all(|i| xs[i] > 1e-3)
        };
        let xs0 = x.stack();
        let mut xs_new = apply(&xs0, &step.dx, alpha_p);
        let mut guard = 0;
        while !physical(&xs_new) && guard < 30 {
            alpha_p *= 0.5;
            xs_new = apply(&xs0, &step.dx, alpha_p);
            guard += 1;
        }

        x = VariableVector::unstack(layout, &xs_new);
        z += alpha_p * dz;
        mu += alpha_d * dmu;
        lam += alpha_d * step.dlam;

        if xs_new.iter().any(|v| !v.is_finite())
            || z.iter().any(|v| !v.is_finite() || *v <= 0.0)
            || mu.iter().any(|v| !v.is_finite() || *v <= 0.0)
        {
            status = SolveStatus::NumericFailure;
            break;
        }
    }

    let mut mult = Multipliers {
        lam_p: lam.as_slice()[0..nb].to_vec(),
        lam_q: lam.as_slice()[nb..2 * nb].to_vec(),
        mu_flow_f: mu.as_slice()[0..iq.nc].to_vec(),
        mu_flow_t: mu.as_slice()[iq.nc..2 * iq.nc].to_vec(),
        mu_lower: vec![0.0; n],
        mu_upper: vec![0.0; n],
    };
    let mut row = 2 * iq.nc;
    for &i in &iq.upper {
        mult.mu_upper[i] = mu[row];
        row += 1;
    }
    for &i in &iq.lower {
        mult.mu_lower[i] = mu[row];
        row += 1;
    }

    SolveResult {
        objective: p.objective(&x),
        x,
        multipliers: mult,
        iterations,
        status,
        feas_residual: last_metrics.0,
        opt_residual: last_metrics.1,
        comp_residual: last_metrics.2,
        residual_history: history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{CaseFormat, parse_case};
    use crate::model::to_internal;

    fn three_bus_case() -> crate::case::Case {
        // cheap slack generator behind an adjustable transformer feeding the
        // load, plus an expensive local generator
        let text = r#"{
            "baseMVA": 100.0,
            "bus": [
                {"id": 1, "type": "REF", "Vmin": 0.95, "Vmax": 1.05},
                {"id": 2, "type": "PQ", "Pd": 80.0, "Qd": 25.0, "Vmin": 0.95, "Vmax": 1.05},
                {"id": 3, "type": "PV", "Vmin": 0.95, "Vmax": 1.05}
            ],
            "branch": [
                {"fbus": 1, "tbus": 2, "r": 0.02, "x": 0.12, "b": 0.04,
                 "tau": 1.0, "adjustable": true,
                 "tauMin": 0.9, "tauMax": 1.1, "thetaMin": 0.0, "thetaMax": 0.0},
                {"fbus": 3, "tbus": 2, "r": 0.015, "x": 0.09, "b": 0.03}
            ],
            "gen": [
                {"bus": 1, "Pmin": 0.0, "Pmax": 250.0, "Qmin": -100.0, "Qmax": 100.0,
                 "c2": 0.2, "c1": 6.0, "c0": 0.0},
                {"bus": 3, "Pmin": 0.0, "Pmax": 150.0, "Qmin": -100.0, "Qmax": 100.0,
                 "c2": 0.3, "c1": 9.0, "c0": 0.0}
            ]
        }"#;
        parse_case(text, CaseFormat::Json).unwrap().case
    }

    #[test]
    fn objective_and_gradient_shape() {
        let m = to_internal(&three_bus_case()).unwrap();
        let p = OpfProblem::new(m);
        let x = VariableVector::flat_start(&p.model);
        assert!(p.objective(&x).is_finite());
        let g = p.grad_objective(&x);
        assert_eq!(g.len(), p.layout.len());
        let off = p.layout.offset(VarGroup::Pg);
        assert!(g[off] > 0.0);
        assert!(g[..off].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_multipliers_quadratic_costs_only() {
        let m = to_internal(&three_bus_case()).unwrap();
        let p = OpfProblem::new(m);
        let x = VariableVector::flat_start(&p.model);
        let nb = p.model.nb;
        let nc = p.model.constrained.len();
        let h = lagrangian_hessian(&x, &p, &vec![0.0; 2 * nb], &vec![0.0; nc], &vec![0.0; nc]);
        let off = p.layout.offset(VarGroup::Pg);
        assert_eq!(h.nnz(), 2);
        assert!((h.get(off, off) - 0.4).abs() < 1e-15);
        assert!((h.get(off + 1, off + 1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ipm_converges_on_three_bus() {
        let m = to_internal(&three_bus_case()).unwrap();
        let p = OpfProblem::new(m);
        let result = solve_opf(&p, &OpfOptions::default());
        assert_eq!(result.status, SolveStatus::Converged, "iters {}", result.iterations);
        assert!(result.feas_residual <= 1e-8);
        assert!(result.comp_residual <= 1e-8);
        let xs = result.x.stack();
        for i in 0..p.layout.len() {
            assert!(xs[i] >= p.xmin[i] - 1e-8 && xs[i] <= p.xmax[i] + 1e-8);
        }
    }

    #[test]
    fn fixed_tap_matches_variable_tap_on_degenerate_group() {
        // no adjustable branches: the variable-tap solve IS the fixed-tap solve
        let mut case = three_bus_case();
        case.branches[0].adjustable = false;
        let m = to_internal(&case).unwrap();
        assert_eq!(m.na(), 0);
        let taps = TapState::nominal(&m);
        let p_free = OpfProblem::new(m.clone());
        let p_fixed = OpfProblem::with_fixed_taps(m, &taps);
        let r_free = solve_opf(&p_free, &OpfOptions::default());
        let r_fixed = solve_opf(&p_fixed, &OpfOptions::default());
        assert_eq!(r_free.status, SolveStatus::Converged);
        assert_eq!(r_fixed.status, SolveStatus::Converged);
        assert!((r_free.objective - r_fixed.objective).abs() <= 1e-6);
    }
}
