//! Newton-Raphson power flow at fixed taps, built on the Θ/Vm Jacobian
//! blocks of the mismatch derivative bundle.

use crate::admittance::TapState;
use crate::model::InternalModel;
use crate::case::BusType;
use crate::opf::{Multipliers, SolveResult, SolveStatus};
use crate::power_balance::{d_mismatch, mismatch};
use crate::variables::VariableVector;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PfError {
    #[error("singular power flow Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("power flow did not converge: residual {residual:.3e} after {iterations} iterations")]
    Diverged { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

/// Solve the power flow for the given tap state. Va/Vm/Pg/Qg of `start`
/// are the initial guess and the fixed injections; the solved state keeps
/// PV-bus voltage setpoints, the slack bus absorbs the active/reactive
/// residual and PV generators the reactive residual (split equally among
/// generators at the same bus).
pub fn newton_power_flow(
    m: &InternalModel,
    taps: &TapState,
    start: &VariableVector,
    opts: &NewtonOptions,
) -> Result<SolveResult, PfError> {
    let mut x = start.clone();
    for (a, &k) in m.adjustable.iter().enumerate() {
        x.tau[a] = taps.tau[k];
        x.theta[a] = taps.theta[k];
    }

    let pvpq: Vec<usize> = (0..m.nb).filter(|&i| i != m.slack).collect();
    let pq: Vec<usize> = (0..m.nb).filter(|&i| m.bus_type[i] == BusType::PQ).collect();
    let n_unknown = pvpq.len() + pq.len();

    let residual = |x: &VariableVector| -> (Vec<f64>, f64) {
        let g = mismatch(x, m);
        let f: Vec<f64> = pvpq
            .iter()
            .map(|&i| g[i].re)
            .chain(pq.iter().map(|&i| g[i].im))
            .collect();
        let norm = f.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        (f, norm)
    };

    let mut iterations = 0;
    loop {
        let (f, norm) = residual(&x);
        if norm <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(PfError::Diverged {
                iterations,
                residual: norm,
            });
        }

        let bundle = d_mismatch(&x, m);
        let dva = bundle.d_va.to_dense();
        let dvm = bundle.d_vm.to_dense();
        let mut jac = DMatrix::zeros(n_unknown, n_unknown);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(r, c)] = dva[(i, j)].re;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(r, pvpq.len() + c)] = dvm[(i, j)].re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(pvpq.len() + r, c)] = dva[(i, j)].im;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(pvpq.len() + r, pvpq.len() + c)] = dvm[(i, j)].im;
            }
        }

        let rhs = DVector::from_vec(f);
        let step = jac
            .lu()
            .solve(&rhs)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(PfError::SingularJacobian {
                iteration: iterations,
            })?;

        for (r, &i) in pvpq.iter().enumerate() {
            x.va[i] -= step[r];
        }
        for (c, &i) in pq.iter().enumerate() {
            x.vm[i] -= step[pvpq.len() + c];
        }
        iterations += 1;
    }

    // absorb residual injections: slack takes P and Q, PV buses take Q
    let g = mismatch(&x, m);
    let gens_at = |bus: usize| -> Vec<usize> {
        (0..m.ng).filter(|&gi| m.gen_bus[gi] == bus).collect()
    };
    let slack_gens = gens_at(m.slack);
    if !slack_gens.is_empty() {
        let share_p = g[m.slack].re / slack_gens.len() as f64;
        let share_q = g[m.slack].im / slack_gens.len() as f64;
        for &gi in &slack_gens {
            x.pg[gi] += share_p;
            x.qg[gi] += share_q;
        }
    }
    for &i in &pvpq {
        if m.bus_type[i] == BusType::PV {
            let gens = gens_at(i);
            if !gens.is_empty() {
                let share_q = g[i].im / gens.len() as f64;
                for &gi in &gens {
                    x.qg[gi] += share_q;
                }
            }
        }
    }

    let final_mis = mismatch(&x, m);
    let feas = final_mis.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));

    Ok(SolveResult {
        objective: m
            .cost
            .iter()
            .zip(&x.pg)
            .map(|(c, &pg)| c.c2 * pg * pg + c.c1 * pg + c.c0)
            .sum(),
        x,
        multipliers: Multipliers::default(),
        iterations,
        status: SolveStatus::Converged,
        feas_residual: feas,
        opt_residual: 0.0,
        comp_residual: 0.0,
        residual_history: Vec::new(),
    })
}
