//! Compacted, per-unit, index-normalized model.
//!
//! All downstream math operates on an [`InternalModel`]: bus IDs become
//! contiguous 0-based indices, powers are divided by `baseMVA`, angles are
//! converted to radians, `tau = 0` becomes 1.0 and out-of-service branches
//! are dropped. This is the single conversion point between file units and
//! internal units.

use crate::case::{BusType, Case, CaseError, CostRecord, validate_case};
use crate::case::{BranchRecord, BusRecord, GenRecord};
use crate::sparse::Csc;
use num_complex::Complex64;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct InternalModel {
    pub base_mva: f64,
    pub nb: usize,
    pub nl: usize,
    pub ng: usize,

    pub bus_type: Vec<BusType>,
    pub slack: usize,

    /// Branch endpoints as bus indices; `cf`/`ct` are the matching
    /// connection matrices (one 1 per row).
    pub fbus: Vec<usize>,
    pub tbus: Vec<usize>,
    pub cf: Csc<f64>,
    pub ct: Csc<f64>,
    /// Generator-to-bus connection matrix (nb × ng) and bus indices.
    pub cg: Csc<f64>,
    pub gen_bus: Vec<usize>,

    /// Series admittance 1/(r + jx) and total charging susceptance, p.u.
    pub ys: Vec<Complex64>,
    pub bc: Vec<f64>,
    /// Aggregated bus shunt admittance, p.u.
    pub ysh: Vec<Complex64>,
    /// Complex demand, p.u.
    pub sd: Vec<Complex64>,

    /// Normalized fixed tap state (tau0 = 0 already replaced by 1, radians).
    pub tau0: Vec<f64>,
    pub theta0: Vec<f64>,
    /// Indices of adjustable branches; tau/theta variables range over these.
    pub adjustable: Vec<usize>,
    pub tau_min: Vec<f64>,
    pub tau_max: Vec<f64>,
    pub theta_min: Vec<f64>,
    pub theta_max: Vec<f64>,

    /// Current magnitude limits, p.u.; 0 means unconstrained.
    pub imax: Vec<f64>,
    /// Branches with imax > 0, i.e. rows of the flow constraint functions.
    pub constrained: Vec<usize>,

    pub vm_min: Vec<f64>,
    pub vm_max: Vec<f64>,
    pub va0: Vec<f64>,
    pub vm0: Vec<f64>,

    pub pg0: Vec<f64>,
    pub qg0: Vec<f64>,
    pub pg_min: Vec<f64>,
    pub pg_max: Vec<f64>,
    pub qg_min: Vec<f64>,
    pub qg_max: Vec<f64>,
    pub cost: Vec<CostRecord>,

    /// Original bus IDs by internal index, for reporting.
    pub bus_id: Vec<i64>,
}

impl InternalModel {
    pub fn na(&self) -> usize {
        self.adjustable.len()
    }

    /// Reconstruct a case from the normalized model (bus IDs become the
    /// internal indices). `to_internal` of the result is a fixed point.
    pub fn to_case(&self) -> Case {
        let buses = (0..self.nb)
            .map(|i| BusRecord {
                id: i as i64,
                bus_type: self.bus_type[i],
                pd: self.sd[i].re * self.base_mva,
                qd: self.sd[i].im * self.base_mva,
                gs: self.ysh[i].re * self.base_mva,
                bs: self.ysh[i].im * self.base_mva,
                vm: self.vm0[i],
                va: self.va0[i].to_degrees(),
                vmin: self.vm_min[i],
                vmax: self.vm_max[i],
            })
            .collect();
        let adj_pos: HashMap<usize, usize> =
            self.adjustable.iter().enumerate().map(|(a, &k)| (k, a)).collect();
        let branches = (0..self.nl)
            .map(|k| {
                let y = self.ys[k];
                let z = Complex64::new(1.0, 0.0) / y;
                let a = adj_pos.get(&k);
                BranchRecord {
                    fbus: self.fbus[k] as i64,
                    tbus: self.tbus[k] as i64,
                    r: z.re,
                    x: z.im,
                    b: self.bc[k],
                    tau0: self.tau0[k],
                    theta0: self.theta0[k].to_degrees(),
                    tau_min: a.map_or(1.0, |&a| self.tau_min[a]),
                    tau_max: a.map_or(1.0, |&a| self.tau_max[a]),
                    theta_min: a.map_or(0.0, |&a| self.theta_min[a].to_degrees()),
                    theta_max: a.map_or(0.0, |&a| self.theta_max[a].to_degrees()),
                    adjustable: a.is_some(),
                    imax: self.imax[k],
                    status: 1,
                }
            })
            .collect();
        let gens = (0..self.ng)
            .map(|g| GenRecord {
                bus: self.gen_bus[g] as i64,
                pg: self.pg0[g] * self.base_mva,
                qg: self.qg0[g] * self.base_mva,
                pmin: self.pg_min[g] * self.base_mva,
                pmax: self.pg_max[g] * self.base_mva,
                qmin: self.qg_min[g] * self.base_mva,
                qmax: self.qg_max[g] * self.base_mva,
            })
            .collect();
        Case {
            base_mva: self.base_mva,
            buses,
            branches,
            gens,
            gencosts: self.cost.clone(),
        }
    }
}

/// Normalize a validated case into an [`InternalModel`].
pub fn to_internal(case: &Case) -> Result<InternalModel, CaseError> {
    let report = validate_case(case);
    if !report.is_empty() {
        return Err(CaseError::Invalid(report));
    }

    let base = case.base_mva;
    let nb = case.buses.len();
    let index: HashMap<i64, usize> = case.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();

    let active: Vec<&BranchRecord> = case.branches.iter().filter(|br| br.status != 0).collect();
    let nl = active.len();
    let ng = case.gens.len();

    let mut touched = vec![false; nb];
    let mut fbus = Vec::with_capacity(nl);
    let mut tbus = Vec::with_capacity(nl);
    let mut ys = Vec::with_capacity(nl);
    let mut bc = Vec::with_capacity(nl);
    let mut tau0 = Vec::with_capacity(nl);
    let mut theta0 = Vec::with_capacity(nl);
    let mut imax = Vec::with_capacity(nl);
    let mut adjustable = Vec::new();
    let mut tau_min = Vec::new();
    let mut tau_max = Vec::new();
    let mut theta_min = Vec::new();
    let mut theta_max = Vec::new();

    for (k, br) in active.iter().enumerate() {
        let f = index[&br.fbus];
        let t = index[&br.tbus];
        touched[f] = true;
        touched[t] = true;
        fbus.push(f);
        tbus.push(t);
        ys.push(Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x));
        bc.push(br.b);
        tau0.push(if br.tau0 == 0.0 { 1.0 } else { br.tau0 });
        theta0.push(br.theta0.to_radians());
        imax.push(br.imax);
        if br.adjustable {
            adjustable.push(k);
            tau_min.push(br.tau_min);
            tau_max.push(br.tau_max);
            theta_min.push(br.theta_min.to_radians());
            theta_max.push(br.theta_max.to_radians());
        }
    }

    if nb > 1 {
        for (i, bus) in case.buses.iter().enumerate() {
            if !touched[i] {
                return Err(CaseError::IsolatedBus { id: bus.id });
            }
        }
    }

    let cf = Csc::from_triplets(nl, nb, fbus.iter().enumerate().map(|(k, &f)| (k, f, 1.0)));
    let ct = Csc::from_triplets(nl, nb, tbus.iter().enumerate().map(|(k, &t)| (k, t, 1.0)));

    let gen_bus: Vec<usize> = case.gens.iter().map(|g| index[&g.bus]).collect();
    let cg = Csc::from_triplets(nb, ng, gen_bus.iter().enumerate().map(|(g, &b)| (b, g, 1.0)));

    let constrained = (0..nl).filter(|&k| imax[k] > 0.0).collect();

    Ok(InternalModel {
        base_mva: base,
        nb,
        nl,
        ng,
        bus_type: case.buses.iter().map(|b| b.bus_type).collect(),
        slack: case
            .buses
            .iter()
            .position(|b| b.bus_type == BusType::REF)
            .expect("validated: exactly one REF bus"),
        fbus,
        tbus,
        cf,
        ct,
        cg,
        gen_bus,
        ys,
        bc,
        ysh: case
            .buses
            .iter()
            .map(|b| Complex64::new(b.gs, b.bs) / base)
            .collect(),
        sd: case
            .buses
            .iter()
            .map(|b| Complex64::new(b.pd, b.qd) / base)
            .collect(),
        tau0,
        theta0,
        adjustable,
        tau_min,
        tau_max,
        theta_min,
        theta_max,
        imax,
        constrained,
        vm_min: case.buses.iter().map(|b| b.vmin).collect(),
        vm_max: case.buses.iter().map(|b| b.vmax).collect(),
        va0: case.buses.iter().map(|b| b.va.to_radians()).collect(),
        vm0: case.buses.iter().map(|b| b.vm).collect(),
        pg0: case.gens.iter().map(|g| g.pg / base).collect(),
        qg0: case.gens.iter().map(|g| g.qg / base).collect(),
        pg_min: case.gens.iter().map(|g| g.pmin / base).collect(),
        pg_max: case.gens.iter().map(|g| g.pmax / base).collect(),
        qg_min: case.gens.iter().map(|g| g.qmin / base).collect(),
        qg_max: case.gens.iter().map(|g| g.qmax / base).collect(),
        cost: case.gencosts.clone(),
        bus_id: case.buses.iter().map(|b| b.id).collect(),
    })
}
