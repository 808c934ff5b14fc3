//! Seeded synthetic cases and operating states for the randomized
//! finite-difference suites. Topologies are a random spanning tree plus a
//! few extra edges, so every case is connected.

use crate::case::{BranchRecord, BusRecord, BusType, Case, CostRecord, GenRecord};
use crate::model::InternalModel;
use crate::variables::VariableVector;
use rand::Rng;

/// Random connected case with `nb` buses. At least one branch is
/// adjustable and at least one carries a current limit.
pub fn random_case<R: Rng>(rng: &mut R, nb: usize) -> Case {
    assert!(nb >= 2);
    let base_mva = 100.0;

    let mut buses = Vec::with_capacity(nb);
    for i in 0..nb {
        let bus_type = if i == 0 {
            BusType::REF
        } else if rng.random_bool(0.25) {
            BusType::PV
        } else {
            BusType::PQ
        };
        buses.push(BusRecord {
            id: (i + 1) as i64,
            bus_type,
            pd: if bus_type == BusType::PQ { rng.random_range(0.0..50.0) } else { 0.0 },
            qd: if bus_type == BusType::PQ { rng.random_range(-10.0..30.0) } else { 0.0 },
            gs: 0.0,
            bs: if rng.random_bool(0.3) { rng.random_range(-20.0..20.0) } else { 0.0 },
            vm: 1.0,
            va: 0.0,
            vmin: 0.9,
            vmax: 1.1,
        });
    }

    // spanning tree, then a few chords
    let mut edges: Vec<(i64, i64)> = (1..nb)
        .map(|i| ((rng.random_range(0..i) + 1) as i64, (i + 1) as i64))
        .collect();
    for _ in 0..nb / 3 {
        let a = rng.random_range(0..nb) as i64 + 1;
        let b = rng.random_range(0..nb) as i64 + 1;
        if a != b {
            edges.push((a, b));
        }
    }

    let mut branches: Vec<BranchRecord> = edges
        .iter()
        .map(|&(f, t)| {
            let adjustable = rng.random_bool(0.5);
            BranchRecord {
                fbus: f,
                tbus: t,
                r: rng.random_range(0.005..0.05),
                x: rng.random_range(0.05..0.25),
                b: rng.random_range(0.0..0.3),
                tau0: if adjustable { rng.random_range(0.95..1.05) } else { 0.0 },
                theta0: if adjustable { rng.random_range(-5.0..5.0) } else { 0.0 },
                tau_min: if adjustable { 0.8 } else { 1.0 },
                tau_max: if adjustable { 1.25 } else { 1.0 },
                theta_min: if adjustable { -25.0 } else { 0.0 },
                theta_max: if adjustable { 25.0 } else { 0.0 },
                adjustable,
                imax: if rng.random_bool(0.4) { rng.random_range(0.5..2.0) } else { 0.0 },
                status: 1,
            }
        })
        .collect();
    if !branches.iter().any(|b| b.adjustable) {
        let b = &mut branches[0];
        b.adjustable = true;
        b.tau_min = 0.8;
        b.tau_max = 1.25;
        b.theta_min = -25.0;
        b.theta_max = 25.0;
    }
    if !branches.iter().any(|b| b.imax > 0.0) {
        branches[0].imax = 1.0;
    }

    let mut gens = Vec::new();
    for bus in &buses {
        if bus.bus_type != BusType::PQ {
            gens.push(GenRecord {
                bus: bus.id,
                pg: rng.random_range(0.0..100.0),
                qg: rng.random_range(-20.0..20.0),
                pmin: 0.0,
                pmax: rng.random_range(100.0..300.0),
                qmin: -150.0,
                qmax: 150.0,
            });
        }
    }
    let gencosts = gens
        .iter()
        .map(|_| CostRecord {
            c2: rng.random_range(0.05..0.5),
            c1: rng.random_range(1.0..10.0),
            c0: rng.random_range(0.0..100.0),
        })
        .collect();

    Case {
        base_mva,
        buses,
        branches,
        gens,
        gencosts,
    }
}

/// Random operating state: Vm in [0.95, 1.05], Va in [−0.3, 0.3],
/// tau in [0.9, 1.1], theta in [−0.3, 0.3], injections within bounds.
pub fn random_state<R: Rng>(rng: &mut R, m: &InternalModel) -> VariableVector {
    let mut x = VariableVector::flat_start(m);
    for i in 0..m.nb {
        x.vm[i] = rng.random_range(0.95..1.05);
        x.va[i] = if i == m.slack { 0.0 } else { rng.random_range(-0.3..0.3) };
    }
    for g in 0..m.ng {
        x.pg[g] = rng.random_range(m.pg_min[g]..=m.pg_max[g]);
        x.qg[g] = rng.random_range(m.qg_min[g]..=m.qg_max[g]);
    }
    for a in 0..m.na() {
        x.tau[a] = rng.random_range(0.9..1.1);
        x.theta[a] = rng.random_range(-0.3..0.3);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::validate_case;
    use crate::model::to_internal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_cases_validate_and_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..30 {
            let nb = 2 + (trial % 9);
            let case = random_case(&mut rng, nb);
            let report = validate_case(&case);
            assert!(report.is_empty(), "seed trial {}: {}", trial, report);
            let m = to_internal(&case).unwrap();
            assert_eq!(m.nb, nb);
            assert!(m.na() >= 1);
            assert!(!m.constrained.is_empty());
            let x = random_state(&mut rng, &m);
            assert_eq!(x.stack().len(), x.layout.len());
        }
    }

    #[test]
    fn same_seed_same_case() {
        let a = random_case(&mut ChaCha8Rng::seed_from_u64(7), 6);
        let b = random_case(&mut ChaCha8Rng::seed_from_u64(7), 6);
        assert_eq!(a, b);
    }
}
