use tapflow::case::{parse_case, CaseFormat};
use tapflow::model::to_internal;
use tapflow::opf::{solve_opf, OpfOptions, OpfProblem};

fn main() {
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
    let m = to_internal(&parse_case(text, CaseFormat::Json).unwrap().case).unwrap();
    let p = OpfProblem::new(m);
    let r = solve_opf(&p, &OpfOptions { verbose: true, max_iter: 60, ..Default::default() });
    println!("status {:?} iters {} obj {:.8} feas {:.3e} opt {:.3e} comp {:.3e}",
        r.status, r.iterations, r.objective, r.feas_residual, r.opt_residual, r.comp_residual);
    println!("Vm {:?}", r.x.vm);
    println!("tau {:?} theta {:?}", r.x.tau, r.x.theta);
    println!("Pg {:?} Qg {:?}", r.x.pg, r.x.qg);
}
