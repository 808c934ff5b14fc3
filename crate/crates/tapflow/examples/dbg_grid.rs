use tapflow::admittance::TapState;
use tapflow::case::{parse_case, CaseFormat};
use tapflow::model::to_internal;
use tapflow::opf::{solve_opf, OpfOptions, OpfProblem, SolveStatus};

fn main() {
    let path = std::env::args().nth(1).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let m = to_internal(&parse_case(&text, CaseFormat::Json).unwrap().case).unwrap();
    let opts = OpfOptions::default();
    for i in 0..=40 {
        let tau = 0.90 + 0.005 * i as f64;
        let mut taps = TapState::nominal(&m);
        for &k in &m.adjustable {
            taps.tau[k] = tau;
        }
        let p = OpfProblem::with_fixed_taps(m.clone(), &taps);
        let r = solve_opf(&p, &opts);
        println!("tau {:.3}  obj {:.9}  {:?} iters {}", tau, r.objective, r.status, r.iterations);
    }
    let r = solve_opf(&OpfProblem::new(m.clone()), &opts);
    println!("variable: tau {:.6} obj {:.9} {:?}", r.x.tau[0], r.objective, r.status);
}
