use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapflow::fd::fd_hessian_contract;
use tapflow::model::to_internal;
use tapflow::opf::{lagrangian_hessian, OpfProblem};
use tapflow::synth::{random_case, random_state};
use tapflow::variables::VariableVector;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..5 {
        let case = random_case(&mut rng, 5);
        let m = to_internal(&case).unwrap();
        let p = OpfProblem::new(m.clone());
        let x = random_state(&mut rng, &m);
        let lam: Vec<f64> = (0..2 * m.nb).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nc = m.constrained.len();
        let mu_f: Vec<f64> = (0..nc).map(|_| rng.random_range(0.0..1.0)).collect();
        let mu_t: Vec<f64> = (0..nc).map(|_| rng.random_range(0.0..1.0)).collect();

        let h = lagrangian_hessian(&x, &p, &lam, &mu_f, &mu_t).to_dense();

        let layout = p.layout;
        let grad = |xs: &[f64]| -> Vec<f64> {
            let xv = VariableVector::unstack(layout, xs);
            let gf = DVector::from_vec(p.grad_objective(&xv));
            let jg = p.eq_jacobian(&xv);
            let jac = tapflow::line_flow::d_flow_constraints(&xv, &m);
            let mut out = gf + jg.transpose() * DVector::from_vec(lam.clone());
            for (v, (a, b)) in out.iter_mut().zip(
                jac.hf.tr_mul_vec(&mu_f).iter().zip(jac.ht.tr_mul_vec(&mu_t).iter()),
            ) {
                *v += a + b;
            }
            out.iter().copied().collect()
        };
        let fd = fd_hessian_contract(grad, &x.stack(), 1e-5).unwrap();
        let scale = fd.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-12);
        let err = (h - fd).iter().fold(0.0f64, |a, &v| a.max(v.abs())) / scale;
        println!("trial {}: rel err {:.3e}  {}", trial, err, if err <= 5e-6 { "OK" } else { "FAIL" });
    }
}
