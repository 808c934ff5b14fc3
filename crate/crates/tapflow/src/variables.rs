//! The extended optimization variable vector X = [Θ; Vm; Pg; Qg; τ; θ]
//! and the sparse derivative containers indexed by its six groups.

use crate::admittance::TapState;
use crate::model::InternalModel;
use crate::sparse::Csc;
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarGroup {
    Va,
    Vm,
    Pg,
    Qg,
    Tau,
    Theta,
}

pub const GROUPS: [VarGroup; 6] = [
    VarGroup::Va,
    VarGroup::Vm,
    VarGroup::Pg,
    VarGroup::Qg,
    VarGroup::Tau,
    VarGroup::Theta,
];

impl VarGroup {
    pub fn index(self) -> usize {
        match self {
            VarGroup::Va => 0,
            VarGroup::Vm => 1,
            VarGroup::Pg => 2,
            VarGroup::Qg => 3,
            VarGroup::Tau => 4,
            VarGroup::Theta => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VarGroup::Va => "Va",
            VarGroup::Vm => "Vm",
            VarGroup::Pg => "Pg",
            VarGroup::Qg => "Qg",
            VarGroup::Tau => "tau",
            VarGroup::Theta => "theta",
        }
    }
}

/// Offsets of each variable group in the stacked real vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nb: usize,
    pub ng: usize,
    pub na: usize,
}

impl Layout {
    pub fn of(m: &InternalModel) -> Layout {
        Layout {
            nb: m.nb,
            ng: m.ng,
            na: m.na(),
        }
    }

    pub fn len(&self) -> usize {
        2 * (self.nb + self.ng + self.na)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn size(&self, g: VarGroup) -> usize {
        match g {
            VarGroup::Va | VarGroup::Vm => self.nb,
            VarGroup::Pg | VarGroup::Qg => self.ng,
            VarGroup::Tau | VarGroup::Theta => self.na,
        }
    }

    pub fn offset(&self, g: VarGroup) -> usize {
        match g {
            VarGroup::Va => 0,
            VarGroup::Vm => self.nb,
            VarGroup::Pg => 2 * self.nb,
            VarGroup::Qg => 2 * self.nb + self.ng,
            VarGroup::Tau => 2 * (self.nb + self.ng),
            VarGroup::Theta => 2 * (self.nb + self.ng) + self.na,
        }
    }

    pub fn range(&self, g: VarGroup) -> Range<usize> {
        let off = self.offset(g);
        off..off + self.size(g)
    }
}

/// The stacked variable vector, kept in its six named groups.
/// Angles are radians, magnitudes and powers per-unit; `tau`/`theta` hold
/// the adjustable branches only.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableVector {
    pub layout: Layout,
    pub va: Vec<f64>,
    pub vm: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
}

impl VariableVector {
    /// Starting point from the case data (Vm0/Va0/Pg0/Qg0/tau0/theta0).
    pub fn from_case_start(m: &InternalModel) -> VariableVector {
        VariableVector {
            layout: Layout::of(m),
            va: m.va0.clone(),
            vm: m.vm0.clone(),
            pg: m.pg0.clone(),
            qg: m.qg0.clone(),
            tau: m.adjustable.iter().map(|&k| m.tau0[k]).collect(),
            theta: m.adjustable.iter().map(|&k| m.theta0[k]).collect(),
        }
    }

    /// Flat voltage start: Vm = 1, Θ = 0, Pg/Qg at bound midpoints,
    /// taps at their fixed values.
    pub fn flat_start(m: &InternalModel) -> VariableVector {
        VariableVector {
            layout: Layout::of(m),
            va: vec![0.0; m.nb],
            vm: vec![1.0; m.nb],
            pg: (0..m.ng).map(|g| 0.5 * (m.pg_min[g] + m.pg_max[g])).collect(),
            qg: (0..m.ng).map(|g| 0.5 * (m.qg_min[g] + m.qg_max[g])).collect(),
            tau: m.adjustable.iter().map(|&k| m.tau0[k]).collect(),
            theta: m.adjustable.iter().map(|&k| m.theta0[k]).collect(),
        }
    }

    pub fn stack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layout.len());
        x.extend_from_slice(&self.va);
        x.extend_from_slice(&self.vm);
        x.extend_from_slice(&self.pg);
        x.extend_from_slice(&self.qg);
        x.extend_from_slice(&self.tau);
        x.extend_from_slice(&self.theta);
        x
    }

    pub fn unstack(layout: Layout, x: &[f64]) -> VariableVector {
        assert_eq!(x.len(), layout.len());
        VariableVector {
            layout,
            va: x[layout.range(VarGroup::Va)].to_vec(),
            vm: x[layout.range(VarGroup::Vm)].to_vec(),
            pg: x[layout.range(VarGroup::Pg)].to_vec(),
            qg: x[layout.range(VarGroup::Qg)].to_vec(),
            tau: x[layout.range(VarGroup::Tau)].to_vec(),
            theta: x[layout.range(VarGroup::Theta)].to_vec(),
        }
    }

    /// Complex bus voltages V = Vm·e^{jΘ}.
    pub fn voltage(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    /// Complex generator injections Sg = Pg + jQg.
    pub fn sg(&self) -> Vec<Complex64> {
        self.pg
            .iter()
            .zip(&self.qg)
            .map(|(&p, &q)| Complex64::new(p, q))
            .collect()
    }

    /// Expand the adjustable tau/theta entries over the fixed baseline into
    /// full per-branch vectors.
    pub fn tap_state(&self, m: &InternalModel) -> TapState {
        let mut tau = m.tau0.clone();
        let mut theta = m.theta0.clone();
        for (a, &k) in m.adjustable.iter().enumerate() {
            tau[k] = self.tau[a];
            theta[k] = self.theta[a];
        }
        TapState { tau, theta }
    }
}

/// Sparse first-derivative blocks of a vector function w.r.t. each group.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub layout: Layout,
    pub n_out: usize,
    pub d_va: Csc<Complex64>,
    pub d_vm: Csc<Complex64>,
    pub d_pg: Csc<Complex64>,
    pub d_qg: Csc<Complex64>,
    pub d_tau: Csc<Complex64>,
    pub d_theta: Csc<Complex64>,
}

impl DerivativeBundle {
    pub fn group(&self, g: VarGroup) -> &Csc<Complex64> {
        match g {
            VarGroup::Va => &self.d_va,
            VarGroup::Vm => &self.d_vm,
            VarGroup::Pg => &self.d_pg,
            VarGroup::Qg => &self.d_qg,
            VarGroup::Tau => &self.d_tau,
            VarGroup::Theta => &self.d_theta,
        }
    }

    /// Row vector λᵀ·J over the stacked layout.
    pub fn contract(&self, lam: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(lam.len(), self.n_out);
        let mut out = Vec::with_capacity(self.layout.len());
        for g in GROUPS {
            out.extend(self.group(g).tr_mul_vec(lam));
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut d = DMatrix::from_element(self.n_out, self.layout.len(), Complex64::new(0.0, 0.0));
        for g in GROUPS {
            let off = self.layout.offset(g);
            for (r, c, v) in self.group(g).triplets() {
                d[(r, off + c)] += v;
            }
        }
        d
    }
}

/// The 6×6 grid of multiplier-contracted second-derivative blocks.
/// Pg/Qg rows and columns are identically zero.
#[derive(Debug, Clone)]
pub struct HessianBlocks {
    pub layout: Layout,
    blocks: Vec<Csc<Complex64>>,
}

impl HessianBlocks {
    pub fn zero(layout: Layout) -> HessianBlocks {
        let blocks = GROUPS
            .iter()
            .flat_map(|&a| {
                GROUPS
                    .iter()
                    .map(move |&b| Csc::zeros(layout.size(a), layout.size(b)))
            })
            .collect();
        HessianBlocks { layout, blocks }
    }

    pub fn get(&self, a: VarGroup, b: VarGroup) -> &Csc<Complex64> {
        &self.blocks[a.index() * 6 + b.index()]
    }

    pub fn set(&mut self, a: VarGroup, b: VarGroup, m: Csc<Complex64>) {
        assert_eq!(m.nrows(), self.layout.size(a));
        assert_eq!(m.ncols(), self.layout.size(b));
        self.blocks[a.index() * 6 + b.index()] = m;
    }

    /// Store `m` at (a, b) and its transpose at (b, a).
    pub fn set_pair(&mut self, a: VarGroup, b: VarGroup, m: Csc<Complex64>) {
        self.set(b, a, m.transpose());
        self.set(a, b, m);
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.layout.len();
        let mut d = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for a in GROUPS {
            for b in GROUPS {
                let (ra, cb) = (self.layout.offset(a), self.layout.offset(b));
                for (r, c, v) in self.get(a, b).triplets() {
                    d[(ra + r, cb + c)] += v;
                }
            }
        }
        d
    }

    /// Flatten the grid into one sparse matrix over the stacked layout.
    pub fn to_stacked(&self) -> Csc<Complex64> {
        let n = self.layout.len();
        let mut triplets = Vec::new();
        for a in GROUPS {
            for b in GROUPS {
                let (ra, cb) = (self.layout.offset(a), self.layout.offset(b));
                triplets.extend(self.get(a, b).triplets().map(|(r, c, v)| (ra + r, cb + c, v)));
            }
        }
        Csc::from_triplets(n, n, triplets)
    }

    /// Max |block(a,b) − block(b,a)ᵀ| over all group pairs.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in GROUPS {
            for b in GROUPS {
                let err = self
                    .get(a, b)
                    .max_abs_diff(&self.get(b, a).transpose(), |z| z.norm());
                worst = worst.max(err);
            }
        }
        worst
    }
}
