use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::StatePartition;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, is_spd};
use crate::Scalar;

/// One linear subsystem: `x⁺ = A_ii x + Σ A_il xˡ + w`, `y = C_ii x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSubsystem<T: Scalar> {
    pub index: usize,
    pub a_ii: DMatrix<T>,
    /// Declared coupling blocks `A_il`, keyed by neighbor index.
    pub couplings: BTreeMap<usize, DMatrix<T>>,
    pub c_ii: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

impl<T: Scalar> LinearSubsystem<T> {
    pub fn new(index: usize, a_ii: DMatrix<T>, c_ii: DMatrix<T>, q: DMatrix<T>, r: DMatrix<T>) -> Result<Self> {
        let n = a_ii.nrows();
        if a_ii.ncols() != n || n == 0 {
            return Err(Error::Dimension(format!("A_ii of subsystem {index} must be square and non-empty")));
        }
        if c_ii.ncols() != n {
            return Err(Error::Dimension(format!("C_ii of subsystem {index} has {} columns, expected {n}", c_ii.ncols())));
        }
        if q.shape() != (n, n) || !is_spd(&q) {
            return Err(Error::NotSpd { index, what: "Q_i" });
        }
        let m = c_ii.nrows();
        if r.shape() != (m, m) || !is_spd(&r) {
            return Err(Error::NotSpd { index, what: "R_i" });
        }
        Ok(Self { index, a_ii, couplings: BTreeMap::new(), c_ii, q, r })
    }

    pub fn with_coupling(mut self, l: usize, a_il: DMatrix<T>) -> Self {
        self.couplings.insert(l, a_il);
        self
    }

    pub fn dim(&self) -> usize {
        self.a_ii.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.c_ii.nrows()
    }
}

/// Global linear model `x⁺ = A x + w`, `y = C x + v` assembled from subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Scalar> {
    partition: StatePartition,
    subsystems: Vec<LinearSubsystem<T>>,
    a: DMatrix<T>,
    c: DMatrix<T>,
    q: DMatrix<T>,
    r: DMatrix<T>,
    neighbors: Vec<Vec<usize>>,
    dependents: Vec<Vec<usize>>,
}

/// Assembles the global model from subsystems covering every partition index exactly once.
pub fn assemble_global<T: Scalar>(subs: Vec<LinearSubsystem<T>>, partition: StatePartition) -> Result<LinearModel<T>> {
    LinearModel::assemble(subs, partition)
}

impl<T: Scalar> LinearModel<T> {
    pub fn assemble(mut subs: Vec<LinearSubsystem<T>>, partition: StatePartition) -> Result<Self> {
        let n = partition.n_subsystems();
        let mut seen = vec![false; n];
        for s in &subs {
            if s.index >= n || seen[s.index] {
                return Err(Error::SubsystemIndex(s.index));
            }
            seen[s.index] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("subsystem {i} is missing")));
        }
        subs.sort_by_key(|s| s.index);

        let (nx, ny) = (partition.state_dim(), partition.output_dim());
        let mut a = DMatrix::zeros(nx, nx);
        let mut c = DMatrix::zeros(ny, nx);
        let mut neighbors = vec![Vec::new(); n];
        let mut dependents = vec![Vec::new(); n];
        for s in &subs {
            let i = s.index;
            let (di, mi) = (partition.dim(i), partition.out_dim(i));
            if s.dim() != di || s.out_dim() != mi {
                return Err(Error::Dimension(format!(
                    "subsystem {i} is {}x{} (states x outputs) but the partition declares {di}x{mi}",
                    s.dim(),
                    s.out_dim()
                )));
            }
            a.view_mut((partition.offset(i), partition.offset(i)), (di, di)).copy_from(&s.a_ii);
            c.view_mut((partition.out_offset(i), partition.offset(i)), (mi, di)).copy_from(&s.c_ii);
            for (&l, a_il) in &s.couplings {
                if l >= n || l == i {
                    return Err(Error::SubsystemIndex(l));
                }
                if a_il.shape() != (di, partition.dim(l)) {
                    return Err(Error::Dimension(format!(
                        "A_{i}{l} is {:?}, expected ({di}, {})",
                        a_il.shape(),
                        partition.dim(l)
                    )));
                }
                a.view_mut((partition.offset(i), partition.offset(l)), (di, partition.dim(l))).copy_from(a_il);
                neighbors[i].push(l);
                dependents[l].push(i);
            }
        }
        let q = block_diag(&subs.iter().map(|s| s.q.clone()).collect::<Vec<_>>());
        let r = block_diag(&subs.iter().map(|s| s.r.clone()).collect::<Vec<_>>());
        Ok(Self { partition, subsystems: subs, a, c, q, r, neighbors, dependents })
    }

    /// Splits dense global matrices into subsystems, declaring every nonzero cross block.
    ///
    /// Rejects `C` with nonzero off-partition blocks.
    pub fn from_dense(
        partition: StatePartition,
        a: &DMatrix<T>,
        c: &DMatrix<T>,
        q_blocks: Vec<DMatrix<T>>,
        r_blocks: Vec<DMatrix<T>>,
    ) -> Result<Self> {
        let (nx, ny, n) = (partition.state_dim(), partition.output_dim(), partition.n_subsystems());
        if a.shape() != (nx, nx) || c.shape() != (ny, nx) {
            return Err(Error::Dimension(format!("A is {:?} and C is {:?} for a {nx}-state, {ny}-output partition", a.shape(), c.shape())));
        }
        if q_blocks.len() != n || r_blocks.len() != n {
            return Err(Error::Dimension("one Q_i and one R_i per subsystem required".into()));
        }
        for i in 0..n {
            for l in 0..n {
                if i != l {
                    let blk = c.view((partition.out_offset(i), partition.offset(l)), (partition.out_dim(i), partition.dim(l)));
                    if blk.iter().any(|v| *v != T::zero()) {
                        return Err(Error::OutputCoupling { row: i, col: l });
                    }
                }
            }
        }
        let mut subs = Vec::with_capacity(n);
        for (i, (q, r)) in q_blocks.into_iter().zip(r_blocks).enumerate() {
            let (oi, di) = (partition.offset(i), partition.dim(i));
            let a_ii = a.view((oi, oi), (di, di)).into_owned();
            let c_ii = c.view((partition.out_offset(i), oi), (partition.out_dim(i), di)).into_owned();
            let mut s = LinearSubsystem::new(i, a_ii, c_ii, q, r)?;
            for l in (0..n).filter(|&l| l != i) {
                let blk = a.view((oi, partition.offset(l)), (di, partition.dim(l))).into_owned();
                if blk.iter().any(|v| *v != T::zero()) {
                    s = s.with_coupling(l, blk);
                }
            }
            subs.push(s);
        }
        Self::assemble(subs, partition)
    }

    /// The same system treated as a single subsystem.
    pub fn centralized(&self) -> Result<Self> {
        let p = StatePartition::new(vec![self.partition.state_dim()], vec![self.partition.output_dim()])?;
        let sub = LinearSubsystem::new(0, self.a.clone(), self.c.clone(), self.q.clone(), self.r.clone())?;
        Self::assemble(vec![sub], p)
    }

    /// Copy with every declared coupling block multiplied by `factor`.
    pub fn with_coupling_scale(&self, factor: T) -> Result<Self> {
        let subs = self
            .subsystems
            .iter()
            .map(|s| {
                let mut s = s.clone();
                for blk in s.couplings.values_mut() {
                    *blk *= factor;
                }
                s
            })
            .collect();
        Self::assemble(subs, self.partition.clone())
    }

    pub fn partition(&self) -> &StatePartition {
        &self.partition
    }

    pub fn subsystems(&self) -> &[LinearSubsystem<T>] {
        &self.subsystems
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    pub fn q_block(&self, i: usize) -> &DMatrix<T> {
        &self.subsystems[i].q
    }

    /// Subsystems `l` with a declared `A_il`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Subsystems `l` whose dynamics declare a dependence on `i`.
    pub fn dependents(&self, i: usize) -> &[usize] {
        &self.dependents[i]
    }

    pub fn a_block(&self, i: usize, l: usize) -> DMatrix<T> {
        let p = &self.partition;
        self.a.view((p.offset(i), p.offset(l)), (p.dim(i), p.dim(l))).into_owned()
    }

    /// Stacked column block `A_[:,i]` (n_x × n_xi).
    pub fn a_cols(&self, i: usize) -> DMatrix<T> {
        self.a.columns(self.partition.offset(i), self.partition.dim(i)).into_owned()
    }

    /// Column block `C_[:,i]` (n_y × n_xi).
    pub fn c_cols(&self, i: usize) -> DMatrix<T> {
        self.c.columns(self.partition.offset(i), self.partition.dim(i)).into_owned()
    }

    pub fn f(&self, x: &DVector<T>) -> DVector<T> {
        &self.a * x
    }

    pub fn h(&self, x: &DVector<T>) -> DVector<T> {
        &self.c * x
    }
}
