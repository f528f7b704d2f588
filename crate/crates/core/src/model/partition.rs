use std::ops::Range;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::Scalar;

/// Ordered subsystem state and output dimensions with their global index ranges.
///
/// Subsystems are indexed from zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePartition {
    dims: Vec<usize>,
    out_dims: Vec<usize>,
    offsets: Vec<usize>,
    out_offsets: Vec<usize>,
}

fn prefix(dims: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    let mut out = Vec::with_capacity(dims.len() + 1);
    out.push(0);
    for d in dims {
        acc += d;
        out.push(acc);
    }
    out
}

impl StatePartition {
    pub fn new(dims: Vec<usize>, out_dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Partition("no subsystems".into()));
        }
        if dims.len() != out_dims.len() {
            return Err(Error::Partition(format!(
                "{} state dimensions but {} output dimensions",
                dims.len(),
                out_dims.len()
            )));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Partition(format!("subsystem {i} has zero state dimension")));
        }
        let offsets = prefix(&dims);
        let out_offsets = prefix(&out_dims);
        Ok(Self { dims, out_dims, offsets, out_offsets })
    }

    pub fn n_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn state_dim(&self) -> usize {
        self.offsets[self.dims.len()]
    }

    pub fn output_dim(&self) -> usize {
        self.out_offsets[self.dims.len()]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn out_dim(&self, i: usize) -> usize {
        self.out_dims[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn out_offset(&self, i: usize) -> usize {
        self.out_offsets[i]
    }

    /// Global state index range of subsystem `i`.
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Global output index range of subsystem `i`.
    pub fn out_range(&self, i: usize) -> Range<usize> {
        self.out_offsets[i]..self.out_offsets[i + 1]
    }

    /// Subsystem owning global state coordinate `j`.
    pub fn owner(&self, j: usize) -> Option<usize> {
        (0..self.dims.len()).find(|&i| self.range(i).contains(&j))
    }

    pub fn split<T: Scalar>(&self, x: &DVector<T>) -> Vec<DVector<T>> {
        (0..self.n_subsystems())
            .map(|i| x.rows(self.offsets[i], self.dims[i]).into_owned())
            .collect()
    }

    pub fn local<T: Scalar>(&self, x: &DVector<T>, i: usize) -> DVector<T> {
        x.rows(self.offsets[i], self.dims[i]).into_owned()
    }

    pub fn check_state<T: Scalar>(&self, x: &DVector<T>, what: &str) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "{what} has length {} but the partition has {} states",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    pub fn check_output<T: Scalar>(&self, y: &DVector<T>, what: &str) -> Result<()> {
        if y.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "{what} has length {} but the partition has {} outputs",
                y.len(),
                self.output_dim()
            )));
        }
        Ok(())
    }
}

/// Builds a partition from per-subsystem state and output dimensions.
pub fn make_partition(dims: &[usize], out_dims: &[usize]) -> Result<StatePartition> {
    StatePartition::new(dims.to_vec(), out_dims.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_block_offsets() {
        let p = make_partition(&[2, 2], &[1, 1]).unwrap();
        assert_eq!(p.range(0), 0..2);
        assert_eq!(p.range(1), 2..4);
        assert_eq!(p.out_range(1), 1..2);
        assert_eq!((p.state_dim(), p.output_dim()), (4, 2));
    }

    #[test]
    fn single_block() {
        let p = make_partition(&[4], &[2]).unwrap();
        assert_eq!(p.n_subsystems(), 1);
        assert_eq!(p.range(0), 0..4);
    }

    #[test]
    fn four_blocks() {
        let p = make_partition(&[2, 2, 2, 2], &[1, 1, 1, 1]).unwrap();
        assert_eq!(p.range(3), 6..8);
        assert_eq!(p.output_dim(), 4);
        assert_eq!(p.owner(5), Some(2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_partition(&[], &[]).is_err());
        assert!(make_partition(&[2, 0], &[1, 1]).is_err());
        assert!(make_partition(&[2, 2], &[1]).is_err());
        assert!(make_partition(&[2, 2], &[0, 1]).is_ok());
    }
}
