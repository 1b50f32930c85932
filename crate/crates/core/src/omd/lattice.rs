//! Finite set of periodic images `nu` around the simulated cell.

use nalgebra::{Matrix3, Vector3};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageLattice {
    extent: usize,
    basis: Matrix3<f64>,
    offsets: Vec<[i32; 3]>,
}

impl ImageLattice {
    /// Unit-cube lattice, all `nu` in `{-extent..extent}^3 \ {0}`.
    pub fn new(extent: usize) -> Self {
        Self::with_basis(extent, Matrix3::identity())
    }

    /// Lattice vectors are `basis * n` for integer `n`.
    pub fn with_basis(extent: usize, basis: Matrix3<f64>) -> Self {
        let e = extent as i32;
        let mut offsets = Vec::new();
        for a in -e..=e {
            for b in -e..=e {
                for c in -e..=e {
                    if (a, b, c) != (0, 0, 0) {
                        offsets.push([a, b, c]);
                    }
                }
            }
        }
        Self {
            extent,
            basis,
            offsets,
        }
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn basis(&self) -> &Matrix3<f64> {
        &self.basis
    }

    /// Nonzero integer offsets.
    pub fn offsets(&self) -> &[[i32; 3]] {
        &self.offsets
    }

    /// Reference-configuration vector of an integer offset.
    pub fn vector(&self, n: [i32; 3]) -> Vector3<f64> {
        self.basis * Vector3::new(n[0] as f64, n[1] as f64, n[2] as f64)
    }
}
