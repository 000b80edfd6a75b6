//! Classical 2-local Ising problems `Σ J_ij σ_zⁱσ_zʲ + Σ h_i σ_zⁱ`.
//!
//! Qubit 0 is the most significant bit of the basis index, so `|0⟩⊗|1⟩` is
//! basis vector 1. Spin value is `+1` for bit 0 and `−1` for bit 1.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::DEFAULT_MAX_DIM;

/// Largest qubit count whose Hilbert space fits the default dimension cap.
pub const MAX_QUBITS: usize = DEFAULT_MAX_DIM.trailing_zeros() as usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IsingSpec", into = "IsingSpec")]
pub struct IsingInstance {
    n: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IsingSpec {
    n: usize,
    #[serde(default)]
    couplings: Vec<(usize, usize, f64)>,
    #[serde(default)]
    fields: Vec<(usize, f64)>,
}

impl TryFrom<IsingSpec> for IsingInstance {
    type Error = Error;

    fn try_from(s: IsingSpec) -> Result<Self> {
        IsingInstance::new(s.n, s.couplings, s.fields)
    }
}

impl From<IsingInstance> for IsingSpec {
    fn from(i: IsingInstance) -> Self {
        IsingSpec { n: i.n, couplings: i.couplings, fields: i.fields }
    }
}

impl IsingInstance {
    pub fn new(n: usize, couplings: Vec<(usize, usize, f64)>, fields: Vec<(usize, f64)>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::invalid(format!("qubit count {n} outside [1, {MAX_QUBITS}]")));
        }
        let mut pairs = BTreeSet::new();
        for &(i, j, coupling) in &couplings {
            if !(i < j && j < n) {
                return Err(Error::invalid(format!(
                    "coupling ({i}, {j}) must satisfy 0 <= i < j < n = {n}"
                )));
            }
            if !pairs.insert((i, j)) {
                return Err(Error::invalid(format!("duplicate coupling ({i}, {j})")));
            }
            if !coupling.is_finite() {
                return Err(Error::invalid(format!("coupling ({i}, {j}) is not finite")));
            }
        }
        let mut sites = BTreeSet::new();
        for &(i, h) in &fields {
            if i >= n {
                return Err(Error::invalid(format!("field index {i} out of range for n = {n}")));
            }
            if !sites.insert(i) {
                return Err(Error::invalid(format!("duplicate field on site {i}")));
            }
            if !h.is_finite() {
                return Err(Error::invalid(format!("field on site {i} is not finite")));
            }
        }
        Ok(Self { n, couplings, fields })
    }

    /// Open chain with uniform coupling `j` on neighbouring sites.
    pub fn chain(n: usize, j: f64) -> Result<Self> {
        let couplings = (0..n.saturating_sub(1)).map(|i| (i, i + 1, j)).collect();
        Self::new(n, couplings, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    pub fn fields(&self) -> &[(usize, f64)] {
        &self.fields
    }

    /// Spin `s_i ∈ {+1, −1}` of site `i` in basis state `index`.
    pub fn spin(&self, index: usize, site: usize) -> f64 {
        if (index >> (self.n - 1 - site)) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Classical energy of the configuration encoded by `index`.
    pub fn energy(&self, index: usize) -> f64 {
        let pair: f64 = self
            .couplings
            .iter()
            .map(|&(i, j, c)| c * self.spin(index, i) * self.spin(index, j))
            .sum();
        let local: f64 = self.fields.iter().map(|&(i, h)| h * self.spin(index, i)).sum();
        pair + local
    }
}
