use crate::error::{Error, Result};
use crate::types::RMat;

/// Optimization direction of the primal objective `⟨C, X⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sense {
    #[default]
    Minimize,
    Maximize,
}

/// `Σ_blocks ⟨A_k^(b), X^(b)⟩ = rhs`. Blocks not listed are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, RMat)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(rhs: f64) -> Self {
        Self {
            terms: Vec::new(),
            rhs,
        }
    }

    pub fn with_block(mut self, block: usize, matrix: RMat) -> Self {
        self.terms.push((block, matrix));
        self
    }
}

/// Standard-form SDP over a block-diagonal PSD cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    /// Cost matrix, one entry per block.
    pub objective: Vec<RMat>,
    pub constraints: Vec<Constraint>,
    pub sense: Sense,
}

impl SdpProblem {
    /// Empty problem with zero cost on the given blocks.
    pub fn new(block_dims: Vec<usize>, sense: Sense) -> Self {
        let objective = block_dims.iter().map(|&n| RMat::zeros(n, n)).collect();
        Self {
            block_dims,
            objective,
            constraints: Vec::new(),
            sense,
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Checks dimensions and symmetry (`1e−12` relative) of every matrix.
    pub fn validate(&self) -> Result<()> {
        if self.block_dims.is_empty() || self.block_dims.contains(&0) {
            return Err(Error::Contract("block dimensions must be positive".into()));
        }
        if self.objective.len() != self.block_dims.len() {
            return Err(Error::Contract(format!(
                "objective has {} blocks, cone has {}",
                self.objective.len(),
                self.block_dims.len()
            )));
        }
        for (b, c) in self.objective.iter().enumerate() {
            check_block(c, self.block_dims[b], "objective", b)?;
        }
        for (k, con) in self.constraints.iter().enumerate() {
            if !con.rhs.is_finite() {
                return Err(Error::Contract(format!("constraint {k} has non-finite rhs")));
            }
            for (b, a) in &con.terms {
                if *b >= self.block_dims.len() {
                    return Err(Error::Contract(format!(
                        "constraint {k} references block {b} of {}",
                        self.block_dims.len()
                    )));
                }
                check_block(a, self.block_dims[*b], "constraint", k)?;
            }
        }
        Ok(())
    }
}

fn check_block(m: &RMat, n: usize, what: &str, idx: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Contract(format!(
            "{what} {idx}: expected {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("{what} {idx}: non-finite entry")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(1e-300) {
        return Err(Error::Contract(format!("{what} {idx}: matrix is not symmetric")));
    }
    Ok(())
}
