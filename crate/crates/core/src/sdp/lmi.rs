use std::collections::BTreeMap;

use num_complex::Complex64;

use super::problem::{Constraint, Sense, SdpProblem};
use super::solver::{solve_with, SdpSolution, SdpStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::embed_complex;
use crate::types::{CMat, RMat, RVec, J};

/// Inequality-form program
///
/// ```text
///   max  c^T y   s.t.  F0_b + Σ_k y_k F_k,b ⪰ 0   for every block b
/// ```
///
/// over free real variables `y`. Complex blocks are given as Hermitian
/// matrices and embedded into real blocks of twice the size.
#[derive(Debug, Clone, Default)]
pub struct LmiProgram {
    n_vars: usize,
    objective: Vec<f64>,
    blocks: Vec<LmiBlockBuilder>,
}

/// One matrix inequality under construction.
#[derive(Debug, Clone)]
pub struct LmiBlockBuilder {
    dim: usize,
    complex: bool,
    constant: CMat,
    terms: BTreeMap<usize, CMat>,
}

impl LmiBlockBuilder {
    /// Real symmetric block of the given size.
    pub fn real(dim: usize) -> Self {
        Self {
            dim,
            complex: false,
            constant: CMat::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    /// Complex Hermitian block of the given size (embedded at `2·dim`).
    pub fn hermitian(dim: usize) -> Self {
        Self {
            complex: true,
            ..Self::real(dim)
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_constant(&mut self, m: &CMat) -> &mut Self {
        self.constant += m;
        self
    }

    pub fn add_constant_real(&mut self, m: &RMat) -> &mut Self {
        self.constant += m.map(|v| Complex64::new(v, 0.0));
        self
    }

    /// Adds `coeff` to the `(i, j)` entry of the constant and its mirror.
    pub fn add_constant_entry(&mut self, i: usize, j: usize, coeff: Complex64) -> &mut Self {
        self.constant[(i, j)] += coeff;
        if i != j {
            self.constant[(j, i)] += coeff.conj();
        }
        self
    }

    pub fn add_term(&mut self, var: usize, m: &CMat) -> &mut Self {
        *self
            .terms
            .entry(var)
            .or_insert_with(|| CMat::zeros(self.dim, self.dim)) += m;
        self
    }

    pub fn add_term_real(&mut self, var: usize, m: &RMat) -> &mut Self {
        self.add_term(var, &m.map(|v| Complex64::new(v, 0.0)))
    }

    /// Adds `y_var · coeff` to entry `(i, j)` and its Hermitian mirror.
    pub fn add_entry(&mut self, var: usize, i: usize, j: usize, coeff: Complex64) -> &mut Self {
        let n = self.dim;
        let m = self.terms.entry(var).or_insert_with(|| CMat::zeros(n, n));
        m[(i, j)] += coeff;
        if i != j {
            m[(j, i)] += coeff.conj();
        }
        self
    }

    fn embed(&self, m: &CMat) -> Result<RMat> {
        if self.complex {
            Ok(embed_complex(m))
        } else {
            if m.iter().any(|z| z.im != 0.0) {
                return Err(Error::Contract(
                    "real LMI block received a complex coefficient".into(),
                ));
            }
            Ok(m.map(|z| z.re))
        }
    }

    fn embedded_dim(&self) -> usize {
        if self.complex {
            2 * self.dim
        } else {
            self.dim
        }
    }
}

/// Complex Hermitian `n×n` matrix variable expressed in a real basis.
///
/// Diagonal entries are either free variables or fixed to a constant; each
/// strictly upper entry contributes a real and an imaginary variable.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianVar {
    n: usize,
    fixed_diagonal: Option<f64>,
    diag: Vec<usize>,
    /// `(i, j, re_var, im_var)` for `i < j`.
    off: Vec<(usize, usize, usize, usize)>,
}

impl HermitianVar {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Calls `f(var, E)` for every basis matrix and returns the fixed part
    /// `Σ d E_ii` (zero when the diagonal is free).
    fn for_each_basis(&self, mut f: impl FnMut(usize, &CMat)) -> CMat {
        let n = self.n;
        let mut e = CMat::zeros(n, n);
        for (i, &v) in self.diag.iter().enumerate() {
            e[(i, i)] = Complex64::new(1.0, 0.0);
            f(v, &e);
            e[(i, i)] = Complex64::new(0.0, 0.0);
        }
        for &(i, j, re, im) in &self.off {
            e[(i, j)] = Complex64::new(1.0, 0.0);
            e[(j, i)] = Complex64::new(1.0, 0.0);
            f(re, &e);
            e[(i, j)] = J;
            e[(j, i)] = -J;
            f(im, &e);
            e[(i, j)] = Complex64::new(0.0, 0.0);
            e[(j, i)] = Complex64::new(0.0, 0.0);
        }
        match self.fixed_diagonal {
            Some(d) => CMat::identity(n, n) * Complex64::new(d, 0.0),
            None => CMat::zeros(n, n),
        }
    }

    /// Adds `map(X)` to `block` for a real-linear map `map` from Hermitian
    /// `n×n` matrices into the block's matrix space.
    pub fn add_linear(&self, block: &mut LmiBlockBuilder, map: impl Fn(&CMat) -> CMat) {
        let fixed = self.for_each_basis(|v, e| {
            let m = map(e);
            block.add_term(v, &m);
        });
        if self.fixed_diagonal.is_some() {
            block.add_constant(&map(&fixed));
        }
    }

    /// Adds `map(X)` to the objective for a real-linear functional `map`.
    /// Returns the constant contributed by a fixed diagonal.
    pub fn add_objective(&self, program: &mut LmiProgram, map: impl Fn(&CMat) -> f64) -> f64 {
        let fixed = self.for_each_basis(|v, e| program.objective[v] += map(e));
        if self.fixed_diagonal.is_some() {
            map(&fixed)
        } else {
            0.0
        }
    }

    /// Reconstructs the matrix from a solution vector.
    pub fn value(&self, y: &RVec) -> CMat {
        let n = self.n;
        let mut x = match self.fixed_diagonal {
            Some(d) => CMat::identity(n, n) * Complex64::new(d, 0.0),
            None => CMat::zeros(n, n),
        };
        for (i, &v) in self.diag.iter().enumerate() {
            x[(i, i)] = Complex64::new(y[v], 0.0);
        }
        for &(i, j, re, im) in &self.off {
            let z = Complex64::new(y[re], y[im]);
            x[(i, j)] = z;
            x[(j, i)] = z.conj();
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    /// Decision variables.
    pub y: RVec,
    /// `c^T y`.
    pub objective: f64,
    pub status: SdpStatus,
    /// Underlying standard-form solution; its `x` holds the block multipliers.
    pub sdp: SdpSolution,
}

impl LmiProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.n_vars
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// New free scalar variable.
    pub fn add_scalar(&mut self) -> usize {
        self.objective.push(0.0);
        self.n_vars += 1;
        self.n_vars - 1
    }

    /// New Hermitian matrix variable, optionally with its diagonal fixed.
    pub fn add_hermitian(&mut self, n: usize, fixed_diagonal: Option<f64>) -> HermitianVar {
        let diag = if fixed_diagonal.is_some() {
            Vec::new()
        } else {
            (0..n).map(|_| self.add_scalar()).collect()
        };
        let mut off = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let re = self.add_scalar();
                let im = self.add_scalar();
                off.push((i, j, re, im));
            }
        }
        HermitianVar {
            n,
            fixed_diagonal,
            diag,
            off,
        }
    }

    /// Adds `coeff · y_var` to the maximized objective.
    pub fn add_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] += coeff;
    }

    pub fn add_block(&mut self, block: LmiBlockBuilder) {
        self.blocks.push(block);
    }

    /// Standard-form equivalent: `C = F0`, `A_k = −F_k`, `b = c`, minimization.
    pub fn to_sdp(&self) -> Result<SdpProblem> {
        if self.blocks.is_empty() {
            return Err(Error::Contract("LMI program has no blocks".into()));
        }
        let dims: Vec<usize> = self.blocks.iter().map(|b| b.embedded_dim()).collect();
        let mut problem = SdpProblem::new(dims, Sense::Minimize);
        for (k, blk) in self.blocks.iter().enumerate() {
            problem.objective[k] = blk.embed(&blk.constant)?;
        }
        let mut constraints: Vec<Constraint> =
            self.objective.iter().map(|&c| Constraint::new(c)).collect();
        for (k, blk) in self.blocks.iter().enumerate() {
            for (&v, m) in &blk.terms {
                if v >= self.n_vars {
                    return Err(Error::Contract(format!("unknown LMI variable {v}")));
                }
                constraints[v].terms.push((k, -blk.embed(m)?));
            }
        }
        problem.constraints = constraints;
        Ok(problem)
    }

    pub fn solve(&self) -> Result<LmiSolution> {
        self.solve_with(&SolverSettings::default())
    }

    pub fn solve_with(&self, settings: &SolverSettings) -> Result<LmiSolution> {
        let problem = self.to_sdp()?;
        let sdp = solve_with(&problem, settings)?;
        let y = sdp.y.clone();
        let objective = self.objective.iter().zip(y.iter()).map(|(c, v)| c * v).sum();
        // Dual infeasibility of the standard form is primal infeasibility here.
        let status = match sdp.status {
            SdpStatus::Infeasible => SdpStatus::Unbounded,
            SdpStatus::Unbounded => SdpStatus::Infeasible,
            s => s,
        };
        Ok(LmiSolution {
            y,
            objective,
            status,
            sdp,
        })
    }
}
