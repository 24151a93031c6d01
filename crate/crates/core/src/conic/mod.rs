//! Solver-neutral conic programs.
//!
//! A [`ConicProgram`] maximizes a linear objective over affine equality and
//! inequality rows, second-order cones and real symmetric PSD blocks, with an
//! optional set of binary variables. Complex Hermitian matrix variables are
//! expressed through [`HermExpr`] and turned into real blocks by
//! [`herm_embed`] when the program is assembled.

mod bnb;
mod clarabel_backend;
mod dump;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{ConicScalar, Scalar};

pub use bnb::solve_mip;
pub use clarabel_backend::solve_conic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("program has binary variables; use solve_mip")]
    HasBinaries,
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("branch-and-bound node limit {0} exceeded")]
    NodeLimit(usize),
    #[error("backend setup failed: {0}")]
    Backend(String),
}

/// Sparse affine expression `Σ c_k x_k + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine<T> {
    pub terms: Vec<(usize, T)>,
    pub constant: T,
}

impl<T: Scalar> Affine<T> {
    pub fn zero() -> Self {
        Affine {
            terms: Vec::new(),
            constant: T::zero(),
        }
    }

    pub fn constant(c: T) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Affine {
            terms: vec![(i, T::one())],
            constant: T::zero(),
        }
    }

    pub fn term(i: usize, c: T) -> Self {
        Affine {
            terms: vec![(i, c)],
            constant: T::zero(),
        }
    }

    pub fn add_term(&mut self, i: usize, c: T) -> &mut Self {
        self.terms.push((i, c));
        self
    }

    pub fn add(&mut self, other: &Affine<T>, scale: T) -> &mut Self {
        self.terms
            .extend(other.terms.iter().map(|&(i, c)| (i, c * scale)));
        self.constant = self.constant + other.constant * scale;
        self
    }

    pub fn scaled(&self, s: T) -> Affine<T> {
        let mut out = Affine::zero();
        out.add(self, s);
        out
    }

    /// Merges repeated indices and drops exact zeros.
    pub fn compact(&self) -> Affine<T> {
        let mut acc: BTreeMap<usize, T> = BTreeMap::new();
        for &(i, c) in &self.terms {
            let e = acc.entry(i).or_insert(T::zero());
            *e = *e + c;
        }
        Affine {
            terms: acc.into_iter().filter(|(_, c)| *c != T::zero()).collect(),
            constant: self.constant,
        }
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == T::zero())
    }
}

/// Square symmetric block of affine entries, stored as the upper triangle
/// in column-major order: (0,0), (0,1), (1,1), (0,2), ...
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock<T> {
    pub dim: usize,
    pub upper: Vec<Affine<T>>,
}

impl<T: Scalar> PsdBlock<T> {
    pub fn new(dim: usize) -> Self {
        PsdBlock {
            dim,
            upper: vec![Affine::zero(); dim * (dim + 1) / 2],
        }
    }

    pub fn slot(i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        j * (j + 1) / 2 + i
    }

    pub fn entry(&self, i: usize, j: usize) -> &Affine<T> {
        &self.upper[Self::slot(i, j)]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Affine<T> {
        &mut self.upper[Self::slot(i, j)]
    }

    pub fn eval(&self, x: &[T]) -> DMatrix<T> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(x))
    }
}

/// Complex Hermitian matrix whose entries are affine in the decision vector.
/// Only the upper triangle is stored; `im` of the diagonal is identically 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HermExpr<T> {
    pub dim: usize,
    re: Vec<Affine<T>>,
    im: Vec<Affine<T>>,
}

impl<T: Scalar> HermExpr<T> {
    pub fn zeros(dim: usize) -> Self {
        let len = dim * (dim + 1) / 2;
        HermExpr {
            dim,
            re: vec![Affine::zero(); len],
            im: vec![Affine::zero(); len],
        }
    }

    /// Entry (i, j) as a (re, im) pair, conjugating below the diagonal.
    pub fn get(&self, i: usize, j: usize) -> (Affine<T>, Affine<T>) {
        let k = PsdBlock::<T>::slot(i, j);
        if i <= j {
            (self.re[k].clone(), self.im[k].clone())
        } else {
            (self.re[k].clone(), self.im[k].scaled(-T::one()))
        }
    }

    /// Sets entry (i, j) with `i <= j`; the lower triangle follows.
    pub fn set(&mut self, i: usize, j: usize, re: Affine<T>, im: Affine<T>) {
        assert!(i <= j, "set the upper triangle");
        let k = PsdBlock::<T>::slot(i, j);
        self.re[k] = re;
        self.im[k] = if i == j { Affine::zero() } else { im };
    }

    pub fn eval(&self, x: &[T]) -> DMatrix<Complex<T>> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            let (r, m) = self.get(i, j);
            Complex::new(r.eval(x), m.eval(x))
        })
    }
}

/// Real symmetric embedding `[[Re M, -Im M], [Im M, Re M]]` of a Hermitian
/// expression. The block is PSD exactly when `M` is.
pub fn herm_embed<T: Scalar>(m: &HermExpr<T>) -> PsdBlock<T> {
    let n = m.dim;
    let mut b = PsdBlock::new(2 * n);
    for j in 0..2 * n {
        for i in 0..=j {
            let e = match (i < n, j < n) {
                (true, true) => m.get(i, j).0,
                (false, false) => m.get(i - n, j - n).0,
                // top-right block holds -Im(M)
                (true, false) => m.get(i, j - n).1.scaled(-T::one()),
                (false, true) => unreachable!("i <= j"),
            };
            *b.entry_mut(i, j) = e;
        }
    }
    b
}

/// Numeric counterpart of [`herm_embed`].
pub fn herm_embed_value<T: Scalar>(m: &DMatrix<Complex<T>>) -> DMatrix<T> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Maximization program over `x ∈ R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram<T> {
    pub names: Vec<String>,
    pub objective: Affine<T>,
    /// `expr == 0`.
    pub eqs: Vec<Affine<T>>,
    /// `expr >= 0`.
    pub nonneg: Vec<Affine<T>>,
    /// `e_0 >= ||(e_1, ..., e_k)||`.
    pub socs: Vec<Vec<Affine<T>>>,
    pub psd: Vec<PsdBlock<T>>,
    pub binaries: Vec<usize>,
}

impl<T: Scalar> Default for ConicProgram<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ConicProgram<T> {
    pub fn new() -> Self {
        ConicProgram {
            names: Vec::new(),
            objective: Affine::zero(),
            eqs: Vec::new(),
            nonneg: Vec::new(),
            socs: Vec::new(),
            psd: Vec::new(),
            binaries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        let i = self.add_var(name);
        self.binaries.push(i);
        i
    }

    pub fn eq0(&mut self, e: Affine<T>) {
        self.eqs.push(e);
    }

    /// `lhs == rhs`.
    pub fn eq2(&mut self, lhs: &Affine<T>, rhs: &Affine<T>) {
        let mut e = lhs.clone();
        e.add(rhs, -T::one());
        self.eqs.push(e);
    }

    pub fn ge0(&mut self, e: Affine<T>) {
        self.nonneg.push(e);
    }

    /// `lhs <= rhs`.
    pub fn le(&mut self, lhs: &Affine<T>, rhs: &Affine<T>) {
        let mut e = rhs.clone();
        e.add(lhs, -T::one());
        self.nonneg.push(e);
    }

    pub fn bounds(&mut self, i: usize, lo: T, hi: T) {
        self.nonneg.push(Affine {
            terms: vec![(i, T::one())],
            constant: -lo,
        });
        self.nonneg.push(Affine {
            terms: vec![(i, -T::one())],
            constant: hi,
        });
    }

    pub fn fix(&mut self, i: usize, value: T) {
        self.eqs.push(Affine {
            terms: vec![(i, T::one())],
            constant: -value,
        });
    }

    pub fn soc(&mut self, cone: Vec<Affine<T>>) {
        self.socs.push(cone);
    }

    pub fn psd_block(&mut self, b: PsdBlock<T>) -> usize {
        self.psd.push(b);
        self.psd.len() - 1
    }

    pub fn hermitian_psd(&mut self, m: &HermExpr<T>) -> usize {
        self.psd_block(herm_embed(m))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Checks index ranges and cone shapes.
    pub fn check(&self) -> Result<(), ConicError> {
        let n = self.len();
        let bad = |e: &Affine<T>| e.terms.iter().any(|&(i, c)| i >= n || !c.is_finite()) || !e.constant.is_finite();
        let rows = self
            .eqs
            .iter()
            .chain(&self.nonneg)
            .chain(self.socs.iter().flatten())
            .chain(self.psd.iter().flat_map(|b| b.upper.iter()))
            .chain(std::iter::once(&self.objective));
        if rows.into_iter().any(bad) {
            return Err(ConicError::Malformed("index out of range or non-finite coefficient".into()));
        }
        if self.socs.iter().any(|c| c.is_empty()) {
            return Err(ConicError::Malformed("empty second-order cone".into()));
        }
        if self.psd.iter().any(|b| b.dim == 0 || b.upper.len() != b.dim * (b.dim + 1) / 2) {
            return Err(ConicError::Malformed("PSD block is not square".into()));
        }
        if self.binaries.iter().any(|&i| i >= n) {
            return Err(ConicError::Malformed("binary index out of range".into()));
        }
        Ok(())
    }

    /// Documented plain-text form for cross-checking with other solvers.
    pub fn to_text(&self) -> String {
        dump::write(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct SolveStats {
    pub iterations: u32,
    pub solve_time: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// The backend stopped at its relaxed tolerances.
    pub reduced_accuracy: bool,
    /// Branch-and-bound nodes, zero for continuous solves.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution<T> {
    pub status: SolveStatus,
    /// Present iff the status is optimal.
    pub x: Option<Vec<T>>,
    /// Maximization objective.
    pub objective: Option<T>,
    pub stats: SolveStats,
}

impl<T: Scalar> ConicSolution<T> {
    pub(crate) fn failed(status: SolveStatus, stats: SolveStats) -> Self {
        ConicSolution {
            status,
            x: None,
            objective: None,
            stats,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, i: usize) -> Option<T> {
        self.x.as_ref().map(|x| x[i])
    }

    pub fn eval(&self, e: &Affine<T>) -> Option<T> {
        self.x.as_ref().map(|x| e.eval(x))
    }

    /// Value of PSD block `k` of `p`.
    pub fn block(&self, p: &ConicProgram<T>, k: usize) -> Option<DMatrix<T>> {
        self.x.as_ref().map(|x| p.psd[k].eval(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings<T> {
    /// Feasibility and optimality tolerance.
    pub tol: T,
    pub max_iter: u32,
    /// Branch-and-bound integrality tolerance.
    pub int_tol: T,
    pub node_limit: usize,
    /// Single-threaded backend and fixed node order.
    pub deterministic: bool,
    pub verbose: bool,
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            tol: T::lit(1e-8),
            max_iter: 200,
            int_tol: T::lit(1e-6),
            node_limit: 20_000,
            deterministic: true,
            verbose: false,
        }
    }
}

impl<T: Scalar> SolverSettings<T> {
    pub fn validate(&self) -> Result<(), ConicError> {
        if !(self.tol > T::zero()) || !(self.int_tol > T::zero()) {
            return Err(ConicError::Malformed("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Anything able to solve a continuous conic program.
pub trait ConicBackend<T: ConicScalar> {
    fn solve(&self, p: &ConicProgram<T>, s: &SolverSettings<T>) -> Result<ConicSolution<T>, ConicError>;
}

/// The bundled interior-point backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct Clarabel;

impl<T: ConicScalar> ConicBackend<T> for Clarabel {
    fn solve(&self, p: &ConicProgram<T>, s: &SolverSettings<T>) -> Result<ConicSolution<T>, ConicError> {
        solve_conic(p, s)
    }
}
