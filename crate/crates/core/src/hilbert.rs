//! Composite qubit ⊗ multimode Fock space.
//!
//! Basis ordering: qubit index major (`|q_i q_j⟩` ∈ {00, 01, 10, 11} with the
//! first qubit most significant), then mode occupations in lexicographic order
//! with mode 0 most significant. σ_z|1⟩ = +|1⟩.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cz, Real, C};

/// Largest number of amplitudes a [`SpaceSpec`] may describe.
pub const AMPLITUDE_BUDGET: usize = 1 << 25;

/// Matrix entry type for sparse operators.
pub trait Element: Copy + Zero + One + Add<Output = Self> + Mul<Output = Self> + Neg<Output = Self> + AddAssign + PartialEq + Debug + Send + Sync {
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
}

macro_rules! real_element {
    ($t:ty) => {
        impl Element for $t {
            fn conj(self) -> Self {
                self
            }
            fn modulus(self) -> f64 {
                f64::from(self).abs()
            }
        }
    };
}
real_element!(f32);
real_element!(f64);

impl<T: Real> Element for C<T> {
    fn conj(self) -> Self {
        num_complex::Complex::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm().as_f64()
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<S> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<S>,
}

impl<S: Element> CsrMatrix<S> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed, zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, S)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<S> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}×{cols}");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self { rows, cols, indptr, indices, values }.pruned()
    }

    fn pruned(self) -> Self {
        let mut trip = Vec::with_capacity(self.values.len());
        let mut any_zero = false;
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] == S::zero() {
                    any_zero = true;
                } else {
                    trip.push((r, self.indices[k], self.values[k]));
                }
            }
        }
        if !any_zero {
            return self;
        }
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..self.rows {
            indptr[r + 1] += indptr[r];
        }
        Self { rows: self.rows, cols: self.cols, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![S::one(); n])
    }

    pub fn diagonal(diag: &[S]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterator over stored `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.rows).flat_map(move |r| (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k])))
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => S::zero(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut d = vec![vec![S::zero(); self.cols]; self.rows];
        for (r, c, v) in self.entries() {
            d[r][c] = v;
        }
        d
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.entries().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: S) -> Self {
        Self { values: self.values.iter().map(|&v| v * s).collect(), ..self.clone() }.pruned()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut t: Vec<_> = self.entries().collect();
        t.extend(other.entries());
        Self::from_triplets(self.rows, self.cols, t)
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut t = Vec::new();
        let mut acc: Vec<S> = vec![S::zero(); other.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.cols];
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let a = self.values[k];
                let mid = self.indices[k];
                for kk in other.indptr[mid]..other.indptr[mid + 1] {
                    let c = other.indices[kk];
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * other.values[kk];
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
                acc[c] = S::zero();
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.rows, other.cols, t)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.entries() {
            for (r2, c2, v2) in other.entries() {
                t.push((r1 * other.rows + r2, c1 * other.cols + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.rows * other.rows, self.cols * other.cols, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    /// `max |A − A†|`
    pub fn hermiticity_defect(&self) -> f64 {
        self.add(&self.adjoint().scale_neg()).max_abs()
    }

    fn scale_neg(&self) -> Self {
        Self { values: self.values.iter().map(|&v| -v).collect(), ..self.clone() }
    }

    pub(crate) fn row_entries(&self, r: usize) -> (&[usize], &[S]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }
}

impl<S: Element> CsrMatrix<S> {
    /// `A − B`
    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_neg())
    }

    /// `AB − BA`
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }
}

impl<T: Real> CsrMatrix<T> {
    /// `out += coef · A x` for a real matrix acting on a complex vector.
    #[inline]
    pub fn apply_add(&self, coef: C<T>, x: &[C<T>], out: &mut [C<T>]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.indptr[r]..self.indptr[r + 1];
            if span.is_empty() {
                continue;
            }
            let mut acc = cz::<T>();
            for k in span {
                let v = self.values[k];
                let xi = x[self.indices[k]];
                acc.re += v * xi.re;
                acc.im += v * xi.im;
            }
            *o += coef * acc;
        }
    }

    pub fn to_complex(&self) -> CsrMatrix<C<T>> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| C::new(v, T::zero())).collect(),
        }
    }
}

impl<T: Real> CsrMatrix<C<T>> {
    pub fn mul_vec(&self, x: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let (idx, vals) = self.row_entries(r);
                idx.iter().zip(vals).fold(cz(), |acc, (&c, &v)| acc + v * x[c])
            })
            .collect()
    }
}

/// Truncated lowering and raising operators on Fock states `0..=cutoff`.
pub fn ladder_operators<T: Real>(cutoff: usize) -> (CsrMatrix<T>, CsrMatrix<T>) {
    let dim = cutoff + 1;
    let lower = CsrMatrix::from_triplets(dim, dim, (1..dim).map(|n| (n - 1, n, T::from_usize_lossy(n).sqrt())).collect());
    let raise = lower.adjoint();
    (lower, raise)
}

pub fn number_operator<T: Real>(cutoff: usize) -> CsrMatrix<T> {
    CsrMatrix::diagonal(&(0..=cutoff).map(T::from_usize_lossy).collect::<Vec<_>>())
}

/// Unnormalized thermal weight `n̄ⁿ/(n̄+1)^{n+1}`.
pub fn thermal_weight<T: Real>(nbar: T, n: usize) -> T {
    if nbar == T::zero() {
        return if n == 0 { T::one() } else { T::zero() };
    }
    let q = nbar / (nbar + T::one());
    q.powi(n as i32) / (nbar + T::one())
}

/// Thermal occupation probabilities over Fock states `0..=cutoff`,
/// renormalized over the retained states.
pub fn thermal_weights<T: Real>(nbar: T, cutoff: usize) -> Result<Vec<T>> {
    if !(nbar >= T::zero()) {
        return Err(Error::InvalidParameter(format!("mean occupation {nbar} must be non-negative")));
    }
    let raw: Vec<T> = (0..=cutoff).map(|n| thermal_weight(nbar, n)).collect();
    let total: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// Thermal probability mass above `cutoff`: `(n̄/(n̄+1))^{cutoff+1}`.
pub fn thermal_tail<T: Real>(nbar: T, cutoff: usize) -> T {
    (nbar / (nbar + T::one())).powi(cutoff as i32 + 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub n_qubits: usize,
    /// Fock truncation `n_max` per retained mode (states `0..=n_max`).
    pub mode_cutoffs: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Qubit(usize),
    Mode(usize),
}

impl SpaceSpec {
    pub fn new(n_qubits: usize, mode_cutoffs: Vec<usize>) -> Result<Self> {
        let space = Self { n_qubits, mode_cutoffs };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_cutoffs.is_empty() {
            return Err(Error::InvalidParameter("at least one mode must be retained".into()));
        }
        if let Some(m) = self.mode_cutoffs.iter().position(|&c| c < 1) {
            return Err(Error::InvalidParameter(format!("cutoff of mode {m} must be at least 1")));
        }
        if self.n_qubits > 8 {
            return Err(Error::InvalidParameter("at most 8 simulated qubits".into()));
        }
        let dim = self
            .mode_cutoffs
            .iter()
            .try_fold(1usize << self.n_qubits, |acc, &c| acc.checked_mul(c + 1))
            .unwrap_or(usize::MAX);
        if dim > AMPLITUDE_BUDGET {
            return Err(Error::SpaceTooLarge { dim, budget: AMPLITUDE_BUDGET });
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.mode_cutoffs.len()
    }

    pub fn qubit_dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn motional_dim(&self) -> usize {
        self.mode_cutoffs.iter().map(|c| c + 1).product()
    }

    pub fn dim(&self) -> usize {
        self.qubit_dim() * self.motional_dim()
    }

    /// Dimension of every tensor factor in basis order.
    pub fn factor_dims(&self) -> Vec<usize> {
        std::iter::repeat(2).take(self.n_qubits).chain(self.mode_cutoffs.iter().map(|c| c + 1)).collect()
    }

    /// Motional basis index of a list of occupations.
    pub fn motional_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.n_modes() {
            return Err(Error::DimensionMismatch { expected: self.n_modes(), got: occupations.len() });
        }
        let mut idx = 0;
        for (m, (&n, &c)) in occupations.iter().zip(&self.mode_cutoffs).enumerate() {
            if n > c {
                return Err(Error::IndexOutOfRange { index: n, len: c + 1 }).map_err(|e| {
                    log::debug!("mode {m} occupation out of range");
                    e
                });
            }
            idx = idx * (c + 1) + n;
        }
        Ok(idx)
    }

    /// Occupations of a motional basis index.
    pub fn occupations(&self, mut idx: usize) -> Vec<usize> {
        let mut occ = vec![0; self.n_modes()];
        for (m, &c) in self.mode_cutoffs.iter().enumerate().rev() {
            occ[m] = idx % (c + 1);
            idx /= c + 1;
        }
        occ
    }

    /// Composite index of qubit basis state `qubits` (first qubit most
    /// significant) and motional index `motional`.
    pub fn index(&self, qubits: usize, motional: usize) -> usize {
        qubits * self.motional_dim() + motional
    }
}

/// Lifts a single-factor operator to the full composite space.
pub fn embed<S: Element>(op: &CsrMatrix<S>, target: Factor, space: &SpaceSpec) -> Result<CsrMatrix<S>> {
    let position = match target {
        Factor::Qubit(q) if q < space.n_qubits => q,
        Factor::Qubit(q) => return Err(Error::IndexOutOfRange { index: q, len: space.n_qubits }),
        Factor::Mode(m) if m < space.n_modes() => space.n_qubits + m,
        Factor::Mode(m) => return Err(Error::IndexOutOfRange { index: m, len: space.n_modes() }),
    };
    let dims = space.factor_dims();
    if op.rows() != dims[position] || op.cols() != dims[position] {
        return Err(Error::DimensionMismatch { expected: dims[position], got: op.rows() });
    }
    let left: usize = dims[..position].iter().product();
    let right: usize = dims[position + 1..].iter().product();
    Ok(CsrMatrix::identity(left).kron(op).kron(&CsrMatrix::identity(right)))
}

/// Pauli Z with σ_z|1⟩ = +|1⟩, i.e. diag(−1, +1) on (|0⟩, |1⟩).
pub fn sigma_z<T: Real>() -> CsrMatrix<T> {
    CsrMatrix::diagonal(&[-T::one(), T::one()])
}

pub fn sigma_x<T: Real>() -> CsrMatrix<T> {
    CsrMatrix::from_triplets(2, 2, vec![(0, 1, T::one()), (1, 0, T::one())])
}

/// Thermal product state over the retained modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble<T> {
    pub nbar: Vec<T>,
    pub cutoffs: Vec<usize>,
    /// Probability of every motional basis state, in motional basis order.
    pub weights: Vec<T>,
    /// Unnormalized thermal mass above each mode's cutoff.
    pub tails: Vec<T>,
}

impl<T: Real> ThermalEnsemble<T> {
    pub fn new(nbar: &[T], space: &SpaceSpec) -> Result<Self> {
        if nbar.len() != space.n_modes() {
            return Err(Error::DimensionMismatch { expected: space.n_modes(), got: nbar.len() });
        }
        let per_mode = nbar
            .iter()
            .zip(&space.mode_cutoffs)
            .map(|(&nb, &c)| thermal_weights(nb, c))
            .collect::<Result<Vec<_>>>()?;
        let weights = (0..space.motional_dim())
            .map(|idx| {
                space.occupations(idx).iter().zip(&per_mode).map(|(&n, w)| w[n]).fold(T::one(), |a, b| a * b)
            })
            .collect();
        let tails = nbar.iter().zip(&space.mode_cutoffs).map(|(&nb, &c)| thermal_tail(nb, c)).collect();
        Ok(Self { nbar: nbar.to_vec(), cutoffs: space.mode_cutoffs.clone(), weights, tails })
    }

    /// Same mean occupation in every mode.
    pub fn uniform(nbar: T, space: &SpaceSpec) -> Result<Self> {
        Self::new(&vec![nbar; space.n_modes()], space)
    }

    /// Fails when the discarded thermal mass of any mode exceeds `limit`.
    pub fn check_tail(&self, limit: f64) -> Result<()> {
        for (m, t) in self.tails.iter().enumerate() {
            if t.as_f64() > limit {
                return Err(Error::CutoffTooSmall { mode: m, tail: t.as_f64(), limit });
            }
        }
        Ok(())
    }

    /// Motional basis states with weight above `floor`, with their weights.
    pub fn support(&self, floor: T) -> Vec<(usize, T)> {
        self.weights.iter().copied().enumerate().filter(|&(_, w)| w > floor).collect()
    }

    /// Mean occupation of `mode` under the renormalized weights.
    pub fn mean_occupation(&self, mode: usize, space: &SpaceSpec) -> T {
        self.weights
            .iter()
            .enumerate()
            .map(|(idx, &w)| w * T::from_usize_lossy(space.occupations(idx)[mode]))
            .sum()
    }
}

/// Dense state on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    pub space: SpaceSpec,
    pub amplitudes: Vec<C<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn zeros(space: &SpaceSpec) -> Self {
        Self { space: space.clone(), amplitudes: vec![cz(); space.dim()] }
    }

    /// Product state `|qubits⟩ ⊗ |occupations⟩`.
    pub fn basis(space: &SpaceSpec, qubits: usize, occupations: &[usize]) -> Result<Self> {
        if qubits >= space.qubit_dim() {
            return Err(Error::IndexOutOfRange { index: qubits, len: space.qubit_dim() });
        }
        let mut s = Self::zeros(space);
        let idx = space.index(qubits, space.motional_index(occupations)?);
        s.amplitudes[idx] = C::new(T::one(), T::zero());
        Ok(s)
    }

    /// `Σ_q c_q |q⟩ ⊗ |motion⟩` from qubit amplitudes and a motional state.
    pub fn product(space: &SpaceSpec, qubit_amplitudes: &[C<T>], motion: &[C<T>]) -> Result<Self> {
        if qubit_amplitudes.len() != space.qubit_dim() {
            return Err(Error::DimensionMismatch { expected: space.qubit_dim(), got: qubit_amplitudes.len() });
        }
        if motion.len() != space.motional_dim() {
            return Err(Error::DimensionMismatch { expected: space.motional_dim(), got: motion.len() });
        }
        let mut amplitudes = Vec::with_capacity(space.dim());
        for &q in qubit_amplitudes {
            amplitudes.extend(motion.iter().map(|&m| q * m));
        }
        Ok(Self { space: space.clone(), amplitudes })
    }

    pub fn norm(&self) -> T {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > T::zero() {
            self.amplitudes.iter_mut().for_each(|a| *a = *a / n);
        }
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Self) -> C<T> {
        self.amplitudes.iter().zip(&other.amplitudes).fold(cz(), |acc, (a, b)| acc + a.conj() * b)
    }

    /// `⟨ψ|A|ψ⟩` for a real full-space operator.
    pub fn expectation(&self, op: &CsrMatrix<T>) -> C<T> {
        let mut out = vec![cz(); self.amplitudes.len()];
        op.apply_add(C::new(T::one(), T::zero()), &self.amplitudes, &mut out);
        self.amplitudes.iter().zip(&out).fold(cz(), |acc, (a, b)| acc + a.conj() * b)
    }
}

/// A family of real sparse operators stored on their common sparsity
/// pattern, so that `Σ_k c_k O_k` can be assembled once per time point and
/// applied to many columns.
#[derive(Clone, Debug)]
pub struct TermSet<T> {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    slots: Vec<Vec<(usize, T)>>,
}

impl<T: Real> TermSet<T> {
    pub fn new(operators: &[CsrMatrix<T>]) -> Result<Self> {
        let dim = operators.first().map_or(0, |o| o.rows());
        for op in operators {
            if op.rows() != dim || op.cols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: op.rows() });
            }
        }
        let union = operators
            .iter()
            .fold(CsrMatrix::<T>::zeros(dim, dim), |acc, op| {
                let ones = CsrMatrix::from_triplets(dim, dim, op.entries().map(|(r, c, _)| (r, c, T::one())).collect());
                acc.add(&ones)
            });
        let (indptr, indices) = (union.indptr, union.indices);
        let slots = operators
            .iter()
            .map(|op| {
                op.entries()
                    .map(|(r, c, v)| {
                        let span = indptr[r]..indptr[r + 1];
                        let k = indices[span.clone()].binary_search(&c).expect("entry inside union pattern");
                        (span.start + k, v)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { dim, indptr, indices, slots })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_terms(&self) -> usize {
        self.slots.len()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `values ← Σ_k coefs[k]·O_k` on the shared pattern.
    pub fn assemble(&self, coefs: &[C<T>], values: &mut [C<T>]) {
        values.iter_mut().for_each(|v| *v = cz());
        for (slots, &c) in self.slots.iter().zip(coefs) {
            if c.re == T::zero() && c.im == T::zero() {
                continue;
            }
            for &(pos, v) in slots {
                values[pos] += c * v;
            }
        }
    }

    /// `out ← M x` for every column of `x` (columns stored contiguously).
    pub fn apply(&self, values: &[C<T>], x: &[C<T>], out: &mut [C<T>]) {
        let n = self.dim;
        for (xc, oc) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for (r, o) in oc.iter_mut().enumerate() {
                let mut acc = cz::<T>();
                for k in self.indptr[r]..self.indptr[r + 1] {
                    acc += values[k] * xc[self.indices[k]];
                }
                *o = acc;
            }
        }
    }

    /// Assembled operator as a stand-alone sparse matrix.
    pub fn to_csr(&self, coefs: &[C<T>]) -> CsrMatrix<C<T>> {
        let mut values = vec![cz(); self.nnz()];
        self.assemble(coefs, &mut values);
        let trip = (0..self.dim)
            .flat_map(|r| (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, k)))
            .map(|(r, k)| (r, self.indices[k], values[k]))
            .collect();
        CsrMatrix::from_triplets(self.dim, self.dim, trip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_truncation() {
        let (a, ad) = ladder_operators::<f64>(1);
        assert_eq!(a.to_dense(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(ad.to_dense(), vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn ladder_elements_and_commutator() {
        let cutoff = 6;
        let (a, ad) = ladder_operators::<f64>(cutoff);
        for n in 1..=cutoff {
            assert!((a.get(n - 1, n) - (n as f64).sqrt()).abs() < 1e-15);
        }
        let comm = a.commutator(&ad);
        for n in 0..=cutoff {
            let expected = if n == cutoff { -(cutoff as f64) } else { 1.0 };
            assert!((comm.get(n, n) - expected).abs() < 1e-13, "n={n}");
        }
        assert_eq!(comm.nnz(), cutoff + 1);
        let num = ad.matmul(&a).sub(&number_operator(cutoff));
        assert!(num.max_abs() < 1e-13);
    }

    #[test]
    fn thermal_basics() {
        assert_eq!(thermal_weights(0.0f64, 5).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(thermal_weight(1.0f64, 0), 0.5);
        let w = thermal_weights(1.3f64, 20).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for n in 0..20 {
            let ratio = thermal_weight(1.3f64, n + 1) / thermal_weight(1.3f64, n);
            assert!((ratio - 1.3 / 2.3).abs() < 1e-14);
        }
        assert!(thermal_weights(-0.1f64, 3).is_err());
    }

    #[test]
    fn sigma_z_on_first_qubit() {
        let space = SpaceSpec::new(2, vec![1]).unwrap();
        let z = embed(&sigma_z::<f64>(), Factor::Qubit(0), &space).unwrap();
        let diag: Vec<f64> = (0..space.dim()).map(|i| z.get(i, i)).collect();
        // |00⟩,|01⟩ have σ_z = −1 on the first qubit; |10⟩,|11⟩ have +1
        assert_eq!(diag, vec![-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
        let z1 = embed(&sigma_z::<f64>(), Factor::Qubit(1), &space).unwrap();
        let diag1: Vec<f64> = (0..space.dim()).map(|i| z1.get(i, i)).collect();
        assert_eq!(diag1, vec![-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn embed_identity_and_errors() {
        let space = SpaceSpec::new(2, vec![2, 3]).unwrap();
        let id = embed(&CsrMatrix::<f64>::identity(4), Factor::Mode(1), &space).unwrap();
        assert_eq!(id, CsrMatrix::identity(space.dim()));
        assert!(embed(&CsrMatrix::<f64>::identity(4), Factor::Mode(2), &space).is_err());
        assert!(embed(&CsrMatrix::<f64>::identity(2), Factor::Qubit(2), &space).is_err());
        assert!(embed(&CsrMatrix::<f64>::identity(3), Factor::Mode(1), &space).is_err());
    }

    #[test]
    fn position_operator_sparsity_pattern() {
        let space = SpaceSpec::new(2, vec![2, 2]).unwrap();
        assert_eq!(space.dim(), 36);
        let (a, ad) = ladder_operators::<f64>(2);
        let x = embed(&a.add(&ad), Factor::Mode(0), &space).unwrap();
        for (r, c, _) in x.entries() {
            let (qr, mr) = (r / space.motional_dim(), r % space.motional_dim());
            let (qc, mc) = (c / space.motional_dim(), c % space.motional_dim());
            assert_eq!(qr, qc);
            let (or, oc) = (space.occupations(mr), space.occupations(mc));
            assert_eq!(or[1], oc[1]);
            assert_eq!((or[0] as i64 - oc[0] as i64).abs(), 1);
        }
        // 4 qubit states × 3 stretch states × 4 nonzeros of (a + a†) on three levels
        assert_eq!(x.nnz(), 4 * 3 * 4);
    }

    #[test]
    fn disjoint_factors_commute() {
        let space = SpaceSpec::new(2, vec![3, 2]).unwrap();
        let (a, ad) = ladder_operators::<f64>(3);
        let (b, bd) = ladder_operators::<f64>(2);
        let ops = [
            embed(&a.add(&ad), Factor::Mode(0), &space).unwrap(),
            embed(&b.matmul(&b).add(&bd), Factor::Mode(1), &space).unwrap(),
            embed(&sigma_z::<f64>(), Factor::Qubit(0), &space).unwrap(),
            embed(&sigma_x::<f64>(), Factor::Qubit(1), &space).unwrap(),
        ];
        for i in 0..ops.len() {
            for j in (i + 1)..ops.len() {
                assert!(ops[i].commutator(&ops[j]).max_abs() < 1e-12);
            }
        }
        assert!(ops[0].hermiticity_defect() < 1e-15);
    }

    #[test]
    fn thermal_ensemble_mean_occupation() {
        let space = SpaceSpec::new(2, vec![20, 10]).unwrap();
        let th = ThermalEnsemble::new(&[0.8, 0.3], &space).unwrap();
        assert!((th.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        for (m, &nb) in [0.8f64, 0.3].iter().enumerate() {
            let cutoff = space.mode_cutoffs[m];
            let bound = (cutoff as f64 + 2.0 + nb) * thermal_tail(nb, cutoff);
            assert!((th.mean_occupation(m, &space) - nb).abs() <= bound);
        }
        assert!(th.check_tail(1e-4).is_ok());
        let small = SpaceSpec::new(2, vec![2]).unwrap();
        let hot = ThermalEnsemble::uniform(1.0, &small).unwrap();
        assert!(matches!(hot.check_tail(1e-4), Err(Error::CutoffTooSmall { .. })));
    }

    #[test]
    fn space_validation() {
        assert!(SpaceSpec::new(2, vec![]).is_err());
        assert!(SpaceSpec::new(2, vec![0]).is_err());
        assert!(matches!(SpaceSpec::new(2, vec![100; 6]), Err(Error::SpaceTooLarge { .. })));
        let s = SpaceSpec::new(2, vec![3, 4]).unwrap();
        for idx in 0..s.motional_dim() {
            assert_eq!(s.motional_index(&s.occupations(idx)).unwrap(), idx);
        }
    }

    #[test]
    fn term_set_matches_direct_sum() {
        let (a, ad) = ladder_operators::<f64>(4);
        let n = number_operator::<f64>(4);
        let ops = vec![a.clone(), ad.clone(), n.clone(), a.matmul(&a)];
        let set = TermSet::new(&ops).unwrap();
        let coefs = [C::new(0.3, -0.2), C::new(0.3, 0.2), C::new(1.5, 0.0), C::new(0.0, 0.7)];
        let direct = ops
            .iter()
            .zip(&coefs)
            .map(|(o, &c)| o.to_complex().scale(c))
            .fold(CsrMatrix::zeros(5, 5), |acc, m| acc.add(&m));
        assert!(set.to_csr(&coefs).sub(&direct).max_abs() < 1e-15);
        let x: Vec<C<f64>> = (0..10).map(|k| C::new(k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let mut values = vec![C::new(0.0, 0.0); set.nnz()];
        set.assemble(&coefs, &mut values);
        let mut out = vec![C::new(0.0, 0.0); 10];
        set.apply(&values, &x, &mut out);
        for col in 0..2 {
            let expect = direct.mul_vec(&x[col * 5..col * 5 + 5]);
            for r in 0..5 {
                assert!((out[col * 5 + r] - expect[r]).norm() < 1e-14);
            }
        }
    }
}
