//! Givens rotation mechanics on dense symmetric matrices.
//!
//! Rotations follow the convention `A' = Gᵀ A G` where `G` equals the
//! identity except `G[i][i] = G[j][j] = c`, `G[i][j] = s`, `G[j][i] = -s`.

use serde::{Deserialize, Serialize};

use crate::action::{PivotAction, num_actions};
use crate::error::{Error, Result};
use crate::scalar::{Scalar, sign_nonzero};

/// Dense symmetric matrix stored row-major with both halves present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Builds a matrix from row-major values. Mirrored entries must be
    /// bit-identical and every entry finite.
    pub fn from_row_major(n: usize, values: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix order must be positive"));
        }
        if values.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: values.len() });
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() {
                    return Err(Error::NonFinite { i, j });
                }
                if j > i && v != values[j * n + i] {
                    return Err(Error::Asymmetric {
                        i,
                        j,
                        deviation: (v - values[j * n + i]).abs().to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(n, values)
    }

    /// Builds from the upper triangle (including the diagonal) of `f`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::from_row_major(n, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(d: &[T]) -> Self {
        let n = d.len();
        let mut values = vec![T::zero(); n * n];
        for (k, &v) in d.iter().enumerate() {
            values[k * n + k] = v;
        }
        Self { n, values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    /// Writes `v` to both `(i, j)` and `(j, i)`.
    #[inline]
    fn set_pair(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|k| self.get(k, k)).collect()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |acc, k| acc + self.get(k, k))
    }

    /// `alpha * A`.
    pub fn scaled(&self, alpha: T) -> Self {
        Self { n: self.n, values: self.values.iter().map(|&v| v * alpha).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> SymMatrix<U> {
        SymMatrix {
            n: self.n,
            values: self.values.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

/// Dense square matrix, used for accumulated eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn identity(n: usize) -> Self {
        let mut values = vec![T::zero(); n * n];
        for k in 0..n {
            values[k * n + k] = T::one();
        }
        Self { n, values }
    }

    pub fn from_row_major(n: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: values.len() });
        }
        Ok(Self { n, values })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// Column `k`, i.e. the `k`-th eigenvector when this holds `U`.
    pub fn column(&self, k: usize) -> Vec<T> {
        (0..self.n).map(|r| self.get(r, k)).collect()
    }

    /// `max |(UᵀU - I)_{ab}|`.
    pub fn orthogonality_defect(&self) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for a in 0..n {
            for b in 0..n {
                let mut dot = T::zero();
                for r in 0..n {
                    dot = dot + self.get(r, a) * self.get(r, b);
                }
                let target = if a == b { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// `Uᵀ A U` as a dense matrix.
    pub fn similarity(&self, a: &SymMatrix<T>) -> Result<DenseMatrix<T>> {
        let n = self.n;
        if a.order() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.order() });
        }
        let mut au = vec![T::zero(); n * n];
        for r in 0..n {
            for c in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc = acc + a.get(r, k) * self.get(k, c);
                }
                au[r * n + c] = acc;
            }
        }
        let mut out = vec![T::zero(); n * n];
        for r in 0..n {
            for c in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc = acc + self.get(k, r) * au[k * n + c];
                }
                out[r * n + c] = acc;
            }
        }
        Ok(DenseMatrix { n, values: out })
    }
}

/// Rotation coefficients for pivot `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GivensCoeffs<T> {
    pub i: usize,
    pub j: usize,
    pub c: T,
    pub s: T,
}

impl<T: Scalar> GivensCoeffs<T> {
    pub fn identity(i: usize, j: usize) -> Self {
        Self { i, j, c: T::one(), s: T::zero() }
    }

    /// Dense `G` for an order-`n` matrix.
    pub fn to_dense(&self, n: usize) -> DenseMatrix<T> {
        let mut g = DenseMatrix::identity(n);
        g.values[self.i * n + self.i] = self.c;
        g.values[self.j * n + self.j] = self.c;
        g.values[self.i * n + self.j] = self.s;
        g.values[self.j * n + self.i] = -self.s;
        g
    }
}

/// Diagonal of the final matrix plus the accumulated rotation `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult<T> {
    pub eigenvalues: Vec<T>,
    pub vectors: DenseMatrix<T>,
    pub rotations_applied: usize,
}

impl<T: Scalar> EigenResult<T> {
    pub fn sorted_eigenvalues(&self) -> Vec<T> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        v
    }
}

fn check_pivot<T: Scalar>(a: &SymMatrix<T>, i: usize, j: usize) -> Result<()> {
    let n = a.order();
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange { i, j, n });
    }
    if i >= j {
        return Err(Error::NotUpperTriangle { i, j });
    }
    Ok(())
}

/// Coefficients of the inner rotation (`|θ| ≤ π/4`) annihilating `A[i][j]`.
pub fn givens_coefficients<T: Scalar>(a: &SymMatrix<T>, i: usize, j: usize) -> Result<GivensCoeffs<T>> {
    check_pivot(a, i, j)?;
    let aij = a.get(i, j);
    if aij == T::zero() {
        return Ok(GivensCoeffs::identity(i, j));
    }
    let tau = (a.get(j, j) - a.get(i, i)) / (T::two() * aij);
    let t = if tau.abs() > T::one() / T::epsilon() {
        // 1 + τ² overflows to τ² here; t ≈ 1/(2τ)
        T::one() / (T::two() * tau)
    } else {
        sign_nonzero(tau) / (tau.abs() + (T::one() + tau * tau).sqrt())
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;
    Ok(GivensCoeffs { i, j, c, s })
}

/// In-place `A ← Gᵀ A G`. Symmetry is kept exactly by writing each
/// mirrored pair from a single computed value.
pub fn rotate_in_place<T: Scalar>(a: &mut SymMatrix<T>, g: &GivensCoeffs<T>) -> Result<()> {
    check_pivot(a, g.i, g.j)?;
    let (i, j, c, s) = (g.i, g.j, g.c, g.s);
    let n = a.order();
    let aii = a.get(i, i);
    let ajj = a.get(j, j);
    let aij = a.get(i, j);
    for l in 0..n {
        if l == i || l == j {
            continue;
        }
        let ali = a.get(l, i);
        let alj = a.get(l, j);
        a.set_pair(l, i, c * ali - s * alj);
        a.set_pair(l, j, s * ali + c * alj);
    }
    let cs2 = T::two() * c * s;
    let new_ii = c * c * aii - cs2 * aij + s * s * ajj;
    let new_jj = s * s * aii + cs2 * aij + c * c * ajj;
    let new_ij = (c * c - s * s) * aij + c * s * (aii - ajj);
    a.values[i * n + i] = new_ii;
    a.values[j * n + j] = new_jj;
    a.set_pair(i, j, new_ij);
    Ok(())
}

pub fn apply_rotation<T: Scalar>(a: &SymMatrix<T>, g: &GivensCoeffs<T>) -> Result<SymMatrix<T>> {
    let mut out = a.clone();
    rotate_in_place(&mut out, g)?;
    Ok(out)
}

/// In-place `U ← U G`.
pub fn accumulate_in_place<T: Scalar>(u: &mut DenseMatrix<T>, g: &GivensCoeffs<T>) -> Result<()> {
    let n = u.order();
    if g.i >= n || g.j >= n {
        return Err(Error::DimensionMismatch { expected: n, got: g.i.max(g.j) + 1 });
    }
    let (i, j, c, s) = (g.i, g.j, g.c, g.s);
    for r in 0..n {
        let ui = u.values[r * n + i];
        let uj = u.values[r * n + j];
        u.values[r * n + i] = c * ui - s * uj;
        u.values[r * n + j] = s * ui + c * uj;
    }
    Ok(())
}

pub fn accumulate_rotation<T: Scalar>(u: &DenseMatrix<T>, g: &GivensCoeffs<T>) -> Result<DenseMatrix<T>> {
    let mut out = u.clone();
    accumulate_in_place(&mut out, g)?;
    Ok(out)
}

/// Largest `|A[i][j]|` above the diagonal and the lexicographically
/// smallest pivot attaining it.
pub fn offdiag_max<T: Scalar>(a: &SymMatrix<T>) -> Result<(T, PivotAction)> {
    let n = a.order();
    if n < 2 {
        return Err(Error::invalid("offdiag_max needs order >= 2"));
    }
    let mut best = T::zero();
    let mut arg = PivotAction::new_unchecked(0, 1, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = a.get(i, j).abs();
            if v > best {
                best = v;
                arg = PivotAction::new_unchecked(i, j, n);
            }
        }
    }
    Ok((best, arg))
}

/// `Σ_{i≠j} A[i][j]²`.
pub fn offdiag_sq_norm<T: Scalar>(a: &SymMatrix<T>) -> T {
    let n = a.order();
    let mut acc = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let v = a.get(i, j);
            acc = acc + v * v;
        }
    }
    T::two() * acc
}

/// `max_{i<j} |A[i][j]| < tol`.
pub fn is_converged<T: Scalar>(a: &SymMatrix<T>, tol: T) -> Result<bool> {
    if !(tol > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if a.order() < 2 {
        return Ok(true);
    }
    Ok(offdiag_max(a)?.0 < tol)
}

/// Convergence threshold, either absolute or scaled by `‖A₀‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Absolute(1e-5)
    }
}

impl Tolerance {
    /// Absolute threshold for episodes starting at `a0`.
    pub fn resolve<T: Scalar>(&self, a0: &SymMatrix<T>) -> Result<T> {
        let tol = match *self {
            Tolerance::Absolute(t) => T::from_f64_lossy(t),
            Tolerance::Relative(r) => T::from_f64_lossy(r) * a0.frobenius_norm(),
        };
        if !(tol > T::zero()) || !tol.is_finite() {
            return Err(Error::invalid("resolved tolerance must be positive and finite"));
        }
        Ok(tol)
    }
}

/// Count of pivots with `|A[i][j]| ≥ tol`.
pub fn count_above<T: Scalar>(a: &SymMatrix<T>, tol: T) -> usize {
    let n = a.order();
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if a.get(i, j).abs() >= tol {
                k += 1;
            }
        }
    }
    debug_assert!(k <= num_actions(n));
    k
}
