//! Dense complex linear algebra for small quantum registers.
//!
//! Everything here works on row-major `Vec<Complex64>` storage. Registers are
//! ordered with ion 1 as the most significant tensor factor, and within one
//! qubit index 0 is `|down>` and index 1 is `|up>`. Composite
//! electronic-motional spaces are ordered electronic ⊗ motional.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest dimension a tensor product may produce before it is rejected.
pub const DEFAULT_DIM_CAP: usize = 1 << 14;

/// Tolerance used when validating Hermiticity of inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a square matrix and checks `M = M^dag` to within 1e-12.
    pub fn hermitian(dim: usize, data: Vec<C64>) -> Result<Self> {
        let m = Self::new(dim, dim, data)?;
        let dev = m.hermiticity_error();
        if dev > 1e-12 {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// `|psi><psi|`
    pub fn projector(psi: &StateVec) -> Self {
        let a = psi.amplitudes();
        Self::from_fn(a.len(), a.len(), |i, j| a[i] * a[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn one_norm(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |M - M^dag|`; infinite for non-square input.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev = 0.0_f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// `max |U^dag U - I|`
    pub fn unitarity_error(&self) -> f64 {
        let p = &self.dagger() * self;
        p.max_abs_diff(&Self::identity(self.rows))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, psi: &StateVec) -> Result<StateVec> {
        if self.cols != psi.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: psi.dim(),
            });
        }
        let amps = (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(psi.amplitudes())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(StateVec { amps })
    }

    /// `U rho U^dag`
    pub fn conjugate_by(&self, u: &Self) -> Result<Self> {
        u.matmul(self)?.matmul(&u.dagger())
    }

    pub fn kron_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        if self.data.is_empty() || other.data.is_empty() {
            return Err(Error::Empty);
        }
        let rows = checked_dim(self.rows, other.rows, cap)?;
        let cols = checked_dim(self.cols, other.cols, cap)?;
        let mut data = Vec::with_capacity(rows * cols);
        for i1 in 0..self.rows {
            for i2 in 0..other.rows {
                for j1 in 0..self.cols {
                    let a = self[(i1, j1)];
                    for j2 in 0..other.cols {
                        data.push(a * other[(i2, j2)]);
                    }
                }
            }
        }
        Ok(Self { rows, cols, data })
    }
}

fn checked_dim(a: usize, b: usize, cap: usize) -> Result<usize> {
    match a.checked_mul(b) {
        Some(d) if d <= cap => Ok(d),
        Some(d) => Err(Error::TruncationTooLarge { dim: d, cap }),
        None => Err(Error::TruncationTooLarge {
            dim: usize::MAX,
            cap,
        }),
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Panics on shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    amps: Vec<C64>,
}

impl StateVec {
    pub fn new(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self {
            amps: amps.iter().map(|&a| C64::new(a, 0.0)).collect(),
        }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotNormalized { norm: n });
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            amps: self.amps.iter().map(|&z| z * s).collect(),
        }
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.dim(), other.dim());
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn density(&self) -> ComplexMatrix {
        ComplexMatrix::projector(self)
    }

    pub fn kron_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        if self.amps.is_empty() || other.amps.is_empty() {
            return Err(Error::Empty);
        }
        checked_dim(self.dim(), other.dim(), cap)?;
        let amps = self
            .amps
            .iter()
            .flat_map(|&a| other.amps.iter().map(move |&b| a * b))
            .collect();
        Ok(Self { amps })
    }
}

impl Index<usize> for StateVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.amps[i]
    }
}

impl IndexMut<usize> for StateVec {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.amps[i]
    }
}

/// Kronecker product shared by operators and kets.
pub trait Tensor: Sized {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self>;

    fn tensor(&self, other: &Self) -> Result<Self> {
        self.tensor_capped(other, DEFAULT_DIM_CAP)
    }
}

impl Tensor for ComplexMatrix {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        self.kron_capped(other, cap)
    }
}

impl Tensor for StateVec {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        self.kron_capped(other, cap)
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

/// Tensor product of a whole list, left to right.
pub fn tensor_all<T: Tensor + Clone>(items: &[T]) -> Result<T> {
    let (first, rest) = items.split_first().ok_or(Error::Empty)?;
    rest.iter().try_fold(first.clone(), |acc, x| acc.tensor(x))
}

/// Reduced density operator over the subsystems listed in `keep`.
///
/// `dims` gives the dimension of each subsystem in tensor order; the kept
/// subsystems appear in the result in ascending index order regardless of the
/// order they are listed in.
pub fn partial_trace(rho: &ComplexMatrix, keep: &[usize], dims: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if !rho.is_square() || rho.rows() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: rho.rows(),
        });
    }
    let dev = rho.hermiticity_error();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() {
            return Err(Error::param("keep", format!("subsystem {k} out of range")));
        }
        kept[k] = true;
    }

    // Split every full index into (kept multi-index, traced multi-index).
    let mut kept_of = vec![0usize; total];
    let mut traced_of = vec![0usize; total];
    for (idx, (k_out, t_out)) in kept_of.iter_mut().zip(traced_of.iter_mut()).enumerate() {
        let mut rem = idx;
        let (mut k_idx, mut k_stride, mut t_idx, mut t_stride) = (0, 1, 0, 1);
        for (s, &d) in dims.iter().enumerate().rev() {
            let digit = rem % d;
            rem /= d;
            if kept[s] {
                k_idx += digit * k_stride;
                k_stride *= d;
            } else {
                t_idx += digit * t_stride;
                t_stride *= d;
            }
        }
        *k_out = k_idx;
        *t_out = t_idx;
    }
    let out_dim: usize = dims
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| k)
        .map(|(&d, _)| d)
        .product();

    let mut out = ComplexMatrix::zeros(out_dim, out_dim);
    for i in 0..total {
        for j in 0..total {
            if traced_of[i] == traced_of[j] {
                out[(kept_of[i], kept_of[j])] += rho[(i, j)];
            }
        }
    }
    Ok(out)
}

/// `exp(A)` for a general square matrix by scaling and squaring of a
/// truncated Taylor series.
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let dim = a.rows();
    let norm = a.one_norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale(C64::new(0.5_f64.powi(squarings as i32), 0.0));

    let mut result = ComplexMatrix::identity(dim);
    let mut term = ComplexMatrix::identity(dim);
    for k in 1..=30 {
        term = (&term * &scaled).scale(C64::new(1.0 / k as f64, 0.0));
        result = &result + &term;
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Propagator `exp(-i h t)` for Hermitian `h` (frequency units, hbar = 1).
pub fn mat_exp(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let dev = h.hermiticity_error();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    expm(&h.scale(C64::new(0.0, -t)))
}

/// Trace-overlap fidelity `Tr{rho sigma}`.
///
/// Both arguments must be Hermitian with unit trace. Values within 1e-9 of
/// the interval ends are clamped onto `[0, 1]`.
pub fn fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    if !rho.is_square() || rho.rows() != sigma.rows() || rho.cols() != sigma.cols() {
        return Err(Error::DimensionMismatch {
            expected: rho.rows(),
            found: sigma.rows(),
        });
    }
    for m in [rho, sigma] {
        let dev = m.hermiticity_error();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = m.trace().re;
        if (tr - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::NotUnitTrace { trace: tr });
        }
    }
    let n = rho.rows();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            f += (rho[(i, j)] * sigma[(j, i)]).re;
        }
    }
    Ok(clamp_unit(f))
}

pub(crate) fn clamp_unit(f: f64) -> f64 {
    if f < 0.0 && f > -1e-9 {
        0.0
    } else if f > 1.0 && f < 1.0 + 1e-9 {
        1.0
    } else {
        f
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO })
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(2, 2, vec![ZERO, -I, I, ZERO]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diagonal(&[ONE, -ONE])
}

fn qubit_count(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::param("register", format!("dimension {dim} is not 2^n")));
    }
    Ok(dim.trailing_zeros() as usize)
}

#[inline]
fn bit(index: usize, qubit: usize, n: usize) -> usize {
    (index >> (n - 1 - qubit)) & 1
}

/// Applies a 2x2 operator to qubit `q` (0-based, most significant first) of a
/// register state.
pub fn apply_single_qubit(psi: &StateVec, q: usize, u: &ComplexMatrix) -> Result<StateVec> {
    let n = qubit_count(psi.dim())?;
    if q >= n || u.rows() != 2 || u.cols() != 2 {
        return Err(Error::param("qubit", format!("cannot apply 2x2 operator to qubit {q} of {n}")));
    }
    let mask = 1 << (n - 1 - q);
    let mut out = psi.clone();
    for idx in 0..psi.dim() {
        if idx & mask != 0 {
            continue;
        }
        let (a0, a1) = (psi[idx], psi[idx | mask]);
        out[idx] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
        out[idx | mask] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
    }
    Ok(out)
}

/// Applies a 4x4 operator to the ordered qubit pair `(qa, qb)` of a register
/// state; the operator's basis is `|qa qb>` with `qa` most significant.
pub fn apply_two_qubit(psi: &StateVec, qa: usize, qb: usize, u: &ComplexMatrix) -> Result<StateVec> {
    let n = qubit_count(psi.dim())?;
    if qa >= n || qb >= n || qa == qb || u.rows() != 4 || u.cols() != 4 {
        return Err(Error::param(
            "qubits",
            format!("cannot apply 4x4 operator to qubits ({qa}, {qb}) of {n}"),
        ));
    }
    let ma = 1 << (n - 1 - qa);
    let mb = 1 << (n - 1 - qb);
    let mut out = psi.clone();
    for base in 0..psi.dim() {
        if base & (ma | mb) != 0 {
            continue;
        }
        let idx = [base, base | mb, base | ma, base | ma | mb];
        let a = idx.map(|i| psi[i]);
        for (r, &dst) in idx.iter().enumerate() {
            out[dst] = (0..4).map(|c| u[(r, c)] * a[c]).sum();
        }
    }
    Ok(out)
}

/// Conjugates a register density operator by a single-qubit unitary on `q`.
pub fn conjugate_single_qubit(rho: &ComplexMatrix, q: usize, u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = qubit_count(rho.rows())?;
    if q >= n {
        return Err(Error::param("qubit", format!("qubit {q} out of range for {n}")));
    }
    let mut ops = vec![ComplexMatrix::identity(2); n];
    ops[q] = u.clone();
    let full = tensor_all(&ops)?;
    rho.conjugate_by(&full)
}

/// Amplitude of `psi` restricted to the computational basis states where the
/// `measured` qubits read `outcome_bits`; the result lives on the remaining
/// qubits in their original order.
pub fn project_qubits(psi: &StateVec, measured: &[usize], outcome_bits: &[usize]) -> Result<StateVec> {
    let n = qubit_count(psi.dim())?;
    if measured.len() != outcome_bits.len() || measured.iter().any(|&q| q >= n) {
        return Err(Error::param("measured", "qubit list does not match the register"));
    }
    let rest = n - measured.len();
    let mut amps = Vec::with_capacity(1 << rest);
    for idx in 0..psi.dim() {
        let hit = measured
            .iter()
            .zip(outcome_bits)
            .all(|(&q, &b)| bit(idx, q, n) == b);
        if hit {
            amps.push(psi[idx]);
        }
    }
    Ok(StateVec::new(amps))
}
