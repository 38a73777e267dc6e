//! Motional-mode mathematics for a two-ion crystal: Laguerre polynomials,
//! sideband coupling factors, effective Rabi frequencies and thermal Fock
//! distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default stretch-to-centre-of-mass frequency ratio for two ions, `√3`.
pub const DEFAULT_NU_RATIO: f64 = 1.732_050_807_568_877_2;

/// Default tail mass allowed when truncating a thermal distribution.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// Lamb-Dicke parameters of the two collective modes of one trap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Centre-of-mass Lamb-Dicke parameter.
    pub eta: f64,
    /// Relative (stretch) mode Lamb-Dicke parameter.
    pub eta_r: f64,
    /// `ν_r / ν`.
    pub nu_ratio: f64,
}

impl ModeParams {
    pub fn new(eta: f64, eta_r: f64, nu_ratio: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::param("eta", format!("must be positive, got {eta}")));
        }
        if !(eta_r > 0.0 && eta_r.is_finite()) {
            return Err(Error::param("eta_r", format!("must be positive, got {eta_r}")));
        }
        if !(nu_ratio > 1.0 && nu_ratio.is_finite()) {
            return Err(Error::param("nu_ratio", format!("must exceed 1, got {nu_ratio}")));
        }
        Ok(Self { eta, eta_r, nu_ratio })
    }

    /// Uses `ν_r/ν = √3` and the oscillator-length scaling
    /// `η_r = η (ν/ν_r)^{1/2}`.
    pub fn with_eta(eta: f64) -> Result<Self> {
        Self::new(eta, default_eta_r(eta, DEFAULT_NU_RATIO), DEFAULT_NU_RATIO)
    }
}

/// `η (ν/ν_r)^{1/2}`: the stretch-mode Lamb-Dicke parameter implied by the
/// ground-state width of a mode of frequency `ν_r`.
pub fn default_eta_r(eta: f64, nu_ratio: f64) -> f64 {
    eta / nu_ratio.sqrt()
}

/// Generalized Laguerre polynomial `L_m^k(x)` by the three-term recurrence.
pub fn laguerre(m: usize, k: usize, x: f64) -> f64 {
    let k = k as f64;
    let mut prev = 1.0;
    if m == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for j in 1..m {
        let j = j as f64;
        let next = ((2.0 * j + k + 1.0 - x) * cur - (j + k) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `(n+k)!/n!` as a k-term product.
pub fn rising_factorial_ratio(n: usize, k: usize) -> f64 {
    (1..=k).map(|j| (n + j) as f64).product()
}

/// Sideband coupling factor
/// `f_k(n, n_r) = e^{-(η²+η_r²)/2} n!/(n+k)! L_n^k(η²) L_{n_r}^0(η_r²)`.
pub fn coupling_factor(k: usize, n: usize, n_r: usize, p: &ModeParams) -> f64 {
    let (e2, er2) = (p.eta * p.eta, p.eta_r * p.eta_r);
    (-(e2 + er2) / 2.0).exp() * laguerre(n, k, e2) * laguerre(n_r, 0, er2)
        / rising_factorial_ratio(n, k)
}

/// Effective Rabi frequency `Ω^k_{n n_r}` in units of `Ω_k`:
///
/// `f_k²(n-k, n_r) n!/(n-k)! - f_k²(n, n_r) (n+k)!/n!`
///
/// The annihilation term is absent for `n < k`, and `k = 0` gives exactly
/// zero coupling.
pub fn rabi_frequency(k: usize, n: usize, n_r: usize, p: &ModeParams) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let down = if n >= k {
        let f = coupling_factor(k, n - k, n_r, p);
        f * f * rising_factorial_ratio(n - k, k)
    } else {
        0.0
    };
    let f = coupling_factor(k, n, n_r, p);
    down - f * f * rising_factorial_ratio(n, k)
}

/// Stretch-mode occupation at the temperature implied by a centre-of-mass
/// occupation `nbar`: `1 / ((1/n̄ + 1)^{ν_r/ν} - 1)`.
pub fn matched_nbar_r(nbar: f64, nu_ratio: f64) -> f64 {
    if nbar <= 0.0 {
        return 0.0;
    }
    1.0 / (nu_ratio * (1.0 / nbar).ln_1p()).exp_m1()
}

/// Smallest cutoff `N` such that the single-mode geometric tail beyond `N`
/// is below `tail_tol`.
pub fn cutoff_for(nbar: f64, tail_tol: f64) -> usize {
    if nbar <= 0.0 {
        return 0;
    }
    let q = nbar / (1.0 + nbar);
    let guess = (tail_tol.ln() / q.ln()).ceil() - 1.0;
    let mut n = if guess.is_finite() && guess > 0.0 { guess as usize } else { 0 };
    // ties at exact integer ratios fail the strict inequality
    while q.powi(n as i32 + 1) >= tail_tol {
        n += 1;
    }
    n
}

/// Renormalized single-mode Bose-Einstein weights on `0..=cutoff`.
pub fn single_mode_weights(nbar: f64, cutoff: usize) -> Vec<f64> {
    if nbar <= 0.0 {
        let mut w = vec![0.0; cutoff + 1];
        w[0] = 1.0;
        return w;
    }
    let q = nbar / (1.0 + nbar);
    let raw: Vec<f64> = (0..=cutoff).map(|n| q.powi(n as i32) / (1.0 + nbar)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn single_mode_tail(nbar: f64, cutoff: usize) -> f64 {
    if nbar <= 0.0 {
        0.0
    } else {
        (nbar / (1.0 + nbar)).powi(cutoff as i32 + 1)
    }
}

/// Truncated two-mode thermal distribution `P(n, n_r)` over
/// `0..=cutoff` in each mode, renormalized to unit sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    nbar: f64,
    nbar_r: f64,
    cutoff: usize,
    weights: Vec<f64>,
    tail_mass: f64,
}

impl ThermalSpec {
    /// Product of two Bose-Einstein distributions. The probability mass
    /// beyond the cutoff is recorded before renormalization.
    pub fn new(nbar: f64, nbar_r: f64, cutoff: usize) -> Result<Self> {
        for (name, v) in [("nbar", nbar), ("nbar_r", nbar_r)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be a finite value >= 0, got {v}")));
            }
        }
        let cm = single_mode_weights(nbar, cutoff);
        let rel = single_mode_weights(nbar_r, cutoff);
        let weights = cm
            .iter()
            .flat_map(|&a| rel.iter().map(move |&b| a * b))
            .collect();
        let (t, tr) = (single_mode_tail(nbar, cutoff), single_mode_tail(nbar_r, cutoff));
        Ok(Self {
            nbar,
            nbar_r,
            cutoff,
            weights,
            tail_mass: t + tr - t * tr,
        })
    }

    /// Cutoff chosen so that the joint tail mass stays below `tail_tol`.
    pub fn with_tail_tol(nbar: f64, nbar_r: f64, tail_tol: f64) -> Result<Self> {
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(Error::param("tail_tol", format!("must lie in (0, 1), got {tail_tol}")));
        }
        let cutoff = cutoff_for(nbar.max(nbar_r), tail_tol / 2.0);
        Self::new(nbar, nbar_r, cutoff)
    }

    /// Ground-state distribution: a single `(0, 0)` sector.
    pub fn ground() -> Self {
        Self::new(0.0, 0.0, 0).expect("zero occupation is valid")
    }

    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    pub fn nbar_r(&self) -> f64 {
        self.nbar_r
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn weight(&self, n: usize, n_r: usize) -> f64 {
        if n > self.cutoff || n_r > self.cutoff {
            return 0.0;
        }
        self.weights[n * (self.cutoff + 1) + n_r]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nonzero sectors `(n, n_r, P)` in row-major order.
    pub fn sectors(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let side = self.cutoff + 1;
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(move |(i, &w)| (i / side, i % side, w))
    }

    /// Warning text when the discarded tail exceeds `tail_tol`.
    pub fn truncation_warning(&self, tail_tol: f64) -> Option<String> {
        (self.tail_mass > tail_tol).then(|| {
            format!(
                "Fock cutoff {} discards thermal tail mass {:.3e} > {:.1e} (nbar = {}, nbar_r = {})",
                self.cutoff, self.tail_mass, tail_tol, self.nbar, self.nbar_r
            )
        })
    }
}
