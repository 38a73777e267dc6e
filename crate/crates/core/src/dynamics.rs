//! Two-ion dispersive dynamics and single-ion carrier rotations.
//!
//! The effective Hamiltonian of a sideband-`k` Raman pair acting on two ions
//! is diagonal in the Fock labels `(n, n_r)` of the two collective modes, so
//! every Fock sector evolves as an independent four-level electronic problem
//! ([`sector_unitary`]). The full truncated operator ([`build_heff`]) is kept
//! only to check the sector path against a matrix exponential.
//!
//! Units: frequencies are in `|Ω_k|`, `ħ = 1`. The coupling scale carries the
//! sign `Ω_k = (-1)^k |Ω_k|` (detuning taken positive), so the signed
//! frequency of a sector is `(-1)^k` times [`rabi_frequency`].

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, StateVec, Tensor, C64, I, ONE, ZERO};
use crate::motional::{coupling_factor, laguerre, rabi_frequency, rising_factorial_ratio, ModeParams};

/// Two-ion electronic basis index, first ion most significant.
pub const DOWN_DOWN: usize = 0;
pub const DOWN_UP: usize = 1;
pub const UP_DOWN: usize = 2;
pub const UP_UP: usize = 3;

/// One two-ion Raman-pair excitation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Sideband order.
    pub k: usize,
    /// Effective Raman phase `φ`.
    pub phi: f64,
    /// Equilibrium-separation phase `φ_0`.
    pub phi0: f64,
    /// Target pulse area `|Ω^k_ref| t`.
    pub area: f64,
    /// Relative pulse-area imprecision `ε`.
    pub epsilon: f64,
    /// Fock sector `(n, n_r)` the duration is calibrated against.
    pub reference: (usize, usize),
}

impl PulseSpec {
    pub fn new(k: usize, phi: f64, phi0: f64, area: f64, epsilon: f64) -> Result<Self> {
        if !(area > 0.0 && area.is_finite()) {
            return Err(Error::param("area", format!("must be positive, got {area}")));
        }
        if !(epsilon > -1.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must exceed -1, got {epsilon}")));
        }
        Ok(Self {
            k,
            phi,
            phi0,
            area,
            epsilon,
            reference: (0, 0),
        })
    }

    /// The `π/4` pulse used both for Bell-channel preparation and for the
    /// Bell analyzer.
    pub fn quarter(k: usize, phi: f64, phi0: f64, epsilon: f64) -> Result<Self> {
        Self::new(k, phi, phi0, FRAC_PI_4, epsilon)
    }

    pub fn with_reference(mut self, n: usize, n_r: usize) -> Self {
        self.reference = (n, n_r);
        self
    }

    /// Interaction time `(1 + ε) area / |Ω^k_ref|`.
    pub fn duration(&self, modes: &ModeParams) -> Result<f64> {
        let (n, n_r) = self.reference;
        let w = sector_frequency(self.k, n, n_r, modes).abs();
        if w == 0.0 {
            return Err(Error::ZeroReferenceFrequency);
        }
        Ok((1.0 + self.epsilon) * self.area / w)
    }
}

/// Electronic pure state attached to one motional Fock label.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorState {
    pub n: usize,
    pub n_r: usize,
    /// Fock label of the remote single-ion trap.
    pub n_b: usize,
    pub weight: f64,
    pub amplitudes: StateVec,
}

/// Signed sector frequency `Ω^k_{n n_r}` in units of `|Ω_k|`.
pub fn sector_frequency(k: usize, n: usize, n_r: usize, modes: &ModeParams) -> f64 {
    parity_sign(k) * rabi_frequency(k, n, n_r, modes)
}

fn parity_sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Closed-form four-level propagator of one Fock sector with signed frequency
/// `omega`, for an interaction time `t`.
///
/// With `s = (-1)^k` the propagator is `e^{-i s ω t}` times
///
/// * on `{↓↓, ↑↑}`: `cos(ωt)` on the diagonal, `-i e^{±2iφ} sin(ωt)` off it;
/// * on `{↓↑, ↑↓}`: `cos(ωt)` on the diagonal, `-i s e^{±iφ_0} sin(ωt)` off it.
///
/// In sectors where `sign(ω) = -s` this is the familiar
/// `cos|ω|t`, `i s e^{2iφ} sin|ω|t` form; the signed form stays exact when
/// the sign flips at large `n`.
pub fn sector_unitary(k: usize, phi: f64, phi0: f64, omega: f64, t: f64) -> ComplexMatrix {
    let s = parity_sign(k);
    let wt = omega * t;
    let g = C64::from_polar(1.0, -s * wt);
    let c = g * wt.cos();
    let sn = g * wt.sin();
    let mut u = ComplexMatrix::zeros(4, 4);
    u[(DOWN_DOWN, DOWN_DOWN)] = c;
    u[(UP_UP, UP_UP)] = c;
    u[(UP_UP, DOWN_DOWN)] = -I * C64::from_polar(1.0, 2.0 * phi) * sn;
    u[(DOWN_DOWN, UP_UP)] = -I * C64::from_polar(1.0, -2.0 * phi) * sn;
    u[(DOWN_UP, DOWN_UP)] = c;
    u[(UP_DOWN, UP_DOWN)] = c;
    u[(UP_DOWN, DOWN_UP)] = -I * s * C64::from_polar(1.0, phi0) * sn;
    u[(DOWN_UP, UP_DOWN)] = -I * s * C64::from_polar(1.0, -phi0) * sn;
    u
}

/// Evolves a four-amplitude electronic state of the pulsed pair for time `t`
/// in a sector of signed frequency `omega`.
pub fn sector_evolve(electronic: &StateVec, pulse: &PulseSpec, omega: f64, t: f64) -> Result<StateVec> {
    if electronic.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: electronic.dim(),
        });
    }
    sector_unitary(pulse.k, pulse.phi, pulse.phi0, omega, t).apply(electronic)
}

/// Propagator of `pulse` in Fock sector `(n, n_r)`, duration calibrated per
/// [`PulseSpec::duration`].
pub fn pulse_unitary(pulse: &PulseSpec, modes: &ModeParams, n: usize, n_r: usize) -> Result<ComplexMatrix> {
    let t = pulse.duration(modes)?;
    let w = sector_frequency(pulse.k, n, n_r, modes);
    Ok(sector_unitary(pulse.k, pulse.phi, pulse.phi0, w, t))
}

/// Applies `pulse` to ions `(qa, qb)` of every sector in a mixture, each
/// sector with its own Fock labels.
pub fn evolve_sectors(
    states: &[SectorState],
    pulse: &PulseSpec,
    modes: &ModeParams,
    qa: usize,
    qb: usize,
) -> Result<Vec<SectorState>> {
    states
        .iter()
        .map(|s| {
            let u = pulse_unitary(pulse, modes, s.n, s.n_r)?;
            Ok(SectorState {
                amplitudes: linalg::apply_two_qubit(&s.amplitudes, qa, qb, &u)?,
                ..s.clone()
            })
        })
        .collect()
}

fn raising() -> ComplexMatrix {
    // |↑><↓| with index 0 = ↓
    ComplexMatrix::new(2, 2, vec![ZERO, ZERO, ONE, ZERO]).unwrap()
}

fn lowering() -> ComplexMatrix {
    raising().dagger()
}

/// Index of `|e> ⊗ |n, n_r>` in the space built by [`build_heff`].
pub fn heff_index(electronic: usize, n: usize, n_r: usize, cutoff: usize) -> usize {
    let side = cutoff + 1;
    electronic * side * side + n * side + n_r
}

/// Full effective Hamiltonian on (two-ion electronic) ⊗ (two-mode Fock space
/// truncated at `cutoff` per mode), in units of `|Ω_k|`.
///
/// Built term by term from `S_±` operators and the diagonal vibrational
/// factor `F_k²(n̂-k, n̂_r) n̂!/(n̂-k)! - F_k²(n̂, n̂_r) (n̂+k)!/n̂!`.
pub fn build_heff(k: usize, modes: &ModeParams, phi: f64, phi0: f64, cutoff: usize) -> Result<ComplexMatrix> {
    if cutoff < k {
        return Err(Error::param("cutoff", format!("must be at least k = {k}, got {cutoff}")));
    }
    let s = parity_sign(k);
    let (sp, sm) = (raising(), lowering());
    let two_photon = sp.tensor(&sp)?.scale(C64::from_polar(1.0, 2.0 * phi));
    let exchange = sp.tensor(&sm)?.scale(C64::from_polar(1.0, phi0));
    let half = ComplexMatrix::identity(4).scale(C64::new(0.5, 0.0));
    let electronic = &two_photon + &(&exchange + &half).scale(C64::new(s, 0.0));

    let side = cutoff + 1;
    let mut vib = vec![ZERO; side * side];
    for n in 0..side {
        for n_r in 0..side {
            let annihilate = if n >= k {
                let f = coupling_factor(k, n - k, n_r, modes);
                f * f * rising_factorial_ratio(n - k, k)
            } else {
                0.0
            };
            let f = coupling_factor(k, n, n_r, modes);
            let create = f * f * rising_factorial_ratio(n, k);
            // Ω_k = (-1)^k |Ω_k|
            vib[n * side + n_r] = C64::new(s * (annihilate - create), 0.0);
        }
    }
    let a = electronic.tensor_capped(&ComplexMatrix::diagonal(&vib), linalg::DEFAULT_DIM_CAP)?;
    Ok(&a + &a.dagger())
}

/// Lamb-Dicke-limit Hamiltonian for `k = 1` on the two-ion electronic space,
/// in units of `|Ω_1|`: `S₊S₊e^{2iφ} - S₊S₋e^{iφ_0} - 1/2 + H.c.`
pub fn build_ld_hamiltonian(phi: f64, phi0: f64) -> ComplexMatrix {
    let e2 = C64::from_polar(1.0, 2.0 * phi);
    let e0 = C64::from_polar(1.0, phi0);
    let mut h = ComplexMatrix::zeros(4, 4);
    h[(UP_UP, DOWN_DOWN)] = e2;
    h[(DOWN_DOWN, UP_UP)] = e2.conj();
    h[(UP_DOWN, DOWN_UP)] = -e0;
    h[(DOWN_UP, UP_DOWN)] = -e0.conj();
    for i in 0..4 {
        h[(i, i)] = C64::new(-1.0, 0.0);
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> ComplexMatrix {
        match self {
            Axis::X => linalg::pauli_x(),
            Axis::Y => linalg::pauli_y(),
            Axis::Z => linalg::pauli_z(),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::param("axis", format!("expected x, y or z, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Carrier Debye-Waller factor `e^{-η²/2} L_n^0(η²)`.
pub fn debye_waller(n: usize, eta: f64) -> f64 {
    let e2 = eta * eta;
    (-e2 / 2.0).exp() * laguerre(n, 0, e2)
}

/// Rotation angle actually delivered to Fock state `n` by a carrier pulse
/// calibrated on `n = 0`.
pub fn carrier_angle(angle: f64, n: usize, eta_local: f64, epsilon: f64) -> f64 {
    angle * (1.0 + epsilon) * debye_waller(n, eta_local) / debye_waller(0, eta_local)
}

/// `exp(-i θ σ/2)` with `θ` from [`carrier_angle`].
pub fn carrier_rotation(axis: Axis, angle: f64, n: usize, eta_local: f64, epsilon: f64) -> ComplexMatrix {
    let theta = carrier_angle(angle, n, eta_local, epsilon);
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = -I * (theta / 2.0).sin();
    &ComplexMatrix::identity(2).scale(c) + &axis.pauli().scale(s)
}

/// Applies `exp(-i h t)` to a state of the full truncated space.
pub fn oracle_evolve(state: &StateVec, h: &ComplexMatrix, t: f64) -> Result<StateVec> {
    if h.rows() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            found: state.dim(),
        });
    }
    linalg::mat_exp(h, t)?.apply(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn modes() -> ModeParams {
        ModeParams::with_eta(0.15).unwrap()
    }

    #[test]
    fn zero_area_is_identity() {
        let u = sector_unitary(1, 0.3, 1.1, 0.9, 0.0);
        assert!(u.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn quarter_pulse_makes_bell_state() {
        let phi = 0.4;
        let pulse = PulseSpec::quarter(1, phi, 0.2, 0.0).unwrap();
        let m = modes();
        let t = pulse.duration(&m).unwrap();
        let w = sector_frequency(1, 0, 0, &m);
        assert!(w > 0.0);
        let out = sector_evolve(&StateVec::basis(4, DOWN_DOWN), &pulse, w, t).unwrap();
        let a = out[DOWN_DOWN];
        let b = out[UP_UP];
        assert!((a.norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((b.norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        // relative phase -i e^{2iφ}
        let rel = b / a;
        assert!((rel - (-I * C64::from_polar(1.0, 2.0 * phi))).norm() < 1e-12);
        assert_eq!(out[DOWN_UP], ZERO);
        assert_eq!(out[UP_DOWN], ZERO);
    }

    #[test]
    fn sector_unitary_matches_block_exponential() {
        for &(k, phi, phi0, w, t) in &[(1, 0.3, 1.2, 0.8, 1.7), (2, -0.7, 2.5, -1.3, 0.4), (1, 2.0, -0.5, -0.2, 5.0)] {
            let s = parity_sign(k);
            let mut h = ComplexMatrix::zeros(4, 4);
            for i in 0..4 {
                h[(i, i)] = C64::new(s * w, 0.0);
            }
            h[(UP_UP, DOWN_DOWN)] = C64::from_polar(w, 2.0 * phi);
            h[(DOWN_DOWN, UP_UP)] = C64::from_polar(w, -2.0 * phi);
            h[(UP_DOWN, DOWN_UP)] = C64::from_polar(s * w, phi0);
            h[(DOWN_UP, UP_DOWN)] = C64::from_polar(s * w, -phi0);
            let oracle = linalg::mat_exp(&h, t).unwrap();
            assert!(sector_unitary(k, phi, phi0, w, t).max_abs_diff(&oracle) < 1e-9);
        }
    }

    #[test]
    fn sector_composition() {
        let u1 = sector_unitary(2, 0.1, 0.9, -0.7, 0.8);
        let u2 = sector_unitary(2, 0.1, 0.9, -0.7, 1.3);
        let u12 = sector_unitary(2, 0.1, 0.9, -0.7, 2.1);
        assert!((&u1 * &u2).max_abs_diff(&u12) < 1e-10);
    }

    #[test]
    fn reference_sector_gets_exact_area() {
        let m = modes();
        for reference in [(0, 0), (2, 1)] {
            let p = PulseSpec::new(1, 0.0, 0.0, 0.9, 0.0).unwrap().with_reference(reference.0, reference.1);
            let t = p.duration(&m).unwrap();
            let w = sector_frequency(1, reference.0, reference.1, &m).abs();
            assert!((w * t - 0.9).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_reference_frequency_rejected() {
        let p = PulseSpec::quarter(0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(p.duration(&modes()), Err(Error::ZeroReferenceFrequency));
    }

    #[test]
    fn pulse_spec_validation() {
        assert!(PulseSpec::new(1, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(PulseSpec::new(1, 0.0, 0.0, 1.0, -1.0).is_err());
        assert!(PulseSpec::new(1, 0.0, 0.0, 1.0, -0.5).is_ok());
    }

    #[test]
    fn heff_is_hermitian_and_fock_diagonal() {
        let m = modes();
        for k in 1..=2 {
            let cutoff = 4;
            let h = build_heff(k, &m, 0.37, 1.9, cutoff).unwrap();
            assert!(h.hermiticity_error() < 1e-12);
            let side = cutoff + 1;
            for a in 0..4 {
                for b in 0..4 {
                    for s1 in 0..side * side {
                        for s2 in 0..side * side {
                            if s1 != s2 {
                                let v = h[(a * side * side + s1, b * side * side + s2)];
                                assert_eq!(v, ZERO);
                            }
                        }
                    }
                }
            }
        }
        assert!(build_heff(2, &m, 0.0, 0.0, 1).is_err());
    }

    #[test]
    fn heff_block_eigenfrequencies() {
        let m = modes();
        let k = 1;
        let cutoff = 3;
        let h = build_heff(k, &m, 0.2, 0.5, cutoff).unwrap();
        for n in 0..=cutoff {
            for n_r in 0..=cutoff {
                let w = sector_frequency(k, n, n_r, &m);
                let s = parity_sign(k);
                let ix = |e| heff_index(e, n, n_r, cutoff);
                // 2x2 Hermitian block eigenvalues: mean ± sqrt(diff² + |off|²)
                for (a, b) in [(DOWN_DOWN, UP_UP), (DOWN_UP, UP_DOWN)] {
                    let (haa, hbb, hab) = (h[(ix(a), ix(a))].re, h[(ix(b), ix(b))].re, h[(ix(a), ix(b))]);
                    let mean = (haa + hbb) / 2.0;
                    let rad = (((haa - hbb) / 2.0).powi(2) + hab.norm_sqr()).sqrt();
                    assert!((mean - s * w).abs() < 1e-12);
                    assert!((rad - w.abs()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ld_hamiltonian_properties() {
        let (phi, phi0) = (0.8, -1.3);
        let h = build_ld_hamiltonian(phi, phi0);
        assert!(h.hermiticity_error() < 1e-12);
        let quarter = linalg::mat_exp(&h, PI / 4.0).unwrap();
        let closed = sector_unitary(1, phi, phi0, 1.0, PI / 4.0);
        assert!(quarter.max_abs_diff(&closed) < 1e-9);
        let half = linalg::mat_exp(&h, PI / 2.0).unwrap();
        assert!((&quarter * &quarter).max_abs_diff(&half) < 1e-10);
    }

    #[test]
    fn carrier_rotation_examples() {
        assert!(carrier_rotation(Axis::Y, 0.0, 5, 0.3, 0.1).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        let rz = carrier_rotation(Axis::Z, PI, 0, 0.2, 0.0);
        // -i diag(1, -1)
        let expect = linalg::pauli_z().scale(-I);
        assert!(rz.max_abs_diff(&expect) < 1e-15);
        let theta = carrier_angle(1.0, 3, 0.2, 0.0);
        assert!((theta - laguerre(3, 0, 0.04)).abs() < 1e-15);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            assert!(carrier_rotation(axis, 2.1, 4, 0.25, 0.05).unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn oracle_evolve_basics() {
        let h = build_heff(1, &modes(), 0.1, 0.2, 2).unwrap();
        let psi = StateVec::basis(h.rows(), heff_index(DOWN_DOWN, 1, 2, 2));
        assert_eq!(oracle_evolve(&psi, &h, 0.0).unwrap(), psi);
        let out = oracle_evolve(&psi, &h, 3.3).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);
        assert!(oracle_evolve(&StateVec::basis(3, 0), &h, 1.0).is_err());
    }
}
