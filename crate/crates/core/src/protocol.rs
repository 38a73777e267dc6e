//! Teleportation pipeline: Bell-channel preparation, the one-pulse Bell
//! analyzer, readout with feed-forward correction, teleportation fidelity,
//! entanglement teleportation and entanglement swapping.
//!
//! Conventions: `Φ^± = (|↓↓⟩ ± |↑↑⟩)/√2`, `Ψ^± = (|↓↑⟩ ± |↑↓⟩)/√2`.
//! The channel produced by a `π/4` pulse from `|↓↓⟩` is
//! `(|↓↓⟩ - i e^{2iφ_B}|↑↑⟩)/√2`, which is the target of the channel
//! fidelity. Qubit `q` of a register is ion `q + 1`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, carrier_rotation, evolve_sectors, Axis, PulseSpec, SectorState};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, StateVec, Tensor, C64, I, ONE, ZERO};
use crate::motional::{self, matched_nbar_r, ModeParams, ThermalSpec, DEFAULT_TAIL_TOL};

/// Below this an outcome is treated as impossible.
const NEGLIGIBLE_PROBABILITY: f64 = 1e-14;

/// Raman phases of the two traps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub phi_a: f64,
    pub phi_b: f64,
    pub phi0_a: f64,
    pub phi0_b: f64,
}

impl PhaseConfig {
    /// `φ_0 = 3π/2`. With the matched Raman phase `φ = π/4` the analyzer maps
    /// the standard Bell basis onto the computational basis, and a swap
    /// heralds `↑↑ → Φ⁺`, `↓↓ → Φ⁻`, `↑↓ → Ψ⁺`, `↓↑ → Ψ⁻`.
    pub const DEFAULT_PHI0: f64 = 1.5 * PI;

    /// `φ_A = φ_B = π - φ_0/2` with one shared `φ_0`.
    pub fn matched(phi0: f64) -> Self {
        let phi = PI - phi0 / 2.0;
        Self {
            phi_a: phi,
            phi_b: phi,
            phi0_a: phi0,
            phi0_b: phi0,
        }
    }

    /// True when `e^{2i(φ_B-φ_A)} = 1` and `e^{i(2φ_B+φ_0)} = 1` hold to
    /// within `tol`.
    pub fn is_matched(&self, tol: f64) -> bool {
        let a = C64::from_polar(1.0, 2.0 * (self.phi_b - self.phi_a));
        let b = C64::from_polar(1.0, 2.0 * self.phi_b + self.phi0_a);
        (a - ONE).norm() < tol && (b - ONE).norm() < tol && (self.phi0_a - self.phi0_b).abs() < tol
    }

    /// Channel-preparation pulse in trap B.
    pub fn channel_pulse(&self, k: usize, epsilon: f64) -> Result<PulseSpec> {
        PulseSpec::quarter(k, self.phi_b, self.phi0_b, epsilon)
    }

    /// Analyzer pulse in trap A.
    pub fn analyzer_pulse(&self, k: usize, epsilon: f64) -> Result<PulseSpec> {
        PulseSpec::quarter(k, self.phi_a, self.phi0_a, epsilon)
    }
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self::matched(Self::DEFAULT_PHI0)
    }
}

/// State `α|↓⟩ + β|↑⟩` of the ion to be teleported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputQubit {
    pub alpha: C64,
    pub beta: C64,
}

impl InputQubit {
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if !((norm - 1.0).abs() <= 1e-12) {
            return Err(Error::NotNormalized { norm: norm.sqrt() });
        }
        Ok(Self { alpha, beta })
    }

    /// Rescales arbitrary nonzero amplitudes onto the unit sphere.
    pub fn normalized(alpha: C64, beta: C64) -> Result<Self> {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            alpha: alpha / norm,
            beta: beta / norm,
        })
    }

    /// The six cardinal Bloch states `↓, ↑, ±x, ±y` with their names.
    pub fn cardinal() -> [(&'static str, InputQubit); 6] {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let q = |alpha, beta| InputQubit { alpha, beta };
        [
            ("down", q(ONE, ZERO)),
            ("up", q(ZERO, ONE)),
            ("plus", q(h, h)),
            ("minus", q(h, -h)),
            ("plus-i", q(h, I * h)),
            ("minus-i", q(h, -I * h)),
        ]
    }

    pub fn state(&self) -> StateVec {
        StateVec::new(vec![self.alpha, self.beta])
    }

    pub fn density(&self) -> ComplexMatrix {
        self.state().density()
    }
}

/// Which input state(s) a teleportation run uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputSpec {
    Single(InputQubit),
    /// Uniform average over [`InputQubit::cardinal`].
    Average,
}

impl InputSpec {
    pub fn describe(&self) -> String {
        match self {
            InputSpec::Average => "average over six cardinal states".to_string(),
            InputSpec::Single(q) => format!(
                "alpha = {:+.6}{:+.6}i, beta = {:+.6}{:+.6}i",
                q.alpha.re, q.alpha.im, q.beta.re, q.beta.im
            ),
        }
    }
}

/// Energy-basis readout of a pair of ions; the first named ion is the most
/// significant bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    DownDown,
    DownUp,
    UpDown,
    UpUp,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::DownDown, Outcome::DownUp, Outcome::UpDown, Outcome::UpUp];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn bits(self) -> [usize; 2] {
        let i = self.index();
        [i >> 1, i & 1]
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Outcome::DownDown => "dd",
            Outcome::DownUp => "du",
            Outcome::UpDown => "ud",
            Outcome::UpUp => "uu",
        }
    }

    /// Feed-forward rotation (by `π`) that restores the teleported state.
    pub fn correction(self) -> Option<Axis> {
        match self {
            Outcome::UpUp => None,
            Outcome::DownDown => Some(Axis::Z),
            Outcome::UpDown => Some(Axis::X),
            Outcome::DownUp => Some(Axis::Y),
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [BellLabel::PhiPlus, BellLabel::PhiMinus, BellLabel::PsiPlus, BellLabel::PsiMinus];

    pub fn state(self) -> StateVec {
        let h = FRAC_1_SQRT_2;
        StateVec::from_real(&match self {
            BellLabel::PhiPlus => [h, 0.0, 0.0, h],
            BellLabel::PhiMinus => [h, 0.0, 0.0, -h],
            BellLabel::PsiPlus => [0.0, h, h, 0.0],
            BellLabel::PsiMinus => [0.0, h, -h, 0.0],
        })
    }

    /// Bell state left on the outer pair when a swap reads `outcome`.
    pub fn heralded_by(outcome: Outcome) -> Self {
        match outcome {
            Outcome::UpUp => BellLabel::PhiPlus,
            Outcome::DownDown => BellLabel::PhiMinus,
            Outcome::UpDown => BellLabel::PsiPlus,
            Outcome::DownUp => BellLabel::PsiMinus,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BellLabel::PhiPlus => "Phi+",
            BellLabel::PhiMinus => "Phi-",
            BellLabel::PsiPlus => "Psi+",
            BellLabel::PsiMinus => "Psi-",
        }
    }
}

/// `(|↓↓⟩ - i e^{2iφ}|↑↑⟩)/√2`
pub fn channel_state(phi: f64) -> StateVec {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    StateVec::new(vec![h, ZERO, ZERO, -I * C64::from_polar(1.0, 2.0 * phi) * h])
}

/// Attaches every Fock sector of `thermal` to a copy of `psi`.
pub fn thermal_sectors(psi: &StateVec, thermal: &ThermalSpec) -> Vec<SectorState> {
    thermal
        .sectors()
        .map(|(n, n_r, weight)| SectorState {
            n,
            n_r,
            n_b: 0,
            weight,
            amplitudes: psi.clone(),
        })
        .collect()
}

/// Both ions start in `|↓↓⟩` in every sector and receive `pulse`.
pub fn prepare_channel(thermal: &ThermalSpec, pulse: &PulseSpec, modes: &ModeParams) -> Result<Vec<SectorState>> {
    let start = thermal_sectors(&StateVec::basis(4, dynamics::DOWN_DOWN), thermal);
    evolve_sectors(&start, pulse, modes, 0, 1)
}

/// Sign of the reference-sector frequency; it fixes which Bell state an
/// exact pulse produces.
fn reference_sign(pulse: &PulseSpec, modes: &ModeParams) -> Result<f64> {
    let (n, n_r) = pulse.reference;
    let w = dynamics::sector_frequency(pulse.k, n, n_r, modes);
    if w == 0.0 {
        return Err(Error::ZeroReferenceFrequency);
    }
    Ok(w.signum())
}

/// Bell state an exact `pulse` produces from `|↓↓⟩` in its reference
/// sector: `(|↓↓⟩ ∓ i e^{2iφ}|↑↑⟩)/√2`.
pub fn channel_target(pulse: &PulseSpec, modes: &ModeParams) -> Result<StateVec> {
    let psi = channel_state(pulse.phi);
    if reference_sign(pulse, modes)? > 0.0 {
        Ok(psi)
    } else {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        Ok(StateVec::new(vec![h, ZERO, ZERO, -psi[dynamics::UP_UP]]))
    }
}

/// Closed form `1/2 + 1/2 Σ P_{n n_r} sin(2 Ω_{n n_r} τ)`.
///
/// `Ω_{n n_r}` carries its sign relative to the reference sector. Where the
/// effective coupling reverses sign at high occupation those sectors rotate
/// backwards; with no reversal this is the familiar `sin(2|Ω|τ)` form.
pub fn channel_fidelity(thermal: &ThermalSpec, pulse: &PulseSpec, modes: &ModeParams) -> Result<f64> {
    let tau = pulse.duration(modes)?;
    let sign = reference_sign(pulse, modes)?;
    let sum: f64 = thermal
        .sectors()
        .map(|(n, n_r, p)| p * (2.0 * sign * dynamics::sector_frequency(pulse.k, n, n_r, modes) * tau).sin())
        .sum();
    Ok(0.5 + 0.5 * sum)
}

/// Channel fidelity by evolving every sector and projecting onto
/// [`channel_target`].
pub fn channel_fidelity_pipeline(thermal: &ThermalSpec, pulse: &PulseSpec, modes: &ModeParams) -> Result<f64> {
    let target = channel_target(pulse, modes)?;
    let sectors = prepare_channel(thermal, pulse, modes)?;
    Ok(sectors
        .iter()
        .map(|s| s.weight * target.inner(&s.amplitudes).norm_sqr())
        .sum())
}

/// Ideal analyzer propagator: the Lamb-Dicke-limit `π/4` pulse in trap A.
pub fn analyzer_unitary(phases: &PhaseConfig) -> ComplexMatrix {
    dynamics::sector_unitary(1, phases.phi_a, phases.phi0_a, 1.0, FRAC_PI_4)
}

/// Applies the analyzer pulse to ions 1 and 2 of a three-ion register in
/// every sector.
pub fn analyzer_pulse(register: &[SectorState], pulse: &PulseSpec, modes: &ModeParams) -> Result<Vec<SectorState>> {
    if let Some(s) = register.iter().find(|s| s.amplitudes.dim() != 8) {
        return Err(Error::DimensionMismatch {
            expected: 8,
            found: s.amplitudes.dim(),
        });
    }
    evolve_sectors(register, pulse, modes, 0, 1)
}

/// One readout result with the conditional state of the unmeasured ions.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub outcome: Outcome,
    pub probability: f64,
    /// Normalized density operator of the remaining ions; `None` when the
    /// outcome cannot occur.
    pub state: Option<ComplexMatrix>,
}

/// Projective energy-basis readout of the qubits `measured` in every sector;
/// conditional states are mixed over sectors with posterior weights.
pub fn measure_and_condition(register: &[SectorState], measured: (usize, usize)) -> Result<[Branch; 4]> {
    let first = register.first().ok_or(Error::Empty)?;
    let rest_dim = first.amplitudes.dim() / 4;
    for s in register {
        let norm = s.amplitudes.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { norm });
        }
    }
    let mut branches = Outcome::ALL.map(|outcome| Branch {
        outcome,
        probability: 0.0,
        state: None,
    });
    for b in branches.iter_mut() {
        let mut rho = ComplexMatrix::zeros(rest_dim, rest_dim);
        let mut p = 0.0;
        for s in register {
            let proj = linalg::project_qubits(&s.amplitudes, &[measured.0, measured.1], &b.outcome.bits())?;
            let w = s.weight;
            p += w * proj.norm_sqr();
            rho = &rho + &proj.density().scale(C64::new(w, 0.0));
        }
        if p > NEGLIGIBLE_PROBABILITY {
            b.probability = p;
            b.state = Some(rho.scale(C64::new(1.0 / p, 0.0)));
        }
    }
    Ok(branches)
}

/// Single-ion trap hosting the receiving ion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapB {
    pub nbar: f64,
    pub eta: f64,
    pub cutoff: usize,
}

impl TrapB {
    pub fn with_tail_tol(nbar: f64, eta: f64, tail_tol: f64) -> Self {
        Self {
            nbar,
            eta,
            cutoff: motional::cutoff_for(nbar, tail_tol),
        }
    }

    pub fn ground(eta: f64) -> Self {
        Self { nbar: 0.0, eta, cutoff: 0 }
    }

    pub fn weights(&self) -> Vec<f64> {
        motional::single_mode_weights(self.nbar, self.cutoff)
    }
}

/// Applies the feed-forward rotation for `outcome` to qubit `target` of a
/// density operator, mixed over the thermal occupation of trap B. The
/// inverse rotation is a `-π` carrier pulse; `↑↑` needs no pulse.
pub fn apply_correction(
    rho: &ComplexMatrix,
    target: usize,
    outcome: Outcome,
    trap_b: &TrapB,
    epsilon: f64,
) -> Result<ComplexMatrix> {
    let Some(axis) = outcome.correction() else {
        return Ok(rho.clone());
    };
    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for (n_b, w) in trap_b.weights().into_iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let r = carrier_rotation(axis, -PI, n_b, trap_b.eta, epsilon);
        let rotated = linalg::conjugate_single_qubit(rho, target, &r)?;
        out = &out + &rotated.scale(C64::new(w, 0.0));
    }
    Ok(out)
}

/// Correction of the single receiving ion.
pub fn correct_ion3(outcome: Outcome, rho: &ComplexMatrix, trap_b: &TrapB, epsilon: f64) -> Result<ComplexMatrix> {
    if rho.rows() != 2 || rho.cols() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: rho.rows(),
        });
    }
    apply_correction(rho, 0, outcome, trap_b, epsilon)
}

/// Physical configuration of one teleportation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeleportParams {
    pub modes: ModeParams,
    pub nbar: f64,
    pub nbar_r: f64,
    pub trap_b: TrapB,
    pub epsilon: f64,
    pub k: usize,
    pub phases: PhaseConfig,
    pub tail_tol: f64,
    /// Overrides the trap-A cutoff derived from `tail_tol`.
    pub cutoff: Option<usize>,
}

impl TeleportParams {
    /// Trap A at `nbar` with the stretch mode at the same temperature, trap B
    /// thermalized to that temperature with the centre-of-mass Lamb-Dicke
    /// parameter, default phases.
    pub fn new(eta: f64, nbar: f64, epsilon: f64) -> Result<Self> {
        let modes = ModeParams::with_eta(eta)?;
        Self::with_modes(modes, nbar, epsilon)
    }

    pub fn with_modes(modes: ModeParams, nbar: f64, epsilon: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::param("nbar", format!("must be >= 0, got {nbar}")));
        }
        if !(epsilon > -1.0 && epsilon < 1.0) {
            return Err(Error::param("epsilon", format!("must satisfy |eps| < 1, got {epsilon}")));
        }
        Ok(Self {
            modes,
            nbar,
            nbar_r: matched_nbar_r(nbar, modes.nu_ratio),
            trap_b: TrapB::with_tail_tol(nbar, modes.eta, DEFAULT_TAIL_TOL),
            epsilon,
            k: 1,
            phases: PhaseConfig::default(),
            tail_tol: DEFAULT_TAIL_TOL,
            cutoff: None,
        })
    }

    /// Replaces the truncation policy of both traps.
    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = Some(cutoff);
        self.trap_b.cutoff = cutoff;
        self
    }

    pub fn thermal_a(&self) -> Result<ThermalSpec> {
        match self.cutoff {
            Some(c) => ThermalSpec::new(self.nbar, self.nbar_r, c),
            None => ThermalSpec::with_tail_tol(self.nbar, self.nbar_r, self.tail_tol),
        }
    }

    fn echo(&self, thermal: &ThermalSpec) -> ParamsEcho {
        ParamsEcho {
            nbar: self.nbar,
            nbar_r: self.nbar_r,
            nbar_b: self.trap_b.nbar,
            eta: self.modes.eta,
            eta_r: self.modes.eta_r,
            eta_b: self.trap_b.eta,
            epsilon: self.epsilon,
            k: self.k,
            phases: self.phases,
            cutoff_a: thermal.cutoff(),
            cutoff_b: self.trap_b.cutoff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub nbar: f64,
    pub nbar_r: f64,
    pub nbar_b: f64,
    pub eta: f64,
    pub eta_r: f64,
    pub eta_b: f64,
    pub epsilon: f64,
    pub k: usize,
    pub phases: PhaseConfig,
    pub cutoff_a: usize,
    pub cutoff_b: usize,
}

/// Outcome-resolved teleportation fidelity for one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub outcomes: [Outcome; 4],
    pub outcome_probs: [f64; 4],
    /// `None` for outcomes that cannot occur.
    pub outcome_fidelities: [Option<f64>; 4],
    pub aggregate: f64,
    pub params: ParamsEcho,
    pub input: String,
}

/// Per-outcome record of one teleportation run.
#[derive(Clone, Debug, PartialEq)]
pub struct TeleportBranch {
    pub outcome: Outcome,
    pub probability: f64,
    /// Receiving-ion state before correction.
    pub measured_state: Option<ComplexMatrix>,
    pub correction: Option<Axis>,
    pub corrected_state: Option<ComplexMatrix>,
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeleportRun {
    pub branches: [TeleportBranch; 4],
    pub thermal: ThermalSpec,
}

impl TeleportRun {
    pub fn aggregate(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.probability * b.fidelity.unwrap_or(0.0))
            .sum()
    }
}

/// Runs analyzer, readout and correction for one input qubit with an ideal
/// channel on ions 2 and 3.
pub fn teleport(input: &InputQubit, params: &TeleportParams) -> Result<TeleportRun> {
    let thermal = params.thermal_a()?;
    let register = input.state().tensor(&channel_state(params.phases.phi_b))?;
    teleport_register(&register, input.density(), &thermal, params, (0, 1), 0)
        .map(|branches| TeleportRun { branches, thermal })
}

fn teleport_register(
    register: &StateVec,
    ideal: ComplexMatrix,
    thermal: &ThermalSpec,
    params: &TeleportParams,
    analyzer_pair: (usize, usize),
    target: usize,
) -> Result<[TeleportBranch; 4]> {
    let pulse = params.phases.analyzer_pulse(params.k, params.epsilon)?;
    let sectors = thermal_sectors(register, thermal);
    let evolved = evolve_sectors(&sectors, &pulse, &params.modes, analyzer_pair.0, analyzer_pair.1)?;
    let branches = measure_and_condition(&evolved, analyzer_pair)?;
    let mut out = Vec::with_capacity(4);
    for b in branches {
        let (corrected, fidelity) = match &b.state {
            Some(rho) => {
                let c = apply_correction(rho, target, b.outcome, &params.trap_b, params.epsilon)?;
                let f = linalg::fidelity(&ideal, &c)?;
                (Some(c), Some(f))
            }
            None => (None, None),
        };
        out.push(TeleportBranch {
            outcome: b.outcome,
            probability: b.probability,
            measured_state: b.state,
            correction: b.outcome.correction(),
            corrected_state: corrected,
            fidelity,
        });
    }
    Ok(out.try_into().expect("four outcomes"))
}

fn report_from_runs(runs: &[[TeleportBranch; 4]], echo: ParamsEcho, input: String) -> FidelityReport {
    let count = runs.len() as f64;
    let mut probs = [0.0; 4];
    let mut fids = [None; 4];
    for o in 0..4 {
        let (mut p_sum, mut pf_sum, mut any) = (0.0, 0.0, false);
        for r in runs {
            if let Some(f) = r[o].fidelity {
                any = true;
                pf_sum += r[o].probability * f;
            }
            p_sum += r[o].probability;
        }
        probs[o] = p_sum / count;
        if any && p_sum > 0.0 {
            fids[o] = Some(pf_sum / p_sum);
        }
    }
    let aggregate = probs
        .iter()
        .zip(&fids)
        .map(|(p, f)| p * f.unwrap_or(0.0))
        .sum();
    FidelityReport {
        outcomes: Outcome::ALL,
        outcome_probs: probs,
        outcome_fidelities: fids,
        aggregate,
        params: echo,
        input,
    }
}

/// Aggregate teleportation fidelity `Σ_o p_o Tr{ρ_ideal ρ'_o}`.
///
/// For [`InputSpec::Average`] the outcome probabilities are averaged over the
/// six cardinal states and each outcome fidelity is probability-weighted, so
/// the aggregate is the mean of the per-state aggregates.
pub fn teleport_fidelity(input: &InputSpec, params: &TeleportParams) -> Result<FidelityReport> {
    let thermal = params.thermal_a()?;
    let inputs: Vec<InputQubit> = match input {
        InputSpec::Single(q) => vec![*q],
        InputSpec::Average => InputQubit::cardinal().iter().map(|(_, q)| *q).collect(),
    };
    let runs = inputs
        .iter()
        .map(|q| {
            let register = q.state().tensor(&channel_state(params.phases.phi_b))?;
            teleport_register(&register, q.density(), &thermal, params, (0, 1), 0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_runs(&runs, params.echo(&thermal), input.describe()))
}

/// Teleports an arbitrary two-ion state of ions 1 and 2 onto ions 1 and 4
/// through an ideal channel on ions 3 and 4. The analyzer acts on ions 2 and
/// 3 in trap A; ion 1 is never touched.
pub fn entanglement_teleport(input: &StateVec, params: &TeleportParams) -> Result<FidelityReport> {
    if input.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: input.dim(),
        });
    }
    let norm = input.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm });
    }
    let thermal = params.thermal_a()?;
    let register = input.tensor(&channel_state(params.phases.phi_b))?;
    let run = teleport_register(&register, input.density(), &thermal, params, (1, 2), 1)?;
    Ok(report_from_runs(
        &[run],
        params.echo(&thermal),
        "two-ion entangled input on ions 1, 2".to_string(),
    ))
}

/// Configuration of an entanglement-swapping run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapParams {
    pub modes: ModeParams,
    /// Occupation of the trap holding ions 2 and 3.
    pub nbar: f64,
    pub nbar_r: f64,
    pub epsilon: f64,
    pub phases: PhaseConfig,
    pub tail_tol: f64,
    pub cutoff: Option<usize>,
    /// Use the motion-independent Lamb-Dicke-limit Hamiltonian.
    pub lamb_dicke_limit: bool,
}

impl SwapParams {
    pub fn ideal(eta: f64) -> Result<Self> {
        let mut p = Self::thermal(eta, 0.0, 0.0)?;
        p.lamb_dicke_limit = true;
        Ok(p)
    }

    pub fn thermal(eta: f64, nbar: f64, epsilon: f64) -> Result<Self> {
        let modes = ModeParams::with_eta(eta)?;
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::param("nbar", format!("must be >= 0, got {nbar}")));
        }
        Ok(Self {
            modes,
            nbar,
            nbar_r: matched_nbar_r(nbar, modes.nu_ratio),
            epsilon,
            phases: PhaseConfig::default(),
            tail_tol: DEFAULT_TAIL_TOL,
            cutoff: None,
            lamb_dicke_limit: false,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapOutcome {
    pub outcome: Outcome,
    pub label: BellLabel,
    pub probability: f64,
    /// State of ions 1 and 4.
    pub state: Option<ComplexMatrix>,
    pub fidelity: Option<f64>,
}

/// `|Φ⁺⟩₁₂|Φ⁺⟩₃₄`, analyzer pulse on ions 2 and 3, readout of ions 2 and 3.
pub fn entanglement_swap(params: &SwapParams) -> Result<[SwapOutcome; 4]> {
    let phi_plus = BellLabel::PhiPlus.state();
    let register = phi_plus.tensor(&phi_plus)?;
    let evolved = if params.lamb_dicke_limit {
        let h = dynamics::build_ld_hamiltonian(params.phases.phi_a, params.phases.phi0_a);
        let u = linalg::mat_exp(&h, (1.0 + params.epsilon) * FRAC_PI_4)?;
        vec![SectorState {
            n: 0,
            n_r: 0,
            n_b: 0,
            weight: 1.0,
            amplitudes: linalg::apply_two_qubit(&register, 1, 2, &u)?,
        }]
    } else {
        let thermal = match params.cutoff {
            Some(c) => ThermalSpec::new(params.nbar, params.nbar_r, c)?,
            None => ThermalSpec::with_tail_tol(params.nbar, params.nbar_r, params.tail_tol)?,
        };
        let pulse = params.phases.analyzer_pulse(1, params.epsilon)?;
        evolve_sectors(&thermal_sectors(&register, &thermal), &pulse, &params.modes, 1, 2)?
    };
    let branches = measure_and_condition(&evolved, (1, 2))?;
    let out = branches
        .into_iter()
        .map(|b| {
            let label = BellLabel::heralded_by(b.outcome);
            let fidelity = match &b.state {
                Some(rho) => Some(linalg::fidelity(&label.state().density(), rho)?),
                None => None,
            };
            Ok(SwapOutcome {
                outcome: b.outcome,
                label,
                probability: b.probability,
                state: b.state,
                fidelity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.try_into().expect("four outcomes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal_params() -> TeleportParams {
        TeleportParams::new(0.15, 0.0, 0.0).unwrap()
    }

    #[test]
    fn default_phases_are_matched() {
        let p = PhaseConfig::default();
        assert!(p.is_matched(1e-12));
        assert!((p.phi_a - FRAC_PI_4).abs() < 1e-15);
        assert!(PhaseConfig::matched(0.37).is_matched(1e-12));
        let off = PhaseConfig { phi_b: 0.1, ..p };
        assert!(!off.is_matched(1e-6));
    }

    #[test]
    fn input_qubit_validation() {
        assert!(InputQubit::new(ONE, ONE).is_err());
        assert!(InputQubit::normalized(ZERO, ZERO).is_err());
        let q = InputQubit::normalized(C64::new(3.0, 0.0), C64::new(0.0, 4.0)).unwrap();
        assert!((q.alpha.re - 0.6).abs() < 1e-15 && (q.beta.im - 0.8).abs() < 1e-15);
        for (_, q) in InputQubit::cardinal() {
            assert!(InputQubit::new(q.alpha, q.beta).is_ok());
        }
    }

    #[test]
    fn ground_state_channel_is_exact() {
        let modes = ModeParams::with_eta(0.2).unwrap();
        let pulse = PhaseConfig::default().channel_pulse(1, 0.0).unwrap();
        let thermal = ThermalSpec::ground();
        let sectors = prepare_channel(&thermal, &pulse, &modes).unwrap();
        assert_eq!(sectors.len(), 1);
        let target = channel_state(pulse.phi);
        assert!((target.inner(&sectors[0].amplitudes).norm() - 1.0).abs() < 1e-14);
        assert!((channel_fidelity(&thermal, &pulse, &modes).unwrap() - 1.0).abs() < 1e-15);
        // the second sideband produces the partner state with +i
        let pulse = PhaseConfig::default().channel_pulse(2, 0.0).unwrap();
        let out = prepare_channel(&thermal, &pulse, &modes).unwrap();
        let plus = channel_target(&pulse, &modes).unwrap();
        assert!((plus[dynamics::UP_UP] + target[dynamics::UP_UP]).norm() < 1e-15);
        assert!((plus.inner(&out[0].amplitudes).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn channel_keeps_even_parity() {
        let modes = ModeParams::with_eta(0.2).unwrap();
        let pulse = PhaseConfig::default().channel_pulse(1, 0.03).unwrap();
        let thermal = ThermalSpec::new(1.0, 0.43, 8).unwrap();
        for s in prepare_channel(&thermal, &pulse, &modes).unwrap() {
            assert_eq!(s.amplitudes[dynamics::DOWN_UP], ZERO);
            assert_eq!(s.amplitudes[dynamics::UP_DOWN], ZERO);
        }
    }

    #[test]
    fn excited_sector_rotation_angle() {
        let modes = ModeParams::with_eta(0.2).unwrap();
        let pulse = PhaseConfig::default().channel_pulse(1, 0.0).unwrap();
        let thermal = ThermalSpec::new(1.0, 1.0, 3).unwrap();
        let w00 = motional::rabi_frequency(1, 0, 0, &modes);
        for s in prepare_channel(&thermal, &pulse, &modes).unwrap() {
            let angle = FRAC_PI_4 * motional::rabi_frequency(1, s.n, s.n_r, &modes) / w00;
            let a = s.amplitudes[dynamics::DOWN_DOWN].norm();
            let b = s.amplitudes[dynamics::UP_UP].norm();
            assert!((a - angle.cos().abs()).abs() < 1e-12);
            assert!((b - angle.sin().abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_and_pipeline_agree() {
        for &(k, eta, nbar) in &[(1, 0.15, 0.2), (1, 0.2, 1.0), (1, 0.2, 5.0), (1, 0.1, 2.0), (2, 0.2, 1.0)] {
            let modes = ModeParams::with_eta(eta).unwrap();
            let thermal = ThermalSpec::with_tail_tol(nbar, matched_nbar_r(nbar, modes.nu_ratio), 1e-6).unwrap();
            let pulse = PhaseConfig::matched(0.4).channel_pulse(k, 0.0).unwrap();
            let a = channel_fidelity(&thermal, &pulse, &modes).unwrap();
            let b = channel_fidelity_pipeline(&thermal, &pulse, &modes).unwrap();
            assert!((a - b).abs() < 1e-9, "eta {eta} nbar {nbar}: {a} vs {b}");
        }
    }

    #[test]
    fn ideal_analyzer_reproduces_four_branches() {
        let phases = PhaseConfig::matched(0.9);
        let pulse = phases.analyzer_pulse(1, 0.0).unwrap();
        let modes = ModeParams::with_eta(0.15).unwrap();
        let q = InputQubit::normalized(C64::new(0.3, 0.2), C64::new(-0.5, 0.7)).unwrap();
        let register = q.state().tensor(&channel_state(phases.phi_b)).unwrap();
        let out = analyzer_pulse(&thermal_sectors(&register, &ThermalSpec::ground()), &pulse, &modes).unwrap();
        let branches = measure_and_condition(&out, (0, 1)).unwrap();
        let (a, b) = (q.alpha, q.beta);
        let expected = |o: Outcome| match o {
            Outcome::UpUp => [a, b],
            Outcome::DownDown => [a, -b],
            Outcome::UpDown => [b, a],
            Outcome::DownUp => [b, -a],
        };
        for br in &branches {
            assert!((br.probability - 0.25).abs() < 1e-12);
            let ideal = StateVec::new(expected(br.outcome).to_vec()).density();
            let f = linalg::fidelity(&ideal, br.state.as_ref().unwrap()).unwrap();
            assert!((f - 1.0).abs() < 1e-12, "{:?}", br.outcome);
        }
    }

    #[test]
    fn down_input_leaves_uu_branch_down() {
        let q = InputQubit::new(ONE, ZERO).unwrap();
        let run = teleport(&q, &ideal_params()).unwrap();
        let uu = run.branches[Outcome::UpUp.index()].measured_state.as_ref().unwrap();
        assert!((uu[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_completeness_thermal() {
        let mut params = TeleportParams::new(0.2, 0.15, 0.05).unwrap();
        params.phases = PhaseConfig::matched(1.3);
        let q = InputQubit::normalized(C64::new(0.8, 0.1), C64::new(0.2, -0.4)).unwrap();
        let run = teleport(&q, &params).unwrap();
        let total: f64 = run.branches.iter().map(|b| b.probability).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_probability_branch_is_flagged() {
        // |↓↓↓> with no pulse: only the dd outcome is possible
        let reg = vec![SectorState {
            n: 0,
            n_r: 0,
            n_b: 0,
            weight: 1.0,
            amplitudes: StateVec::basis(8, 0),
        }];
        let branches = measure_and_condition(&reg, (0, 1)).unwrap();
        assert_eq!(branches[0].probability, 1.0);
        for b in &branches[1..] {
            assert_eq!(b.probability, 0.0);
            assert!(b.state.is_none());
        }
    }

    #[test]
    fn corrections() {
        let q = InputQubit::normalized(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        let ideal = q.density();
        let trap = TrapB::ground(0.15);
        // uu: no pulse at all, even with imprecision
        let out = correct_ion3(Outcome::UpUp, &ideal, &trap, 0.3).unwrap();
        assert_eq!(out, ideal);
        // dd: ion 3 holds α|↓> - β|↑>
        let flipped = StateVec::new(vec![q.alpha, -q.beta]).density();
        let out = correct_ion3(Outcome::DownDown, &flipped, &trap, 0.0).unwrap();
        assert!((linalg::fidelity(&ideal, &out).unwrap() - 1.0).abs() < 1e-14);
        // ud with thermal trap B and 5% imprecision
        let swapped = StateVec::new(vec![q.beta, q.alpha]).density();
        let trap = TrapB::with_tail_tol(0.2, 0.15, 1e-9);
        let out = correct_ion3(Outcome::UpDown, &swapped, &trap, 0.05).unwrap();
        let f = linalg::fidelity(&ideal, &out).unwrap();
        // oracle: Σ P(n) |<ψ|R|Xψ>|² with R = cos(θ/2) I + i sin(θ/2) X
        let mut oracle = 0.0;
        for (n, w) in trap.weights().into_iter().enumerate() {
            let theta = PI * 1.05 * motional::laguerre(n, 0, 0.0225);
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            let psi = [c * q.beta + I * s * q.alpha, c * q.alpha + I * s * q.beta];
            let amp = (q.alpha.conj() * psi[0] + q.beta.conj() * psi[1]).norm_sqr();
            oracle += w * amp;
        }
        assert!((f - oracle).abs() < 1e-12);
        assert!(f < 1.0 && f > 0.97, "{f}");
        assert!(correct_ion3(Outcome::UpDown, &ComplexMatrix::identity(4), &trap, 0.0).is_err());
    }

    #[test]
    fn ideal_teleport_is_perfect() {
        let q = InputQubit::normalized(C64::new(0.1, -0.9), C64::new(0.4, 0.2)).unwrap();
        let r = teleport_fidelity(&InputSpec::Single(q), &ideal_params()).unwrap();
        assert!((r.aggregate - 1.0).abs() < 1e-12);
        for p in r.outcome_probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let avg = teleport_fidelity(&InputSpec::Average, &ideal_params()).unwrap();
        assert!((avg.aggregate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_aggregate_is_weighted_sum() {
        let params = TeleportParams::new(0.25, 0.2, 0.05).unwrap();
        for input in [InputSpec::Average, InputSpec::Single(InputQubit::cardinal()[2].1)] {
            let r = teleport_fidelity(&input, &params).unwrap();
            let s: f64 = r.outcome_probs.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            let agg: f64 = r
                .outcome_probs
                .iter()
                .zip(&r.outcome_fidelities)
                .map(|(p, f)| p * f.unwrap())
                .sum();
            assert!((agg - r.aggregate).abs() < 1e-14);
            assert!(r.aggregate < 1.0);
        }
    }

    #[test]
    fn average_is_mean_of_cardinals() {
        let params = TeleportParams::new(0.2, 0.1, 0.05).unwrap();
        let avg = teleport_fidelity(&InputSpec::Average, &params).unwrap().aggregate;
        let mean: f64 = InputQubit::cardinal()
            .iter()
            .map(|(_, q)| teleport_fidelity(&InputSpec::Single(*q), &params).unwrap().aggregate)
            .sum::<f64>()
            / 6.0;
        assert!((avg - mean).abs() < 1e-14);
    }

    #[test]
    fn swap_ideal_heralds_bell_pairs() {
        let out = entanglement_swap(&SwapParams::ideal(0.15).unwrap()).unwrap();
        for o in &out {
            assert!((o.probability - 0.25).abs() < 1e-10);
            assert!((o.fidelity.unwrap() - 1.0).abs() < 1e-12, "{:?}", o.outcome);
        }
        assert_eq!(out[Outcome::UpUp.index()].label, BellLabel::PhiPlus);
        assert_eq!(out[Outcome::DownDown.index()].label, BellLabel::PhiMinus);
        assert_eq!(out[Outcome::UpDown.index()].label, BellLabel::PsiPlus);
        assert_eq!(out[Outcome::DownUp.index()].label, BellLabel::PsiMinus);
    }

    #[test]
    fn swap_thermal_degrades() {
        let out = entanglement_swap(&SwapParams::thermal(0.2, 0.2, 0.0).unwrap()).unwrap();
        let total: f64 = out.iter().map(|o| o.probability).sum();
        assert!((total - 1.0).abs() < 1e-10);
        for o in &out {
            let f = o.fidelity.unwrap();
            assert!(f < 1.0 && f > 0.9, "{f}");
        }
    }

    #[test]
    fn entanglement_teleport_ideal() {
        let params = ideal_params();
        let phi = BellLabel::PhiPlus.state();
        let r = entanglement_teleport(&phi, &params).unwrap();
        assert!((r.aggregate - 1.0).abs() < 1e-12);
        assert!(entanglement_teleport(&StateVec::basis(2, 0), &params).is_err());
    }

    #[test]
    fn entanglement_teleport_product_reduces_to_single() {
        // ion 1 in |↑>, ion 2 carries q: fidelity equals single-qubit teleport of q
        let params = TeleportParams::new(0.2, 0.15, 0.05).unwrap();
        let q = InputQubit::normalized(C64::new(0.3, 0.1), C64::new(0.2, 0.9)).unwrap();
        let input = StateVec::basis(2, 1).tensor(&q.state()).unwrap();
        let two = entanglement_teleport(&input, &params).unwrap();
        let one = teleport_fidelity(&InputSpec::Single(q), &params).unwrap();
        assert!((two.aggregate - one.aggregate).abs() < 1e-12);
        for o in 0..4 {
            assert!((two.outcome_probs[o] - one.outcome_probs[o]).abs() < 1e-12);
        }
    }
}
