//! Line-oriented pulse scripts.
//!
//! ```text
//! # Bell channel in trap B, analyzer in trap A, readout
//! pulse ions=2,3 k=1 area=pi/4 phi=pi/4 phi0=3*pi/2 eps=0 nbar=0
//! pulse ions=1,2 k=1 area=pi/4 phi=pi/4 phi0=3*pi/2 eps=0
//! measure ions=1,2
//! ```
//!
//! Ions are numbered from 1. `nbar` is optional on a pulse and sets the
//! thermal occupation of the pair's trap the first time that pair is driven.
//! `measure` ends the script; if exactly one ion is left unmeasured it
//! receives the feed-forward correction for the observed outcome.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ionsim::dynamics::{self, Axis, PulseSpec, SectorState};
use ionsim::linalg::{self, ComplexMatrix, StateVec, Tensor};
use ionsim::motional::{matched_nbar_r, ModeParams, ThermalSpec};
use ionsim::protocol::{self, InputQubit, Outcome, TrapB};

use crate::config::parse_real;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {message} (at `{token}`)")]
pub struct ScriptError {
    pub line: usize,
    pub column: usize,
    pub token: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    Pulse {
        ions: (usize, usize),
        k: usize,
        area: f64,
        phi: f64,
        phi0: f64,
        eps: f64,
        nbar: Option<f64>,
    },
    Rotate {
        ion: usize,
        axis: Axis,
        angle: f64,
    },
    Measure {
        ions: (usize, usize),
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Located {
    pub line: usize,
    pub statement: Statement,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PulseScript {
    pub statements: Vec<Located>,
}

impl PulseScript {
    /// Number of ions the script addresses (at least the largest index used).
    pub fn ion_count(&self) -> usize {
        self.statements
            .iter()
            .map(|s| match s.statement {
                Statement::Pulse { ions, .. } | Statement::Measure { ions } => ions.0.max(ions.1),
                Statement::Rotate { ion, .. } => ion,
            })
            .max()
            .unwrap_or(0)
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

fn err(line: usize, tok: &Token<'_>, message: impl Into<String>) -> ScriptError {
    ScriptError {
        line,
        column: tok.column,
        token: tok.text.to_string(),
        message: message.into(),
    }
}

fn parse_ions(line: usize, tok: &Token<'_>, value: &str) -> Result<Vec<usize>, ScriptError> {
    let ions = value
        .split(',')
        .map(|v| v.trim().parse::<usize>().ok().filter(|&i| i >= 1))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| err(line, tok, "ion numbers must be integers >= 1"))?;
    Ok(ions)
}

fn ion_pair(line: usize, tok: &Token<'_>, ions: &[usize], op: &str) -> Result<(usize, usize), ScriptError> {
    match ions {
        [a, b] if a != b => Ok((*a, *b)),
        [_, _] => Err(err(line, tok, format!("{op} requires two distinct ions"))),
        _ => Err(err(line, tok, format!("{op} requires two ions"))),
    }
}

const PULSE_KEYS: &[&str] = &["ions", "k", "area", "phi", "phi0", "eps", "nbar"];
const ROTATE_KEYS: &[&str] = &["ion", "axis", "angle"];
const MEASURE_KEYS: &[&str] = &["ions"];

fn parse_statement(line: usize, tokens: &[Token<'_>]) -> Result<Statement, ScriptError> {
    let head = &tokens[0];
    let allowed = match head.text {
        "pulse" => PULSE_KEYS,
        "rotate" => ROTATE_KEYS,
        "measure" => MEASURE_KEYS,
        other => {
            return Err(err(
                line,
                head,
                format!("unknown statement `{other}` (expected pulse, rotate or measure)"),
            ))
        }
    };
    let mut values: BTreeMap<&str, (&str, &Token<'_>)> = BTreeMap::new();
    let mut ions = None;
    for tok in &tokens[1..] {
        let (key, value) = tok
            .text
            .split_once('=')
            .ok_or_else(|| err(line, tok, "expected key=value"))?;
        if !allowed.contains(&key) {
            return Err(err(line, tok, format!("unknown key `{key}` for {}", head.text)));
        }
        if values.insert(key, (value, tok)).is_some() {
            return Err(err(line, tok, format!("duplicate key `{key}`")));
        }
        if key == "ions" {
            let list = parse_ions(line, tok, value)?;
            ions = Some(ion_pair(line, tok, &list, head.text)?);
        }
    }
    let real = |key: &str| -> Result<Option<f64>, ScriptError> {
        values
            .get(key)
            .map(|(v, tok)| parse_real(v).map_err(|e| err(line, tok, e.to_string())))
            .transpose()
    };
    let required = |key: &str| -> Result<f64, ScriptError> {
        real(key)?.ok_or_else(|| err(line, head, format!("{} missing `{key}`", head.text)))
    };
    let ions = || ions.ok_or_else(|| err(line, head, format!("{} missing `ions`", head.text)));
    match head.text {
        "pulse" => {
            let pair = ions()?;
            let k = match values.get("k") {
                Some((v, tok)) => v
                    .parse::<usize>()
                    .map_err(|_| err(line, tok, "k must be a non-negative integer"))?,
                None => return Err(err(line, head, "pulse missing `k`")),
            };
            let area = required("area")?;
            if !(area > 0.0) {
                return Err(err(line, values["area"].1, "area must be positive"));
            }
            let eps = real("eps")?.unwrap_or(0.0);
            if !(eps.abs() < 1.0) {
                return Err(err(line, values["eps"].1, "eps must satisfy |eps| < 1"));
            }
            let nbar = real("nbar")?;
            if let Some(n) = nbar {
                if n < 0.0 {
                    return Err(err(line, values["nbar"].1, "nbar must be >= 0"));
                }
            }
            Ok(Statement::Pulse {
                ions: pair,
                k,
                area,
                phi: required("phi")?,
                phi0: required("phi0")?,
                eps,
                nbar,
            })
        }
        "rotate" => {
            let ion = match values.get("ion") {
                Some((v, tok)) => v
                    .parse::<usize>()
                    .ok()
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| err(line, tok, "rotate requires one ion number >= 1"))?,
                None => return Err(err(line, head, "rotate missing `ion`")),
            };
            let axis = match values.get("axis") {
                Some((v, tok)) => v.parse::<Axis>().map_err(|e| err(line, tok, e.to_string()))?,
                None => return Err(err(line, head, "rotate missing `axis`")),
            };
            Ok(Statement::Rotate {
                ion,
                axis,
                angle: required("angle")?,
            })
        }
        _ => Ok(Statement::Measure { ions: ions()? }),
    }
}

pub fn parse_pulse_script(text: &str) -> Result<PulseScript, ScriptError> {
    let mut statements: Vec<Located> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let tokens = tokenize(body);
        if tokens.is_empty() {
            continue;
        }
        if let Some(prev) = statements.last() {
            if matches!(prev.statement, Statement::Measure { .. }) {
                return Err(err(line, &tokens[0], "no statement may follow measure"));
            }
        }
        statements.push(Located {
            line,
            statement: parse_statement(line, &tokens)?,
        });
    }
    Ok(PulseScript { statements })
}

/// Physical settings the script does not spell out.
#[derive(Clone, Debug)]
pub struct ScriptContext {
    pub modes: ModeParams,
    /// Occupation of a pair's trap when its first pulse gives no `nbar`.
    pub nbar: f64,
    pub tail_tol: f64,
    pub cutoff: Option<usize>,
    /// Trap and imprecision of the automatic correction pulse.
    pub trap_b: TrapB,
    pub correction_eps: f64,
}

#[derive(Clone, Debug)]
struct Member {
    /// Fock labels `(n, n_r)` of each driven pair, keyed by sorted ion pair.
    labels: BTreeMap<(usize, usize), (usize, usize)>,
    weight: f64,
    amplitudes: StateVec,
}

/// Readout branch of a script run.
#[derive(Clone, Debug)]
pub struct ScriptBranch {
    pub outcome: Outcome,
    pub probability: f64,
    pub correction: Option<Axis>,
    /// State of the unmeasured ions after any correction.
    pub state: Option<ComplexMatrix>,
    /// Overlap with the input qubit when a single ion remains.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ScriptRun {
    pub ions: usize,
    /// Present when the script ends in `measure`.
    pub branches: Option<Vec<ScriptBranch>>,
    /// Mixed electronic state when the script has no readout.
    pub final_state: Option<ComplexMatrix>,
}

impl ScriptRun {
    /// `Σ p_o F_o`; `None` unless every possible outcome has a fidelity.
    pub fn aggregate_fidelity(&self) -> Option<f64> {
        let mut total = 0.0;
        for b in self.branches.as_ref()? {
            match b.fidelity {
                Some(f) => total += b.probability * f,
                None if b.probability == 0.0 => {}
                None => return None,
            }
        }
        Some(total)
    }
}

fn thermal_for(ctx: &ScriptContext, nbar: f64) -> anyhow::Result<ThermalSpec> {
    let nbar_r = matched_nbar_r(nbar, ctx.modes.nu_ratio);
    Ok(match ctx.cutoff {
        Some(c) => ThermalSpec::new(nbar, nbar_r, c)?,
        None => ThermalSpec::with_tail_tol(nbar, nbar_r, ctx.tail_tol)?,
    })
}

/// Runs `script` with ion 1 prepared in `input` and every other ion in `|↓⟩`.
pub fn execute(script: &PulseScript, input: &InputQubit, ctx: &ScriptContext) -> anyhow::Result<ScriptRun> {
    let ions = script.ion_count().max(1);
    let mut start = input.state();
    for _ in 1..ions {
        start = start.tensor(&StateVec::basis(2, 0))?;
    }
    let mut ensemble = vec![Member {
        labels: BTreeMap::new(),
        weight: 1.0,
        amplitudes: start,
    }];
    for located in &script.statements {
        let at = |e: anyhow::Error| e.context(format!("line {}", located.line));
        match &located.statement {
            Statement::Pulse {
                ions: (a, b),
                k,
                area,
                phi,
                phi0,
                eps,
                nbar,
            } => {
                let pulse = PulseSpec::new(*k, *phi, *phi0, *area, *eps).map_err(|e| at(e.into()))?;
                let key = ((*a).min(*b), (*a).max(*b));
                let mut next = Vec::new();
                for m in ensemble {
                    let sectors: Vec<((usize, usize), f64)> = match m.labels.get(&key) {
                        Some(&label) => vec![(label, 1.0)],
                        None => thermal_for(ctx, nbar.unwrap_or(ctx.nbar))
                            .map_err(at)?
                            .sectors()
                            .map(|(n, n_r, w)| ((n, n_r), w))
                            .collect(),
                    };
                    for ((n, n_r), w) in sectors {
                        let u = dynamics::pulse_unitary(&pulse, &ctx.modes, n, n_r).map_err(|e| at(e.into()))?;
                        let mut labels = m.labels.clone();
                        labels.insert(key, (n, n_r));
                        next.push(Member {
                            labels,
                            weight: m.weight * w,
                            amplitudes: linalg::apply_two_qubit(&m.amplitudes, a - 1, b - 1, &u)?,
                        });
                    }
                }
                ensemble = next;
            }
            Statement::Rotate { ion, axis, angle } => {
                let r = dynamics::carrier_rotation(*axis, *angle, 0, ctx.modes.eta, 0.0);
                for m in ensemble.iter_mut() {
                    m.amplitudes = linalg::apply_single_qubit(&m.amplitudes, ion - 1, &r)?;
                }
            }
            Statement::Measure { ions: (a, b) } => {
                let sectors: Vec<SectorState> = ensemble
                    .iter()
                    .map(|m| SectorState {
                        n: 0,
                        n_r: 0,
                        n_b: 0,
                        weight: m.weight,
                        amplitudes: m.amplitudes.clone(),
                    })
                    .collect();
                let raw = protocol::measure_and_condition(&sectors, (a - 1, b - 1))?;
                let single = ions.saturating_sub(2) == 1;
                let ideal = input.density();
                let mut branches = Vec::new();
                for br in raw {
                    let (state, fidelity, correction) = match (&br.state, single) {
                        (Some(rho), true) => {
                            let c = protocol::correct_ion3(br.outcome, rho, &ctx.trap_b, ctx.correction_eps)?;
                            let f = linalg::fidelity(&ideal, &c)?;
                            (Some(c), Some(f), br.outcome.correction())
                        }
                        (s, _) => (s.clone(), None, None),
                    };
                    branches.push(ScriptBranch {
                        outcome: br.outcome,
                        probability: br.probability,
                        correction,
                        state,
                        fidelity,
                    });
                }
                return Ok(ScriptRun {
                    ions,
                    branches: Some(branches),
                    final_state: None,
                });
            }
        }
    }
    let dim = 1 << ions;
    let mut rho = ComplexMatrix::zeros(dim, dim);
    for m in &ensemble {
        rho = &rho + &m.amplitudes.density().scale(ionsim::C64::new(m.weight, 0.0));
    }
    Ok(ScriptRun {
        ions,
        branches: None,
        final_state: Some(rho),
    })
}

/// The three-statement teleportation sequence for the given phases and
/// imprecision: ideal channel on ions 2, 3, analyzer on ions 1, 2, readout.
pub fn teleport_script(phi: f64, phi0: f64, eps: f64) -> String {
    format!(
        "pulse ions=2,3 k=1 area={a} phi={phi} phi0={phi0} eps=0 nbar=0\n\
         pulse ions=1,2 k=1 area={a} phi={phi} phi0={phi0} eps={eps}\n\
         measure ions=1,2\n",
        a = PI / 4.0
    )
}
