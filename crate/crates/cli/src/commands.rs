//! Subcommand implementations. Each builds its settings with the precedence
//! flags > config file > defaults and renders a table or report.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use ionsim::linalg::ComplexMatrix;
use ionsim::motional::{self, matched_nbar_r, ModeParams, ThermalSpec, DEFAULT_NU_RATIO};
use ionsim::protocol::{
    self, FidelityReport, InputQubit, InputSpec, Outcome, PhaseConfig, SwapParams, TeleportParams, TrapB,
};
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, Settings};
use crate::output::{self, Cell, Format, Meta, Table};
use crate::script::{self, ScriptContext};

/// Flags shared by every subcommand. Values are kept as text until the
/// precedence rules have been applied.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// Centre-of-mass Lamb-Dicke parameter (comma list where a sweep allows it)
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<String>,
    /// Stretch-mode Lamb-Dicke parameter [default: eta * 3^(-1/4)]
    #[arg(long, allow_hyphen_values = true)]
    pub eta_r: Option<String>,
    /// Lamb-Dicke parameter of the receiving trap [default: eta]
    #[arg(long, allow_hyphen_values = true)]
    pub eta_b: Option<String>,
    /// Mean centre-of-mass occupation (comma list where a sweep allows it)
    #[arg(long, allow_hyphen_values = true)]
    pub nbar: Option<String>,
    /// Mean occupation of the receiving trap [default: nbar]
    #[arg(long, allow_hyphen_values = true)]
    pub nbar_b: Option<String>,
    /// Relative pulse-area imprecision (comma list for fidelity-surface)
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<String>,
    /// Sideband order
    #[arg(long)]
    pub k: Option<String>,
    /// Raman phase; accepts pi expressions [default: pi - phi0/2]
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<String>,
    /// Exchange phase; accepts pi expressions [default: 3*pi/2]
    #[arg(long, allow_hyphen_values = true)]
    pub phi0: Option<String>,
    /// Grid: `N[,M]` for rabi-surface, `a:b:n,c:d:m` for fidelity-surface
    #[arg(long)]
    pub grid: Option<String>,
    /// Fixed Fock cutoff per mode, overriding --tail-tol
    #[arg(long)]
    pub cutoff: Option<String>,
    /// Thermal tail mass allowed beyond the cutoff [default: 1e-6]
    #[arg(long)]
    pub tail_tol: Option<String>,
    /// average | down | up | plus | minus | plus-i | minus-i | amp:are,aim,bre,bim
    #[arg(long)]
    pub input_state: Option<String>,
    /// Output format: csv or json
    #[arg(long)]
    pub format: Option<String>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for sampled outcome draws
    #[arg(long)]
    pub seed: Option<String>,
    /// Flat key=value config file; flags take precedence over it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl CommonArgs {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("eta", self.eta.clone()),
            ("eta-r", self.eta_r.clone()),
            ("eta-b", self.eta_b.clone()),
            ("nbar", self.nbar.clone()),
            ("nbar-b", self.nbar_b.clone()),
            ("eps", self.eps.clone()),
            ("k", self.k.clone()),
            ("phi", self.phi.clone()),
            ("phi0", self.phi0.clone()),
            ("grid", self.grid.clone()),
            ("cutoff", self.cutoff.clone()),
            ("tail-tol", self.tail_tol.clone()),
            ("input-state", self.input_state.clone()),
            ("format", self.format.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.clone()),
        ]
    }

    pub fn settings(&self, defaults: &[(&str, &str)], extra: &[(&'static str, Option<String>)]) -> Result<Settings> {
        let file = self.config.as_deref().map(config::load_config_file).transpose()?;
        let mut flags = self.flags();
        flags.extend(extra.iter().cloned());
        Ok(Settings::resolve(defaults, file.as_ref(), &flags))
    }
}

const BASE_DEFAULTS: &[(&str, &str)] = &[("k", "1"), ("phi0", "3*pi/2"), ("tail-tol", "1e-6"), ("eps", "0")];

fn with_base(specific: &[(&'static str, &'static str)]) -> Vec<(&'static str, &'static str)> {
    let mut all: Vec<(&str, &str)> = BASE_DEFAULTS.to_vec();
    all.extend_from_slice(specific);
    all
}

/// Typed view of the physical settings.
struct Physics {
    k: usize,
    phases: PhaseConfig,
    tail_tol: f64,
    cutoff: Option<usize>,
}

fn physics(s: &Settings) -> Result<Physics> {
    let k = s.usize("k")?.unwrap_or(1);
    let phi0 = s.f64("phi0")?.unwrap_or(PhaseConfig::DEFAULT_PHI0);
    let phi = s.f64("phi")?.unwrap_or(PI - phi0 / 2.0);
    let tail_tol = config::check_tail_tol(s.f64("tail-tol")?.unwrap_or(motional::DEFAULT_TAIL_TOL))?;
    Ok(Physics {
        k,
        phases: PhaseConfig {
            phi_a: phi,
            phi_b: phi,
            phi0_a: phi0,
            phi0_b: phi0,
        },
        tail_tol,
        cutoff: s.usize("cutoff")?,
    })
}

fn single(s: &Settings, key: &str) -> Result<f64> {
    let list = s.f64_list(key)?.ok_or_else(|| anyhow!("--{key} is required"))?;
    match list.as_slice() {
        [v] => Ok(*v),
        _ => bail!("--{key} takes a single value for this subcommand"),
    }
}

fn modes_for(s: &Settings, eta: f64) -> Result<ModeParams> {
    config::check_eta(eta, "eta")?;
    let modes = match s.f64("eta-r")? {
        Some(r) => ModeParams::new(eta, config::check_eta(r, "eta-r")?, DEFAULT_NU_RATIO)?,
        None => ModeParams::with_eta(eta)?,
    };
    Ok(modes)
}

fn thermal(nbar: f64, nbar_r: f64, p: &Physics) -> Result<ThermalSpec> {
    let t = match p.cutoff {
        Some(c) => ThermalSpec::new(nbar, nbar_r, c)?,
        None => ThermalSpec::with_tail_tol(nbar, nbar_r, p.tail_tol)?,
    };
    if let Some(w) = t.truncation_warning(p.tail_tol) {
        eprintln!("warning: {w}");
    }
    Ok(t)
}

fn format_of(s: &Settings) -> Result<Option<Format>> {
    s.get("format").map(str::parse).transpose()
}

fn meta(command: &str, s: &Settings, derived: &[(&str, String)]) -> Meta {
    let mut m: Meta = vec![
        ("command".into(), command.into()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
    ];
    m.extend(s.entries().map(|(k, v)| (k.to_string(), v.to_string())));
    m.extend(derived.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

/// Rayon pool honouring `IONSIM_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("IONSIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("IONSIM_THREADS must be a positive integer, got `{v}`"))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

fn finish_table(table: Table, s: &Settings) -> Result<String> {
    table.render(format_of(s)?.unwrap_or(Format::Csv))
}

pub fn rabi_surface(args: &CommonArgs) -> Result<(String, Settings)> {
    let s = args.settings(&with_base(&[("eta", "0.15"), ("grid", "25"), ("format", "csv")]), &[])?;
    let p = physics(&s)?;
    let modes = modes_for(&s, single(&s, "eta")?)?;
    let (max_n, max_nr) = config::parse_fock_grid(s.get("grid").unwrap_or("25"))?;
    let cells: Vec<(usize, usize)> = (0..=max_n).flat_map(|n| (0..=max_nr).map(move |r| (n, r))).collect();
    let values: Vec<f64> = thread_pool()?.install(|| {
        cells
            .par_iter()
            .map(|&(n, n_r)| motional::rabi_frequency(p.k, n, n_r, &modes))
            .collect()
    });
    let mut table = Table::new(
        meta("rabi-surface", &s, &[("eta-r-used", modes.eta_r.to_string())]),
        vec!["n", "n_r", "omega", "abs_omega"],
    );
    for (&(n, n_r), &w) in cells.iter().zip(&values) {
        table.push(vec![n.into(), n_r.into(), w.into(), w.abs().into()]);
    }
    Ok((finish_table(table, &s)?, s))
}

pub fn channel_fidelity(args: &CommonArgs) -> Result<(String, Settings)> {
    let s = args.settings(&with_base(&[("eta", "0.15,0.2"), ("nbar", "0.2,1,5"), ("format", "csv")]), &[])?;
    let p = physics(&s)?;
    let etas = s.f64_list("eta")?.unwrap_or_default();
    let nbars = s.f64_list("nbar")?.unwrap_or_default();
    let eps = config::check_eps(single(&s, "eps")?)?;
    let pulse = p.phases.channel_pulse(p.k, eps)?;
    let mut table = Table::new(
        meta("channel-fidelity", &s, &[]),
        vec!["eta", "eta_r", "nbar", "nbar_r", "cutoff", "tail_mass", "fidelity"],
    );
    for &eta in &etas {
        let modes = modes_for(&s, eta)?;
        for &nbar in &nbars {
            config::check_nbar(nbar, "nbar")?;
            let nbar_r = matched_nbar_r(nbar, modes.nu_ratio);
            let t = thermal(nbar, nbar_r, &p)?;
            let f = protocol::channel_fidelity(&t, &pulse, &modes)?;
            table.push(vec![
                eta.into(),
                modes.eta_r.into(),
                nbar.into(),
                nbar_r.into(),
                t.cutoff().into(),
                t.tail_mass().into(),
                f.into(),
            ]);
        }
    }
    Ok((finish_table(table, &s)?, s))
}

fn teleport_params(s: &Settings, p: &Physics, eta: f64, nbar: f64, eps: f64) -> Result<TeleportParams> {
    let modes = modes_for(s, eta)?;
    config::check_nbar(nbar, "nbar")?;
    config::check_eps(eps)?;
    let mut params = TeleportParams::with_modes(modes, nbar, eps)?;
    params.k = p.k;
    params.phases = p.phases;
    params.tail_tol = p.tail_tol;
    let nbar_b = config::check_nbar(s.f64("nbar-b")?.unwrap_or(nbar), "nbar-b")?;
    let eta_b = config::check_eta(s.f64("eta-b")?.unwrap_or(eta), "eta-b")?;
    params.trap_b = TrapB::with_tail_tol(nbar_b, eta_b, p.tail_tol);
    if let Some(c) = p.cutoff {
        params = params.with_cutoff(c);
    }
    Ok(params)
}

fn input_of(s: &Settings) -> Result<InputSpec> {
    config::parse_input_state(s.get("input-state").unwrap_or("average"))
}

pub fn fidelity_surface(args: &CommonArgs) -> Result<(String, Settings)> {
    let s = args.settings(
        &with_base(&[
            ("grid", "0:0.2:20,0.05:0.25:20"),
            ("eps", "0,0.05"),
            ("input-state", "average"),
            ("format", "csv"),
        ]),
        &[],
    )?;
    let p = physics(&s)?;
    let (nbar_axis, eta_axis) = config::parse_surface_grid(s.get("grid").unwrap_or_default())?;
    let eps_list = s.f64_list("eps")?.unwrap_or_default();
    let input = input_of(&s)?;
    let mut points = Vec::new();
    for &eps in &eps_list {
        config::check_eps(eps)?;
        for &nbar in &nbar_axis.points() {
            for &eta in &eta_axis.points() {
                points.push((eps, nbar, eta));
            }
        }
    }
    let results: Vec<Result<(f64, f64)>> = thread_pool()?.install(|| {
        points
            .par_iter()
            .map(|&(eps, nbar, eta)| {
                let params = teleport_params(&s, &p, eta, nbar, eps)?;
                let r = protocol::teleport_fidelity(&input, &params)?;
                Ok((params.nbar_r, r.aggregate))
            })
            .collect()
    });
    let mut table = Table::new(
        meta("fidelity-surface", &s, &[]),
        vec!["eps", "nbar", "eta", "nbar_r", "fidelity"],
    );
    for (&(eps, nbar, eta), r) in points.iter().zip(results) {
        let (nbar_r, f) = r?;
        table.push(vec![eps.into(), nbar.into(), eta.into(), nbar_r.into(), f.into()]);
    }
    Ok((finish_table(table, &s)?, s))
}

/// 2×2 density matrix as `[[[re, im]; 2]; 2]`.
pub type Matrix2 = [[[f64; 2]; 2]; 2];

fn matrix2(m: &ComplexMatrix) -> Matrix2 {
    let c = |i, j| {
        let z = m[(i, j)];
        [z.re, z.im]
    };
    [[c(0, 0), c(0, 1)], [c(1, 0), c(1, 1)]]
}

fn bloch(m: &ComplexMatrix) -> [f64; 3] {
    let off = m[(1, 0)];
    [2.0 * off.re, 2.0 * off.im, (m[(0, 0)] - m[(1, 1)]).re]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchJson {
    pub outcome: Outcome,
    pub probability: f64,
    pub correction: Option<ionsim::dynamics::Axis>,
    pub ion3_before: Option<Matrix2>,
    pub ion3_after: Option<Matrix2>,
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub seed: u64,
    pub draws: usize,
    pub counts: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeleportJson {
    pub meta: serde_json::Value,
    pub report: FidelityReport,
    pub branches: Vec<BranchJson>,
    pub samples: Option<Samples>,
}

fn draw_samples(probs: &[f64; 4], draws: usize, seed: u64) -> Result<Samples> {
    let dist = WeightedIndex::new(probs).context("outcome probabilities cannot be sampled")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[dist.sample(&mut rng)] += 1;
    }
    Ok(Samples { seed, draws, counts })
}

pub fn teleport(args: &CommonArgs, sample: Option<usize>) -> Result<(String, Settings)> {
    let s = args.settings(
        &with_base(&[("eta", "0.15"), ("nbar", "0"), ("input-state", "plus")]),
        &[("sample", sample.map(|n| n.to_string()))],
    )?;
    let p = physics(&s)?;
    let params = teleport_params(&s, &p, single(&s, "eta")?, single(&s, "nbar")?, single(&s, "eps")?)?;
    let input = input_of(&s)?;
    let report = protocol::teleport_fidelity(&input, &params)?;
    let branches: Vec<BranchJson> = match input {
        InputSpec::Single(q) => protocol::teleport(&q, &params)?
            .branches
            .iter()
            .map(|b| BranchJson {
                outcome: b.outcome,
                probability: b.probability,
                correction: b.correction,
                ion3_before: b.measured_state.as_ref().map(matrix2),
                ion3_after: b.corrected_state.as_ref().map(matrix2),
                fidelity: b.fidelity,
            })
            .collect(),
        InputSpec::Average => Outcome::ALL
            .iter()
            .map(|&o| BranchJson {
                outcome: o,
                probability: report.outcome_probs[o.index()],
                correction: o.correction(),
                ion3_before: None,
                ion3_after: None,
                fidelity: report.outcome_fidelities[o.index()],
            })
            .collect(),
    };
    let samples = match s.usize("sample")? {
        None => None,
        Some(draws) => {
            let seed = s
                .u64("seed")?
                .ok_or_else(|| anyhow!("--sample requires an explicit --seed"))?;
            Some(draw_samples(&report.outcome_probs, draws, seed)?)
        }
    };
    let m = meta("teleport", &s, &[]);
    let text = match format_of(&s)? {
        Some(Format::Json) => {
            let doc = TeleportJson {
                meta: output::meta_json(&m),
                report,
                branches,
                samples,
            };
            output::pretty(&doc)? + "\n"
        }
        Some(Format::Csv) => {
            let mut table = Table::new(
                m,
                vec!["outcome", "probability", "correction", "fidelity"],
            );
            for b in &branches {
                table.push(vec![
                    b.outcome.symbol().into(),
                    b.probability.into(),
                    correction_name(b.correction).into(),
                    opt_cell(b.fidelity),
                ]);
            }
            table.render(Format::Csv)?
        }
        None => teleport_text(&report, &branches, samples.as_ref(), &params),
    };
    Ok((text, s))
}

fn correction_name(axis: Option<ionsim::dynamics::Axis>) -> String {
    match axis {
        Some(a) => format!("pi-{a}"),
        None => "none".into(),
    }
}

fn opt_cell(v: Option<f64>) -> Cell {
    match v {
        Some(f) => Cell::Float(f),
        None => Cell::Text(String::new()),
    }
}

fn teleport_text(
    report: &FidelityReport,
    branches: &[BranchJson],
    samples: Option<&Samples>,
    params: &TeleportParams,
) -> String {
    let e = &report.params;
    let mut out = String::new();
    let _ = writeln!(out, "teleportation of one ion's internal state");
    let _ = writeln!(out, "  input:   {}", report.input);
    let _ = writeln!(
        out,
        "  trap A:  eta={} eta_r={:.6} nbar={} nbar_r={:.6} cutoff={}",
        e.eta, e.eta_r, e.nbar, e.nbar_r, e.cutoff_a
    );
    let _ = writeln!(out, "  trap B:  eta={} nbar={} cutoff={}", e.eta_b, e.nbar_b, e.cutoff_b);
    let _ = writeln!(
        out,
        "  pulses:  k={} phi={:.6} phi0={:.6} eps={}",
        params.k, params.phases.phi_a, params.phases.phi0_a, params.epsilon
    );
    let _ = writeln!(
        out,
        "{:<8} {:>12} {:>11}  {:<28} {:>12}",
        "outcome", "probability", "correction", "ion 3 Bloch vector (x,y,z)", "fidelity"
    );
    for b in branches {
        let vector = match &b.ion3_before {
            Some(m) => {
                let cm = ComplexMatrix::from_fn(2, 2, |i, j| ionsim::C64::new(m[i][j][0], m[i][j][1]));
                let v = bloch(&cm);
                format!("({:+.4}, {:+.4}, {:+.4})", v[0], v[1], v[2])
            }
            None => "-".into(),
        };
        let fid = b.fidelity.map(|f| format!("{f:.9}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<8} {:>12.9} {:>11}  {:<28} {:>12}",
            b.outcome.symbol(),
            b.probability,
            correction_name(b.correction),
            vector,
            fid
        );
    }
    let _ = writeln!(out, "aggregate fidelity: {:.12}", report.aggregate);
    if let Some(sm) = samples {
        let counts: Vec<String> = Outcome::ALL
            .iter()
            .map(|o| format!("{} {}", o.symbol(), sm.counts[o.index()]))
            .collect();
        let _ = writeln!(out, "sampled {} runs (seed {}): {}", sm.draws, sm.seed, counts.join(", "));
    }
    out
}

pub fn swap(args: &CommonArgs) -> Result<(String, Settings)> {
    let s = args.settings(&with_base(&[("eta", "0.15"), ("nbar", "0")]), &[])?;
    let p = physics(&s)?;
    let eta = single(&s, "eta")?;
    let nbar = config::check_nbar(single(&s, "nbar")?, "nbar")?;
    let eps = config::check_eps(single(&s, "eps")?)?;
    if p.k != 1 {
        bail!("swap uses the first sideband; --k must be 1");
    }
    let mut params = SwapParams::thermal(config::check_eta(eta, "eta")?, nbar, eps)?;
    params.modes = modes_for(&s, eta)?;
    params.nbar_r = matched_nbar_r(nbar, params.modes.nu_ratio);
    params.phases = p.phases;
    params.tail_tol = p.tail_tol;
    params.cutoff = p.cutoff;
    let out = protocol::entanglement_swap(&params)?;
    let m = meta("swap", &s, &[]);
    let mut table = Table::new(m, vec!["outcome", "label", "probability", "fidelity"]);
    for o in &out {
        table.push(vec![
            o.outcome.symbol().into(),
            o.label.name().into(),
            o.probability.into(),
            opt_cell(o.fidelity),
        ]);
    }
    let text = match format_of(&s)? {
        Some(f) => table.render(f)?,
        None => {
            let mut text = format!("entanglement swapping: ions 2, 3 analyzed; eta={eta} nbar={nbar} eps={eps}\n");
            for o in &out {
                let fid = o.fidelity.map(|f| format!("{f:.12}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    text,
                    "{} -> ions 1,4 in {:<4}  p = {:.12}  F = {}",
                    o.outcome.symbol(),
                    o.label.name(),
                    o.probability,
                    fid
                );
            }
            text
        }
    };
    Ok((text, s))
}

pub fn run_script(path: &std::path::Path, args: &CommonArgs) -> Result<(String, Settings)> {
    let s = args.settings(&with_base(&[("eta", "0.15"), ("nbar", "0"), ("input-state", "plus")]), &[])?;
    let p = physics(&s)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read script {}", path.display()))?;
    let parsed = script::parse_pulse_script(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let eta = single(&s, "eta")?;
    let nbar = config::check_nbar(single(&s, "nbar")?, "nbar")?;
    let eps = config::check_eps(single(&s, "eps")?)?;
    let params = teleport_params(&s, &p, eta, nbar, eps)?;
    let ctx = ScriptContext {
        modes: params.modes,
        nbar,
        tail_tol: p.tail_tol,
        cutoff: p.cutoff,
        trap_b: params.trap_b.clone(),
        correction_eps: eps,
    };
    let inputs: Vec<(String, InputQubit)> = match input_of(&s)? {
        InputSpec::Single(q) => vec![(s.get("input-state").unwrap_or_default().to_string(), q)],
        InputSpec::Average => InputQubit::cardinal()
            .into_iter()
            .map(|(n, q)| (n.to_string(), q))
            .collect(),
    };
    let mut table = Table::new(
        meta("run-script", &s, &[("script", path.display().to_string())]),
        vec!["input", "outcome", "probability", "correction", "fidelity"],
    );
    let mut state_table = Table::new(
        meta("run-script", &s, &[("script", path.display().to_string())]),
        vec!["input", "basis", "population"],
    );
    let mut aggregates = Vec::new();
    for (name, q) in &inputs {
        let run = script::execute(&parsed, q, &ctx)?;
        match &run.branches {
            Some(branches) => {
                for b in branches {
                    table.push(vec![
                        name.as_str().into(),
                        b.outcome.symbol().into(),
                        b.probability.into(),
                        correction_name(b.correction).into(),
                        opt_cell(b.fidelity),
                    ]);
                }
                if let Some(f) = run.aggregate_fidelity() {
                    table.push(vec![
                        name.as_str().into(),
                        "total".into(),
                        branches.iter().map(|b| b.probability).sum::<f64>().into(),
                        "".into(),
                        f.into(),
                    ]);
                    aggregates.push(f);
                }
            }
            None => {
                let rho = run.final_state.as_ref().expect("unmeasured run keeps its state");
                for i in 0..rho.rows() {
                    let label: String = (0..run.ions)
                        .map(|q| if (i >> (run.ions - 1 - q)) & 1 == 1 { 'u' } else { 'd' })
                        .collect();
                    state_table.push(vec![name.as_str().into(), label.into(), rho[(i, i)].re.into()]);
                }
            }
        }
    }
    let chosen = if table.rows.is_empty() { state_table } else { table };
    let text = match format_of(&s)? {
        Some(f) => chosen.render(f)?,
        None => {
            let mut out = chosen.render(Format::Csv)?;
            if !aggregates.is_empty() {
                let mean = aggregates.iter().sum::<f64>() / aggregates.len() as f64;
                let _ = writeln!(out, "# mean fidelity over inputs: {mean:.12}");
            }
            out
        }
    };
    Ok((text, s))
}
