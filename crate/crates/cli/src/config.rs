//! Run configuration: flat `key=value` config files, flag/file/default
//! precedence and typed validation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ionsim::protocol::{InputQubit, InputSpec};
use ionsim::C64;

/// Keys accepted in config files; flags use the same names with `--`.
pub const KNOWN_KEYS: &[&str] = &[
    "eta",
    "eta-r",
    "eta-b",
    "nbar",
    "nbar-b",
    "eps",
    "k",
    "phi",
    "phi0",
    "grid",
    "cutoff",
    "tail-tol",
    "input-state",
    "format",
    "out",
    "seed",
    "sample",
];

/// Parses a flat config file: one `key = value` per line, `#` comments.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value, got `{line}`", i + 1))?;
        let key = key.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key `{key}`", i + 1);
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            bail!("config line {}: duplicate key `{key}`", i + 1);
        }
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config_file(&text)
}

/// Resolved string settings after applying precedence
/// flags > config file > defaults.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn resolve(
        defaults: &[(&str, &str)],
        file: Option<&BTreeMap<String, String>>,
        flags: &[(&str, Option<String>)],
    ) -> Self {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(file) = file {
            values.extend(file.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_string(), v.clone());
            }
        }
        Self { values }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_real(v).with_context(|| format!("invalid --{key}"))).transpose()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| parse_real(x.trim()))
                    .collect::<Result<Vec<_>>>()
                    .with_context(|| format!("invalid --{key}"))
            })
            .transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| v.trim().parse::<usize>().map_err(|e| anyhow!("invalid --{key} `{v}`: {e}")))
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| v.trim().parse::<u64>().map_err(|e| anyhow!("invalid --{key} `{v}`: {e}")))
            .transpose()
    }
}

/// Reads a real number, also accepting `pi`, `pi/4`, `3*pi/2`, `-pi/2`.
pub fn parse_real(text: &str) -> Result<f64> {
    let t = text.trim();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t.strip_prefix('+').unwrap_or(t)),
    };
    let bad = || anyhow!("cannot read `{text}` as a number");
    let value = if let Some((num, rest)) = body.split_once("pi") {
        let factor = match num.strip_suffix('*') {
            Some(n) => n.trim().parse::<f64>().map_err(|_| bad())?,
            None if num.is_empty() => 1.0,
            None => return Err(bad()),
        };
        let divisor = match rest.strip_prefix('/') {
            Some(d) => d.trim().parse::<f64>().map_err(|_| bad())?,
            None if rest.is_empty() => 1.0,
            None => return Err(bad()),
        };
        factor * PI / divisor
    } else {
        body.parse::<f64>().map_err(|_| bad())?
    };
    if !value.is_finite() {
        bail!("`{text}` is not finite");
    }
    Ok(sign * value)
}

/// Inclusive range sampled at `steps` points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridAxis {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("expected start:end:steps, got `{text}`");
        }
        let start = parse_real(parts[0])?;
        let end = parse_real(parts[1])?;
        let steps: usize = parts[2].trim().parse().map_err(|_| anyhow!("bad step count in `{text}`"))?;
        if steps == 0 {
            bail!("step count must be positive in `{text}`");
        }
        if end < start {
            bail!("range end below start in `{text}`");
        }
        Ok(Self { start, end, steps })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|i| self.start + (self.end - self.start) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

/// `N` or `N,M`: largest `n` and `n_r` of a Rabi-frequency grid.
pub fn parse_fock_grid(text: &str) -> Result<(usize, usize)> {
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| anyhow!("invalid --grid `{text}`: expected N or N,M with N, M >= 0"))
    };
    match text.split_once(',') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let n = parse(text)?;
            Ok((n, n))
        }
    }
}

/// `a:b:n,c:d:m`: occupation axis then Lamb-Dicke axis.
pub fn parse_surface_grid(text: &str) -> Result<(GridAxis, GridAxis)> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("invalid --grid `{text}`: expected nbar_lo:nbar_hi:steps,eta_lo:eta_hi:steps"))?;
    let nbar = GridAxis::parse(a).context("invalid --grid occupation axis")?;
    let eta = GridAxis::parse(b).context("invalid --grid eta axis")?;
    if nbar.start < 0.0 {
        bail!("invalid --grid: occupation must be >= 0");
    }
    if eta.start <= 0.0 || eta.end >= 1.0 {
        bail!("invalid --grid: eta must lie in (0, 1)");
    }
    Ok((nbar, eta))
}

/// `average`, a cardinal name, or `amp:are,aim,bre,bim` (normalized on read).
pub fn parse_input_state(text: &str) -> Result<InputSpec> {
    let t = text.trim();
    if t == "average" {
        return Ok(InputSpec::Average);
    }
    if let Some((_, q)) = InputQubit::cardinal().into_iter().find(|(name, _)| *name == t) {
        return Ok(InputSpec::Single(q));
    }
    if let Some(body) = t.strip_prefix("amp:") {
        let v = body
            .split(',')
            .map(|x| parse_real(x.trim()))
            .collect::<Result<Vec<_>>>()
            .context("invalid amplitudes")?;
        if v.len() != 4 {
            bail!("invalid amplitudes: expected 4 numbers (re, im of alpha and beta), got {}", v.len());
        }
        let q = InputQubit::normalized(C64::new(v[0], v[1]), C64::new(v[2], v[3]))
            .map_err(|e| anyhow!("invalid amplitudes: {e}"))?;
        return Ok(InputSpec::Single(q));
    }
    bail!("unknown --input-state `{t}` (expected average, down, up, plus, minus, plus-i, minus-i or amp:are,aim,bre,bim)")
}

pub fn check_eta(eta: f64, key: &str) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        bail!("--{key} must lie in (0, 1), got {eta}");
    }
    Ok(eta)
}

pub fn check_nbar(nbar: f64, key: &str) -> Result<f64> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        bail!("--{key} must be >= 0, got {nbar}");
    }
    Ok(nbar)
}

pub fn check_eps(eps: f64) -> Result<f64> {
    if !(eps.abs() < 1.0) {
        bail!("--eps must satisfy |eps| < 1, got {eps}");
    }
    Ok(eps)
}

pub fn check_tail_tol(tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol < 1.0) {
        bail!("--tail-tol must lie in (0, 1), got {tol}");
    }
    Ok(tol)
}

/// Output destination; `None` is standard output.
pub fn output_path(settings: &Settings) -> Option<PathBuf> {
    settings.get("out").map(PathBuf::from)
}
