//! Experiment description, presets and the flat `key=value` config format.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::channels::{ChannelMode, ChannelParams};
use crate::error::{Error, Result};
use crate::model::SystemConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// One operating point.
    Single,
    /// Average scheme over the default `(T1, T2)` ladder.
    TGrid,
    /// Cross-gain sweep with `c = d = g`.
    GSweep,
    /// Second-cell BS power sweep.
    Femto,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Single => "single",
            ExperimentKind::TGrid => "tgrid",
            ExperimentKind::GSweep => "gsweep",
            ExperimentKind::Femto => "femto",
        }
    }

    /// Column label of the swept quantity.
    pub fn axis_name(self) -> &'static str {
        match self {
            ExperimentKind::Single => "none",
            ExperimentKind::TGrid => "tgrid_index",
            ExperimentKind::GSweep => "g",
            ExperimentKind::Femto => "bs_power2_w",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ExperimentKind::Single),
            "tgrid" => Ok(ExperimentKind::TGrid),
            "gsweep" => Ok(ExperimentKind::GSweep),
            "femto" => Ok(ExperimentKind::Femto),
            _ => Err(Error::config("kind", format!("expected single|tgrid|gsweep|femto, got `{s}`"))),
        }
    }
}

/// Scheme as selected on the command line or in a config file.
#[derive(Clone, Debug, PartialEq)]
pub enum SchemeChoice {
    Optimal,
    /// Average scheme with budgets searched per realization.
    AverageSearched,
    /// Average scheme with `T_m = factor * P` of the interfering BS.
    AverageRule(f64),
    /// Average scheme with absolute budgets `(T1, T2)`.
    AverageFixed([f64; 2]),
    /// Peak scheme with budgets searched per realization.
    PeakSearched,
    PeakFixed([f64; 2]),
    NoProtection,
    Half,
}

impl fmt::Display for SchemeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeChoice::Optimal => write!(f, "optimal"),
            SchemeChoice::AverageSearched => write!(f, "average-searched"),
            SchemeChoice::AverageRule(x) => write!(f, "average-{x}p"),
            SchemeChoice::AverageFixed(t) => write!(f, "average:{}:{}", t[0], t[1]),
            SchemeChoice::PeakSearched => write!(f, "peak"),
            SchemeChoice::PeakFixed(t) => write!(f, "peak:{}:{}", t[0], t[1]),
            SchemeChoice::NoProtection => write!(f, "noprotection"),
            SchemeChoice::Half => write!(f, "half"),
        }
    }
}

impl FromStr for SchemeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::config(
                "schemes",
                format!(
                    "unknown scheme `{s}` (expected optimal, average-searched, average-<x>p, \
                     average:<T1>:<T2>, peak, peak:<T1>:<T2>, noprotection, half)"
                ),
            )
        };
        let pair = |rest: &str| -> Result<[f64; 2]> {
            let mut it = rest.split(':').map(|v| v.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) if a >= 0.0 && b >= 0.0 => Ok([a, b]),
                _ => Err(bad()),
            }
        };
        let s = s.trim();
        match s {
            "optimal" => return Ok(SchemeChoice::Optimal),
            "average-searched" => return Ok(SchemeChoice::AverageSearched),
            "peak" => return Ok(SchemeChoice::PeakSearched),
            "noprotection" => return Ok(SchemeChoice::NoProtection),
            "half" => return Ok(SchemeChoice::Half),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("average:") {
            return pair(rest).map(SchemeChoice::AverageFixed);
        }
        if let Some(rest) = s.strip_prefix("peak:") {
            return pair(rest).map(SchemeChoice::PeakFixed);
        }
        if let Some(x) = s.strip_prefix("average-").and_then(|r| r.strip_suffix('p')) {
            return match x.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(SchemeChoice::AverageRule(v)),
                _ => Err(bad()),
            };
        }
        Err(bad())
    }
}

impl SchemeChoice {
    /// How the interference budgets of this scheme were chosen.
    pub fn t_rule(&self) -> String {
        match self {
            SchemeChoice::AverageSearched | SchemeChoice::PeakSearched => "searched".into(),
            SchemeChoice::AverageRule(x) => format!("{x}*P_interferer"),
            SchemeChoice::AverageFixed(_) | SchemeChoice::PeakFixed(_) => "fixed".into(),
            SchemeChoice::NoProtection => "unlimited".into(),
            SchemeChoice::Optimal | SchemeChoice::Half => "none".into(),
        }
    }
}

pub fn parse_schemes(list: &str) -> Result<Vec<SchemeChoice>> {
    let out: Vec<SchemeChoice> =
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::config("schemes", "no scheme given"));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
    pub noise_density_w_per_hz: f64,
    pub users: [usize; 2],
    pub bs_power_w: [f64; 2],
    pub channel: ChannelParams,
    /// Swept values; `g` for `gsweep`, the second BS power for `femto`.
    pub axis: Vec<f64>,
    pub schemes: Vec<SchemeChoice>,
    pub max_rounds: usize,
    pub convergence_tol: f64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::Single,
            trials: 50,
            seed: 1,
            bandwidth_hz: 100e6,
            num_subcarriers: 64,
            // -100 dBm/Hz
            noise_density_w_per_hz: 1e-13,
            users: [8, 8],
            bs_power_w: [1.0, 1.0],
            channel: ChannelParams::default(),
            axis: Vec::new(),
            schemes: vec![SchemeChoice::Optimal, SchemeChoice::AverageSearched, SchemeChoice::NoProtection],
            max_rounds: 50,
            convergence_tol: 1e-4,
            output: None,
        }
    }
}

pub const PRESETS: [&str; 3] = ["fig3", "fig6", "fig8"];

/// Experiment setups of the three simulation figures.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let base = ExperimentSpec::default();
    match name {
        "fig3" => Ok(ExperimentSpec {
            kind: ExperimentKind::TGrid,
            channel: ChannelParams::new(1.0, 1.0, 0.2, 0.2),
            schemes: vec![SchemeChoice::Optimal, SchemeChoice::AverageSearched],
            ..base
        }),
        "fig6" => Ok(ExperimentSpec {
            kind: ExperimentKind::GSweep,
            channel: ChannelParams::new(1.0, 1.0, 1.0, 1.0),
            axis: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            schemes: vec![
                SchemeChoice::Optimal,
                SchemeChoice::AverageSearched,
                SchemeChoice::AverageRule(0.1),
                SchemeChoice::AverageRule(0.01),
                SchemeChoice::PeakSearched,
                SchemeChoice::Half,
                SchemeChoice::NoProtection,
            ],
            ..base
        }),
        "fig8" => Ok(ExperimentSpec {
            kind: ExperimentKind::Femto,
            users: [8, 2],
            channel: ChannelParams::new(1.0, 5.0, 0.1, 0.5),
            axis: vec![0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
            schemes: vec![
                SchemeChoice::Optimal,
                SchemeChoice::AverageSearched,
                SchemeChoice::PeakSearched,
                SchemeChoice::NoProtection,
            ],
            ..base
        }),
        _ => Err(Error::Usage(format!("unknown preset `{name}`; available: {}", PRESETS.join(", ")))),
    }
}

impl ExperimentSpec {
    /// System parameters at one axis point.
    pub fn system_at(&self, axis_value: Option<f64>) -> Result<(SystemConfig<f64>, ChannelParams)> {
        let mut power = self.bs_power_w;
        let mut channel = self.channel.clone();
        match (self.kind, axis_value) {
            (ExperimentKind::GSweep, Some(g)) => channel.var_cross = [g, g],
            (ExperimentKind::Femto, Some(p)) => power[1] = p,
            _ => {}
        }
        let cfg = SystemConfig::with_unit_weights(
            self.bandwidth_hz,
            self.num_subcarriers,
            self.noise_density_w_per_hz,
            self.users,
            power,
        )?;
        channel.validate(self.num_subcarriers)?;
        Ok((cfg, channel))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "no scheme given"));
        }
        if self.max_rounds == 0 {
            return Err(Error::config("max_rounds", "must be >= 1"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::config("convergence_tol", "must be finite and > 0"));
        }
        let swept = matches!(self.kind, ExperimentKind::GSweep | ExperimentKind::Femto);
        if swept && self.axis.is_empty() {
            return Err(Error::config("axis", format!("`{}` needs at least one axis value", self.kind.as_str())));
        }
        if self.axis.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("axis", "values must be finite and > 0"));
        }
        if self.axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("axis", "values must be strictly increasing"));
        }
        if self.schemes.contains(&SchemeChoice::Half) && self.num_subcarriers % 2 != 0 {
            return Err(Error::config("num_subcarriers", "the half scheme needs an even subcarrier count"));
        }
        let points: Vec<Option<f64>> =
            if swept { self.axis.iter().copied().map(Some).collect() } else { vec![None] };
        for p in points {
            self.system_at(p)?;
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value.trim().parse().map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
        }
        let value = value.trim();
        match key {
            "preset" => {
                let output = self.output.take();
                *self = preset(value).map_err(|e| match e {
                    Error::Usage(m) => Error::config("preset", m),
                    other => other,
                })?;
                self.output = output;
            }
            "kind" => self.kind = value.parse()?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "bandwidth_hz" => self.bandwidth_hz = num(key, value)?,
            "num_subcarriers" => self.num_subcarriers = num(key, value)?,
            "noise_density_w_per_hz" => self.noise_density_w_per_hz = num(key, value)?,
            "users1" => self.users[0] = num(key, value)?,
            "users2" => self.users[1] = num(key, value)?,
            "bs_power1_w" => self.bs_power_w[0] = num(key, value)?,
            "bs_power2_w" => self.bs_power_w[1] = num(key, value)?,
            "var_direct1" => self.channel.var_direct[0] = num(key, value)?,
            "var_direct2" => self.channel.var_direct[1] = num(key, value)?,
            "var_cross1" => self.channel.var_cross[0] = num(key, value)?,
            "var_cross2" => self.channel.var_cross[1] = num(key, value)?,
            "num_taps" => self.channel.num_taps = num(key, value)?,
            "channel_mode" => self.channel.mode = value.parse::<ChannelMode>()?,
            "axis" => {
                self.axis = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(|v| num::<f64>(key, v))
                    .collect::<Result<_>>()?
            }
            "schemes" => self.schemes = parse_schemes(value)?,
            "max_rounds" => self.max_rounds = num(key, value)?,
            "convergence_tol" => self.convergence_tol = num(key, value)?,
            "out" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses a config file body on top of `self`. Blank lines and `#`
    /// comments are skipped; a `preset` line resets everything before it.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected key=value, got `{line}`")))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_config(text: &str) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        spec.apply_config(text)?;
        Ok(spec)
    }

    /// Resolved settings in the config format; parses back to `self`.
    pub fn to_config(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let schemes = self.schemes.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("kind={}", self.kind.as_str()),
            format!("trials={}", self.trials),
            format!("seed={}", self.seed),
            format!("bandwidth_hz={}", self.bandwidth_hz),
            format!("num_subcarriers={}", self.num_subcarriers),
            format!("noise_density_w_per_hz={}", self.noise_density_w_per_hz),
            format!("users1={}", self.users[0]),
            format!("users2={}", self.users[1]),
            format!("bs_power1_w={}", self.bs_power_w[0]),
            format!("bs_power2_w={}", self.bs_power_w[1]),
            format!("var_direct1={}", self.channel.var_direct[0]),
            format!("var_direct2={}", self.channel.var_direct[1]),
            format!("var_cross1={}", self.channel.var_cross[0]),
            format!("var_cross2={}", self.channel.var_cross[1]),
            format!("num_taps={}", self.channel.num_taps),
            format!("channel_mode={}", self.channel.mode.as_str()),
            format!("axis={}", join(&self.axis)),
            format!("schemes={schemes}"),
            format!("max_rounds={}", self.max_rounds),
            format!("convergence_tol={}", self.convergence_tol),
        ];
        if let Some(out) = &self.output {
            lines.push(format!("out={}", out.display()));
        }
        lines.join("\n") + "\n"
    }
}
