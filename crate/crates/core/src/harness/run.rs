//! Monte-Carlo runs of an [`ExperimentSpec`] and their CSV form.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channels::{self, Seed, RNG_ALGORITHM};
use crate::coordinator::{self, Protection, SchemeKind, SchemeSpec};
use crate::error::{Error, Result};
use crate::model::{AllocationOutcome, Cell, ChannelRealization, Link, SystemConfig};

use super::spec::{ExperimentKind, ExperimentSpec, SchemeChoice};

pub const SCHEMA_VERSION: u32 = 1;

pub const HEADER: [&str; 14] = [
    "scheme",
    "trial",
    "axis_name",
    "axis_value",
    "T1",
    "T2",
    "R1",
    "R2",
    "throughput",
    "rounds",
    "converged",
    "seed",
    "t_rule",
    "channel_hash",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "axis_name",
    "axis_value",
    "scheme",
    "n",
    "mean_throughput",
    "se_throughput",
    "mean_R1",
    "mean_R2",
    "converged_fraction",
    "mean_rounds",
];

/// One (axis point, trial, scheme) result.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub scheme: String,
    pub trial: u64,
    pub axis_name: String,
    pub axis_value: f64,
    pub t1: f64,
    pub t2: f64,
    pub r1: f64,
    pub r2: f64,
    pub throughput: f64,
    pub rounds: usize,
    pub converged: bool,
    pub seed: u64,
    pub t_rule: String,
    pub channel_hash: String,
}

/// Per axis point and scheme aggregate over trials.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub axis_name: String,
    pub axis_value: f64,
    pub scheme: String,
    pub n: usize,
    pub mean_throughput: f64,
    /// Standard error of the mean; NaN with a single trial.
    pub se_throughput: f64,
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub converged_fraction: f64,
    pub mean_rounds: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub summary: Vec<SummaryRow>,
    /// Noise power per subcarrier, `z0 B / N`.
    pub noise_variance: f64,
}

/// Short SHA-256 fingerprint of a realization's gains.
pub fn channel_hash(chan: &ChannelRealization<f64>) -> String {
    let mut h = Sha256::new();
    for link in Link::ALL {
        for g in chan.family(link) {
            h.update(g.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

// (axis position, trial, scheme position) orders the rows
type Keyed = ((usize, u64, usize), Row);

/// Runs every (axis point, trial, scheme) combination. Jobs run on the rayon
/// pool; the row order does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let points: Vec<Option<f64>> = match spec.kind {
        ExperimentKind::GSweep | ExperimentKind::Femto => spec.axis.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let jobs: Vec<(usize, u64)> =
        (0..points.len()).flat_map(|p| (0..spec.trials as u64).map(move |t| (p, t))).collect();
    let chunks: Vec<Vec<Keyed>> =
        jobs.par_iter().map(|&(p, t)| run_job(spec, p, points[p], t)).collect::<Result<_>>()?;
    let mut keyed: Vec<Keyed> = chunks.into_iter().flatten().collect();
    keyed.sort_by_key(|(k, _)| *k);
    let rows: Vec<Row> = keyed.into_iter().map(|(_, r)| r).collect();
    let summary = summarize(&rows);
    let (cfg, _) = spec.system_at(points[0])?;
    Ok(ExperimentResult { rows, summary, noise_variance: cfg.noise_variance() })
}

fn run_job(spec: &ExperimentSpec, pos: usize, axis_value: Option<f64>, trial: u64) -> Result<Vec<Keyed>> {
    let (cfg, params) = spec.system_at(axis_value)?;
    let chan = channels::generate::<f64>(&params, &cfg, Seed(spec.seed), trial)?;
    let hash = channel_hash(&chan);
    let template = SchemeSpec {
        kind: SchemeKind::NoProtection,
        max_rounds: spec.max_rounds,
        convergence_tol: spec.convergence_tol,
        first: Cell::One,
    };
    let row = |scheme: String, axis_name: &str, axis_value: f64, t_rule: String, t: [f64; 2], out: &AllocationOutcome<f64>| Row {
        scheme,
        trial,
        axis_name: axis_name.to_string(),
        axis_value,
        t1: t[0],
        t2: t[1],
        r1: out.cell_wsr[0],
        r2: out.cell_wsr[1],
        throughput: out.throughput,
        rounds: out.diagnostics.rounds,
        converged: out.diagnostics.converged,
        seed: spec.seed,
        t_rule,
        channel_hash: hash.clone(),
    };
    let mut out = Vec::new();
    let scheme_base = if spec.kind == ExperimentKind::TGrid {
        let grid = coordinator::default_grid(&chan, &cfg);
        for (i, &t) in grid.iter().enumerate() {
            let o = coordinator::run_decentralized(&chan, &cfg, &SchemeSpec { kind: SchemeKind::Average { t }, ..template.clone() })?;
            out.push(((i, trial, 0), row("average-grid".into(), "tgrid_index", i as f64, "grid".into(), t, &o)));
        }
        grid.len()
    } else {
        pos
    };
    let (axis_name, axis_num) = match (spec.kind, axis_value) {
        (ExperimentKind::TGrid, _) => ("none", 0.0),
        (kind, Some(v)) => (kind.axis_name(), v),
        (kind, None) => (kind.axis_name(), 0.0),
    };
    for (s, choice) in spec.schemes.iter().enumerate() {
        let (t, o) = run_choice(choice, &chan, &cfg, &template)?;
        out.push(((scheme_base, trial, s), row(choice.to_string(), axis_name, axis_num, choice.t_rule(), t, &o)));
    }
    Ok(out)
}

fn run_choice(
    choice: &SchemeChoice,
    chan: &ChannelRealization<f64>,
    cfg: &SystemConfig<f64>,
    template: &SchemeSpec<f64>,
) -> Result<([f64; 2], AllocationOutcome<f64>)> {
    let unlimited = [f64::INFINITY; 2];
    let fixed = |kind: SchemeKind<f64>| coordinator::run_scheme(chan, cfg, &SchemeSpec { kind, ..template.clone() });
    Ok(match choice {
        SchemeChoice::Optimal => (unlimited, fixed(SchemeKind::Optimal)?),
        SchemeChoice::Half => (unlimited, fixed(SchemeKind::Half)?),
        SchemeChoice::NoProtection => (unlimited, fixed(SchemeKind::NoProtection)?),
        SchemeChoice::AverageFixed(t) => (*t, fixed(SchemeKind::Average { t: *t })?),
        SchemeChoice::PeakFixed(t) => (*t, fixed(SchemeKind::Peak { t: *t })?),
        SchemeChoice::AverageRule(x) => {
            let t = Cell::BOTH.map(|victim| x * cfg.bs_power(victim.other()));
            (t, fixed(SchemeKind::Average { t })?)
        }
        SchemeChoice::AverageSearched | SchemeChoice::PeakSearched => {
            let protection =
                if *choice == SchemeChoice::AverageSearched { Protection::Average } else { Protection::Peak };
            let grid = coordinator::search_grid(chan, cfg);
            let (t, o, _) = coordinator::search_budgets(chan, cfg, &grid, protection, template)?;
            (t, o)
        }
    })
}

/// Groups rows by (axis name, axis value, scheme) in first-appearance order.
pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, f64, String, Vec<&Row>)> = Vec::new();
    for r in rows {
        match groups
            .iter_mut()
            .find(|g| g.0 == r.axis_name && g.1.to_bits() == r.axis_value.to_bits() && g.2 == r.scheme)
        {
            Some(g) => g.3.push(r),
            None => groups.push((r.axis_name.clone(), r.axis_value, r.scheme.clone(), vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(axis_name, axis_value, scheme, members)| {
            let n = members.len();
            let mean = |f: &dyn Fn(&Row) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            let m = mean(&|r| r.throughput);
            let se = if n > 1 {
                let var = members.iter().map(|r| (r.throughput - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                f64::NAN
            };
            SummaryRow {
                axis_name,
                axis_value,
                scheme,
                n,
                mean_throughput: m,
                se_throughput: se,
                mean_r1: mean(&|r| r.r1),
                mean_r2: mean(&|r| r.r2),
                converged_fraction: mean(&|r| if r.converged { 1.0 } else { 0.0 }),
                mean_rounds: mean(&|r| r.rounds as f64),
            }
        })
        .collect()
}

fn metadata(spec: &ExperimentSpec, result: &ExperimentResult) -> String {
    format!(
        "# ofdma-cic results schema={SCHEMA_VERSION}\n\
         # kind={} trials={} seed={}\n\
         # noise_variance_w={:e}\n\
         # channel_mode={} num_taps={}\n\
         # rng={RNG_ALGORITHM}\n",
        spec.kind.as_str(),
        spec.trials,
        spec.seed,
        result.noise_variance,
        spec.channel.mode.as_str(),
        spec.channel.num_taps,
    )
}

/// Writes the per-trial CSV: `#` metadata lines, then the header and rows.
pub fn write_rows<W: Write>(spec: &ExperimentSpec, result: &ExperimentResult, mut out: W) -> Result<()> {
    out.write_all(metadata(spec, result).as_bytes()).map_err(|e| Error::io("results csv", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.scheme.clone(),
            r.trial.to_string(),
            r.axis_name.clone(),
            r.axis_value.to_string(),
            r.t1.to_string(),
            r.t2.to_string(),
            r.r1.to_string(),
            r.r2.to_string(),
            r.throughput.to_string(),
            r.rounds.to_string(),
            r.converged.to_string(),
            r.seed.to_string(),
            r.t_rule.clone(),
            r.channel_hash.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("results csv", e))?;
    Ok(())
}

pub fn write_summary<W: Write>(spec: &ExperimentSpec, result: &ExperimentResult, mut out: W) -> Result<()> {
    out.write_all(metadata(spec, result).as_bytes()).map_err(|e| Error::io("summary csv", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in &result.summary {
        w.write_record([
            s.axis_name.clone(),
            s.axis_value.to_string(),
            s.scheme.clone(),
            s.n.to_string(),
            s.mean_throughput.to_string(),
            s.se_throughput.to_string(),
            s.mean_r1.to_string(),
            s.mean_r2.to_string(),
            s.converged_fraction.to_string(),
            s.mean_rounds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("summary csv", e))?;
    Ok(())
}

/// Parses a per-trial CSV written by [`write_rows`].
pub fn read_rows<R: Read>(input: R) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::config("header", format!("unexpected columns {:?}", header)));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        fn num<V: std::str::FromStr>(col: &str, v: &str) -> Result<V> {
            v.parse().map_err(|_| Error::config(col.to_string(), format!("cannot parse `{v}`")))
        }
        rows.push(Row {
            scheme: f(0).to_string(),
            trial: num("trial", f(1))?,
            axis_name: f(2).to_string(),
            axis_value: num("axis_value", f(3))?,
            t1: num("T1", f(4))?,
            t2: num("T2", f(5))?,
            r1: num("R1", f(6))?,
            r2: num("R2", f(7))?,
            throughput: num("throughput", f(8))?,
            rounds: num("rounds", f(9))?,
            converged: num("converged", f(10))?,
            seed: num("seed", f(11))?,
            t_rule: f(12).to_string(),
            channel_hash: f(13).to_string(),
        });
    }
    Ok(rows)
}

/// Paths written next to the main CSV: summary and resolved-config echo.
pub fn companion_paths(out: &Path) -> (PathBuf, PathBuf) {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    let dir = out.parent().unwrap_or(Path::new(""));
    (dir.join(format!("{stem}_summary.csv")), dir.join(format!("{stem}.config.txt")))
}

/// Writes the CSV, its summary and the config echo.
pub fn write_outputs(spec: &ExperimentSpec, result: &ExperimentResult, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let (summary, echo) = companion_paths(out);
    let open = |p: &Path| fs::File::create(p).map_err(|e| Error::io(p.display().to_string(), e));
    write_rows(spec, result, std::io::BufWriter::new(open(out)?))?;
    write_summary(spec, result, std::io::BufWriter::new(open(&summary)?))?;
    fs::write(&echo, spec.to_config()).map_err(|e| Error::io(echo.display().to_string(), e))?;
    Ok(())
}
