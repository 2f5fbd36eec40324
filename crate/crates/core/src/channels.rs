//! Reproducible Rayleigh channel draws.
//!
//! Each link family is a multipath channel with `num_taps` independent,
//! equal-energy complex Gaussian taps; the per-subcarrier power gain is the
//! squared magnitude of its `N`-point frequency response. The `Iid` mode draws
//! every subcarrier gain independently instead.
//!
//! Every `(trial, link)` pair reads its own ChaCha20 stream keyed by the root
//! seed, so a trial can be regenerated in isolation and in any order.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Cell, ChannelRealization, Link, SystemConfig};
use crate::scalar::Scalar;

/// Name of the generator and stream layout, echoed into run metadata.
pub const RNG_ALGORITHM: &str = "chacha20 (rand_chacha 0.9), key=seed_from_u64(root), stream=4*trial+link";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ChannelMode {
    /// Frequency response of a tapped delay line (correlated across subcarriers).
    #[default]
    Taps,
    /// Independent draw per subcarrier.
    Iid,
}

impl FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taps" => Ok(ChannelMode::Taps),
            "iid" => Ok(ChannelMode::Iid),
            _ => Err(Error::config("channel_mode", format!("expected taps|iid, got `{s}`"))),
        }
    }
}

impl ChannelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Taps => "taps",
            ChannelMode::Iid => "iid",
        }
    }
}

/// Link variances: `var_direct = [a, b]`, `var_cross = [c, d]` where `c` is
/// BS2 into cell-1 users and `d` is BS1 into cell-2 users.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    pub var_direct: [f64; 2],
    pub var_cross: [f64; 2],
    pub num_taps: usize,
    pub mode: ChannelMode,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams { var_direct: [1.0, 1.0], var_cross: [0.2, 0.2], num_taps: 6, mode: ChannelMode::Taps }
    }
}

impl ChannelParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        ChannelParams { var_direct: [a, b], var_cross: [c, d], ..Default::default() }
    }

    pub fn with_mode(mut self, mode: ChannelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn variance(&self, link: Link) -> f64 {
        match link {
            Link::Direct(c) => self.var_direct[c.index()],
            Link::Cross(c) => self.var_cross[c.index()],
        }
    }

    pub fn validate(&self, num_subcarriers: usize) -> Result<()> {
        let fields = [
            ("var_direct1", self.var_direct[0], true),
            ("var_direct2", self.var_direct[1], true),
            ("var_cross1", self.var_cross[0], false),
            ("var_cross2", self.var_cross[1], false),
        ];
        for (name, v, strict) in fields {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                let bound = if strict { "> 0" } else { ">= 0" };
                return Err(Error::config(name, format!("must be finite and {bound}, got {v}")));
            }
        }
        if self.num_taps == 0 || self.num_taps > num_subcarriers {
            return Err(Error::config(
                "num_taps",
                format!("must be in 1..={num_subcarriers}, got {}", self.num_taps),
            ));
        }
        Ok(())
    }
}

/// Root seed of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Seed {
    /// Independent stream for one trial and link family.
    pub fn stream(self, trial: u64, link: Link) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.0);
        rng.set_stream(trial.wrapping_mul(4).wrapping_add(link.ordinal() as u64));
        rng
    }
}

/// Draws the channel realization of `trial`.
pub fn generate<T: Scalar>(
    params: &ChannelParams,
    cfg: &SystemConfig<T>,
    seed: Seed,
    trial: u64,
) -> Result<ChannelRealization<T>> {
    cfg.validate()?;
    params.validate(cfg.num_subcarriers)?;
    let n_sc = cfg.num_subcarriers;
    let families: Vec<Vec<f64>> = Link::ALL
        .iter()
        .map(|&link| {
            let mut rng = seed.stream(trial, link);
            let users = cfg.users(link.cell());
            let var = params.variance(link);
            match params.mode {
                ChannelMode::Taps => tap_gains(&mut rng, var, params.num_taps, n_sc, users),
                ChannelMode::Iid => iid_gains(&mut rng, var, n_sc, users),
            }
        })
        .collect();
    ChannelRealization::from_fn(n_sc, cfg.users_per_cell, |link, n, k| {
        let users = cfg.users(link.cell());
        T::lit(families[link.ordinal()][n * users + k])
    })
}

fn complex_normal(rng: &mut ChaCha20Rng, var: f64) -> (f64, f64) {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    (s * re, s * im)
}

// row-major [n * users + k]
fn tap_gains(rng: &mut ChaCha20Rng, var: f64, taps: usize, n_sc: usize, users: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_sc * users];
    let per_tap = var / taps as f64;
    for k in 0..users {
        let h: Vec<(f64, f64)> = (0..taps).map(|_| complex_normal(rng, per_tap)).collect();
        for n in 0..n_sc {
            let (mut re, mut im) = (0.0, 0.0);
            for (l, &(a, b)) in h.iter().enumerate() {
                let phase = -2.0 * PI * ((n * l) % n_sc) as f64 / n_sc as f64;
                let (s, c) = phase.sin_cos();
                re += a * c - b * s;
                im += a * s + b * c;
            }
            out[n * users + k] = re * re + im * im;
        }
    }
    out
}

fn iid_gains(rng: &mut ChaCha20Rng, var: f64, n_sc: usize, users: usize) -> Vec<f64> {
    (0..n_sc * users)
        .map(|_| {
            let (re, im) = complex_normal(rng, var);
            re * re + im * im
        })
        .collect()
}

/// Writes `link,sc,user,gain` rows (full round-trip precision).
pub fn dump_csv<T: Scalar, W: Write>(chan: &ChannelRealization<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["link", "sc", "user", "gain"])?;
    for link in Link::ALL {
        for n in 0..chan.num_subcarriers() {
            for k in 0..chan.users(link.cell()) {
                let g = chan.gain(link, n, k).as_f64();
                w.write_record([link.label().to_string(), n.to_string(), k.to_string(), g.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("channel csv", e))?;
    Ok(())
}

/// Reads a dump produced by [`dump_csv`]; every entry must be present exactly once.
pub fn load_csv<T: Scalar, R: Read>(input: R) -> Result<ChannelRealization<T>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    let (mut n_max, mut k_max) = (0usize, [0usize; 2]);
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let link = Link::from_label(&field(0))
            .ok_or_else(|| Error::config("link", format!("unknown link `{}`", field(0))))?;
        let n: usize = field(1).parse().map_err(|_| Error::config("sc", field(1)))?;
        let k: usize = field(2).parse().map_err(|_| Error::config("user", field(2)))?;
        let g: f64 = field(3).parse().map_err(|_| Error::config("gain", field(3)))?;
        n_max = n_max.max(n + 1);
        let m = link.cell().index();
        k_max[m] = k_max[m].max(k + 1);
        rows.push((link, n, k, g));
    }
    let mut grid: Vec<Vec<Option<f64>>> = Link::ALL
        .iter()
        .map(|l| vec![None; n_max * k_max[l.cell().index()]])
        .collect();
    for (link, n, k, g) in rows {
        let idx = n * k_max[link.cell().index()] + k;
        if grid[link.ordinal()][idx].replace(g).is_some() {
            return Err(Error::config("gain", format!("duplicate entry {} sc={n} user={k}", link.label())));
        }
    }
    let mut missing = None;
    let chan = ChannelRealization::from_fn(n_max, k_max, |link, n, k| {
        let v = grid[link.ordinal()][n * k_max[link.cell().index()] + k];
        if v.is_none() {
            missing = Some((link, n, k));
        }
        T::lit(v.unwrap_or(0.0))
    })?;
    if let Some((link, n, k)) = missing {
        return Err(Error::config("gain", format!("missing entry {} sc={n} user={k}", link.label())));
    }
    Ok(chan)
}

/// Mean gain of the cross family seen by `cell`'s users.
pub fn mean_cross_gain<T: Scalar>(chan: &ChannelRealization<T>, cell: Cell) -> T {
    chan.mean_gain(Link::Cross(cell))
}
