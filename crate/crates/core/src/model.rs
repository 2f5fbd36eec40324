//! Domain types for the two-cell downlink and the rate / constraint arithmetic
//! every solver shares.
//!
//! Conventions used throughout the crate:
//!
//! * cell `m`'s *direct* gain `h[m][n][k]` is the power gain from its own BS to
//!   its user `k` on subcarrier `n`;
//! * cell `m`'s *cross* gain `g[m][n][k]` is the power gain from the **other**
//!   BS into cell `m`'s user `k`, i.e. the interference channel seen by that user;
//! * rates are normalised by the subcarrier count and reported in bits/s/Hz.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative slack accepted on every constraint check.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    One,
    Two,
}

impl Cell {
    pub const BOTH: [Cell; 2] = [Cell::One, Cell::Two];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Cell::One => 0,
            Cell::Two => 1,
        }
    }

    #[inline]
    pub fn other(self) -> Cell {
        match self {
            Cell::One => Cell::Two,
            Cell::Two => Cell::One,
        }
    }

    pub fn from_number(m: u8) -> Option<Cell> {
        match m {
            1 => Some(Cell::One),
            2 => Some(Cell::Two),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell{}", self.number())
    }
}

/// Global constants of one two-cell system.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig<T> {
    pub bandwidth_hz: T,
    pub num_subcarriers: usize,
    pub noise_density_w_per_hz: T,
    pub users_per_cell: [usize; 2],
    pub rate_weights: [Vec<T>; 2],
    pub bs_power_w: [T; 2],
}

impl<T: Scalar> SystemConfig<T> {
    /// Builds a validated config with all rate weights equal to one.
    pub fn with_unit_weights(
        bandwidth_hz: T,
        num_subcarriers: usize,
        noise_density_w_per_hz: T,
        users_per_cell: [usize; 2],
        bs_power_w: [T; 2],
    ) -> Result<Self> {
        let cfg = SystemConfig {
            bandwidth_hz,
            num_subcarriers,
            noise_density_w_per_hz,
            users_per_cell,
            rate_weights: [
                vec![T::one(); users_per_cell[0]],
                vec![T::one(); users_per_cell[1]],
            ],
            bs_power_w,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config whose noise variance is exactly `sigma2` (bandwidth = N, density = sigma2).
    pub fn with_noise_variance(
        num_subcarriers: usize,
        sigma2: T,
        users_per_cell: [usize; 2],
        bs_power_w: [T; 2],
    ) -> Result<Self> {
        let n = T::from_usize(num_subcarriers).unwrap_or_else(T::one);
        Self::with_unit_weights(n, num_subcarriers, sigma2, users_per_cell, bs_power_w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > T::zero() && self.bandwidth_hz.is_finite()) {
            return Err(Error::config("bandwidth_hz", "must be finite and > 0"));
        }
        if self.num_subcarriers == 0 {
            return Err(Error::config("num_subcarriers", "must be >= 1"));
        }
        if !(self.noise_density_w_per_hz > T::zero() && self.noise_density_w_per_hz.is_finite()) {
            return Err(Error::config("noise_density_w_per_hz", "must be finite and > 0"));
        }
        for cell in Cell::BOTH {
            let m = cell.index();
            if self.users_per_cell[m] == 0 {
                return Err(Error::config(format!("users_per_cell.{}", m + 1), "must be >= 1"));
            }
            if self.rate_weights[m].len() != self.users_per_cell[m] {
                return Err(Error::config(
                    format!("rate_weights.{}", m + 1),
                    format!(
                        "expected {} entries, got {}",
                        self.users_per_cell[m],
                        self.rate_weights[m].len()
                    ),
                ));
            }
            if self.rate_weights[m].iter().any(|w| !(*w >= T::zero() && w.is_finite())) {
                return Err(Error::config(format!("rate_weights.{}", m + 1), "must be finite and >= 0"));
            }
            let p = self.bs_power_w[m];
            if !(p >= T::zero() && p.is_finite()) {
                return Err(Error::config(format!("bs_power_w.{}", m + 1), "must be finite and >= 0"));
            }
        }
        if !(self.noise_variance() > T::zero()) {
            return Err(Error::config("noise_density_w_per_hz", "noise variance underflows to zero"));
        }
        Ok(())
    }

    /// Per-subcarrier noise variance `z0 * B / N`.
    #[inline]
    pub fn noise_variance(&self) -> T {
        self.noise_density_w_per_hz * self.bandwidth_hz / self.n()
    }

    #[inline]
    pub fn n(&self) -> T {
        T::from_usize(self.num_subcarriers).expect("subcarrier count fits the scalar")
    }

    #[inline]
    pub fn users(&self, cell: Cell) -> usize {
        self.users_per_cell[cell.index()]
    }

    #[inline]
    pub fn weights(&self, cell: Cell) -> &[T] {
        &self.rate_weights[cell.index()]
    }

    #[inline]
    pub fn bs_power(&self, cell: Cell) -> T {
        self.bs_power_w[cell.index()]
    }

    pub fn max_weight(&self, cell: Cell) -> T {
        self.weights(cell).iter().fold(T::zero(), |a, &w| a.max(w))
    }

    /// The same system with the two cell labels exchanged.
    pub fn swapped(&self) -> Self {
        SystemConfig {
            bandwidth_hz: self.bandwidth_hz,
            num_subcarriers: self.num_subcarriers,
            noise_density_w_per_hz: self.noise_density_w_per_hz,
            users_per_cell: [self.users_per_cell[1], self.users_per_cell[0]],
            rate_weights: [self.rate_weights[1].clone(), self.rate_weights[0].clone()],
            bs_power_w: [self.bs_power_w[1], self.bs_power_w[0]],
        }
    }
}

/// One of the four gain families of a realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Link {
    /// own BS to own users of the cell
    Direct(Cell),
    /// other BS into the users of the cell
    Cross(Cell),
}

impl Link {
    pub const ALL: [Link; 4] = [
        Link::Direct(Cell::One),
        Link::Direct(Cell::Two),
        Link::Cross(Cell::One),
        Link::Cross(Cell::Two),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Link::Direct(Cell::One) => "h1",
            Link::Direct(Cell::Two) => "h2",
            Link::Cross(Cell::One) => "g1",
            Link::Cross(Cell::Two) => "g2",
        }
    }

    pub fn from_label(s: &str) -> Option<Link> {
        Link::ALL.into_iter().find(|l| l.label() == s)
    }

    pub fn cell(self) -> Cell {
        match self {
            Link::Direct(c) | Link::Cross(c) => c,
        }
    }

    /// Position in [`Link::ALL`].
    pub fn ordinal(self) -> usize {
        match self {
            Link::Direct(c) => c.index(),
            Link::Cross(c) => 2 + c.index(),
        }
    }
}

/// All direct and cross power gains of one channel draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T> {
    num_subcarriers: usize,
    users: [usize; 2],
    // row-major [n * K + k]
    direct: [Vec<T>; 2],
    cross: [Vec<T>; 2],
}

impl<T: Scalar> ChannelRealization<T> {
    /// Builds a realization by evaluating `gain(link, n, k)` for every entry.
    pub fn from_fn(
        num_subcarriers: usize,
        users: [usize; 2],
        mut gain: impl FnMut(Link, usize, usize) -> T,
    ) -> Result<Self> {
        let mut fill = |link: Link| {
            let k_max = users[link.cell().index()];
            let mut v = Vec::with_capacity(num_subcarriers * k_max);
            for n in 0..num_subcarriers {
                for k in 0..k_max {
                    v.push(gain(link, n, k));
                }
            }
            v
        };
        let direct = [fill(Link::Direct(Cell::One)), fill(Link::Direct(Cell::Two))];
        let cross = [fill(Link::Cross(Cell::One)), fill(Link::Cross(Cell::Two))];
        let chan = ChannelRealization { num_subcarriers, users, direct, cross };
        chan.validate()?;
        Ok(chan)
    }

    pub fn validate(&self) -> Result<()> {
        for link in Link::ALL {
            let data = self.family(link);
            let expected = self.num_subcarriers * self.users[link.cell().index()];
            if data.len() != expected {
                return Err(Error::Dimension(format!(
                    "{} holds {} gains, expected {}",
                    link.label(),
                    data.len(),
                    expected
                )));
            }
            if let Some(bad) = data.iter().find(|g| !(g.is_finite() && **g >= T::zero())) {
                return Err(Error::NonFinite(format!("{} contains gain {}", link.label(), bad)));
            }
        }
        Ok(())
    }

    pub fn matches(&self, cfg: &SystemConfig<T>) -> Result<()> {
        if self.num_subcarriers != cfg.num_subcarriers || self.users != cfg.users_per_cell {
            return Err(Error::Dimension(format!(
                "channel is N={} K={:?}, config is N={} K={:?}",
                self.num_subcarriers, self.users, cfg.num_subcarriers, cfg.users_per_cell
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    #[inline]
    pub fn users(&self, cell: Cell) -> usize {
        self.users[cell.index()]
    }

    #[inline]
    pub fn direct(&self, cell: Cell, n: usize, k: usize) -> T {
        let m = cell.index();
        self.direct[m][n * self.users[m] + k]
    }

    /// Gain from the other cell's BS into `cell`'s user `k`.
    #[inline]
    pub fn cross(&self, cell: Cell, n: usize, k: usize) -> T {
        let m = cell.index();
        self.cross[m][n * self.users[m] + k]
    }

    #[inline]
    pub fn gain(&self, link: Link, n: usize, k: usize) -> T {
        match link {
            Link::Direct(c) => self.direct(c, n, k),
            Link::Cross(c) => self.cross(c, n, k),
        }
    }

    /// Flat row-major storage of one gain family.
    pub fn family(&self, link: Link) -> &[T] {
        match link {
            Link::Direct(c) => &self.direct[c.index()],
            Link::Cross(c) => &self.cross[c.index()],
        }
    }

    pub fn mean_gain(&self, link: Link) -> T {
        let data = self.family(link);
        if data.is_empty() {
            return T::zero();
        }
        data.iter().copied().sum::<T>() / T::from_usize(data.len()).unwrap()
    }

    pub fn swapped(&self) -> Self {
        ChannelRealization {
            num_subcarriers: self.num_subcarriers,
            users: [self.users[1], self.users[0]],
            direct: [self.direct[1].clone(), self.direct[0].clone()],
            cross: [self.cross[1].clone(), self.cross[0].clone()],
        }
    }
}

/// Active user and its power on one subcarrier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slot<T> {
    pub user: usize,
    pub power: T,
}

/// A per-cell power matrix satisfying the one-user-per-subcarrier rule.
///
/// Storage is one optional [`Slot`] per subcarrier, so the OPA constraint holds
/// by construction; a slot never carries zero power.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation<T> {
    cell: Cell,
    num_users: usize,
    slots: Vec<Option<Slot<T>>>,
}

impl<T: Scalar> PowerAllocation<T> {
    pub fn silent(cell: Cell, num_users: usize, num_subcarriers: usize) -> Self {
        PowerAllocation { cell, num_users, slots: vec![None; num_subcarriers] }
    }

    /// Non-positive powers become empty slots.
    pub fn from_slots(cell: Cell, num_users: usize, slots: Vec<Option<Slot<T>>>) -> Result<Self> {
        let mut clean = Vec::with_capacity(slots.len());
        for (n, s) in slots.into_iter().enumerate() {
            clean.push(match s {
                Some(slot) => {
                    if slot.user >= num_users {
                        return Err(Error::Dimension(format!(
                            "subcarrier {n} schedules user {} of {num_users}",
                            slot.user
                        )));
                    }
                    if !slot.power.is_finite() {
                        return Err(Error::NonFinite(format!("power on subcarrier {n}")));
                    }
                    (slot.power > T::zero()).then_some(slot)
                }
                None => None,
            });
        }
        Ok(PowerAllocation { cell, num_users, slots: clean })
    }

    /// Accepts a `K x N` matrix, rejecting columns with more than one positive entry.
    pub fn from_matrix(cell: Cell, power: &[Vec<T>]) -> Result<Self> {
        let num_users = power.len();
        let n_sc = power.first().map_or(0, Vec::len);
        if power.iter().any(|row| row.len() != n_sc) {
            return Err(Error::Dimension("ragged power matrix".into()));
        }
        let mut slots = Vec::with_capacity(n_sc);
        for n in 0..n_sc {
            let mut slot = None;
            let mut count = 0;
            for (k, row) in power.iter().enumerate() {
                let p = row[n];
                if !(p.is_finite() && p >= T::zero()) {
                    return Err(Error::NonFinite(format!("power[{k}][{n}] = {p}")));
                }
                if p > T::zero() {
                    count += 1;
                    slot = Some(Slot { user: k, power: p });
                }
            }
            if count > 1 {
                return Err(Error::Opa { subcarrier: n, count });
            }
            slots.push(slot);
        }
        Ok(PowerAllocation { cell, num_users, slots })
    }

    #[inline]
    pub fn cell(&self) -> Cell {
        self.cell
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    #[inline]
    pub fn num_subcarriers(&self) -> usize {
        self.slots.len()
    }

    #[inline]
    pub fn slot(&self, n: usize) -> Option<Slot<T>> {
        self.slots[n]
    }

    pub fn slots(&self) -> &[Option<Slot<T>>] {
        &self.slots
    }

    /// Power of the active user on `n` (zero when unused).
    #[inline]
    pub fn sc_power(&self, n: usize) -> T {
        self.slots[n].map_or(T::zero(), |s| s.power)
    }

    #[inline]
    pub fn power(&self, k: usize, n: usize) -> T {
        match self.slots[n] {
            Some(s) if s.user == k => s.power,
            _ => T::zero(),
        }
    }

    pub fn power_matrix(&self) -> Vec<Vec<T>> {
        (0..self.num_users)
            .map(|k| (0..self.slots.len()).map(|n| self.power(k, n)).collect())
            .collect()
    }

    /// Active user per subcarrier.
    pub fn schedule(&self) -> Vec<Option<usize>> {
        self.slots.iter().map(|s| s.map(|s| s.user)).collect()
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_some).collect()
    }

    pub fn total_power(&self) -> T {
        self.slots.iter().flatten().map(|s| s.power).sum()
    }

    pub fn scaled(&self, factor: T) -> Self {
        let slots = self
            .slots
            .iter()
            .map(|s| {
                s.and_then(|s| {
                    let power = s.power * factor;
                    (power > T::zero()).then_some(Slot { user: s.user, power })
                })
            })
            .collect();
        PowerAllocation { cell: self.cell, num_users: self.num_users, slots }
    }

    /// Largest entrywise difference between two power matrices.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.slots
            .iter()
            .zip(&other.slots)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) if a.user == b.user => (a.power - b.power).abs(),
                (Some(a), Some(b)) => a.power.max(b.power),
                (Some(a), None) | (None, Some(a)) => a.power,
                (None, None) => T::zero(),
            })
            .fold(T::zero(), T::max)
    }

    pub fn with_cell(mut self, cell: Cell) -> Self {
        self.cell = cell;
        self
    }

    /// `true` when the total power respects `budget` up to [`FEASIBILITY_TOL`].
    pub fn within_budget(&self, budget: T) -> bool {
        self.total_power() <= budget * (T::one() + T::lit(FEASIBILITY_TOL))
    }

    pub fn matches(&self, cfg: &SystemConfig<T>) -> Result<()> {
        if self.slots.len() != cfg.num_subcarriers || self.num_users != cfg.users(self.cell) {
            return Err(Error::Dimension(format!(
                "{} allocation is {}x{}, config expects {}x{}",
                self.cell,
                self.num_users,
                self.slots.len(),
                cfg.users(self.cell),
                cfg.num_subcarriers
            )));
        }
        Ok(())
    }
}

/// Allocations of both cells, indexed by [`Cell::index`].
pub type AllocPair<T> = [PowerAllocation<T>; 2];

/// Protection constraint a cell imposes on its neighbour's leakage.
#[derive(Clone, Debug, PartialEq)]
pub enum InterferenceBudget<T> {
    /// Bound on the leakage averaged over all subcarriers.
    Joint(T),
    /// Per-subcarrier bound; `+inf` disables protection on that subcarrier.
    Individual(Vec<T>),
}

impl<T: Scalar> InterferenceBudget<T> {
    pub fn uniform(num_subcarriers: usize, cap: T) -> Self {
        InterferenceBudget::Individual(vec![cap; num_subcarriers])
    }

    pub fn unlimited(num_subcarriers: usize) -> Self {
        Self::uniform(num_subcarriers, T::infinity())
    }

    pub fn validate(&self, num_subcarriers: usize) -> Result<()> {
        match self {
            InterferenceBudget::Joint(t) => {
                if t.is_nan() || *t < T::zero() {
                    return Err(Error::config("interference_budget", "joint limit must be >= 0"));
                }
            }
            InterferenceBudget::Individual(caps) => {
                if caps.len() != num_subcarriers {
                    return Err(Error::Dimension(format!(
                        "{} per-subcarrier limits for {} subcarriers",
                        caps.len(),
                        num_subcarriers
                    )));
                }
                if caps.iter().any(|t| t.is_nan() || *t < T::zero()) {
                    return Err(Error::config("interference_budget", "per-subcarrier limits must be >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// SINR of one user with a single co-channel interferer.
#[inline]
pub fn sinr<T: Scalar>(p_own: T, h_own: T, p_other: T, g_cross: T, sigma2: T) -> T {
    p_own * h_own / (p_other * g_cross + sigma2)
}

/// Per-user rates of both cells, in bits/s/Hz.
pub fn all_user_rates<T: Scalar>(
    alloc: &AllocPair<T>,
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
) -> Result<[Vec<T>; 2]> {
    check_dims(alloc, chan, cfg)?;
    let sigma2 = cfg.noise_variance();
    let n_t = cfg.n();
    let mut rates = [vec![T::zero(); cfg.users(Cell::One)], vec![T::zero(); cfg.users(Cell::Two)]];
    for cell in Cell::BOTH {
        let own = &alloc[cell.index()];
        let other = &alloc[cell.other().index()];
        for n in 0..cfg.num_subcarriers {
            if let Some(s) = own.slot(n) {
                let snr = sinr(
                    s.power,
                    chan.direct(cell, n, s.user),
                    other.sc_power(n),
                    chan.cross(cell, n, s.user),
                    sigma2,
                );
                rates[cell.index()][s.user] = rates[cell.index()][s.user] + snr.ln_1p();
            }
        }
        let scale = T::LN_2() * n_t;
        for r in rates[cell.index()].iter_mut() {
            *r = *r / scale;
        }
    }
    Ok(rates)
}

/// Rate of one user: `(1/N) sum_n log2(1 + SINR)` over its scheduled subcarriers.
pub fn user_rate<T: Scalar>(
    alloc: &AllocPair<T>,
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    cell: Cell,
    user: usize,
) -> Result<T> {
    if user >= cfg.users(cell) {
        return Err(Error::Dimension(format!("{cell} has no user {user}")));
    }
    Ok(all_user_rates(alloc, chan, cfg)?[cell.index()][user])
}

pub fn cell_wsr<T: Scalar>(
    alloc: &AllocPair<T>,
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    cell: Cell,
) -> Result<T> {
    let rates = all_user_rates(alloc, chan, cfg)?;
    Ok(weighted_sum(cfg.weights(cell), &rates[cell.index()]))
}

pub fn weighted_sum<T: Scalar>(weights: &[T], rates: &[T]) -> T {
    weights.iter().zip(rates).map(|(&w, &r)| w * r).sum()
}

fn check_dims<T: Scalar>(alloc: &AllocPair<T>, chan: &ChannelRealization<T>, cfg: &SystemConfig<T>) -> Result<()> {
    chan.matches(cfg)?;
    for (i, a) in alloc.iter().enumerate() {
        if a.cell().index() != i {
            return Err(Error::Dimension(format!("slot {i} holds the {} allocation", a.cell())));
        }
        a.matches(cfg)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterferenceMode {
    Average,
    PerSubcarrier,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Interference<T> {
    Average(T),
    PerSubcarrier(Vec<T>),
}

/// Leakage of `alloc` onto the neighbour's active users, given the exchanged gain profile.
pub fn interference_to_other<T: Scalar>(
    alloc: &PowerAllocation<T>,
    gain_profile: &[T],
    mode: InterferenceMode,
) -> Interference<T> {
    match mode {
        InterferenceMode::Average => Interference::Average(average_interference(alloc, gain_profile)),
        InterferenceMode::PerSubcarrier => Interference::PerSubcarrier(per_sc_interference(alloc, gain_profile)),
    }
}

pub fn per_sc_interference<T: Scalar>(alloc: &PowerAllocation<T>, gain_profile: &[T]) -> Vec<T> {
    gain_profile
        .iter()
        .enumerate()
        .map(|(n, &g)| alloc.sc_power(n) * g)
        .collect()
}

pub fn average_interference<T: Scalar>(alloc: &PowerAllocation<T>, gain_profile: &[T]) -> T {
    if gain_profile.is_empty() {
        return T::zero();
    }
    per_sc_interference(alloc, gain_profile).into_iter().sum::<T>()
        / T::from_usize(gain_profile.len()).unwrap()
}

/// Solver bookkeeping attached to an outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics<T> {
    /// Dual / outer iterations of the last solve (ellipsoid or bisection steps).
    pub iterations: usize,
    /// Alternating rounds (decentralized schemes only).
    pub rounds: usize,
    pub converged: bool,
    /// Final dual variables, solver specific (`[lambda1, lambda2]` for the centralized scheme).
    pub duals: Vec<T>,
    /// Best Lagrange dual value found (an upper bound on the throughput), when available.
    pub dual_bound: Option<T>,
    /// Interference budgets `[T1, T2]` the outcome was computed with, when applicable.
    pub budgets: Option<[T; 2]>,
}

impl<T> Default for Diagnostics<T> {
    fn default() -> Self {
        Diagnostics {
            iterations: 0,
            rounds: 0,
            converged: true,
            duals: Vec::new(),
            dual_bound: None,
            budgets: None,
        }
    }
}

/// Allocations of both cells together with the rates they achieve.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationOutcome<T> {
    pub alloc: AllocPair<T>,
    pub user_rates: [Vec<T>; 2],
    pub cell_wsr: [T; 2],
    pub throughput: T,
    pub diagnostics: Diagnostics<T>,
}

impl<T: Scalar> AllocationOutcome<T> {
    pub fn evaluate(
        alloc: AllocPair<T>,
        chan: &ChannelRealization<T>,
        cfg: &SystemConfig<T>,
        diagnostics: Diagnostics<T>,
    ) -> Result<Self> {
        let user_rates = all_user_rates(&alloc, chan, cfg)?;
        let cell_wsr = [
            weighted_sum(cfg.weights(Cell::One), &user_rates[0]),
            weighted_sum(cfg.weights(Cell::Two), &user_rates[1]),
        ];
        Ok(AllocationOutcome {
            alloc,
            user_rates,
            cell_wsr,
            throughput: cell_wsr[0] + cell_wsr[1],
            diagnostics,
        })
    }

    /// Recomputes rates from the stored allocation and compares at `rel_tol`.
    pub fn is_consistent(&self, chan: &ChannelRealization<T>, cfg: &SystemConfig<T>, rel_tol: T) -> bool {
        let Ok(rates) = all_user_rates(&self.alloc, chan, cfg) else {
            return false;
        };
        let close = |a: T, b: T| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(T::min_positive_value());
        rates
            .iter()
            .zip(&self.user_rates)
            .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(&a, &b)| close(a, b)))
            && self.throughput == self.cell_wsr[0] + self.cell_wsr[1]
    }

    /// Both cells within their BS budgets.
    pub fn is_feasible(&self, cfg: &SystemConfig<T>) -> bool {
        Cell::BOTH
            .iter()
            .all(|&c| self.alloc[c.index()].within_budget(cfg.bs_power(c)))
    }
}
