//! Cooperative interference control: the two cells take turns re-optimizing
//! their own allocation against the other's latest one, after exchanging the
//! cross-gain profile of their active users. Also hosts the baseline schemes
//! and the budget grid search.

use std::fmt;

use crate::centralized::{self, CentralizedOptions};
use crate::error::{Error, Result};
use crate::model::{
    AllocPair, AllocationOutcome, Cell, ChannelRealization, Diagnostics, InterferenceBudget, Link,
    PowerAllocation, SystemConfig,
};
use crate::percell::{self, CellDiagnostics, PerCellProblem};
use crate::scalar::Scalar;

/// Allocation scheme. Budgets are indexed by the cell they protect:
/// `t[0]` limits BS2's leakage into cell 1, `t[1]` limits BS1's leakage into cell 2.
#[derive(Clone, Debug, PartialEq)]
pub enum SchemeKind<T> {
    Optimal,
    /// Joint subcarrier protection with average-interference limits.
    Average { t: [T; 2] },
    /// Individual subcarrier protection with uniform per-subcarrier limits.
    Peak { t: [T; 2] },
    NoProtection,
    Half,
}

impl<T: Scalar> fmt::Display for SchemeKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::Optimal => write!(f, "optimal"),
            SchemeKind::Average { t } => write!(f, "average({},{})", t[0], t[1]),
            SchemeKind::Peak { t } => write!(f, "peak({},{})", t[0], t[1]),
            SchemeKind::NoProtection => write!(f, "noprotection"),
            SchemeKind::Half => write!(f, "half"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec<T> {
    pub kind: SchemeKind<T>,
    pub max_rounds: usize,
    /// Stop once no power entry moves by more than this fraction of the BS budget.
    pub convergence_tol: T,
    /// Cell that updates first in every round.
    pub first: Cell,
}

impl<T: Scalar> SchemeSpec<T> {
    pub fn new(kind: SchemeKind<T>) -> Self {
        SchemeSpec { kind, max_rounds: 50, convergence_tol: T::lit(1e-4), first: Cell::One }
    }

    pub fn starting_with(mut self, first: Cell) -> Self {
        self.first = first;
        self
    }

    pub fn validate(&self, cfg: &SystemConfig<T>) -> Result<()> {
        match &self.kind {
            SchemeKind::Average { t } | SchemeKind::Peak { t } => {
                if t.iter().any(|x| x.is_nan() || *x < T::zero()) {
                    return Err(Error::config("scheme.t", "interference budgets must be >= 0"));
                }
            }
            SchemeKind::Half if cfg.num_subcarriers % 2 != 0 => {
                return Err(Error::config("num_subcarriers", "the half scheme needs an even subcarrier count"));
            }
            _ => {}
        }
        if self.max_rounds == 0 {
            return Err(Error::config("max_rounds", "must be >= 1"));
        }
        Ok(())
    }
}

/// Cross gains from the updating BS to the other cell's active users.
#[derive(Clone, Debug, PartialEq)]
pub struct GainProfile<T>(pub Vec<T>);

/// Profile the other cell sends over the backhaul: the gain towards its active
/// user on each subcarrier, zero where it is idle.
pub fn exchange_profile<T: Scalar>(
    other: &PowerAllocation<T>,
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
) -> Result<GainProfile<T>> {
    chan.matches(cfg)?;
    other.matches(cfg)?;
    let victim = other.cell();
    Ok(GainProfile(
        other
            .schedule()
            .into_iter()
            .enumerate()
            .map(|(n, k)| k.map_or(T::zero(), |k| chan.cross(victim, n, k)))
            .collect(),
    ))
}

/// One per-cell update inside the alternating loop.
pub struct RoundEvent<'a, T> {
    pub round: usize,
    pub cell: Cell,
    pub problem: &'a PerCellProblem<T>,
    pub before: &'a PowerAllocation<T>,
    pub after: &'a PowerAllocation<T>,
    pub diagnostics: &'a CellDiagnostics<T>,
}

/// Runs a decentralized scheme (`Average`, `Peak` or `NoProtection`).
pub fn run_decentralized<T: Scalar>(
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    scheme: &SchemeSpec<T>,
) -> Result<AllocationOutcome<T>> {
    run_decentralized_traced(chan, cfg, scheme, |_| {})
}

/// [`run_decentralized`] reporting every per-cell update to `observe`.
///
/// Both cells start silent. If the powers have not settled after
/// `max_rounds`, the allocation of the round with the highest throughput is
/// returned with `converged = false`.
pub fn run_decentralized_traced<T: Scalar>(
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    scheme: &SchemeSpec<T>,
    mut observe: impl FnMut(&RoundEvent<'_, T>),
) -> Result<AllocationOutcome<T>> {
    cfg.validate()?;
    chan.matches(cfg)?;
    scheme.validate(cfg)?;
    let n_sc = cfg.num_subcarriers;
    let budget_for = |cell: Cell| -> Result<InterferenceBudget<T>> {
        let victim = cell.other().index();
        Ok(match &scheme.kind {
            SchemeKind::Average { t } => InterferenceBudget::Joint(t[victim]),
            SchemeKind::Peak { t } => InterferenceBudget::uniform(n_sc, t[victim]),
            SchemeKind::NoProtection => InterferenceBudget::unlimited(n_sc),
            other => {
                return Err(Error::config("scheme", format!("`{other}` is not a decentralized scheme")));
            }
        })
    };
    let order = [scheme.first, scheme.first.other()];
    let mut alloc: AllocPair<T> = [
        PowerAllocation::silent(Cell::One, cfg.users(Cell::One), n_sc),
        PowerAllocation::silent(Cell::Two, cfg.users(Cell::Two), n_sc),
    ];
    let mut best: Option<(T, AllocPair<T>, usize)> = None;
    let mut converged = false;
    let mut rounds = 0;
    let mut iterations = 0;
    let mut duals = vec![T::zero(); 4];
    while rounds < scheme.max_rounds {
        rounds += 1;
        let previous = alloc.clone();
        for &cell in &order {
            let other = &alloc[cell.other().index()];
            let profile = exchange_profile(other, chan, cfg)?.0;
            let problem = PerCellProblem::new(chan, cfg, cell, other, profile, budget_for(cell)?)?;
            let (next, diag) = percell::solve(&problem)?;
            iterations += diag.iterations;
            duals[2 * cell.index()] = diag.lambda;
            duals[2 * cell.index() + 1] = diag.mu;
            observe(&RoundEvent {
                round: rounds,
                cell,
                problem: &problem,
                before: &alloc[cell.index()],
                after: &next,
                diagnostics: &diag,
            });
            alloc[cell.index()] = next;
        }
        let thr = AllocationOutcome::evaluate(alloc.clone(), chan, cfg, Diagnostics::default())?.throughput;
        if best.as_ref().is_none_or(|(v, ..)| thr > *v) {
            best = Some((thr, alloc.clone(), rounds));
        }
        let moved = Cell::BOTH
            .iter()
            .map(|&c| {
                let p = cfg.bs_power(c);
                let d = alloc[c.index()].max_abs_diff(&previous[c.index()]);
                if p > T::zero() { d / p } else { d }
            })
            .fold(T::zero(), T::max);
        if moved < scheme.convergence_tol {
            converged = true;
            break;
        }
    }
    let final_alloc = if converged { alloc } else { best.map(|b| b.1).unwrap_or(alloc) };
    let budgets = match &scheme.kind {
        SchemeKind::Average { t } | SchemeKind::Peak { t } => Some(*t),
        _ => Some([T::infinity(); 2]),
    };
    let diag = Diagnostics { iterations, rounds, converged, duals, dual_bound: None, budgets };
    AllocationOutcome::evaluate(final_alloc, chan, cfg, diag)
}

/// Orthogonal split: cell 1 uses the first half of the subcarriers, cell 2 the rest.
pub fn run_half<T: Scalar>(chan: &ChannelRealization<T>, cfg: &SystemConfig<T>) -> Result<AllocationOutcome<T>> {
    cfg.validate()?;
    chan.matches(cfg)?;
    let n_sc = cfg.num_subcarriers;
    if n_sc % 2 != 0 {
        return Err(Error::config("num_subcarriers", "the half scheme needs an even subcarrier count"));
    }
    let half = n_sc / 2;
    let mut alloc = Vec::with_capacity(2);
    let mut iterations = 0;
    for cell in Cell::BOTH {
        let other = PowerAllocation::silent(cell.other(), cfg.users(cell.other()), n_sc);
        let usable = (0..n_sc).map(|n| (n < half) == (cell == Cell::One)).collect();
        let problem = PerCellProblem::new(chan, cfg, cell, &other, vec![T::zero(); n_sc], InterferenceBudget::unlimited(n_sc))?
            .with_usable(usable);
        let (a, d) = percell::solve_isp(&problem)?;
        iterations += d.iterations;
        alloc.push(a);
    }
    let alloc: AllocPair<T> = [alloc.remove(0), alloc.remove(0)];
    let diag = Diagnostics { iterations, rounds: 1, budgets: Some([T::infinity(); 2]), ..Default::default() };
    AllocationOutcome::evaluate(alloc, chan, cfg, diag)
}

/// Any scheme behind one entry point.
pub fn run_scheme<T: Scalar>(
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    scheme: &SchemeSpec<T>,
) -> Result<AllocationOutcome<T>> {
    match scheme.kind {
        SchemeKind::Optimal => centralized::solve_centralized(chan, cfg, &CentralizedOptions::default()),
        SchemeKind::Half => run_half(chan, cfg),
        _ => run_decentralized(chan, cfg, scheme),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protection {
    Average,
    Peak,
}

impl Protection {
    pub fn scheme<T: Scalar>(self, t: [T; 2]) -> SchemeKind<T> {
        match self {
            Protection::Average => SchemeKind::Average { t },
            Protection::Peak => SchemeKind::Peak { t },
        }
    }
}

/// Exponents of the default ladder: `10^-3, 10^-2.5, ..., 10^0`.
pub const LADDER_EXPONENTS: [f64; 7] = [-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0];

/// Interference unit per protected cell: the leakage under uniform power,
/// `(P_other / N) * mean cross gain into the protected cell`.
pub fn budget_scale<T: Scalar>(chan: &ChannelRealization<T>, cfg: &SystemConfig<T>) -> [T; 2] {
    Cell::BOTH.map(|victim| {
        cfg.bs_power(victim.other()) / cfg.n() * chan.mean_gain(Link::Cross(victim))
    })
}

/// Default 7x7 log ladder of `(T1, T2)` scaled by [`budget_scale`].
pub fn default_grid<T: Scalar>(chan: &ChannelRealization<T>, cfg: &SystemConfig<T>) -> Vec<[T; 2]> {
    let scale = budget_scale(chan, cfg);
    let axis = |m: usize| -> Vec<T> {
        LADDER_EXPONENTS.iter().map(|&e| T::lit(10f64.powf(e)) * scale[m]).collect()
    };
    let (a1, a2) = (axis(0), axis(1));
    a1.iter().flat_map(|&t1| a2.iter().map(move |&t2| [t1, t2])).collect()
}

/// Axis of the wider ladder used when budgets are searched per realization:
/// zero, `10^-6, 10^-5.5, ..., 10^0` and unlimited, in units of [`budget_scale`].
pub fn search_axis() -> Vec<f64> {
    let mut axis = vec![0.0];
    axis.extend((0..=12).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64)));
    axis.push(f64::INFINITY);
    axis
}

/// Full 2-D product of [`search_axis`], scaled per protected cell. Contains
/// `(inf, inf)`, so a search over it never does worse than no protection.
pub fn search_grid<T: Scalar>(chan: &ChannelRealization<T>, cfg: &SystemConfig<T>) -> Vec<[T; 2]> {
    let scale = budget_scale(chan, cfg);
    let axis = search_axis();
    let at = |x: f64, m: usize| if x.is_infinite() { T::infinity() } else { T::lit(x) * scale[m] };
    axis.iter().flat_map(|&a| axis.iter().map(move |&b| [at(a, 0), at(b, 1)])).collect()
}

/// Evaluated grid point.
#[derive(Clone, Debug)]
pub struct GridPoint<T> {
    pub t: [T; 2],
    pub throughput: T,
}

/// Best budgets on `grid` (ties go to the smaller `T1 + T2`, then grid order),
/// with its outcome and the whole evaluated surface.
pub fn search_budgets<T: Scalar>(
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    grid: &[[T; 2]],
    protection: Protection,
    template: &SchemeSpec<T>,
) -> Result<([T; 2], AllocationOutcome<T>, Vec<GridPoint<T>>)> {
    if grid.is_empty() {
        return Err(Error::config("grid", "budget grid is empty"));
    }
    let mut best: Option<([T; 2], AllocationOutcome<T>)> = None;
    let mut surface = Vec::with_capacity(grid.len());
    for &t in grid {
        let spec = SchemeSpec { kind: protection.scheme(t), ..template.clone() };
        let out = run_decentralized(chan, cfg, &spec)?;
        surface.push(GridPoint { t, throughput: out.throughput });
        let better = match &best {
            None => true,
            Some((bt, bo)) => {
                out.throughput > bo.throughput || (out.throughput == bo.throughput && t[0] + t[1] < bt[0] + bt[1])
            }
        };
        if better {
            best = Some((t, out));
        }
    }
    let (t, out) = best.unwrap();
    Ok((t, out, surface))
}
