//! Single-cell weighted-sum-rate maximization under the BS power budget plus
//! an interference protection constraint towards the neighbouring cell.
//!
//! Both variants decouple per subcarrier once the dual prices are fixed: every
//! candidate user gets a (possibly capped) water-filling power and the user with
//! the largest per-subcarrier Lagrangian wins the subcarrier.
//!
//! * **Joint protection** bounds the average leakage `(1/N) sum_n p_n g_n <= T`.
//!   The two prices `(lambda, mu)` are found with the ellipsoid method.
//! * **Individual protection** bounds each subcarrier, `p_n g_n <= T_n`, which
//!   becomes a per-subcarrier power cap; `lambda` is found by bisection.
//!
//! After the dual search, the winning schedule is frozen and its powers are
//! re-solved exactly (the frozen problem is concave), which makes the binding
//! constraints tight despite the discontinuities user switching introduces.

use crate::dual::{self, DualEval, Ellipsoid2, EllipsoidOptions};
use crate::error::{Error, Result};
use crate::model::{
    Cell, ChannelRealization, InterferenceBudget, PowerAllocation, Slot, SystemConfig, FEASIBILITY_TOL,
};
use crate::scalar::Scalar;

/// Returned when the price of power is zero and the water level is unbounded;
/// callers clip at the BS budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("zero power price: water level is unbounded")]
pub struct NeedsCap;

fn water_fill<T: Scalar>(w: T, h: T, interference: T, price: T, n: usize) -> Result<T, NeedsCap> {
    if !(h > T::zero()) || !(w > T::zero()) {
        return Ok(T::zero());
    }
    if !(price > T::zero()) {
        return Err(NeedsCap);
    }
    let n = T::from_usize(n).unwrap();
    let level = w / (n * T::LN_2()) / price;
    Ok((level - interference / h).max(T::zero()))
}

/// Joint-protection power rule: `( w / (N ln2) / (lambda + mu g/N) - I/h )^+`.
pub fn jsp_power<T: Scalar>(
    w: T,
    h: T,
    interference: T,
    g_bar: T,
    lambda: T,
    mu: T,
    n: usize,
) -> Result<T, NeedsCap> {
    let leak = if g_bar > T::zero() { mu * g_bar / T::from_usize(n).unwrap() } else { T::zero() };
    water_fill(w, h, interference, lambda + leak, n)
}

/// Individual-protection power rule: water-filling at price `lambda`, capped at
/// `limit / g_bar` (no cap when `g_bar` is zero or the limit is infinite).
pub fn isp_power<T: Scalar>(
    w: T,
    h: T,
    interference: T,
    g_bar: T,
    lambda: T,
    limit: T,
    n: usize,
) -> Result<T, NeedsCap> {
    let cap = power_cap(limit, g_bar);
    if !(h > T::zero()) || !(w > T::zero()) {
        return Ok(T::zero());
    }
    match water_fill(w, h, interference, lambda, n) {
        Ok(p) => Ok(p.min(cap)),
        Err(NeedsCap) if cap.is_finite() => Ok(cap),
        Err(e) => Err(e),
    }
}

fn power_cap<T: Scalar>(limit: T, g_bar: T) -> T {
    if g_bar > T::zero() && limit.is_finite() {
        limit / g_bar
    } else {
        T::infinity()
    }
}

/// Everything one BS needs to optimize its own cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PerCellProblem<T> {
    pub cell: Cell,
    pub num_subcarriers: usize,
    pub num_users: usize,
    /// Own direct gains, row-major `[n * K + k]`.
    pub direct: Vec<T>,
    /// Gains from the other BS into own users, row-major `[n * K + k]`.
    pub cross_in: Vec<T>,
    /// Power the other cell radiates on each subcarrier.
    pub other_power: Vec<T>,
    /// Outgoing gain profile towards the other cell's active users (zero where unused).
    pub profile: Vec<T>,
    /// Subcarriers this cell may use.
    pub usable: Vec<bool>,
    pub budget: InterferenceBudget<T>,
    pub bs_power: T,
    pub weights: Vec<T>,
    pub noise_variance: T,
}

impl<T: Scalar> PerCellProblem<T> {
    /// Problem for `cell` given the other cell's current allocation and the
    /// exchanged gain profile.
    pub fn new(
        chan: &ChannelRealization<T>,
        cfg: &SystemConfig<T>,
        cell: Cell,
        other: &PowerAllocation<T>,
        profile: Vec<T>,
        budget: InterferenceBudget<T>,
    ) -> Result<Self> {
        chan.matches(cfg)?;
        other.matches(cfg)?;
        let n_sc = cfg.num_subcarriers;
        let k_max = cfg.users(cell);
        let mut direct = Vec::with_capacity(n_sc * k_max);
        let mut cross_in = Vec::with_capacity(n_sc * k_max);
        for n in 0..n_sc {
            for k in 0..k_max {
                direct.push(chan.direct(cell, n, k));
                cross_in.push(chan.cross(cell, n, k));
            }
        }
        let prob = PerCellProblem {
            cell,
            num_subcarriers: n_sc,
            num_users: k_max,
            direct,
            cross_in,
            other_power: (0..n_sc).map(|n| other.sc_power(n)).collect(),
            profile,
            usable: vec![true; n_sc],
            budget,
            bs_power: cfg.bs_power(cell),
            weights: cfg.weights(cell).to_vec(),
            noise_variance: cfg.noise_variance(),
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn with_usable(mut self, usable: Vec<bool>) -> Self {
        self.usable = usable;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_subcarriers;
        let nk = n * self.num_users;
        if self.direct.len() != nk
            || self.cross_in.len() != nk
            || self.other_power.len() != n
            || self.profile.len() != n
            || self.usable.len() != n
            || self.weights.len() != self.num_users
        {
            return Err(Error::Dimension(format!("per-cell problem for {} has inconsistent array sizes", self.cell)));
        }
        if self.profile.iter().any(|g| !(g.is_finite() && *g >= T::zero())) {
            return Err(Error::NonFinite("gain profile".into()));
        }
        if !(self.bs_power >= T::zero() && self.bs_power.is_finite()) {
            return Err(Error::config("bs_power", "must be finite and >= 0"));
        }
        self.budget.validate(n)
    }

    /// Interference-plus-noise seen by user `k` on subcarrier `n`.
    #[inline]
    pub fn interference(&self, n: usize, k: usize) -> T {
        self.other_power[n] * self.cross_in[n * self.num_users + k] + self.noise_variance
    }

    /// Weighted sum rate of an allocation of this cell against the fixed other cell.
    pub fn wsr(&self, alloc: &PowerAllocation<T>) -> T {
        let scale = T::from_usize(self.num_subcarriers).unwrap() * T::LN_2();
        (0..self.num_subcarriers)
            .filter_map(|n| alloc.slot(n).map(|s| (n, s)))
            .map(|(n, s)| {
                let h = self.direct[n * self.num_users + s.user];
                self.weights[s.user] * (h * s.power / self.interference(n, s.user)).ln_1p() / scale
            })
            .sum()
    }
}

/// Result bookkeeping of one per-cell solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CellDiagnostics<T> {
    pub iterations: usize,
    pub lambda: T,
    pub mu: T,
    pub converged: bool,
    pub wsr: T,
}

/// Dispatches on the budget kind.
pub fn solve<T: Scalar>(problem: &PerCellProblem<T>) -> Result<(PowerAllocation<T>, CellDiagnostics<T>)> {
    match problem.budget {
        InterferenceBudget::Joint(_) => solve_jsp(problem),
        InterferenceBudget::Individual(_) => solve_isp(problem),
    }
}

const BISECTION_MAX: usize = 200;
const JSP_ELLIPSOID_MAX: usize = 200;

/// Precomputed per-entry quantities shared by both solvers.
struct Prepared<'a, T> {
    prob: &'a PerCellProblem<T>,
    /// `I / h`; infinite when the entry cannot carry power.
    ioh: Vec<T>,
    /// `w / (N ln 2)` per user
    coef: Vec<T>,
    /// Per-subcarrier power cap, at most the BS budget.
    caps: Vec<T>,
    tol: T,
}

#[derive(Clone, Debug)]
struct Sweep<T> {
    slots: Vec<Option<Slot<T>>>,
    total: T,
    leak: T,
    value: T,
}

impl<'a, T: Scalar> Prepared<'a, T> {
    fn new(prob: &'a PerCellProblem<T>, caps: Vec<T>) -> Self {
        let k_max = prob.num_users;
        let scale = T::from_usize(prob.num_subcarriers).unwrap() * T::LN_2();
        let coef: Vec<T> = prob.weights.iter().map(|&w| w / scale).collect();
        let mut ioh = vec![T::infinity(); prob.num_subcarriers * k_max];
        for n in 0..prob.num_subcarriers {
            if !prob.usable[n] || !(caps[n] > T::zero()) {
                continue;
            }
            for k in 0..k_max {
                let h = prob.direct[n * k_max + k];
                if h > T::zero() && coef[k] > T::zero() {
                    ioh[n * k_max + k] = prob.interference(n, k) / h;
                }
            }
        }
        Prepared { prob, ioh, coef, caps, tol: T::rel_tol(FEASIBILITY_TOL) }
    }

    #[inline]
    fn power(&self, k: usize, ioh: T, price: T, cap: T) -> T {
        if price > T::zero() {
            (self.coef[k] / price - ioh).max(T::zero()).min(cap)
        } else {
            cap
        }
    }

    /// Best user and power on `n` at the given price (strictly better wins, so ties keep the lowest index).
    #[inline]
    fn choose(&self, n: usize, price: T) -> Option<(Slot<T>, T)> {
        let k_max = self.prob.num_users;
        let cap = self.caps[n];
        let mut best: Option<(Slot<T>, T)> = None;
        for k in 0..k_max {
            let ioh = self.ioh[n * k_max + k];
            if !ioh.is_finite() {
                continue;
            }
            let p = self.power(k, ioh, price, cap);
            if !(p > T::zero()) {
                continue;
            }
            let value = self.coef[k] * (p / ioh).ln_1p() - price * p;
            if best.is_none_or(|(_, v)| value > v) {
                best = Some((Slot { user: k, power: p }, value));
            }
        }
        best.filter(|(_, v)| *v > T::zero() || price == T::zero())
    }

    fn sweep(&self, price: impl Fn(usize) -> T) -> Sweep<T> {
        let mut out = Sweep { slots: Vec::with_capacity(self.prob.num_subcarriers), total: T::zero(), leak: T::zero(), value: T::zero() };
        for n in 0..self.prob.num_subcarriers {
            let slot = self.choose(n, price(n)).map(|(s, v)| {
                out.total = out.total + s.power;
                out.leak = out.leak + s.power * self.prob.profile[n];
                out.value = out.value + v;
                s
            });
            out.slots.push(slot);
        }
        out
    }

    /// Powers for a frozen schedule at the given prices.
    fn frozen(&self, schedule: &[Option<usize>], price: impl Fn(usize) -> T) -> Sweep<T> {
        let k_max = self.prob.num_users;
        let mut out = Sweep { slots: Vec::with_capacity(schedule.len()), total: T::zero(), leak: T::zero(), value: T::zero() };
        for (n, s) in schedule.iter().enumerate() {
            let slot = s.and_then(|k| {
                let ioh = self.ioh[n * k_max + k];
                if !ioh.is_finite() {
                    return None;
                }
                let p = self.power(k, ioh, price(n), self.caps[n]);
                (p > T::zero()).then(|| {
                    out.total = out.total + p;
                    out.leak = out.leak + p * self.prob.profile[n];
                    Slot { user: k, power: p }
                })
            });
            out.slots.push(slot);
        }
        out
    }

    fn wsr(&self, slots: &[Option<Slot<T>>]) -> T {
        let k_max = self.prob.num_users;
        slots
            .iter()
            .enumerate()
            .filter_map(|(n, s)| s.map(|s| self.coef[s.user] * (s.power / self.ioh[n * k_max + s.user]).ln_1p()))
            .sum()
    }

    /// Largest marginal utility of power at zero power; above this price nothing is allocated.
    fn price_ceiling(&self, subset: impl Fn(usize) -> bool) -> T {
        let k_max = self.prob.num_users;
        let mut best = T::zero();
        for n in (0..self.prob.num_subcarriers).filter(|&n| subset(n)) {
            for k in 0..k_max {
                let ioh = self.ioh[n * k_max + k];
                if ioh.is_finite() {
                    best = best.max(self.coef[k] / ioh);
                }
            }
        }
        best
    }

    /// Smallest `lambda >= 0` whose allocation fits the BS budget, for a power
    /// curve that is non-increasing in `lambda`.
    fn fit_budget(&self, upper: T, mut total_at: impl FnMut(T) -> T) -> (T, usize, bool) {
        let budget = self.prob.bs_power;
        if total_at(T::zero()) <= budget {
            return (T::zero(), 0, true);
        }
        let mut hi = upper.max(T::min_positive_value());
        let mut iters = 0;
        while total_at(hi) > budget && iters < BISECTION_MAX {
            hi = hi * T::lit(2.0);
            iters += 1;
        }
        let mut lo = T::zero();
        let width_tol = T::rel_tol(1e-13);
        let mut converged = false;
        while iters < BISECTION_MAX {
            iters += 1;
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                converged = true;
                break;
            }
            let total = total_at(mid);
            if total > budget {
                lo = mid;
            } else {
                hi = mid;
                if budget - total <= self.tol * budget {
                    converged = true;
                    break;
                }
            }
            if hi - lo <= width_tol * hi {
                converged = true;
                break;
            }
        }
        (hi, iters, converged)
    }

    fn finish(&self, slots: Vec<Option<Slot<T>>>) -> Result<PowerAllocation<T>> {
        PowerAllocation::from_slots(self.prob.cell, self.prob.num_users, slots)
    }
}

fn caps_for<T: Scalar>(prob: &PerCellProblem<T>, limits: Option<&[T]>) -> Vec<T> {
    (0..prob.num_subcarriers)
        .map(|n| {
            if !prob.usable[n] {
                return T::zero();
            }
            let cap = limits.map_or(T::infinity(), |l| power_cap(l[n], prob.profile[n]));
            cap.min(prob.bs_power)
        })
        .collect()
}

/// Closed-form price that spends the budget exactly, keeping every subcarrier
/// in its current regime (off, capped or on the water level).
fn exact_level<T: Scalar>(prep: &Prepared<'_, T>, slots: &[Option<Slot<T>>]) -> Option<T> {
    let k_max = prep.prob.num_users;
    let mut spare = prep.prob.bs_power;
    let mut coef = T::zero();
    for (n, s) in slots.iter().enumerate() {
        let Some(s) = s else { continue };
        if s.power >= prep.caps[n] {
            spare = spare - prep.caps[n];
        } else {
            spare = spare + prep.ioh[n * k_max + s.user];
            coef = coef + prep.coef[s.user];
        }
    }
    (coef > T::zero() && spare > T::zero()).then(|| coef / spare)
}

/// Water-filling with per-subcarrier caps and a single budget price `lambda`.
fn solve_single_price<T: Scalar>(prep: &Prepared<'_, T>) -> Result<(PowerAllocation<T>, CellDiagnostics<T>)> {
    let prob = prep.prob;
    let silent = || {
        Ok((
            PowerAllocation::silent(prob.cell, prob.num_users, prob.num_subcarriers),
            CellDiagnostics { iterations: 0, lambda: T::zero(), mu: T::zero(), converged: true, wsr: T::zero() },
        ))
    };
    if !(prob.bs_power > T::zero()) {
        return silent();
    }
    let at_zero = prep.sweep(|_| T::zero());
    if at_zero.total <= prob.bs_power {
        let wsr = prep.wsr(&at_zero.slots);
        return Ok((
            prep.finish(at_zero.slots)?,
            CellDiagnostics { iterations: 0, lambda: T::zero(), mu: T::zero(), converged: true, wsr },
        ));
    }
    let k = T::from_usize(prob.num_users).unwrap();
    let w_max = prob.weights.iter().fold(T::zero(), |a, &w| a.max(w));
    let eps_p = T::lit(1e-9) * prob.bs_power;
    let upper = k * w_max / (T::from_usize(prob.num_subcarriers).unwrap() * T::LN_2() * eps_p);
    let (lambda, mut iterations, converged) = prep.fit_budget(upper, |l| prep.sweep(|_| l).total);
    let schedule: Vec<Option<usize>> = prep.sweep(|_| lambda).slots.iter().map(|s| s.map(|s| s.user)).collect();
    if schedule.iter().all(Option::is_none) {
        return silent();
    }
    let (mut polished, extra, _) = prep.fit_budget(lambda, |l| prep.frozen(&schedule, |_| l).total);
    iterations += extra;
    let mut out = prep.frozen(&schedule, |_| polished);
    if let Some(level) = exact_level(prep, &out.slots) {
        let exact = prep.frozen(&schedule, |_| level);
        let budget = prob.bs_power;
        if exact.total <= budget * (T::one() + T::rel_tol(1e-12)) && (budget - exact.total).abs() < (budget - out.total).abs() {
            polished = level;
            out = exact;
        }
    }
    let wsr = prep.wsr(&out.slots);
    Ok((
        prep.finish(out.slots)?,
        CellDiagnostics { iterations, lambda: polished, mu: T::zero(), converged, wsr },
    ))
}

/// Individual subcarrier protection: caps `T_n / g_n`, bisection on `lambda`.
pub fn solve_isp<T: Scalar>(problem: &PerCellProblem<T>) -> Result<(PowerAllocation<T>, CellDiagnostics<T>)> {
    problem.validate()?;
    let InterferenceBudget::Individual(limits) = &problem.budget else {
        return Err(Error::config("budget", "individual-protection solver needs per-subcarrier limits"));
    };
    let prep = Prepared::new(problem, caps_for(problem, Some(limits)));
    solve_single_price(&prep)
}

/// Joint subcarrier protection: ellipsoid search over `(lambda, mu)` followed
/// by an exact re-solve of the winning schedule.
pub fn solve_jsp<T: Scalar>(problem: &PerCellProblem<T>) -> Result<(PowerAllocation<T>, CellDiagnostics<T>)> {
    problem.validate()?;
    let InterferenceBudget::Joint(limit) = problem.budget else {
        return Err(Error::config("budget", "joint-protection solver needs a scalar limit"));
    };
    let n_sc = problem.num_subcarriers;
    let protected = |n: usize| problem.usable[n] && problem.profile[n] > T::zero();
    let any_protected = (0..n_sc).any(protected);

    if limit.is_infinite() || !any_protected {
        let prep = Prepared::new(problem, caps_for(problem, None));
        return solve_single_price(&prep);
    }
    if limit == T::zero() {
        // every protected subcarrier must stay silent
        let mut caps = caps_for(problem, None);
        for (n, c) in caps.iter_mut().enumerate() {
            if protected(n) {
                *c = T::zero();
            }
        }
        let prep = Prepared::new(problem, caps);
        return solve_single_price(&prep);
    }
    if !(problem.bs_power > T::zero()) {
        let prep = Prepared::new(problem, caps_for(problem, None));
        return solve_single_price(&prep);
    }

    let prep = Prepared::new(problem, caps_for(problem, None));
    let n_t = T::from_usize(n_sc).unwrap();
    let budget = problem.bs_power;
    let price_at = |lambda: T, mu: T| {
        let profile = &problem.profile;
        move |n: usize| lambda + mu * profile[n] / n_t
    };

    let ceiling = prep.price_ceiling(|_| true);
    if !(ceiling > T::zero()) {
        return solve_single_price(&prep);
    }
    let g_min = (0..n_sc)
        .filter(|&n| protected(n))
        .map(|n| problem.profile[n])
        .fold(T::infinity(), T::min);
    let mu_max = n_t * ceiling / g_min.max(n_t * limit / budget);
    let k = T::from_usize(problem.num_users).unwrap();
    let w_max = problem.weights.iter().fold(T::zero(), |a, &w| a.max(w));
    let delta = (k * w_max / (T::LN_2() * budget)).max(T::min_positive_value());
    // searched in units of the initial semi-axes so the shape matrix stays well conditioned
    let unit = [T::lit(1e3) * delta, mu_max];
    let ell = Ellipsoid2::axis_aligned([delta / unit[0], T::lit(0.5)], [T::one(), T::one()]);

    // best budget-feasible primal seen during the search (scaled into both constraints)
    let mut best_scaled: Option<(T, Vec<Option<usize>>)> = None;
    let run = dual::minimize(
        ell,
        EllipsoidOptions { max_iterations: JSP_ELLIPSOID_MAX, volume_ratio: dual::volume_ratio(1e-20) },
        |[x, y]| {
            let (lambda, mu) = (x * unit[0], y * unit[1]);
            let s = prep.sweep(price_at(lambda, mu));
            let avg = s.leak / n_t;
            let mut factor = T::one();
            if s.total > budget {
                factor = factor.min(budget / s.total);
            }
            if avg > limit {
                factor = factor.min(limit / avg);
            }
            let scaled_wsr: T = {
                let k_max = problem.num_users;
                s.slots
                    .iter()
                    .enumerate()
                    .filter_map(|(n, sl)| {
                        sl.map(|sl| prep.coef[sl.user] * (sl.power * factor / prep.ioh[n * k_max + sl.user]).ln_1p())
                    })
                    .sum()
            };
            if best_scaled.as_ref().is_none_or(|(v, _)| scaled_wsr > *v) {
                best_scaled = Some((scaled_wsr, s.slots.iter().map(|x| x.map(|x| x.user)).collect()));
            }
            DualEval {
                value: s.value + lambda * budget + mu * limit,
                subgradient: [(budget - s.total) * unit[0], (limit - avg) * unit[1]],
            }
        },
    );

    let mut schedules: Vec<Vec<Option<usize>>> = Vec::with_capacity(3);
    for point in [run.last_point, run.best_point] {
        let sched: Vec<Option<usize>> =
            prep.sweep(price_at(point[0] * unit[0], point[1] * unit[1])).slots.iter().map(|s| s.map(|s| s.user)).collect();
        if !schedules.contains(&sched) {
            schedules.push(sched);
        }
    }
    if let Some((_, sched)) = best_scaled {
        if !schedules.contains(&sched) {
            schedules.push(sched);
        }
    }

    let mut best: Option<(T, Vec<Option<Slot<T>>>, T, T)> = None;
    let mut iterations = run.iterations;
    for sched in &schedules {
        let (slots, lambda, mu, it) = polish_joint(&prep, sched, limit, mu_max, ceiling);
        iterations += it;
        let wsr = prep.wsr(&slots);
        if best.as_ref().is_none_or(|(v, ..)| wsr > *v) {
            best = Some((wsr, slots, lambda, mu));
        }
    }
    let (wsr, slots, lambda, mu) = best.expect("at least one schedule");
    Ok((
        prep.finish(slots)?,
        CellDiagnostics { iterations, lambda, mu, converged: run.converged, wsr },
    ))
}

/// Exact power solution for a frozen schedule under both constraints: outer
/// bisection on `mu`, inner bisection on `lambda`.
fn polish_joint<T: Scalar>(
    prep: &Prepared<'_, T>,
    schedule: &[Option<usize>],
    limit: T,
    mu_max: T,
    ceiling: T,
) -> (Vec<Option<Slot<T>>>, T, T, usize) {
    let prob = prep.prob;
    let n_t = T::from_usize(prob.num_subcarriers).unwrap();
    let profile = &prob.profile;
    let mut iterations = 0;
    let inner = |mu: T, iterations: &mut usize| {
        let (lambda, it, _) =
            prep.fit_budget(ceiling, |l| prep.frozen(schedule, |n| l + mu * profile[n] / n_t).total);
        *iterations += it;
        let s = prep.frozen(schedule, |n| lambda + mu * profile[n] / n_t);
        (lambda, s)
    };
    let (lambda0, s0) = inner(T::zero(), &mut iterations);
    if s0.leak / n_t <= limit {
        return (s0.slots, lambda0, T::zero(), iterations);
    }
    let mut hi = mu_max.max(T::min_positive_value());
    let mut hi_state = inner(hi, &mut iterations);
    let mut guard = 0;
    while hi_state.1.leak / n_t > limit && guard < 64 {
        hi = hi * T::lit(2.0);
        hi_state = inner(hi, &mut iterations);
        guard += 1;
    }
    let mut lo = T::zero();
    let width_tol = T::rel_tol(1e-13);
    for _ in 0..BISECTION_MAX {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let state = inner(mid, &mut iterations);
        let avg = state.1.leak / n_t;
        if avg > limit {
            lo = mid;
        } else {
            hi = mid;
            hi_state = state;
            if limit - avg <= prep.tol * limit {
                break;
            }
        }
        if hi - lo <= width_tol * hi {
            break;
        }
    }
    let (lambda, s) = hi_state;
    (s.slots, lambda, hi, iterations)
}
