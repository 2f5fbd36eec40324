//! Centralized joint allocation over both cells by Lagrange dual decomposition.
//!
//! For fixed budget prices `(lambda1, lambda2)` the Lagrangian separates into
//! one problem per subcarrier: pick the user pair (or a single user, or
//! silence) and the two powers maximizing
//!
//! ```text
//! L_n = w1 r1 + w2 r2 - lambda1 p1 - lambda2 p2
//! ```
//!
//! The two-power problem is not concave. It is solved by coordinate ascent in
//! which each coordinate step is an exact one-dimensional global maximization:
//! the stationarity condition in one power is a cubic, so the candidates are
//! its real roots inside the box plus the two end points. Several starts are
//! tried and the best value wins. The prices themselves are found by the
//! ellipsoid method on the dual function.

use arrayvec::ArrayVec;

use crate::dual::{self, DualEval, Ellipsoid2, EllipsoidOptions};
use crate::error::{Error, Result};
use crate::model::{
    AllocationOutcome, Cell, ChannelRealization, Diagnostics, PowerAllocation, Slot, SystemConfig,
};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentralizedOptions {
    /// Outer (dual) iterations.
    pub max_iterations: usize,
    /// Ellipsoid stopping rule: volume relative to the initial one.
    pub volume_ratio: f64,
    /// Coordinate-ascent iterations per start.
    pub inner_iterations: usize,
    pub inner_tol: f64,
    /// Branch-and-bound stops once the certified gap is below this, relative
    /// to the pair's rate coefficients.
    pub gap_tol: f64,
    /// Node limit of the branch and bound per pair.
    pub max_nodes: usize,
    /// Projected-gradient steps on the recovered primal; 0 disables.
    pub polish_iterations: usize,
}

impl Default for CentralizedOptions {
    fn default() -> Self {
        CentralizedOptions {
            max_iterations: 300,
            volume_ratio: 1e-20,
            inner_iterations: 50,
            inner_tol: 1e-8,
            gap_tol: 1e-6,
            max_nodes: 2_000,
            polish_iterations: 200,
        }
    }
}

/// Gains seen by one candidate user pair on one subcarrier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairGains<T> {
    /// direct gains `[h_k1, h_k2]`
    pub direct: [T; 2],
    /// cross gains `[g_k1, g_k2]`, each into the user of that cell
    pub cross: [T; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPower<T> {
    pub powers: [T; 2],
    /// Per-subcarrier Lagrangian at `powers`.
    pub value: T,
    /// Certified upper bound on the Lagrangian over the whole power box.
    pub upper: T,
    pub inner_iterations: usize,
}

/// Winning assignment of one subcarrier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerScChoice<T> {
    pub sc: usize,
    pub users: [Option<usize>; 2],
    pub powers: [T; 2],
    pub lagrangian_value: T,
    /// Upper bound on the best value over all options of this subcarrier.
    pub lagrangian_bound: T,
}

/// Per-subcarrier Lagrangian of a user pair.
#[derive(Clone, Copy, Debug)]
struct PairObjective<T> {
    coef: [T; 2],
    h: [T; 2],
    g: [T; 2],
    price: [T; 2],
    sigma2: T,
    cap: [T; 2],
}

impl<T: Scalar> PairObjective<T> {
    #[inline]
    fn value(&self, p: [T; 2]) -> T {
        let r1 = (self.h[0] * p[0] / (self.g[0] * p[1] + self.sigma2)).ln_1p();
        let r2 = (self.h[1] * p[1] / (self.g[1] * p[0] + self.sigma2)).ln_1p();
        self.coef[0] * r1 + self.coef[1] * r2 - self.price[0] * p[0] - self.price[1] * p[1]
    }

    /// Same objective with the two cells' roles exchanged.
    fn swapped(&self) -> Self {
        let sw = |a: [T; 2]| [a[1], a[0]];
        PairObjective {
            coef: sw(self.coef),
            h: sw(self.h),
            g: sw(self.g),
            price: sw(self.price),
            sigma2: self.sigma2,
            cap: sw(self.cap),
        }
    }

    /// Global maximizer over `[0, cap[i]]` of the objective in coordinate `i`
    /// with the other coordinate held at `other`.
    #[inline]
    fn best_response(&self, i: usize, other: T) -> T {
        self.axis_max(i, other, other).0
    }

    /// Maximizes over `x = p_i` in `[0, cap[i]]` the relaxed objective
    ///
    /// ```text
    /// a_i ln(1 + h_i x / (s2 + g_i o_own)) + a_j ln(1 + h_j o_vic / (s2 + g_j x)) - price_i x
    /// ```
    ///
    /// and returns the maximizer with its value. With `o_own = o_vic = p_j`
    /// this is the objective minus `price_j p_j`. The derivative times the
    /// (positive) product of its denominators is a cubic in `x`.
    fn axis_max(&self, i: usize, o_own: T, o_vic: T) -> (T, T) {
        self.axis_max_on(i, o_own, o_vic, T::zero(), self.cap[i])
    }

    /// [`Self::axis_max`] restricted to `x` in `[lo, hi]`, a subset of `[0, cap[i]]`.
    fn axis_max_on(&self, i: usize, o_own: T, o_vic: T, lo: T, hi: T) -> (T, T) {
        let j = 1 - i;
        let s2 = self.sigma2;
        let a_vic = self.coef[j];
        let c = self.h[j] * o_vic;
        let g_vic = self.g[j];
        let j_own = self.g[i] * o_own + s2;
        let (a_own, h_own) = (self.coef[i], self.h[i]);
        let price = self.price[i];
        let eval = |x: T| {
            a_own * (h_own * x / j_own).ln_1p() + a_vic * (c / (g_vic * x + s2)).ln_1p() - price * x
        };
        if !(hi > lo) || !(h_own > T::zero()) || !(a_own > T::zero()) {
            return (lo, eval(lo));
        }
        // u = J + h x, v = s2 + c + g x, s = s2 + g x; q = f' u v s
        // vs = v * s, uvs = u * v * s, coefficients in ascending powers of x
        let vs = [(s2 + c) * s2, (s2 + c) * g_vic + g_vic * s2, g_vic * g_vic];
        let uvs = [
            j_own * vs[0],
            j_own * vs[1] + h_own * vs[0],
            j_own * vs[2] + h_own * vs[1],
            h_own * vs[2],
        ];
        let ah = a_own * h_own;
        let agc = a_vic * g_vic * c;
        // q = a h vs - a_vic g c u - price uvs, same sign as the derivative
        let q = [
            ah * vs[0] - agc * j_own - price * uvs[0],
            ah * vs[1] - agc * h_own - price * uvs[1],
            ah * vs[2] - price * uvs[2],
            -price * uvs[3],
        ];
        let mut best = (lo, eval(lo));
        for x in cubic_roots_in(&q, hi).into_iter().filter(|&x| x > lo).chain(std::iter::once(hi)) {
            let v = eval(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        best
    }

    /// Upper bound of the objective over `p1` in `[0, cap[0]]`, `p2` in `[lo, hi]`.
    ///
    /// User 1 is credited the smallest interference `g1 lo`. The cell-2 terms
    /// `w2 r2 - price2 p2` are concave in `p2` and maximized exactly: their
    /// maximizer `a2 / price2 - (s2 + g2 p1) / h2` is clipped to the interval,
    /// which splits the `p1` range into three pieces, each solved exactly.
    fn box_bound(&self, lo: T, hi: T) -> T {
        let (a2, h2, g2, l2) = (self.coef[1], self.h[1], self.g[1], self.price[1]);
        let s2 = self.sigma2;
        let cap = self.cap[0];
        let clip = |x: T| x.max(T::zero()).min(cap);
        // p1 where the unclipped maximizer crosses hi and lo
        let (t_hi, t_lo) = if l2 > T::zero() && g2 > T::zero() {
            let at = |p2: T| clip((h2 * (a2 / l2 - p2) - s2) / g2);
            (at(hi), at(lo))
        } else if l2 > T::zero() {
            let p2 = a2 / l2 - s2 / h2;
            if p2 >= hi { (cap, cap) } else if p2 <= lo { (T::zero(), T::zero()) } else { (T::zero(), cap) }
        } else {
            (cap, cap)
        };
        let mut best = T::neg_infinity();
        if t_hi > T::zero() || cap == T::zero() {
            best = best.max(self.axis_max_on(0, lo, hi, T::zero(), t_hi).1 - l2 * hi);
        }
        if t_lo < cap {
            best = best.max(self.axis_max_on(0, lo, lo, t_lo, cap).1 - l2 * lo);
        }
        if t_lo > t_hi {
            best = best.max(self.interior_bound(lo, t_hi, t_lo));
        }
        best
    }

    /// Maximum over `p1` in `[x_lo, x_hi]` of the objective with `p2` at its
    /// unconstrained cell-2 optimum and user 1 seeing interference `g1 lo`.
    fn interior_bound(&self, lo: T, x_lo: T, x_hi: T) -> T {
        let (a1, h1, l1) = (self.coef[0], self.h[0], self.price[0]);
        let (a2, h2, g2, l2) = (self.coef[1], self.h[1], self.g[1], self.price[1]);
        let s2 = self.sigma2;
        let j = s2 + self.g[0] * lo;
        let f = |p1: T| {
            let z = s2 + g2 * p1;
            let p2 = a2 / l2 - z / h2;
            a1 * (h1 * p1 / j).ln_1p() - l1 * p1 + a2 * (h2 * p2 / z).ln_1p() - l2 * p2
        };
        // derivative times (j + h1 p1)(s2 + g2 p1):
        // a1 h1 (s2 + g2 x) - a2 g2 (j + h1 x) + k (j + h1 x)(s2 + g2 x), k = l2 g2 / h2 - l1
        let k = l2 * g2 / h2 - l1;
        let c0 = a1 * h1 * s2 - a2 * g2 * j + k * j * s2;
        let c1 = a1 * h1 * g2 - a2 * g2 * h1 + k * (j * g2 + h1 * s2);
        let c2 = k * h1 * g2;
        let mut best = f(x_lo).max(f(x_hi));
        for x in quadratic_roots(c2, c1, c0) {
            if x > x_lo && x < x_hi {
                best = best.max(f(x));
            }
        }
        best
    }
}

#[inline]
fn horner<T: Scalar>(c: &[T], x: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, &a| acc * x + a)
}

/// Real roots of `c0 + c1 x + c2 x^2 + c3 x^3` strictly inside `(0, upper)`.
fn cubic_roots_in<T: Scalar>(c: &[T; 4], upper: T) -> ArrayVec<T, 3> {
    let d = [c[1], T::lit(2.0) * c[2], T::lit(3.0) * c[3]];
    let mut breaks: ArrayVec<T, 4> = ArrayVec::new();
    breaks.push(T::zero());
    for r in quadratic_roots(d[2], d[1], d[0]) {
        if r > T::zero() && r < upper {
            breaks.push(r);
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    breaks.push(upper);
    let mut roots = ArrayVec::new();
    for w in breaks.windows(2) {
        let (l, r) = (w[0], w[1]);
        let (fl, fr) = (horner(c, l), horner(c, r));
        if fl == T::zero() && l > T::zero() {
            roots.push(l);
        }
        if (fl < T::zero() && fr > T::zero()) || (fl > T::zero() && fr < T::zero()) {
            roots.push(monotone_root(c, &d, l, r, fl));
        }
    }
    roots
}

fn quadratic_roots<T: Scalar>(a: T, b: T, c: T) -> ArrayVec<T, 2> {
    let mut out = ArrayVec::new();
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == T::zero() {
        return out;
    }
    if a.abs() <= T::epsilon() * scale {
        if b.abs() > T::epsilon() * scale {
            out.push(-c / b);
        }
        return out;
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < T::zero() {
        return out;
    }
    let sq = disc.sqrt();
    let qq = -(b + b.signum() * sq) / T::lit(2.0);
    out.push(qq / a);
    if qq != T::zero() {
        out.push(c / qq);
    }
    out
}

/// Safeguarded Newton on a bracket with a sign change.
fn monotone_root<T: Scalar>(c: &[T; 4], d: &[T; 3], mut l: T, mut r: T, fl: T) -> T {
    let rising = fl < T::zero();
    let mut x = (l + r) / T::lit(2.0);
    for _ in 0..100 {
        let fx = horner(c, x);
        if fx == T::zero() {
            return x;
        }
        if (fx < T::zero()) == rising {
            l = x;
        } else {
            r = x;
        }
        let dfx = horner(d, x);
        let newton = x - fx / dfx;
        let next = if dfx != T::zero() && newton > l && newton < r { newton } else { (l + r) / T::lit(2.0) };
        if (next - x).abs() <= T::epsilon() * T::lit(4.0) * x.abs().max(T::min_positive_value()) || r - l <= T::epsilon() * r {
            return next;
        }
        x = next;
    }
    x
}

/// Maximizes the per-subcarrier Lagrangian of one user pair over both powers.
///
/// Each power is boxed to its cell's BS budget. `value` is the best point
/// found and `upper` a proven bound on the maximum; both agree to
/// `gap_tol` unless the node limit is hit.
pub fn per_sc_power<T: Scalar>(
    gains: PairGains<T>,
    weights: [T; 2],
    duals: [T; 2],
    cfg: &SystemConfig<T>,
    opts: &CentralizedOptions,
) -> Result<PairPower<T>> {
    if gains.direct.iter().chain(&gains.cross).any(|g| !(g.is_finite() && *g >= T::zero())) {
        return Err(Error::NonFinite(format!("pair gains {gains:?}")));
    }
    if duals.iter().any(|d| !(*d >= T::zero())) {
        return Err(Error::config("duals", "must be >= 0"));
    }
    let scale = cfg.n() * T::LN_2();
    let obj = PairObjective {
        coef: [weights[0] / scale, weights[1] / scale],
        h: gains.direct,
        g: gains.cross,
        price: duals,
        sigma2: cfg.noise_variance(),
        cap: cfg.bs_power_w,
    };
    Ok(pair_power(&obj, opts))
}

const SCAN_POINTS: usize = 24;
const SCAN_RATIO: f64 = 1.0 / 3.0;

fn pair_power<T: Scalar>(obj: &PairObjective<T>, opts: &CentralizedOptions) -> PairPower<T> {
    pair_power_above(obj, opts, T::neg_infinity(), true)
}

/// Like [`pair_power`], but the search may stop as soon as the pair is
/// proven unable to beat `floor`; `upper` is then still a valid bound.
/// Without `certified`, `upper` only covers the candidates tried.
fn pair_power_above<T: Scalar>(
    obj: &PairObjective<T>,
    opts: &CentralizedOptions,
    floor: T,
    certified: bool,
) -> PairPower<T> {
    let p1_solo = obj.best_response(0, T::zero());
    let p2_solo = obj.best_response(1, T::zero());
    let mut best = PairPower { powers: [T::zero(); 2], value: T::zero(), upper: T::zero(), inner_iterations: 0 };
    let consider = |p: [T; 2], iters: usize, best: &mut PairPower<T>| {
        best.inner_iterations += iters;
        let v = obj.value(p);
        if v > best.value {
            best.powers = p;
            best.value = v;
        }
    };
    consider([p1_solo, T::zero()], 0, &mut best);
    consider([T::zero(), p2_solo], 0, &mut best);
    best.upper = best.value;
    if !(obj.h[0] > T::zero() && obj.h[1] > T::zero() && obj.cap[0] > T::zero() && obj.cap[1] > T::zero()) {
        return best;
    }
    let whole = obj.box_bound(T::zero(), obj.cap[1]).min(obj.swapped().box_bound(T::zero(), obj.cap[0]));
    if whole <= floor.max(best.value) {
        best.upper = whole.max(best.value);
        return best;
    }
    // profile max over p1 on a log ladder of p2 values, then coordinate ascent
    let mut scan = (T::zero(), T::neg_infinity());
    let mut p2 = obj.cap[1];
    for _ in 0..SCAN_POINTS {
        let (_, v) = obj.axis_max(0, p2, p2);
        let v = v - obj.price[1] * p2;
        if v > scan.1 {
            scan = (p2, v);
        }
        p2 = p2 * T::lit(SCAN_RATIO);
    }
    let tol = T::rel_tol(opts.inner_tol);
    let mut p = [obj.best_response(0, scan.0), scan.0];
    let mut iters = 0;
    while iters < opts.inner_iterations {
        iters += 1;
        let p1 = obj.best_response(0, p[1]);
        let p2 = obj.best_response(1, p1);
        let change = (p1 - p[0]).abs().max((p2 - p[1]).abs());
        let size = p1.abs().max(p2.abs()).max(T::min_positive_value());
        p = [p1, p2];
        if change <= tol * size {
            break;
        }
    }
    consider(p, iters, &mut best);
    best.upper = whole.max(best.value);
    if certified {
        certify(obj, opts, floor, &mut best);
    }
    best
}

/// Node of the branch and bound over `p2`.
struct Node<T> {
    lo: T,
    hi: T,
    upper: T,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.upper == other.upper
    }
}
impl<T: Scalar> Eq for Node<T> {}
impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Node<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.upper.partial_cmp(&other.upper).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Branch and bound over `p2`, maximizing exactly over `p1` on every node.
///
/// For `p2` in `[lo, hi]` the objective is at most the relaxed objective
/// with the smallest interference `lo` on user 1, the largest signal `hi` on
/// user 2 and the smallest price term `price2 lo`, which [`PairObjective::axis_max`]
/// maximizes exactly. Improves `best` in place and sets its certified `upper`.
fn certify<T: Scalar>(obj: &PairObjective<T>, opts: &CentralizedOptions, floor: T, best: &mut PairPower<T>) {
    use std::collections::BinaryHeap;
    let gap = T::rel_tol(opts.gap_tol) * (obj.coef[0] + obj.coef[1]);
    let bound = |lo: T, hi: T| obj.box_bound(lo, hi);
    let probe = |p2: T, best: &mut PairPower<T>| {
        let (p1, v) = obj.axis_max(0, p2, p2);
        let v = v - obj.price[1] * p2;
        if v > best.value {
            best.value = v;
            best.powers = [p1, p2];
        }
    };
    let mut heap = BinaryHeap::new();
    heap.push(Node { lo: T::zero(), hi: obj.cap[1], upper: bound(T::zero(), obj.cap[1]) });
    let mut nodes = 1;
    let mut upper = best.value;
    while let Some(node) = heap.pop() {
        let target = best.value.max(floor);
        if node.upper <= target + gap || nodes >= opts.max_nodes {
            upper = upper.max(node.upper);
            break;
        }
        let mid = (node.lo + node.hi) / T::lit(2.0);
        if !(mid > node.lo && mid < node.hi) {
            // interval exhausted at working precision
            probe(node.lo, best);
            probe(node.hi, best);
            upper = upper.max(node.upper);
            continue;
        }
        probe(mid, best);
        for (lo, hi) in [(node.lo, mid), (mid, node.hi)] {
            heap.push(Node { lo, hi, upper: bound(lo, hi) });
            nodes += 1;
        }
    }
    best.upper = best.value.max(upper);
    best.inner_iterations += nodes;
}

/// Solves one subcarrier at fixed prices by enumerating every user pair,
/// every single-cell option and silence.
///
/// Ties keep the first candidate in the order: silence, cell-1 singles,
/// cell-2 singles, pairs in lexicographic `(k1, k2)` order.
pub fn per_sc_assign<T: Scalar>(
    sc: usize,
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    duals: [T; 2],
    opts: &CentralizedOptions,
) -> Result<PerScChoice<T>> {
    chan.matches(cfg)?;
    if sc >= cfg.num_subcarriers {
        return Err(Error::Dimension(format!("subcarrier {sc} of {}", cfg.num_subcarriers)));
    }
    if duals.iter().any(|d| !(*d >= T::zero())) {
        return Err(Error::config("duals", "must be >= 0"));
    }
    let ctx = ScContext::new(chan, cfg, duals);
    Ok(ctx.assign(sc, opts, true).0)
}

struct ScContext<'a, T> {
    chan: &'a ChannelRealization<T>,
    coef: [Vec<T>; 2],
    duals: [T; 2],
    sigma2: T,
    caps: [T; 2],
}

impl<'a, T: Scalar> ScContext<'a, T> {
    fn new(chan: &'a ChannelRealization<T>, cfg: &SystemConfig<T>, duals: [T; 2]) -> Self {
        let scale = cfg.n() * T::LN_2();
        ScContext {
            chan,
            coef: [
                cfg.weights(Cell::One).iter().map(|&w| w / scale).collect(),
                cfg.weights(Cell::Two).iter().map(|&w| w / scale).collect(),
            ],
            duals,
            sigma2: cfg.noise_variance(),
            caps: cfg.bs_power_w,
        }
    }

    fn objective(&self, sc: usize, users: [Option<usize>; 2]) -> PairObjective<T> {
        let pick = |cell: Cell, f: &dyn Fn(Cell, usize, usize) -> T| {
            users[cell.index()].map_or(T::zero(), |k| f(cell, sc, k))
        };
        PairObjective {
            coef: [
                users[0].map_or(T::zero(), |k| self.coef[0][k]),
                users[1].map_or(T::zero(), |k| self.coef[1][k]),
            ],
            h: [
                pick(Cell::One, &|c, n, k| self.chan.direct(c, n, k)),
                pick(Cell::Two, &|c, n, k| self.chan.direct(c, n, k)),
            ],
            g: [
                pick(Cell::One, &|c, n, k| self.chan.cross(c, n, k)),
                pick(Cell::Two, &|c, n, k| self.chan.cross(c, n, k)),
            ],
            price: self.duals,
            sigma2: self.sigma2,
            cap: [
                if users[0].is_some() { self.caps[0] } else { T::zero() },
                if users[1].is_some() { self.caps[1] } else { T::zero() },
            ],
        }
    }

    /// Returns the choice and the number of inner iterations spent.
    /// With `certified`, `lagrangian_bound` is a proven upper bound.
    fn assign(&self, sc: usize, opts: &CentralizedOptions, certified: bool) -> (PerScChoice<T>, usize) {
        let k = [self.coef[0].len(), self.coef[1].len()];
        let mut inner = 0;
        // (value, order, users, powers)
        let mut best: (T, usize, [Option<usize>; 2], [T; 2]) = (T::zero(), 0, [None, None], [T::zero(); 2]);
        let offer = |value: T, order: usize, users: [Option<usize>; 2], powers: [T; 2], best: &mut (T, usize, [Option<usize>; 2], [T; 2])| {
            if value > best.0 || (value == best.0 && order < best.1) {
                *best = (value, order, users, powers);
            }
        };
        let mut solo = [vec![T::zero(); k[0]], vec![T::zero(); k[1]]];
        let mut order = 1;
        for cell in Cell::BOTH {
            let m = cell.index();
            for user in 0..k[m] {
                let mut users = [None, None];
                users[m] = Some(user);
                let obj = self.objective(sc, users);
                let p = obj.best_response(m, T::zero());
                let mut powers = [T::zero(); 2];
                powers[m] = p;
                let v = obj.value(powers);
                solo[m][user] = v.max(T::zero());
                if p > T::zero() {
                    offer(v, order, users, powers, &mut best);
                }
                order += 1;
            }
        }
        // pairs by decreasing optimistic bound (interference only lowers rates)
        let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(k[0] * k[1]);
        for k1 in 0..k[0] {
            for k2 in 0..k[1] {
                if solo[0][k1] > T::zero() && solo[1][k2] > T::zero() {
                    pairs.push((solo[0][k1] + solo[1][k2], k1, k2));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut upper = T::zero();
        for (bound, k1, k2) in pairs {
            if bound < best.0 {
                break;
            }
            let users = [Some(k1), Some(k2)];
            let pp = pair_power_above(&self.objective(sc, users), opts, best.0, certified);
            inner += pp.inner_iterations;
            upper = upper.max(pp.upper);
            // a pair with one silent side is the corresponding single, already offered
            if pp.powers[0] > T::zero() && pp.powers[1] > T::zero() {
                offer(pp.value, order + k1 * k[1] + k2, users, pp.powers, &mut best);
            }
        }
        let (value, _, users, powers) = best;
        let lagrangian_bound = upper.max(value);
        (PerScChoice { sc, users, powers, lagrangian_value: value, lagrangian_bound }, inner)
    }
}

fn allocation_from<T: Scalar>(choices: &[PerScChoice<T>], cfg: &SystemConfig<T>) -> Result<[PowerAllocation<T>; 2]> {
    let build = |cell: Cell| {
        let m = cell.index();
        let slots = choices
            .iter()
            .map(|c| c.users[m].map(|user| Slot { user, power: c.powers[m] }))
            .collect();
        PowerAllocation::from_slots(cell, cfg.users(cell), slots)
    };
    Ok([build(Cell::One)?, build(Cell::Two)?])
}

/// Dual decomposition over both cells with ellipsoid updates of the budget prices.
///
/// Every dual iterate yields a primal candidate; a cell exceeding its budget
/// is scaled back into it and the best feasible candidate is kept. That
/// candidate is then improved by local ascent on the true throughput (see
/// [`CentralizedOptions::polish_iterations`]). The reported duals are those
/// that produced the schedule before the ascent, and `dual_bound` is a
/// certified dual value, hence an upper bound on the optimum.
pub fn solve_centralized<T: Scalar>(
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    opts: &CentralizedOptions,
) -> Result<AllocationOutcome<T>> {
    cfg.validate()?;
    chan.matches(cfg)?;
    let n_sc = cfg.num_subcarriers;
    let silent = || {
        [
            PowerAllocation::silent(Cell::One, cfg.users(Cell::One), n_sc),
            PowerAllocation::silent(Cell::Two, cfg.users(Cell::Two), n_sc),
        ]
    };
    if Cell::BOTH.iter().all(|&c| !(cfg.bs_power(c) > T::zero())) {
        let diag = Diagnostics { duals: vec![T::zero(); 2], dual_bound: Some(T::zero()), ..Default::default() };
        return AllocationOutcome::evaluate(silent(), chan, cfg, diag);
    }

    let delta = Cell::BOTH.map(|c| {
        let p = cfg.bs_power(c);
        let k = T::from_usize(cfg.users(c)).unwrap();
        if p > T::zero() {
            (k * cfg.max_weight(c) / (T::LN_2() * p)).max(T::min_positive_value())
        } else {
            T::one()
        }
    });
    let ell = Ellipsoid2::axis_aligned(delta, [T::lit(1e3) * delta[0], T::lit(1e3) * delta[1]]);
    let budgets = cfg.bs_power_w;

    // one pass over all subcarriers: (dual value, throughput, allocation, totals)
    let pass = |duals: [T; 2], certified: bool| -> Result<(T, T, [PowerAllocation<T>; 2], [T; 2])> {
        let ctx = ScContext::new(chan, cfg, duals);
        let mut choices = Vec::with_capacity(n_sc);
        let mut value = duals[0] * budgets[0] + duals[1] * budgets[1];
        let mut totals = [T::zero(); 2];
        for sc in 0..n_sc {
            let (c, _) = ctx.assign(sc, opts, certified);
            value = value + c.lagrangian_bound;
            totals[0] = totals[0] + c.powers[0];
            totals[1] = totals[1] + c.powers[1];
            choices.push(c);
        }
        let (thr, alloc) = recover_primal(&choices, totals, chan, cfg)?;
        Ok((value, thr, alloc, totals))
    };

    let mut best: Option<(T, [T; 2])> = None;
    let mut failure: Option<Error> = None;
    let run = dual::minimize(
        ell,
        EllipsoidOptions { max_iterations: opts.max_iterations, volume_ratio: dual::volume_ratio(opts.volume_ratio) },
        |duals| match pass(duals, false) {
            Ok((value, thr, _, totals)) => {
                if best.is_none_or(|(v, _)| thr > v) {
                    best = Some((thr, duals));
                }
                DualEval { value, subgradient: [budgets[0] - totals[0], budgets[1] - totals[1]] }
            }
            Err(e) => {
                failure = Some(e);
                DualEval { value: T::zero(), subgradient: [T::zero(); 2] }
            }
        },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    // The iterates above use the uncertified pair search. Re-solve at the
    // best primal's prices and at the best dual point with certified bounds:
    // the returned schedule is then exactly what those prices produce, and
    // the dual bound is proven.
    let primal_duals = best.map_or(run.best_point, |b| b.1);
    let (bound_p, thr_p, alloc_p, _) = pass(primal_duals, true)?;
    let (bound_d, thr_d, alloc_d, _) =
        if run.best_point == primal_duals { (bound_p, thr_p, alloc_p.clone(), [T::zero(); 2]) } else { pass(run.best_point, true)? };
    let (alloc, duals) = if thr_d > thr_p { (alloc_d, run.best_point) } else { (alloc_p, primal_duals) };
    let alloc = polish_primal(alloc, chan, cfg, opts.polish_iterations)?;
    // rounded outward so the bound survives the summation error
    let bound = bound_p.min(bound_d);
    let slack = T::epsilon() * T::lit(16.0) * T::from_usize(n_sc + 2).unwrap();
    let diag = Diagnostics {
        iterations: run.iterations,
        rounds: 0,
        converged: run.converged,
        duals: duals.to_vec(),
        dual_bound: Some(bound + slack * bound.abs()),
        budgets: None,
    };
    AllocationOutcome::evaluate(alloc, chan, cfg, diag)
}

/// Euclidean projection onto `{ x >= 0, sum x <= budget }`.
fn project_budget<T: Scalar>(x: &mut [T], budget: T) {
    for v in x.iter_mut() {
        *v = v.max(T::zero());
    }
    let total = x.iter().fold(T::zero(), |a, &v| a + v);
    if total <= budget {
        return;
    }
    let mut sorted: Vec<T> = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (i, &v) in sorted.iter().enumerate() {
        cum = cum + v;
        let t = (cum - budget) / T::from_usize(i + 1).unwrap();
        if v - t > T::zero() {
            theta = t;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - theta).max(T::zero());
    }
}

/// Local ascent on the true throughput from a recovered primal, over both
/// cells' power budgets. Scheduled users are kept; an idle subcarrier gets the
/// user with the best marginal rate at zero power. Never returns a worse point.
fn polish_primal<T: Scalar>(
    alloc: [PowerAllocation<T>; 2],
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
    iterations: usize,
) -> Result<[PowerAllocation<T>; 2]> {
    if iterations == 0 {
        return Ok(alloc);
    }
    let n_sc = cfg.num_subcarriers;
    let sigma2 = cfg.noise_variance();
    let scale = T::one() / (T::from_usize(n_sc).unwrap() * T::LN_2());
    let users: [Vec<usize>; 2] = Cell::BOTH.map(|c| {
        (0..n_sc)
            .map(|n| {
                alloc[c.index()].slot(n).map_or_else(
                    || {
                        let interference = alloc[c.other().index()].sc_power(n);
                        let marginal = |k: usize| {
                            cfg.weights(c)[k] * chan.direct(c, n, k) / (interference * chan.cross(c, n, k) + sigma2)
                        };
                        (0..cfg.users(c)).fold(0, |b, k| if marginal(k) > marginal(b) { k } else { b })
                    },
                    |s| s.user,
                )
            })
            .collect()
    });
    let gains = |c: Cell, n: usize| {
        let k = users[c.index()][n];
        (cfg.weights(c)[k], chan.direct(c, n, k), chan.cross(c, n, k))
    };
    let objective = |p: &[Vec<T>; 2]| -> T {
        let mut total = T::zero();
        for c in Cell::BOTH {
            let (own, other) = (&p[c.index()], &p[c.other().index()]);
            for n in 0..n_sc {
                let (w, h, g) = gains(c, n);
                total = total + w * (own[n] * h / (other[n] * g + sigma2)).ln_1p();
            }
        }
        total * scale
    };
    let gradient = |p: &[Vec<T>; 2]| -> [Vec<T>; 2] {
        Cell::BOTH.map(|c| {
            let (own, other) = (&p[c.index()], &p[c.other().index()]);
            (0..n_sc)
                .map(|n| {
                    let (w, h, g) = gains(c, n);
                    let (w2, h2, g2) = gains(c.other(), n);
                    let mine = w * h / (other[n] * g + sigma2 + own[n] * h);
                    let base = own[n] * g2 + sigma2;
                    let theirs = w2 * g2 * (T::one() / (base + other[n] * h2) - T::one() / base);
                    (mine + theirs) * scale
                })
                .collect()
        })
    };

    let budgets = [cfg.bs_power(Cell::One), cfg.bs_power(Cell::Two)];
    let mut p: [Vec<T>; 2] = Cell::BOTH.map(|c| (0..n_sc).map(|n| alloc[c.index()].sc_power(n)).collect());
    let start = objective(&p);
    let mut value = start;
    let mut step = budgets[0].max(budgets[1]);
    for _ in 0..iterations {
        let grad = gradient(&p);
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = p.clone();
            for c in 0..2 {
                for n in 0..n_sc {
                    trial[c][n] = trial[c][n] + step * grad[c][n];
                }
                project_budget(&mut trial[c], budgets[c]);
            }
            let v = objective(&trial);
            if v > value {
                p = trial;
                value = v;
                step = step * T::lit(2.0);
                accepted = true;
                break;
            }
            step = step / T::lit(4.0);
        }
        if !accepted {
            break;
        }
    }
    if !(value > start) {
        return Ok(alloc);
    }
    let rebuilt = Cell::BOTH.map(|c| {
        let slots = (0..n_sc)
            .map(|n| {
                let power = p[c.index()][n];
                (power > T::zero()).then(|| Slot { user: users[c.index()][n], power })
            })
            .collect();
        PowerAllocation::from_slots(c, cfg.users(c), slots)
    });
    let [a, b] = rebuilt;
    Ok([a?, b?])
}

fn recover_primal<T: Scalar>(
    choices: &[PerScChoice<T>],
    totals: [T; 2],
    chan: &ChannelRealization<T>,
    cfg: &SystemConfig<T>,
) -> Result<(T, [PowerAllocation<T>; 2])> {
    let [a1, a2] = allocation_from(choices, cfg)?;
    let fit = |a: PowerAllocation<T>, total: T, budget: T| {
        if total > budget {
            a.scaled(budget / total)
        } else {
            a
        }
    };
    let alloc = [fit(a1, totals[0], cfg.bs_power(Cell::One)), fit(a2, totals[1], cfg.bs_power(Cell::Two))];
    let rates = crate::model::all_user_rates(&alloc, chan, cfg)?;
    let thr = crate::model::weighted_sum(cfg.weights(Cell::One), &rates[0])
        + crate::model::weighted_sum(cfg.weights(Cell::Two), &rates[1]);
    Ok((thr, alloc))
}
