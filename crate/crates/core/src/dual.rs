//! Two-dimensional central-cut ellipsoid method for minimizing a convex dual
//! function over the nonnegative quadrant.

use crate::scalar::Scalar;

/// Ellipsoid `{ x : (x - c)^T E^{-1} (x - c) <= 1 }` in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid2<T> {
    center: [T; 2],
    shape: [[T; 2]; 2],
}

impl<T: Scalar> Ellipsoid2<T> {
    /// Axis-aligned ellipsoid with the given semi-axes.
    pub fn axis_aligned(center: [T; 2], radii: [T; 2]) -> Self {
        Ellipsoid2 {
            center,
            shape: [[radii[0] * radii[0], T::zero()], [T::zero(), radii[1] * radii[1]]],
        }
    }

    #[inline]
    pub fn center(&self) -> [T; 2] {
        self.center
    }

    #[inline]
    pub fn shape(&self) -> [[T; 2]; 2] {
        self.shape
    }

    /// `sqrt(det E)`, proportional to the area.
    pub fn volume(&self) -> T {
        let e = &self.shape;
        (e[0][0] * e[1][1] - e[0][1] * e[1][0]).max(T::zero()).sqrt()
    }

    pub fn is_positive_definite(&self) -> bool {
        let e = &self.shape;
        e[0][0] > T::zero() && e[0][0] * e[1][1] - e[0][1] * e[1][0] > T::zero()
    }

    /// Keeps the half `{ z : a . (z - c) <= 0 }`. Returns `false` (no update)
    /// when `a` is zero or the ellipsoid is numerically degenerate.
    pub fn cut(&mut self, a: [T; 2]) -> bool {
        let e = &self.shape;
        let ea = [e[0][0] * a[0] + e[0][1] * a[1], e[1][0] * a[0] + e[1][1] * a[1]];
        let quad = a[0] * ea[0] + a[1] * ea[1];
        if !(quad > T::zero()) || !quad.is_finite() {
            return false;
        }
        let denom = quad.sqrt();
        let b = [ea[0] / denom, ea[1] / denom];
        let third = T::one() / T::lit(3.0);
        let two_thirds = T::lit(2.0) * third;
        let grow = T::lit(4.0) * third;
        self.center = [self.center[0] - third * b[0], self.center[1] - third * b[1]];
        let off = grow * (e[0][1] - two_thirds * b[0] * b[1]);
        let off2 = grow * (e[1][0] - two_thirds * b[1] * b[0]);
        let sym = (off + off2) / T::lit(2.0);
        self.shape = [
            [grow * (e[0][0] - two_thirds * b[0] * b[0]), sym],
            [sym, grow * (e[1][1] - two_thirds * b[1] * b[1])],
        ];
        true
    }
}

/// Smallest useful `volume_ratio` at this precision. The volume scales with
/// the square of the semi-axes, so the floor is `eps^2` rather than `eps`.
pub fn volume_ratio<T: Scalar>(requested: f64) -> T {
    T::lit(requested).max(T::epsilon() * T::epsilon() * T::lit(16.0))
}

/// Value and subgradient of the dual function at one point.
#[derive(Clone, Copy, Debug)]
pub struct DualEval<T> {
    pub value: T,
    pub subgradient: [T; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct EllipsoidOptions<T> {
    pub max_iterations: usize,
    /// Stop once `volume / initial_volume` falls below this.
    pub volume_ratio: T,
}

#[derive(Clone, Debug)]
pub struct EllipsoidRun<T> {
    /// Point with the smallest dual value evaluated.
    pub best_point: [T; 2],
    pub best_value: T,
    /// Last center evaluated inside the quadrant.
    pub last_point: [T; 2],
    pub iterations: usize,
    pub converged: bool,
    /// Volume after every update, starting with the initial ellipsoid.
    pub volumes: Vec<T>,
}

/// Minimizes a convex function over `x >= 0` given a value/subgradient oracle.
///
/// Centers outside the quadrant receive a feasibility cut; a zero subgradient
/// terminates immediately (the center is optimal).
pub fn minimize<T: Scalar>(
    mut ell: Ellipsoid2<T>,
    opts: EllipsoidOptions<T>,
    mut oracle: impl FnMut([T; 2]) -> DualEval<T>,
) -> EllipsoidRun<T> {
    let v0 = ell.volume();
    let mut volumes = vec![v0];
    let mut best: Option<([T; 2], T)> = None;
    let mut last = [T::zero(); 2];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let c = ell.center();
        let cut = if c[0] < T::zero() {
            [-T::one(), T::zero()]
        } else if c[1] < T::zero() {
            [T::zero(), -T::one()]
        } else {
            let eval = oracle(c);
            last = c;
            if best.is_none_or(|(_, v)| eval.value < v) {
                best = Some((c, eval.value));
            }
            if eval.subgradient[0] == T::zero() && eval.subgradient[1] == T::zero() {
                converged = true;
                break;
            }
            eval.subgradient
        };
        if !ell.cut(cut) {
            converged = true;
            break;
        }
        volumes.push(ell.volume());
        if ell.volume() <= opts.volume_ratio * v0 {
            converged = true;
            break;
        }
    }
    if best.is_none() {
        // every center was infeasible; evaluate the projection of the last one
        let c = ell.center();
        let p = [c[0].max(T::zero()), c[1].max(T::zero())];
        let eval = oracle(p);
        best = Some((p, eval.value));
        last = p;
    }
    let (best_point, best_value) = best.unwrap();
    EllipsoidRun { best_point, best_value, last_point: last, iterations, converged, volumes }
}
