//! Euclidean and weighted-norm projections onto a convex compact parameter
//! set.
//!
//! The weighted projection `argmin_{w in set} (x - w)^T Q (x - w)` is solved
//! by a projected Newton method on boxes and by bisection on the Lagrange
//! multiplier of the norm constraint on balls. Points already inside the set
//! are returned unchanged without touching either solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Iteration cap of the box solver.
pub const MAX_NEWTON_ITERATIONS: usize = 100;
/// Scaled KKT residual at which the box solver stops.
pub const KKT_TOLERANCE: f64 = 1e-10;
/// Relative accuracy of the ball multiplier search.
pub const MULTIPLIER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
}

impl ConstraintSet {
    pub fn new_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("theta_set.lower", "must not be empty"));
        }
        if lower
            .iter()
            .chain(upper.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("theta_set", "bounds must be finite"));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::invalid("theta_set", "lower must not exceed upper"));
        }
        Ok(ConstraintSet::Box { lower, upper })
    }

    /// Symmetric box `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new_box(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
        )
    }

    pub fn new_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::invalid("theta_set.center", "must not be empty"));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta_set.center", "must be finite"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("theta_set.radius", "must be finite and > 0"));
        }
        Ok(ConstraintSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Box { lower, .. } => lower.len(),
            ConstraintSet::Ball { center, .. } => center.len(),
        }
    }

    /// `B = sup_{v in set} ||v||`.
    pub fn norm_bound(&self) -> f64 {
        match self {
            ConstraintSet::Box { lower, upper } => lower
                .iter()
                .zip(upper.iter())
                .map(|(l, u)| {
                    let m = l.abs().max(u.abs());
                    m * m
                })
                .sum::<f64>()
                .sqrt(),
            ConstraintSet::Ball { center, radius } => center.norm() + radius,
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            ConstraintSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *l <= *v && *v <= *u),
            ConstraintSet::Ball { center, radius } => (x - center).norm() <= *radius,
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Euclidean projection.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        if self.contains(x) {
            return Ok(x.clone());
        }
        Ok(match self {
            ConstraintSet::Box { lower, upper } => clamp(x, lower, upper),
            ConstraintSet::Ball { center, radius } => {
                let d = x - center;
                center + &d * (*radius / d.norm())
            }
        })
    }

    /// Projection in the norm `||v||_Q^2 = v^T Q v`.
    pub fn project_weighted(&self, q: &WeightMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        if q.dim() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: q.dim(),
            });
        }
        if self.contains(x) {
            return Ok(x.clone());
        }
        match self {
            ConstraintSet::Box { lower, upper } => box_weighted(q.matrix(), x, lower, upper),
            ConstraintSet::Ball { center, radius } => ball_weighted(q.matrix(), x, center, *radius),
        }
    }
}

/// Symmetric positive-definite weight of a projection norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::NotPositiveDefinite);
        }
        let scale = q.amax().max(f64::MIN_POSITIVE);
        let n = q.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        if q.iter().any(|v| !v.is_finite()) || q.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(WeightMatrix(q))
    }

    pub fn identity(dim: usize) -> Self {
        WeightMatrix(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn norm_squared(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }
}

fn clamp(x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter()
            .zip(lower.iter().zip(upper.iter()))
            .map(|(v, (l, u))| v.clamp(*l, *u)),
    )
}

fn objective(q: &DMatrix<f64>, x: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let d = w - x;
    0.5 * d.dot(&(q * &d))
}

/// Bertsekas' projected Newton method for
/// `min 1/2 (w - x)^T Q (w - x)  s.t.  lower <= w <= upper`.
fn box_weighted(
    q: &DMatrix<f64>,
    x: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<DVector<f64>> {
    const ARMIJO: f64 = 1e-4;
    let n = x.len();
    let diag: Vec<f64> = (0..n).map(|i| q[(i, i)]).collect();
    let mut w = clamp(x, lower, upper);
    let mut residual = f64::INFINITY;

    for _ in 0..MAX_NEWTON_ITERATIONS {
        let grad = q * (&w - x);
        residual = (0..n)
            .map(|i| (w[i] - (w[i] - grad[i] / diag[i]).clamp(lower[i], upper[i])).abs())
            .fold(0.0, f64::max);
        let scale = 1.0 + (&w - x).amax();
        if residual <= KKT_TOLERANCE * scale {
            return Ok(w);
        }

        let eps = residual.min(1e-3 * scale);
        let active: Vec<bool> = (0..n)
            .map(|i| {
                (w[i] - lower[i] <= eps && grad[i] > 0.0) || (upper[i] - w[i] <= eps && grad[i] < 0.0)
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();

        let mut dir = DVector::zeros(n);
        for i in 0..n {
            if active[i] {
                dir[i] = -grad[i] / diag[i];
            }
        }
        if !free.is_empty() {
            let qff = DMatrix::from_fn(free.len(), free.len(), |a, b| q[(free[a], free[b])]);
            let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -grad[i]));
            let step = qff.cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                dir[i] = step[a];
            }
        }

        let f0 = objective(q, x, &w);
        let free_slope: f64 = free.iter().map(|&i| -grad[i] * dir[i]).sum();
        let mut alpha = 1.0;
        let mut next = clamp(&(&w + &dir * alpha), lower, upper);
        for _ in 0..60 {
            let active_slope: f64 = (0..n)
                .filter(|&i| active[i])
                .map(|i| grad[i] * (w[i] - next[i]))
                .sum();
            if f0 - objective(q, x, &next) >= ARMIJO * (alpha * free_slope + active_slope) {
                break;
            }
            alpha *= 0.5;
            next = clamp(&(&w + &dir * alpha), lower, upper);
        }
        w = next;
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITERATIONS,
        residual,
    })
}

/// Weighted projection onto `||w - c|| <= r`: stationarity gives
/// `w(l) = c + (Q + l I)^{-1} Q (x - c)`, and `||w(l) - c||` decreases in the
/// multiplier `l`, so the active root is found by bisection.
fn ball_weighted(
    q: &DMatrix<f64>,
    x: &DVector<f64>,
    center: &DVector<f64>,
    radius: f64,
) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(q.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let z = eig.eigenvectors.transpose() * (x - center);
    let lambda_max = eig.eigenvalues.max();
    let offset = |mult: f64| -> DVector<f64> {
        DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(eig.eigenvalues.iter())
                .map(|(zi, li)| li * zi / (li + mult)),
        )
    };

    // `hi` always stays on the feasible side.
    let mut lo = 0.0;
    let mut hi = lambda_max * z.norm() / radius;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if offset(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= MULTIPLIER_TOLERANCE * hi {
            break;
        }
    }
    let mut d = &eig.eigenvectors * offset(hi);
    let norm = d.norm();
    if norm > radius {
        d *= radius / norm;
    }
    Ok(center + d)
}
