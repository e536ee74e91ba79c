//! Direction sets and positive spanning.
//!
//! Each robot `i` is assigned a fixed unit direction `l_i` around the object.
//! The controller is only well posed when the directions positively span the
//! ambient space (every direction has a positive component along some `l_i`)
//! and any `n` of them are linearly independent.

use std::f64::consts::PI;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// A point or vector of the ambient space (positions, velocities, forces).
pub type VecN = DVector<f64>;

/// Allowed deviation of `|l_i|` from one.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Smallest `|det|` for which an `n`-subset counts as linearly independent.
pub const DET_TOL: f64 = 1e-10;
/// Reconstruction tolerance for positive-combination bases.
pub const RECONSTRUCTION_TOL: f64 = 1e-9;
/// Coefficients down to this negative value are accepted and clamped to 0.
const COEFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("direction set is empty")]
    Empty,
    #[error("ambient dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("direction {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("direction {0} has a non-finite entry")]
    NonFinite(usize),
    #[error("direction {index} is not unit length (|l| = {norm})")]
    NotUnit { index: usize, norm: f64 },
    #[error("no {0}-subset of the directions represents the target with nonnegative coefficients")]
    NoPositiveBasis(usize),
}

/// The per-robot contact directions `l_1, ..., l_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    vectors: Vec<VecN>,
    dim: usize,
}

impl DirectionSet {
    /// Builds a set from explicit vectors.
    ///
    /// All vectors must share one dimension `n >= 2` and be finite. Unit length
    /// is *not* enforced here so that scenario validation can report it; see
    /// [`DirectionSet::check_unit_norm`].
    pub fn new(vectors: Vec<VecN>) -> Result<Self, GeometryError> {
        let dim = vectors.first().ok_or(GeometryError::Empty)?.len();
        if dim < 2 {
            return Err(GeometryError::DimensionTooSmall(dim));
        }
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(GeometryError::NonFinite(index));
            }
        }
        Ok(Self { vectors, dim })
    }

    /// Builds a set, rescaling every vector to unit length.
    pub fn normalized(vectors: Vec<VecN>) -> Result<Self, GeometryError> {
        let set = Self::new(vectors)?;
        let vectors = set
            .vectors
            .iter()
            .map(|v| v.normalize())
            .collect::<Vec<_>>();
        Self::new(vectors)
    }

    /// `N` planar directions spaced evenly on the unit circle, starting at `[1, 0]`.
    pub fn evenly_spaced(count: usize) -> Result<Self, GeometryError> {
        let vectors = (0..count)
            .map(|i| {
                let angle = 2.0 * PI * i as f64 / count as f64;
                VecN::from_vec(vec![angle.cos(), angle.sin()])
            })
            .collect();
        Self::new(vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[VecN] {
        &self.vectors
    }

    pub fn get(&self, i: usize) -> &VecN {
        &self.vectors[i]
    }

    /// The `n x N` matrix `[l_1, ..., l_N]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.vectors)
    }

    /// Errors with the first vector whose norm is not within [`UNIT_NORM_TOL`] of one.
    pub fn check_unit_norm(&self) -> Result<(), GeometryError> {
        for (index, v) in self.vectors.iter().enumerate() {
            let norm = v.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(GeometryError::NotUnit { index, norm });
            }
        }
        Ok(())
    }

    /// Applies the same permutation to the directions: entry `k` of the result is `l_{perm[k]}`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            vectors: perm.iter().map(|&i| self.vectors[i].clone()).collect(),
            dim: self.dim,
        }
    }
}

/// True iff every unit vector has a strictly positive inner product with some `l_i`.
///
/// In the plane this is exact: the directions are sorted by angle and the
/// largest angular gap must be below `pi`. In higher dimensions the set must
/// have full rank and admit weights `lambda >= 1` with `sum lambda_i l_i = 0`,
/// which is decided by a nonnegative least-squares solve.
pub fn is_positively_spanning(dirs: &DirectionSet) -> bool {
    let n = dirs.dim();
    if dirs.len() < n + 1 {
        return false;
    }
    if n == 2 {
        return max_angular_gap(dirs) < PI - 1e-12;
    }

    let l = dirs.matrix();
    let sv = l.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if sv.iter().filter(|&&s| s > DET_TOL * smax.max(1.0)).count() < n {
        return false;
    }
    // lambda = 1 + mu with mu >= 0: minimize |L mu + L 1|.
    let ones = DVector::from_element(dirs.len(), 1.0);
    let b = -(&l * ones);
    let mu = nnls(&l, &b);
    let residual = (&l * mu - b).norm();
    residual < RECONSTRUCTION_TOL
}

/// Largest gap between consecutive planar directions, sorted by angle.
fn max_angular_gap(dirs: &DirectionSet) -> f64 {
    let mut angles = dirs
        .vectors()
        .iter()
        .map(|v| v[1].atan2(v[0]))
        .collect::<Vec<_>>();
    angles.sort_by(f64::total_cmp);
    let wrap = 2.0 * PI - (angles[angles.len() - 1] - angles[0]);
    angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}

/// True iff every `n`-subset of the (normalized) directions has `|det| > DET_TOL`.
///
/// Sets with fewer than `n` vectors return false.
pub fn is_nwise_independent(dirs: &DirectionSet) -> bool {
    let n = dirs.dim();
    if dirs.len() < n {
        return false;
    }
    let unit = dirs
        .vectors()
        .iter()
        .map(|v| v.normalize())
        .collect::<Vec<_>>();
    (0..dirs.len()).combinations(n).all(|subset| {
        let cols = subset.iter().map(|&i| unit[i].clone()).collect::<Vec<_>>();
        DMatrix::from_columns(&cols).determinant().abs() > DET_TOL
    })
}

/// `n` directions and nonnegative weights reproducing a target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveBasis {
    pub indices: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl PositiveBasis {
    /// The `n x n` matrix `[l_{i_1}, ..., l_{i_n}]`.
    pub fn matrix(&self, dirs: &DirectionSet) -> DMatrix<f64> {
        let cols = self
            .indices
            .iter()
            .map(|&i| dirs.get(i).clone())
            .collect::<Vec<_>>();
        DMatrix::from_columns(&cols)
    }

    /// Spectral norm of the inverse basis matrix, `1 / sigma_min`.
    pub fn inverse_norm(&self, dirs: &DirectionSet) -> f64 {
        let sv = self.matrix(dirs).svd(false, false).singular_values;
        1.0 / sv.min()
    }
}

/// Finds the lexicographically first `n`-subset of directions whose span
/// contains `target` with all coefficients nonnegative.
///
/// When the target is parallel to some `l_i`, the returned subset contains it
/// and the remaining coefficients are zero.
pub fn positive_combination_basis(
    dirs: &DirectionSet,
    target: &VecN,
) -> Result<PositiveBasis, GeometryError> {
    let n = dirs.dim();
    if target.len() != n {
        return Err(GeometryError::DimensionMismatch {
            index: 0,
            expected: n,
            found: target.len(),
        });
    }
    let tol = COEFF_TOL * target.norm().max(1.0);
    for subset in (0..dirs.len()).combinations(n) {
        let basis = PositiveBasis {
            indices: subset,
            coefficients: Vec::new(),
        };
        let m = basis.matrix(dirs);
        if m.determinant().abs() <= DET_TOL {
            continue;
        }
        let Some(c) = m.clone().lu().solve(target) else {
            continue;
        };
        if c.iter().any(|&x| x < -tol) {
            continue;
        }
        let c = c.map(|x| x.max(0.0));
        if (&m * &c - target).norm() >= RECONSTRUCTION_TOL * target.norm().max(1.0) {
            continue;
        }
        return Ok(PositiveBasis {
            coefficients: c.iter().copied().collect(),
            ..basis
        });
    }
    Err(GeometryError::NoPositiveBasis(n))
}

/// Lawson-Hanson nonnegative least squares: `argmin |A x - b|` over `x >= 0`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let cols = a.ncols();
    let tol = 1e-12 * (a.norm() * b.norm()).max(1.0);
    let mut x = DVector::zeros(cols);
    let mut passive = vec![false; cols];

    for _ in 0..3 * cols.max(1) {
        let w = a.transpose() * (b - a * &x);
        let Some((j, _)) = (0..cols)
            .filter(|&j| !passive[j] && w[j] > tol)
            .map(|j| (j, w[j]))
            .max_by(|p, q| p.1.total_cmp(&q.1))
        else {
            break;
        };
        passive[j] = true;

        loop {
            let z = passive_lstsq(a, b, &passive);
            if (0..cols).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                x = z;
                break;
            }
            let alpha = (0..cols)
                .filter(|&i| passive[i] && z[i] <= 0.0)
                .map(|i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            x += alpha * (&z - &x);
            for i in 0..cols {
                if passive[i] && x[i] <= 1e-14 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx = (0..a.ncols()).filter(|&i| passive[i]).collect::<Vec<_>>();
    let sub = a.select_columns(&idx);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(idx.len()));
    let mut z = DVector::zeros(a.ncols());
    for (k, &i) in idx.iter().enumerate() {
        z[i] = sol[k];
    }
    z
}
