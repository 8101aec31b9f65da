//! Bloch bands of the cosine lattice on a truncated plane-wave ladder.
//!
//! At quasimomentum `q` the ladder site `n` carries the plane wave of momentum
//! `q + 2n` (units of `ħ k_L`). The lattice `V0 cos(2 k_L x)` couples nearest
//! neighbours with amplitude `V0 / 2`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest basis half-width returned by [`choose_basis_size`].
pub const MIN_BASIS_HALF_WIDTH: usize = 8;
/// Largest basis half-width [`choose_basis_size`] will try.
pub const MAX_BASIS_HALF_WIDTH: usize = 128;

/// Quasimomentum folded into the first zone `[-1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct QuasiMomentum(f64);

impl QuasiMomentum {
    pub fn new(q: f64) -> Self {
        QuasiMomentum(fold(q))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Fold `q` into `[-1, 1)`.
pub fn fold(q: f64) -> f64 {
    let f = q - 2.0 * ((q + 1.0) / 2.0).floor();
    // rounding can land exactly on the upper edge
    if f >= 1.0 {
        f - 2.0
    } else {
        f
    }
}

/// Ladder shift `s` such that `q + 2s` lies in `[-1, 1)`.
pub fn zone_shift(q: f64) -> i64 {
    -((q + 1.0) / 2.0).floor() as i64
}

/// Dense periodic Hamiltonian at quasimomentum `q` over sites `n = -N..=N`.
pub fn build_periodic_hamiltonian(q: f64, depth: f64, half_width: usize) -> Result<DMatrix<f64>> {
    check_inputs(depth, half_width)?;
    let dim = 2 * half_width + 1;
    let coupling = depth / 2.0;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let p = q + 2.0 * (i as f64 - half_width as f64);
        h[(i, i)] = p * p;
        if i + 1 < dim {
            h[(i, i + 1)] = coupling;
            h[(i + 1, i)] = coupling;
        }
    }
    Ok(h)
}

fn check_inputs(depth: f64, half_width: usize) -> Result<()> {
    if half_width < 1 {
        return Err(Error::invalid("basis half-width must be at least 1"));
    }
    if !(depth >= 0.0 && depth.is_finite()) {
        return Err(Error::invalid(format!("depth must be non-negative, got {depth}")));
    }
    Ok(())
}

/// Band energies and plane-wave eigenvectors at one quasimomentum.
#[derive(Clone, Debug)]
pub struct BandSolution {
    pub q: f64,
    pub half_width: usize,
    /// Ascending, in `E_rec`.
    pub energies: Vec<f64>,
    /// Column `b` is the eigenvector of band `b` over sites `-N..=N`.
    pub vectors: DMatrix<f64>,
}

impl BandSolution {
    pub fn dim(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn band_count(&self) -> usize {
        self.energies.len()
    }

    pub fn vector(&self, band: usize) -> nalgebra::DVectorView<'_, f64> {
        self.vectors.column(band)
    }

    /// `|<band|state>|²` for a state written on the same ladder.
    pub fn population(&self, state: &[Complex64], band: usize) -> Result<f64> {
        band_population(state, band, self)
    }
}

pub fn solve_bands(q: f64, depth: f64, half_width: usize) -> Result<BandSolution> {
    let h = build_periodic_hamiltonian(q, depth, half_width)?;
    let dim = h.nrows();
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!(
            "eigensolver did not converge at q = {q}, depth = {depth}, N = {half_width}"
        ))
    })?;

    // dominant ladder site of each eigenvector, used to order exact ties
    let dominant: Vec<usize> = (0..dim)
        .map(|c| {
            let col = eig.eigenvectors.column(c);
            (0..dim)
                .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
                .unwrap_or(0)
        })
        .collect();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        if (ea - eb).abs() <= 1e-13 * scale {
            dominant[a].cmp(&dominant[b])
        } else {
            ea.total_cmp(&eb)
        }
    });

    let mut vectors = DMatrix::zeros(dim, dim);
    let mut energies = Vec::with_capacity(dim);
    for (dst, &src) in order.iter().enumerate() {
        energies.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        // fix the arbitrary sign: dominant component positive
        if col[dominant[src]] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(BandSolution {
        q,
        half_width,
        energies,
        vectors,
    })
}

/// Probability `|<v_band|state>|²` of finding `state` in `band`.
pub fn band_population(state: &[Complex64], band: usize, solution: &BandSolution) -> Result<f64> {
    if state.len() != solution.dim() {
        return Err(Error::Dimension {
            expected: solution.dim(),
            got: state.len(),
        });
    }
    if band >= solution.band_count() {
        return Err(Error::invalid(format!(
            "band {band} out of range (have {})",
            solution.band_count()
        )));
    }
    let v = solution.vector(band);
    let overlap: Complex64 = state.iter().zip(v.iter()).map(|(a, &c)| a * c).sum();
    Ok(overlap.norm_sqr())
}

/// Smallest basis half-width (at least [`MIN_BASIS_HALF_WIDTH`]) for which the
/// two lowest bands at `q ∈ {0, ±0.5, 1}` move by less than `tolerance` when
/// the basis grows by two sites on each side.
pub fn choose_basis_size(depth: f64, tolerance: f64) -> Result<usize> {
    if !(tolerance > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tolerance}")));
    }
    check_inputs(depth, 1)?;
    const PROBES: [f64; 4] = [0.0, 0.5, -0.5, 1.0];
    let low_bands = |n: usize| -> Result<Vec<[f64; 2]>> {
        PROBES
            .iter()
            .map(|&q| solve_bands(q, depth, n).map(|s| [s.energies[0], s.energies[1]]))
            .collect()
    };
    let mut n = MIN_BASIS_HALF_WIDTH;
    let mut current = low_bands(n)?;
    while n <= MAX_BASIS_HALF_WIDTH {
        let next = low_bands(n + 2)?;
        let change = current
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max);
        if change < tolerance {
            return Ok(n);
        }
        n += 2;
        current = next;
    }
    Err(Error::Numerical(format!(
        "basis did not converge to {tolerance:e} below N = {MAX_BASIS_HALF_WIDTH} at depth {depth}"
    )))
}
