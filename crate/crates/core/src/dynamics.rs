//! Unitary evolution of one quasimomentum component through an acceleration
//! profile.
//!
//! The tilt `-m a x'` of the comoving frame is carried entirely by the
//! quasimomentum drift `q(t) = q0 + ∫a dt`; the Hamiltonian on the ladder is
//! always the periodic one, evaluated at the drifted quasimomentum. The ladder
//! is a window of canonical sites that follows the trapped component: it spans
//! `below` sites under and `above` sites over the zone-centre site, and is
//! relabelled whenever the drifted quasimomentum leaves the first zone.
//! With positive acceleration, population that leaves the lowest band drifts
//! towards the `above` side.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bands::{self, BandSolution};
use crate::error::{Error, Result};
use crate::expm::TridiagExp;

/// Norm drift beyond which a segment is reported as an integrator failure.
pub const NORM_FAILURE_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stepper {
    /// Exponential of the midpoint Hamiltonian per substep (second order).
    #[default]
    ExponentialMidpoint,
    /// Two-exponential commutator-free Magnus scheme (fourth order).
    CommutatorFree4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolutionConfig {
    /// Step ceiling in `ħ / E_rec`.
    pub dt_max: f64,
    pub stepper: Stepper,
    /// Minimum substeps per instantaneous Bloch period.
    pub substeps_per_bloch_period: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            dt_max: 0.01,
            stepper: Stepper::ExponentialMidpoint,
            substeps_per_bloch_period: 2000,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::invalid(format!("dt_max must be positive, got {}", self.dt_max)));
        }
        if self.substeps_per_bloch_period < 100 {
            return Err(Error::invalid(format!(
                "substeps_per_bloch_period must be at least 100, got {}",
                self.substeps_per_bloch_period
            )));
        }
        Ok(())
    }

    /// Number of equal substeps for a segment at dimensionless acceleration `a`.
    pub fn step_count(&self, accel: f64, duration: f64) -> usize {
        if duration <= 0.0 {
            return 0;
        }
        let by_ceiling = (duration / self.dt_max).ceil();
        // a Bloch period is 2 / |a| in recoil units
        let by_bloch = (duration * accel.abs() / 2.0 * self.substeps_per_bloch_period as f64).ceil();
        by_ceiling.max(by_bloch).max(1.0) as usize
    }
}

/// Wavefunction on the plane-wave ladder of one quasimomentum trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderState {
    q0: f64,
    drift: f64,
    t: f64,
    below: usize,
    above: usize,
    /// Canonical index of `amplitudes[0]`; site `n` has momentum `q0 + drift + 2n`.
    n_min: i64,
    amplitudes: Vec<Complex64>,
    /// Probability carried out of the window by relabelling.
    discarded: f64,
}

impl LadderState {
    /// A state on the window `[c - below, c + above]` around the zone-centre
    /// site `c`, with all amplitudes zero.
    pub fn empty(q0: f64, below: usize, above: usize) -> Self {
        let n_min = bands::zone_shift(q0) - below as i64;
        LadderState {
            q0,
            drift: 0.0,
            t: 0.0,
            below,
            above,
            n_min,
            amplitudes: vec![Complex64::new(0.0, 0.0); below + above + 1],
            discarded: 0.0,
        }
    }

    /// Place the eigenvector of `band` from `solution` (computed at `fold(q0)`)
    /// at the centre of a window with the given extents.
    pub fn from_band(q0: f64, solution: &BandSolution, band: usize, below: usize, above: usize) -> Result<Self> {
        let half = solution.half_width;
        if below < half || above < half {
            return Err(Error::invalid(format!(
                "window ({below} below, {above} above) narrower than band basis N = {half}"
            )));
        }
        if (bands::fold(q0) - solution.q).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "band solution at q = {} does not match fold(q0) = {}",
                solution.q,
                bands::fold(q0)
            )));
        }
        let mut state = Self::empty(q0, below, above);
        let offset = below - half;
        for (i, &c) in solution.vector(band).iter().enumerate() {
            state.amplitudes[offset + i] = Complex64::new(c, 0.0);
        }
        Ok(state)
    }

    pub fn from_amplitudes(q0: f64, below: usize, above: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        let mut state = Self::empty(q0, below, above);
        if amplitudes.len() != state.amplitudes.len() {
            return Err(Error::Dimension {
                expected: state.amplitudes.len(),
                got: amplitudes.len(),
            });
        }
        state.amplitudes = amplitudes;
        Ok(state)
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }
    pub fn drift(&self) -> f64 {
        self.drift
    }
    pub fn time(&self) -> f64 {
        self.t
    }
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }
    pub fn discarded(&self) -> f64 {
        self.discarded
    }
    pub fn below(&self) -> usize {
        self.below
    }
    pub fn above(&self) -> usize {
        self.above
    }
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Drifted quasimomentum folded into the first zone.
    pub fn folded_q(&self) -> f64 {
        bands::fold(self.q0 + self.drift)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Deviation of the total probability (window plus anything relabelled
    /// out of it) from one.
    pub fn norm_deviation(&self) -> f64 {
        (self.norm_sqr() + self.discarded - 1.0).abs()
    }

    /// Lattice-frame momentum of each window site, `ħ k_L` units.
    pub fn momenta(&self) -> impl Iterator<Item = f64> + '_ {
        let k = self.q0 + self.drift;
        (0..self.amplitudes.len()).map(move |j| k + 2.0 * (self.n_min + j as i64) as f64)
    }

    /// Amplitudes on `2 * half + 1` sites centred on the zone-centre site,
    /// i.e. on the ladder of `bands::solve_bands(self.folded_q(), _, half)`.
    pub fn centered_window(&self, half: usize) -> Result<Vec<Complex64>> {
        if half > self.below || half > self.above {
            return Err(Error::invalid(format!(
                "requested half-width {half} exceeds window ({} below, {} above)",
                self.below, self.above
            )));
        }
        let start = self.below - half;
        Ok(self.amplitudes[start..start + 2 * half + 1].to_vec())
    }

    fn recenter(&mut self) {
        let target = bands::zone_shift(self.q0 + self.drift) - self.below as i64;
        let shift = target - self.n_min;
        if shift == 0 {
            return;
        }
        let len = self.amplitudes.len() as i64;
        let mut moved = vec![Complex64::new(0.0, 0.0); len as usize];
        let mut kept = 0.0;
        for (j, slot) in moved.iter_mut().enumerate() {
            let src = j as i64 + shift;
            if (0..len).contains(&src) {
                *slot = self.amplitudes[src as usize];
                kept += slot.norm_sqr();
            }
        }
        self.discarded += (self.norm_sqr() - kept).max(0.0);
        self.amplitudes = moved;
        self.n_min = target;
    }

    /// Periodic Hamiltonian on the current window at the current drift.
    pub fn instantaneous_hamiltonian(&self, depth: f64) -> DMatrix<f64> {
        let dim = self.amplitudes.len();
        let mut h = DMatrix::zeros(dim, dim);
        for (i, p) in self.momenta().enumerate() {
            h[(i, i)] = p * p;
            if i + 1 < dim {
                h[(i, i + 1)] = depth / 2.0;
                h[(i + 1, i)] = depth / 2.0;
            }
        }
        h
    }
}

/// Integrator with reusable scratch buffers.
#[derive(Clone, Debug)]
pub struct Propagator {
    depth: f64,
    config: EvolutionConfig,
    expm: TridiagExp,
    diag: Vec<f64>,
}

impl Propagator {
    pub fn new(depth: f64, config: EvolutionConfig) -> Result<Self> {
        config.validate()?;
        if !(depth >= 0.0 && depth.is_finite()) {
            return Err(Error::invalid(format!("depth must be non-negative, got {depth}")));
        }
        Ok(Propagator {
            depth,
            config,
            expm: TridiagExp::new(),
            diag: Vec::new(),
        })
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    /// Advance `state` by `duration` (recoil time units) at constant
    /// dimensionless acceleration `accel`.
    pub fn evolve_segment(&mut self, state: &mut LadderState, accel: f64, duration: f64) -> Result<()> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::invalid(format!("segment duration must be non-negative, got {duration}")));
        }
        if !accel.is_finite() {
            return Err(Error::invalid("acceleration must be finite"));
        }
        if duration == 0.0 {
            return Ok(());
        }
        if state.t + duration == state.t {
            return Err(Error::Numerical(format!(
                "segment of {duration:e} is below the time resolution at t = {}",
                state.t
            )));
        }
        let steps = self.config.step_count(accel, duration);
        let h = duration / steps as f64;
        let (t0, drift0) = (state.t, state.drift);
        let coupling = self.depth / 2.0;
        for i in 0..steps {
            let s0 = i as f64 * h;
            match self.config.stepper {
                Stepper::ExponentialMidpoint => {
                    self.fill_diag(state, drift0 + accel * (s0 + 0.5 * h), None);
                    self.expm.apply(&self.diag, coupling, h, &mut state.amplitudes);
                }
                Stepper::CommutatorFree4 => {
                    let r3 = 3f64.sqrt();
                    let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
                    let (w1, w2) = ((3.0 - 2.0 * r3) / 12.0, (3.0 + 2.0 * r3) / 12.0);
                    let d1 = drift0 + accel * (s0 + c1 * h);
                    let d2 = drift0 + accel * (s0 + c2 * h);
                    // first exponential leans on the earlier node
                    self.fill_diag(state, d1, Some((d2, w2, w1)));
                    self.expm.apply(&self.diag, 0.5 * coupling, h, &mut state.amplitudes);
                    self.fill_diag(state, d1, Some((d2, w1, w2)));
                    self.expm.apply(&self.diag, 0.5 * coupling, h, &mut state.amplitudes);
                }
            }
            state.drift = drift0 + accel * (s0 + h);
            state.t = t0 + s0 + h;
            state.recenter();
        }
        state.drift = drift0 + accel * duration;
        state.t = t0 + duration;
        state.recenter();

        let deviation = state.norm_deviation();
        if deviation > NORM_FAILURE_THRESHOLD {
            return Err(Error::Integrator {
                deviation,
                t: state.t,
            });
        }
        Ok(())
    }

    /// Kinetic diagonal at drift `d`, or the weighted combination
    /// `w_a p(d)² + w_b p(d2)²` when `mix = Some((d2, w_a, w_b))`.
    fn fill_diag(&mut self, state: &LadderState, d: f64, mix: Option<(f64, f64, f64)>) {
        self.diag.clear();
        let base = state.q0 + 2.0 * state.n_min as f64;
        for j in 0..state.amplitudes.len() {
            let site = base + 2.0 * j as f64;
            let p1 = site + d;
            self.diag.push(match mix {
                None => p1 * p1,
                Some((d2, wa, wb)) => {
                    let p2 = site + d2;
                    wa * p1 * p1 + wb * p2 * p2
                }
            });
        }
    }
}

/// Population of the lowest band at the current drifted quasimomentum.
pub fn survival_observable(state: &LadderState, depth: f64, half_width: usize) -> Result<f64> {
    let solution = bands::solve_bands(state.folded_q(), depth, half_width)?;
    band_population_of(state, 0, &solution)
}

pub fn band_population_of(state: &LadderState, band: usize, solution: &BandSolution) -> Result<f64> {
    if (solution.q - state.folded_q()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "band solution at q = {} but state is at q = {}",
            solution.q,
            state.folded_q()
        )));
    }
    let window = state.centered_window(solution.half_width)?;
    bands::band_population(&window, band, solution)
}
