//! Ensemble runs over the first Brillouin zone and survival-probability
//! curves for families of schedules.

use rayon::prelude::*;

use crate::bands;
use crate::dynamics::{self, EvolutionConfig, LadderState, Propagator};
use crate::error::{Error, Result};
use crate::schedule::{apply_response_filter, FilteredProfile, Role, Schedule};
use crate::units::{LatticeParams, UnitSystem};

/// Default half-width of the detection window around the comoving momentum
/// class, `ħ k_L`.
pub const DEFAULT_DETECTION_HALFWIDTH: f64 = 5.0;
/// Extra ladder sites kept beyond the estimated reach of tunnelled atoms.
const WINDOW_MARGIN: usize = 2;
/// Depth below which there is no bound band worth following.
pub const MIN_USEFUL_DEPTH: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    UniformGrid,
    GaussianWeighted,
}

/// Quasimomentum samples with normalized weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub q: Vec<f64>,
    pub weights: Vec<f64>,
    pub sampling: Sampling,
}

impl Ensemble {
    /// `count` equally weighted points at the centres of a uniform grid on `[-1, 1)`.
    pub fn uniform(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("ensemble needs at least one quasimomentum"));
        }
        let q = (0..count)
            .map(|i| bands::fold(-1.0 + (2 * i + 1) as f64 / count as f64))
            .collect();
        Ok(Ensemble {
            q,
            weights: vec![1.0 / count as f64; count],
            sampling: Sampling::UniformGrid,
        })
    }

    /// Uniform grid weighted by a Gaussian momentum distribution of standard
    /// deviation `sigma` (units of `ħ k_L`, i.e. `v_rec`) folded into the zone.
    pub fn gaussian(count: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("momentum spread must be positive, got {sigma}")));
        }
        let mut e = Self::uniform(count)?;
        let images = (6.0 * sigma / 2.0).ceil() as i64 + 1;
        let raw: Vec<f64> = e
            .q
            .iter()
            .map(|&q| {
                (-images..=images)
                    .map(|n| {
                        let p = q + 2.0 * n as f64;
                        (-p * p / (2.0 * sigma * sigma)).exp()
                    })
                    .sum()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        e.weights = raw.iter().map(|w| w / total).collect();
        e.sampling = Sampling::GaussianWeighted;
        Ok(e)
    }

    pub fn from_weighted(q: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != weights.len() {
            return Err(Error::invalid("ensemble needs matching, non-empty q and weight lists"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("ensemble weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("ensemble weights sum to zero"));
        }
        Ok(Ensemble {
            q: q.into_iter().map(bands::fold).collect(),
            weights: weights.iter().map(|w| w / total).collect(),
            sampling: Sampling::UniformGrid,
        })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Momentum-window classification of a final state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub trapped_fraction: f64,
    pub tunneled_fraction: f64,
}

/// Fraction of the population whose lattice-frame momentum lies within
/// `window_halfwidth` (`ħ k_L`) of the comoving class. Population relabelled
/// out of the ladder counts as tunnelled.
pub fn detection_classify(state: &LadderState, window_halfwidth: f64) -> Detection {
    let inside: f64 = state
        .momenta()
        .zip(state.amplitudes())
        .filter(|(p, _)| p.abs() <= window_halfwidth)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let total = state.norm_sqr() + state.discarded();
    let trapped = inside / total;
    Detection {
        trapped_fraction: trapped,
        tunneled_fraction: 1.0 - trapped,
    }
}

/// Observables recorded along one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// `(tunnel time so far in s, band-0 population)` at the end of every
    /// tunnel segment.
    pub checkpoints: Vec<(f64, f64)>,
    pub final_survival: f64,
    pub final_detection: Detection,
    pub norm_deviation: f64,
    pub discarded: f64,
}

/// A family of schedules indexed by total tunnelling time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleFamily {
    Uninterrupted {
        a_trans: f64,
        a_tunnel: f64,
        v0: f64,
        v_final: f64,
    },
    Interrupted {
        a_trans: f64,
        a_tunnel: f64,
        a_interr: f64,
        t_segment: f64,
        t_interr: f64,
        v0: f64,
        v_final: f64,
    },
}

impl ScheduleFamily {
    pub fn schedule_for(&self, t_tunnel: f64) -> Result<Schedule> {
        match *self {
            ScheduleFamily::Uninterrupted { a_trans, a_tunnel, v0, v_final } => {
                Schedule::uninterrupted(a_trans, a_tunnel, t_tunnel, v0, v_final)
            }
            ScheduleFamily::Interrupted { a_trans, a_tunnel, a_interr, t_segment, t_interr, v0, v_final } => {
                if !(t_segment > 0.0) {
                    return Err(Error::InvalidSchedule("tunnel segment must be positive".into()));
                }
                let cycles = (t_tunnel / t_segment).round();
                if (cycles * t_segment - t_tunnel).abs() > 1e-9 * t_segment {
                    return Err(Error::InvalidSchedule(format!(
                        "total tunnel time {t_tunnel:e} s is not a multiple of the {t_segment:e} s segment"
                    )));
                }
                if cycles == 0.0 {
                    Schedule::uninterrupted(a_trans, a_tunnel, 0.0, v0, v_final)
                } else {
                    Schedule::interrupted(a_trans, a_tunnel, a_interr, t_segment, t_interr, cycles as usize, v0, v_final)
                }
            }
        }
    }

    pub fn with_interruption(&self, t: f64) -> ScheduleFamily {
        match *self {
            ScheduleFamily::Interrupted { a_trans, a_tunnel, a_interr, t_segment, v0, v_final, .. } => {
                ScheduleFamily::Interrupted { a_trans, a_tunnel, a_interr, t_segment, t_interr: t, v0, v_final }
            }
            other => other,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ScheduleFamily::Uninterrupted { .. } => "uninterrupted".into(),
            ScheduleFamily::Interrupted { t_segment, t_interr, .. } => format!(
                "interrupted_{}us_every_{}us",
                fmt_us(t_interr),
                fmt_us(t_segment)
            ),
        }
    }
}

fn fmt_us(t: f64) -> String {
    let us = t * 1e6;
    if (us - us.round()).abs() < 1e-9 {
        format!("{}", us.round() as i64)
    } else {
        format!("{us}")
    }
}

/// Survival probability versus total tunnelling time.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCurve {
    pub label: String,
    /// Total tunnelling times, s.
    pub t_tunnel: Vec<f64>,
    /// Band-0 survival, normalized to the `t_tunnel = 0` point.
    pub survival: Vec<f64>,
    pub raw_survival: Vec<f64>,
    pub normalization: f64,
    /// Momentum-window trapped fraction, normalized the same way.
    pub detected: Vec<f64>,
    pub raw_detected: Vec<f64>,
    pub n_ensemble: usize,
    /// Largest norm deviation over all trajectories behind the curve.
    pub max_norm_deviation: f64,
}

impl SurvivalCurve {
    /// Build from raw ensemble averages; the first point must be `t = 0`.
    pub fn from_raw(label: String, t_tunnel: Vec<f64>, raw_survival: Vec<f64>, raw_detected: Vec<f64>, n_ensemble: usize) -> Result<Self> {
        if t_tunnel.first() != Some(&0.0) {
            return Err(Error::invalid("survival curves must start at zero tunnelling time"));
        }
        let normalization = raw_survival[0];
        if !(normalization > 0.0) {
            return Err(Error::Numerical("no population survives the transport phase".into()));
        }
        let det_norm = raw_detected[0];
        Ok(SurvivalCurve {
            label,
            survival: raw_survival.iter().map(|s| s / normalization).collect(),
            detected: raw_detected.iter().map(|s| if det_norm > 0.0 { s / det_norm } else { 0.0 }).collect(),
            t_tunnel,
            raw_survival,
            normalization,
            raw_detected,
            n_ensemble,
            max_norm_deviation: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.t_tunnel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_tunnel.is_empty()
    }

    /// Survival at tunnel time `t` (s), if sampled.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.t_tunnel
            .iter()
            .position(|&x| (x - t).abs() <= 1e-12 + 1e-9 * t.abs())
            .map(|i| self.survival[i])
    }
}

/// Position along a schedule: segment index and local time inside it (s).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
struct Cursor {
    segment: usize,
    offset: f64,
}

/// Latest point up to which two schedules share the same acceleration profile.
fn common_prefix(a: &Schedule, b: &Schedule) -> Cursor {
    for (k, (x, y)) in a.segments.iter().zip(&b.segments).enumerate() {
        if x.accel != y.accel {
            return Cursor { segment: k, offset: 0.0 };
        }
        if x.duration != y.duration {
            return Cursor { segment: k, offset: x.duration.min(y.duration) };
        }
    }
    let k = a.segments.len().min(b.segments.len());
    Cursor { segment: k, offset: 0.0 }
}

/// Simulation settings shared by every trajectory of a run.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub params: LatticeParams,
    pub units: UnitSystem,
    /// Basis half-width for band projections.
    pub basis_half_width: usize,
    pub evolution: EvolutionConfig,
    /// Response time constant of the acceleration drive, s (0 = ideal steps).
    pub response_tau: f64,
    pub detection_halfwidth: f64,
    /// Ladder sites kept above the band basis for tunnelled population;
    /// `None` keeps everything that tunnels out until the schedule ends.
    pub ladder_reach: Option<usize>,
}

impl Simulator {
    pub fn new(params: LatticeParams, basis_half_width: usize, evolution: EvolutionConfig) -> Result<Self> {
        evolution.validate()?;
        if basis_half_width < 1 {
            return Err(Error::invalid("basis half-width must be at least 1"));
        }
        if params.depth_dimless < MIN_USEFUL_DEPTH {
            log::warn!(
                "lattice depth {:.3} E_rec has no well-bound lowest band; survival curves are not meaningful",
                params.depth_dimless
            );
        }
        Ok(Simulator {
            units: params.units(),
            params,
            basis_half_width,
            evolution,
            response_tau: 0.0,
            detection_halfwidth: DEFAULT_DETECTION_HALFWIDTH,
            ladder_reach: None,
        })
    }

    /// Basis chosen automatically for band energies converged to `1e-10`.
    pub fn with_auto_basis(params: LatticeParams, evolution: EvolutionConfig) -> Result<Self> {
        let n = bands::choose_basis_size(params.depth_dimless, 1e-10)?;
        Self::new(params, n, evolution)
    }

    pub fn with_response_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("response time constant must be non-negative, got {tau}")));
        }
        self.response_tau = tau;
        Ok(self)
    }

    pub fn depth(&self) -> f64 {
        self.params.depth_dimless
    }

    /// Ladder extents `(below, above)` that hold everything tunnelling out
    /// during `schedule` until its end.
    pub fn window_for(&self, schedule: &Schedule) -> (usize, usize) {
        let reach = (schedule.end_velocity() - schedule.velocity_at_first_tunnel()).max(0.0) / self.params.v_rec;
        let n = self.basis_half_width;
        let mut extra = (reach / 2.0).ceil() as usize;
        if let Some(cap) = self.ladder_reach {
            extra = extra.min(cap);
        }
        (n + WINDOW_MARGIN, n + extra + WINDOW_MARGIN)
    }

    /// Lowest-band eigenstate at `q` on a window with the given extents.
    pub fn prepare_initial(&self, q: f64, below: usize, above: usize) -> Result<LadderState> {
        let solution = bands::solve_bands(bands::fold(q), self.depth(), self.basis_half_width)?;
        LadderState::from_band(q, &solution, 0, below, above)
    }

    pub fn survival(&self, state: &LadderState) -> Result<f64> {
        dynamics::survival_observable(state, self.depth(), self.basis_half_width)
    }

    fn propagator(&self) -> Result<Propagator> {
        Propagator::new(self.depth(), self.evolution)
    }

    fn profile(&self, schedule: &Schedule) -> Result<FilteredProfile> {
        let dt = if self.response_tau > 0.0 { self.response_tau / 10.0 } else { 1e-6 };
        apply_response_filter(schedule, self.response_tau, dt)
    }

    /// Evolve along `profile` from `from` to `to`, recording the band-0
    /// population at the end of every tunnel segment passed.
    fn advance(
        &self,
        prop: &mut Propagator,
        state: &mut LadderState,
        profile: &FilteredProfile,
        from: Cursor,
        to: Cursor,
        mut checkpoints: Option<&mut Vec<(f64, f64)>>,
    ) -> Result<()> {
        let u = &self.units;
        let mut tunnel_done: f64 = profile.segments[..from.segment.min(profile.segments.len())]
            .iter()
            .filter(|s| s.role == Role::Tunnel)
            .map(|s| s.duration)
            .sum();
        for k in from.segment..profile.segments.len() {
            if k > to.segment {
                break;
            }
            let seg = profile.segments[k];
            let s0 = if k == from.segment { from.offset } else { 0.0 };
            let s1 = if k == to.segment { to.offset } else { seg.duration };
            if s1 > s0 {
                if profile.tau == 0.0 {
                    prop.evolve_segment(state, u.accel_to_dimless(seg.accel), u.time_to_dimless(s1 - s0))?;
                } else {
                    // sub-intervals with the exact mean of the relaxing drive
                    let max_len = profile.tau / 10.0;
                    let pieces = ((s1 - s0) / max_len).ceil().max(1.0) as usize;
                    let len = (s1 - s0) / pieces as f64;
                    for i in 0..pieces {
                        let a = s0 + i as f64 * len;
                        let b = if i + 1 == pieces { s1 } else { a + len };
                        let mean = profile.integral_in(k, a, b) / (b - a);
                        prop.evolve_segment(state, u.accel_to_dimless(mean), u.time_to_dimless(b - a))?;
                    }
                }
            }
            if seg.role == Role::Tunnel && k < to.segment && s0 <= seg.duration {
                tunnel_done += seg.duration;
                if let Some(cp) = checkpoints.as_deref_mut() {
                    cp.push((tunnel_done, self.survival(state)?));
                }
            }
        }
        Ok(())
    }

    fn end_of(schedule: &Schedule) -> Cursor {
        Cursor { segment: schedule.segments.len(), offset: 0.0 }
    }

    fn record(&self, state: &LadderState, checkpoints: Vec<(f64, f64)>) -> Result<RunRecord> {
        Ok(RunRecord {
            checkpoints,
            final_survival: self.survival(state)?,
            final_detection: detection_classify(state, self.detection_halfwidth),
            norm_deviation: state.norm_deviation(),
            discarded: state.discarded(),
        })
    }

    /// Evolve the lowest-band state at `q` through `schedule`.
    pub fn run_schedule(&self, q: f64, schedule: &Schedule) -> Result<RunRecord> {
        let schedule = schedule.merged();
        let (below, above) = self.window_for(&schedule);
        let mut state = self.prepare_initial(q, below, above)?;
        let mut prop = self.propagator()?;
        let profile = self.profile(&schedule)?;
        let mut checkpoints = Vec::new();
        self.advance(&mut prop, &mut state, &profile, Cursor { segment: 0, offset: 0.0 }, Self::end_of(&schedule), Some(&mut checkpoints))?;
        self.record(&state, checkpoints)
    }

    /// Final observables for every schedule in `schedules` at one `q`,
    /// reusing the evolution over stretches shared by consecutive schedules.
    pub fn run_family(&self, q: f64, schedules: &[Schedule]) -> Result<Vec<RunRecord>> {
        let schedules: Vec<Schedule> = schedules.iter().map(Schedule::merged).collect();
        let (below, above) = schedules
            .iter()
            .map(|s| self.window_for(s))
            .fold((0, 0), |acc, w| (acc.0.max(w.0), acc.1.max(w.1)));
        let fresh = self.prepare_initial(q, below, above)?;
        let mut prop = self.propagator()?;
        let start = Cursor { segment: 0, offset: 0.0 };
        let mut trunk: Option<(LadderState, Cursor)> = None;
        let mut out = Vec::with_capacity(schedules.len());
        for (i, sched) in schedules.iter().enumerate() {
            let profile = self.profile(sched)?;
            let split = schedules.get(i + 1).map(|next| common_prefix(sched, next));
            // trunk, when present, lies on this schedule's profile
            let (mut state, at) = trunk.take().unwrap_or_else(|| (fresh.clone(), start));
            match split {
                Some(split) if at <= split => {
                    self.advance(&mut prop, &mut state, &profile, at, split, None)?;
                    trunk = Some((state.clone(), split));
                    self.advance(&mut prop, &mut state, &profile, split, Self::end_of(sched), None)?;
                }
                Some(split) => {
                    let mut branch = fresh.clone();
                    self.advance(&mut prop, &mut branch, &profile, start, split, None)?;
                    trunk = Some((branch, split));
                    self.advance(&mut prop, &mut state, &profile, at, Self::end_of(sched), None)?;
                }
                None => {
                    self.advance(&mut prop, &mut state, &profile, at, Self::end_of(sched), None)?;
                }
            }
            out.push(self.record(&state, Vec::new())?);
        }
        Ok(out)
    }

    /// Ensemble-averaged survival for each total tunnelling time in `t_list`
    /// (s, starting at 0, increasing).
    pub fn survival_curve(&self, ensemble: &Ensemble, family: &ScheduleFamily, t_list: &[f64]) -> Result<SurvivalCurve> {
        if ensemble.is_empty() {
            return Err(Error::invalid("ensemble is empty"));
        }
        if t_list.is_empty() || t_list[0] != 0.0 {
            return Err(Error::invalid("tunnel-time list must start at 0"));
        }
        if t_list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("tunnel-time list must be strictly increasing"));
        }
        let schedules: Vec<Schedule> = t_list.iter().map(|&t| family.schedule_for(t)).collect::<Result<_>>()?;
        let per_q: Vec<Vec<RunRecord>> = ensemble
            .q
            .par_iter()
            .map(|&q| self.run_family(q, &schedules))
            .collect::<Result<_>>()?;
        // fixed summation order keeps the result independent of thread count
        let mut raw = vec![0.0; t_list.len()];
        let mut det = vec![0.0; t_list.len()];
        let mut worst: f64 = 0.0;
        for (records, &w) in per_q.iter().zip(&ensemble.weights) {
            for (i, r) in records.iter().enumerate() {
                raw[i] += w * r.final_survival;
                det[i] += w * r.final_detection.trapped_fraction;
                worst = worst.max(r.norm_deviation);
            }
        }
        let mut curve = SurvivalCurve::from_raw(family.label(), t_list.to_vec(), raw, det, ensemble.len())?;
        curve.max_norm_deviation = worst;
        Ok(curve)
    }

    /// One curve per interruption duration, all with the tunnel segmentation
    /// of `base`.
    pub fn interruption_sweep(&self, ensemble: &Ensemble, base: &ScheduleFamily, t_interr_list: &[f64], t_list: &[f64]) -> Result<Vec<SurvivalCurve>> {
        if t_interr_list.is_empty() {
            return Err(Error::invalid("interruption list is empty"));
        }
        if !matches!(base, ScheduleFamily::Interrupted { .. }) {
            return Err(Error::invalid("interruption sweep needs an interrupted schedule family"));
        }
        t_interr_list
            .iter()
            .map(|&t| self.survival_curve(ensemble, &base.with_interruption(t), t_list))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(depth_khz: f64) -> Simulator {
        let params = LatticeParams::sodium(depth_khz * 1e3).unwrap();
        Simulator::new(params, 8, EvolutionConfig { substeps_per_bloch_period: 400, ..Default::default() }).unwrap()
    }

    #[test]
    fn ensembles() {
        let e = Ensemble::uniform(4).unwrap();
        assert_eq!(e.q, vec![-0.75, -0.25, 0.25, 0.75]);
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(Ensemble::uniform(0).is_err());
        let g = Ensemble::gaussian(16, 6.0).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // a spread much wider than the zone folds to nearly uniform weights
        let (lo, hi) = g.weights.iter().fold((1.0f64, 0.0f64), |a, &w| (a.0.min(w), a.1.max(w)));
        assert!(hi / lo < 1.001);
        let narrow = Ensemble::gaussian(16, 0.3).unwrap();
        assert!(narrow.weights[8] > narrow.weights[0] * 10.0);
        assert!(Ensemble::from_weighted(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn initial_state() {
        let s = sim(91.0);
        for q in [-0.9, 0.0, 0.6] {
            let st = s.prepare_initial(q, 10, 10).unwrap();
            assert!((s.survival(&st).unwrap() - 1.0).abs() < 1e-12);
            let d = detection_classify(&st, DEFAULT_DETECTION_HALFWIDTH);
            assert!(d.trapped_fraction >= 0.95);
            assert!((detection_classify(&st, 1e6).trapped_fraction - 1.0).abs() < 1e-12);
        }
        let free = Simulator::new(LatticeParams::sodium(0.0).unwrap(), 8, EvolutionConfig::default()).unwrap();
        let st = free.prepare_initial(0.0, 8, 8).unwrap();
        let amps = st.amplitudes();
        assert_eq!(amps[8].re, 1.0);
        assert_eq!(amps.iter().map(|z| z.norm_sqr()).sum::<f64>(), 1.0);
        // deep lattice: several plane waves carry the bound state
        let deep = sim(25.0e3);
        let st = deep.prepare_initial(0.0, 12, 12).unwrap();
        let significant = st.amplitudes().iter().filter(|z| z.norm_sqr() > 1e-2).count();
        assert!(significant >= 3);
    }

    #[test]
    fn common_prefix_finds_branch_points() {
        let v = 0.0295;
        let a = Schedule::uninterrupted(2000.0, 15000.0, 1e-6, 35.0 * v, 75.0 * v).unwrap();
        let b = Schedule::uninterrupted(2000.0, 15000.0, 2e-6, 35.0 * v, 75.0 * v).unwrap();
        assert_eq!(common_prefix(&a, &b), Cursor { segment: 1, offset: 1e-6 });
        assert_eq!(common_prefix(&a, &a), Cursor { segment: 3, offset: 0.0 });
    }

    #[test]
    fn family_matches_independent_runs() {
        let s = sim(91.0);
        let v = s.params.v_rec;
        let fam = ScheduleFamily::Interrupted {
            a_trans: 2000.0,
            a_tunnel: 15000.0,
            a_interr: 2000.0,
            t_segment: 1e-6,
            t_interr: 10e-6,
            v0: 3.0 * v,
            v_final: 12.0 * v,
        };
        let schedules: Vec<Schedule> = (0..4).map(|k| fam.schedule_for(k as f64 * 1e-6).unwrap()).collect();
        let shared = s.run_family(0.3, &schedules).unwrap();
        for (sched, rec) in schedules.iter().zip(&shared) {
            // independent runs use the same window so the ladders coincide
            let merged = sched.merged();
            let mut prop = s.propagator().unwrap();
            let (below, above) = schedules.iter().map(|x| s.window_for(&x.merged())).fold((0, 0), |a, w| (a.0.max(w.0), a.1.max(w.1)));
            let mut st = s.prepare_initial(0.3, below, above).unwrap();
            let profile = s.profile(&merged).unwrap();
            s.advance(&mut prop, &mut st, &profile, Cursor { segment: 0, offset: 0.0 }, Simulator::end_of(&merged), None).unwrap();
            let alone = s.survival(&st).unwrap();
            assert!((alone - rec.final_survival).abs() < 1e-6, "{alone} vs {}", rec.final_survival);
        }
    }

    #[test]
    fn run_records_checkpoints() {
        let s = sim(91.0);
        let v = s.params.v_rec;
        let sched = Schedule::interrupted(2000.0, 15000.0, 2000.0, 2e-6, 10e-6, 3, 3.0 * v, 15.0 * v).unwrap();
        let rec = s.run_schedule(0.1, &sched).unwrap();
        assert_eq!(rec.checkpoints.len(), 3);
        assert!((rec.checkpoints[2].0 - 6e-6).abs() < 1e-15);
        for w in rec.checkpoints.windows(2) {
            assert!(w[1].0 > w[0].0);
        }
        assert!(rec.final_survival < 1.0 && rec.final_survival > 0.0);
        assert!(rec.norm_deviation < 1e-9);
        assert!(rec.discarded < 1e-12);
    }

    #[test]
    fn curve_rejects_bad_input() {
        let s = sim(91.0);
        let v = s.params.v_rec;
        let fam = ScheduleFamily::Uninterrupted { a_trans: 2000.0, a_tunnel: 15000.0, v0: 3.0 * v, v_final: 8.0 * v };
        let empty = Ensemble { q: vec![], weights: vec![], sampling: Sampling::UniformGrid };
        assert!(s.survival_curve(&empty, &fam, &[0.0]).is_err());
        let e = Ensemble::uniform(2).unwrap();
        assert!(s.survival_curve(&e, &fam, &[1e-6]).is_err());
        assert!(s.survival_curve(&e, &fam, &[0.0, 2e-6, 1e-6]).is_err());
        let c = s.survival_curve(&e, &fam, &[0.0]).unwrap();
        assert_eq!(c.survival, vec![1.0]);
    }

    #[test]
    fn ensemble_average_is_linear() {
        let s = sim(91.0);
        let v = s.params.v_rec;
        let fam = ScheduleFamily::Uninterrupted { a_trans: 2000.0, a_tunnel: 15000.0, v0: 3.0 * v, v_final: 9.0 * v };
        let t = [0.0, 1e-6, 3e-6];
        let a = Ensemble::from_weighted(vec![-0.6, 0.1], vec![0.3, 0.7]).unwrap();
        let b = Ensemble::from_weighted(vec![0.45], vec![1.0]).unwrap();
        let union = Ensemble::from_weighted(vec![-0.6, 0.1, 0.45], vec![0.4 * 0.3, 0.4 * 0.7, 0.6]).unwrap();
        let ca = s.survival_curve(&a, &fam, &t).unwrap();
        let cb = s.survival_curve(&b, &fam, &t).unwrap();
        let cu = s.survival_curve(&union, &fam, &t).unwrap();
        for i in 0..t.len() {
            let mix = 0.4 * ca.raw_survival[i] + 0.6 * cb.raw_survival[i];
            assert!((cu.raw_survival[i] - mix).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_interruption_matches_uninterrupted() {
        let s = sim(91.0);
        let v = s.params.v_rec;
        let base = ScheduleFamily::Interrupted {
            a_trans: 2000.0,
            a_tunnel: 15000.0,
            a_interr: 2000.0,
            t_segment: 1e-6,
            t_interr: 20e-6,
            v0: 3.0 * v,
            v_final: 12.0 * v,
        };
        let plain = ScheduleFamily::Uninterrupted { a_trans: 2000.0, a_tunnel: 15000.0, v0: 3.0 * v, v_final: 12.0 * v };
        let e = Ensemble::uniform(2).unwrap();
        let t = [0.0, 1e-6, 2e-6, 3e-6];
        let swept = s.interruption_sweep(&e, &base, &[0.0, 20e-6], &t).unwrap();
        let reference = s.survival_curve(&e, &plain, &t).unwrap();
        for (x, y) in swept[0].survival.iter().zip(&reference.survival) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(swept[1].survival[3] != swept[0].survival[3]);
        assert!(s.interruption_sweep(&e, &base, &[], &t).is_err());
        assert!(s.interruption_sweep(&e, &plain, &[0.0], &t).is_err());
    }

    #[test]
    fn narrow_detection_window_misses_bound_state() {
        // within ±1 ħk_L only the central plane wave of the band-0 state is
        // counted, which at this depth is well under the 95 % it must report
        let s = sim(91.0);
        let st = s.prepare_initial(0.0, 10, 10).unwrap();
        let narrow = detection_classify(&st, 1.0).trapped_fraction;
        let centre = st.amplitudes()[10].norm_sqr();
        assert!((narrow - centre).abs() < 1e-12);
        assert!(narrow < 0.9, "{narrow}");
        assert!(detection_classify(&st, DEFAULT_DETECTION_HALFWIDTH).trapped_fraction > 0.999);
    }

    #[test]
    fn renormalization_invariance() {
        let raw = vec![0.98, 0.7, 0.5];
        let det = vec![0.97, 0.69, 0.49];
        let t = vec![0.0, 1e-6, 2e-6];
        let a = SurvivalCurve::from_raw("a".into(), t.clone(), raw.clone(), det.clone(), 4).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|x| x * 0.37).collect();
        let b = SurvivalCurve::from_raw("a".into(), t, scaled, det, 4).unwrap();
        for (x, y) in a.survival.iter().zip(&b.survival) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(a.survival[0], 1.0);
    }
}
