//! Piecewise-constant acceleration profiles and the first-order response
//! filter that stands in for the finite bandwidth of the lattice drive.
//!
//! All quantities here are SI: accelerations in m/s², times in s, velocities
//! in m/s.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

/// Relative slack allowed when closing a schedule at its final velocity.
const VELOCITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Transport,
    Tunnel,
    Interruption,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Transport => "transport",
            Role::Tunnel => "tunnel",
            Role::Interruption => "interruption",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub accel: f64,
    pub duration: f64,
    pub role: Role,
}

impl Segment {
    pub fn new(accel: f64, duration: f64, role: Role) -> Self {
        Segment { accel, duration, role }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub segments: Vec<Segment>,
    pub a_tunnel: f64,
    pub a_trans: f64,
    pub a_interr: f64,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(format!("{name} must be positive, got {x}")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(format!("{name} must be non-negative, got {x}")))
    }
}

impl Schedule {
    /// Transport to `v0`, tunnel for `t_tunnel`, transport on to `v_final`.
    pub fn uninterrupted(a_trans: f64, a_tunnel: f64, t_tunnel: f64, v0: f64, v_final: f64) -> Result<Self> {
        Self::build(a_trans, a_tunnel, a_trans, t_tunnel, 0.0, 1, v0, v_final)
    }

    /// Transport to `v0`, then `n_cycles` of tunnelling for `t_segment`
    /// separated by interruptions of `t_interr` at `a_interr`; the last
    /// interruption is replaced by the closing transport to `v_final`.
    #[allow(clippy::too_many_arguments)]
    pub fn interrupted(
        a_trans: f64,
        a_tunnel: f64,
        a_interr: f64,
        t_segment: f64,
        t_interr: f64,
        n_cycles: usize,
        v0: f64,
        v_final: f64,
    ) -> Result<Self> {
        if n_cycles < 1 {
            return Err(Error::InvalidSchedule("at least one tunnelling cycle is required".into()));
        }
        Self::build(a_trans, a_tunnel, a_interr, t_segment, t_interr, n_cycles, v0, v_final)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        a_trans: f64,
        a_tunnel: f64,
        a_interr: f64,
        t_segment: f64,
        t_interr: f64,
        n_cycles: usize,
        v0: f64,
        v_final: f64,
    ) -> Result<Self> {
        positive("a_trans", a_trans)?;
        positive("a_tunnel", a_tunnel)?;
        positive("a_interr", a_interr)?;
        non_negative("tunnel segment duration", t_segment)?;
        non_negative("interruption duration", t_interr)?;
        positive("v0", v0)?;
        if !(v_final > v0) {
            return Err(Error::InvalidSchedule(format!(
                "final velocity {v_final} must exceed v0 = {v0}"
            )));
        }
        let mut segments = vec![Segment::new(a_trans, v0 / a_trans, Role::Transport)];
        let mut v = v0;
        for cycle in 0..n_cycles {
            segments.push(Segment::new(a_tunnel, t_segment, Role::Tunnel));
            v += a_tunnel * t_segment;
            if cycle + 1 < n_cycles {
                segments.push(Segment::new(a_interr, t_interr, Role::Interruption));
                v += a_interr * t_interr;
            }
        }
        let remaining = v_final - v;
        if remaining < -VELOCITY_SLACK * v_final {
            return Err(Error::InvalidSchedule(format!(
                "tunnelling and interruptions reach {v:.6} m/s, beyond the final velocity {v_final} m/s"
            )));
        }
        segments.push(Segment::new(a_trans, remaining.max(0.0) / a_trans, Role::Transport));
        Ok(Schedule {
            segments,
            a_tunnel,
            a_trans,
            a_interr,
        })
    }

    pub fn total_tunnel_time(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.role == Role::Tunnel)
            .map(|s| s.duration)
            .sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Lattice velocity at the end of the schedule, `∫ a dt`.
    pub fn end_velocity(&self) -> f64 {
        self.segments.iter().map(|s| s.accel * s.duration).sum()
    }

    /// Lattice velocity at the start of the first tunnel segment.
    pub fn velocity_at_first_tunnel(&self) -> f64 {
        self.segments
            .iter()
            .take_while(|s| s.role != Role::Tunnel)
            .map(|s| s.accel * s.duration)
            .sum()
    }

    /// Schedule with zero-length segments dropped (except tunnel segments,
    /// which mark observation points) and adjacent segments of equal role and
    /// acceleration joined.
    pub fn merged(&self) -> Schedule {
        let mut out: Vec<Segment> = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            if seg.duration == 0.0 && seg.role != Role::Tunnel {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.role == seg.role && last.accel == seg.accel => {
                    last.duration += seg.duration;
                }
                _ => out.push(*seg),
            }
        }
        Schedule {
            segments: out,
            ..self.clone()
        }
    }

    /// Append `other`'s segments.
    pub fn then(&self, other: &Schedule) -> Schedule {
        let mut segments = self.segments.clone();
        segments.extend_from_slice(&other.segments);
        Schedule {
            segments,
            ..self.clone()
        }
    }

    /// Plain-text audit table: one `t_start_s accel_m_s2 role duration_s` row
    /// per segment.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# t_start_s accel_m_s2 role duration_s\n");
        let mut t = 0.0;
        for seg in &self.segments {
            let _ = writeln!(out, "{t:.12e} {:.12e} {} {:.12e}", seg.accel, seg.role, seg.duration);
            t += seg.duration;
        }
        out
    }
}

/// First-order low-pass response of a piecewise-constant acceleration.
///
/// Within segment `k` the delivered acceleration relaxes as
/// `a(t) = target_k + (start_k - target_k) exp(-(t - t_k) / tau)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilteredProfile {
    pub tau: f64,
    pub segment_starts: Vec<f64>,
    /// Delivered acceleration at the start of each segment.
    pub start_values: Vec<f64>,
    pub segments: Vec<Segment>,
    pub a_tunnel: f64,
    /// Uniform sample grid and sampled acceleration.
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl FilteredProfile {
    /// Delivered acceleration inside segment `k` at local time `s`.
    pub fn value_in(&self, k: usize, s: f64) -> f64 {
        let target = self.segments[k].accel;
        if self.tau == 0.0 {
            return target;
        }
        target + (self.start_values[k] - target) * (-s / self.tau).exp()
    }

    /// `∫ a dt` over local times `[s0, s1]` of segment `k`.
    pub fn integral_in(&self, k: usize, s0: f64, s1: f64) -> f64 {
        let target = self.segments[k].accel;
        if self.tau == 0.0 {
            return target * (s1 - s0);
        }
        let tau = self.tau;
        let excess = self.start_values[k] - target;
        target * (s1 - s0) + excess * tau * ((-s0 / tau).exp() - (-s1 / tau).exp())
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = match self.segment_starts.partition_point(|&s| s <= t) {
            0 => 0,
            i => i - 1,
        };
        self.value_in(k, t - self.segment_starts[k])
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `∫ a dt` over the whole schedule.
    pub fn velocity_gain(&self) -> f64 {
        (0..self.segments.len())
            .map(|k| self.integral_in(k, 0.0, self.segments[k].duration))
            .sum()
    }
}

/// Filter `schedule` with time constant `tau` (s) and sample the result every
/// `dt` (s). The drive starts from rest. `tau = 0` returns the bare steps.
pub fn apply_response_filter(schedule: &Schedule, tau: f64, dt: f64) -> Result<FilteredProfile> {
    non_negative("response time constant", tau)?;
    positive("sampling step", dt)?;
    if tau > 0.0 && dt > tau / 10.0 * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "sampling step {dt:e} s exceeds a tenth of the time constant {tau:e} s"
        )));
    }
    let mut segment_starts = Vec::with_capacity(schedule.segments.len());
    let mut start_values = Vec::with_capacity(schedule.segments.len());
    let mut t = 0.0;
    let mut a = 0.0;
    for seg in &schedule.segments {
        segment_starts.push(t);
        start_values.push(a);
        a = if tau == 0.0 {
            seg.accel
        } else {
            seg.accel + (a - seg.accel) * (-seg.duration / tau).exp()
        };
        t += seg.duration;
    }
    let mut profile = FilteredProfile {
        tau,
        segment_starts,
        start_values,
        segments: schedule.segments.clone(),
        a_tunnel: schedule.a_tunnel,
        dt,
        samples: Vec::new(),
    };
    let n = (t / dt).floor() as usize + 1;
    profile.samples = (0..n).map(|i| profile.value_at(i as f64 * dt)).collect();
    Ok(profile)
}

/// Time during which the delivered acceleration is at least
/// `threshold * a_tunnel`.
pub fn effective_tunnel_time(profile: &FilteredProfile, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let level = threshold * profile.a_tunnel;
    let mut total = 0.0;
    for (k, seg) in profile.segments.iter().enumerate() {
        let d = seg.duration;
        if d == 0.0 {
            continue;
        }
        if profile.tau == 0.0 {
            if seg.accel >= level {
                total += d;
            }
            continue;
        }
        // a(s) is monotone in s, so the set where a >= level is an interval
        let (a0, target) = (profile.start_values[k], seg.accel);
        let a1 = profile.value_in(k, d);
        match (a0 >= level, a1 >= level) {
            (true, true) => total += d,
            (false, false) => {}
            (start_ok, _) => {
                // solve target + (a0 - target) e^{-s/tau} = level
                let s = -profile.tau * ((level - target) / (a0 - target)).ln();
                let s = s.clamp(0.0, d);
                total += if start_ok { s } else { d - s };
            }
        }
    }
    Ok(total)
}
