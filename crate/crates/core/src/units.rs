//! Physical parameters of the lattice and the recoil unit system.
//!
//! Internally everything runs in recoil units: momentum in `ħ k_L`, energy in
//! `E_rec`, time in `ħ / E_rec`. With these choices the kinetic energy of a
//! plane wave of momentum `p` is simply `p²`, and a constant acceleration `a`
//! moves the quasimomentum at rate `a / (v_rec / t_unit)`.

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Unified atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Sodium-23 atomic mass, amu.
pub const SODIUM_23_AMU: f64 = 22.989_769_28;
/// Sodium D2 line, m.
pub const SODIUM_D2_WAVELENGTH: f64 = 589.0e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeParams {
    pub mass: f64,
    pub wavelength: f64,
    pub k_l: f64,
    pub v_rec: f64,
    pub e_rec: f64,
    /// Lattice depth `V0 / h`, Hz.
    pub depth_freq: f64,
    /// Lattice depth `V0 / E_rec`.
    pub depth_dimless: f64,
}

impl LatticeParams {
    /// Derive the recoil quantities for an atom of `mass` (kg) in a lattice of
    /// light at `wavelength` (m) with depth `depth_freq` = V0/h (Hz).
    pub fn derive(mass: f64, wavelength: f64, depth_freq: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid(format!("mass must be positive, got {mass}")));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(depth_freq >= 0.0 && depth_freq.is_finite()) {
            return Err(Error::invalid(format!(
                "depth must be non-negative, got {depth_freq}"
            )));
        }
        let k_l = 2.0 * std::f64::consts::PI / wavelength;
        let v_rec = HBAR * k_l / mass;
        let e_rec = HBAR * HBAR * k_l * k_l / (2.0 * mass);
        Ok(LatticeParams {
            mass,
            wavelength,
            k_l,
            v_rec,
            e_rec,
            depth_freq,
            depth_dimless: depth_freq * PLANCK / e_rec,
        })
    }

    /// Sodium-23 on the D2 line.
    pub fn sodium(depth_freq: f64) -> Result<Self> {
        Self::derive(SODIUM_23_AMU * AMU, SODIUM_D2_WAVELENGTH, depth_freq)
    }

    pub fn with_depth_freq(&self, depth_freq: f64) -> Result<Self> {
        Self::derive(self.mass, self.wavelength, depth_freq)
    }

    /// Recoil energy expressed as a frequency, `E_rec / h`.
    pub fn recoil_freq(&self) -> f64 {
        self.e_rec / PLANCK
    }

    pub fn units(&self) -> UnitSystem {
        UnitSystem::new(self)
    }

    /// Time for the lattice velocity to change by one zone width, `2 v_rec / a`.
    pub fn bloch_period(&self, accel: f64) -> Result<f64> {
        if !(accel > 0.0) {
            return Err(Error::invalid(format!(
                "Bloch period needs a positive acceleration, got {accel}"
            )));
        }
        Ok(2.0 * self.v_rec / accel)
    }

    /// Width of the first Brillouin zone in momentum, `2 m v_rec = 2 ħ k_L`.
    pub fn brillouin_zone_width(&self) -> f64 {
        2.0 * self.mass * self.v_rec
    }
}

/// Conversion factors between SI and recoil units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitSystem {
    /// ħ k_L, kg·m/s.
    pub momentum: f64,
    /// E_rec, J.
    pub energy: f64,
    /// ħ / E_rec, s.
    pub time: f64,
    /// v_rec, m/s.
    pub velocity: f64,
    /// v_rec / (ħ / E_rec), m/s².
    pub acceleration: f64,
}

impl UnitSystem {
    pub fn new(params: &LatticeParams) -> Self {
        let time = HBAR / params.e_rec;
        UnitSystem {
            momentum: HBAR * params.k_l,
            energy: params.e_rec,
            time,
            velocity: params.v_rec,
            acceleration: params.v_rec / time,
        }
    }

    pub fn time_to_dimless(&self, seconds: f64) -> f64 {
        seconds / self.time
    }
    pub fn time_to_si(&self, t: f64) -> f64 {
        t * self.time
    }
    pub fn accel_to_dimless(&self, a: f64) -> f64 {
        a / self.acceleration
    }
    pub fn accel_to_si(&self, a: f64) -> f64 {
        a * self.acceleration
    }
    pub fn velocity_to_dimless(&self, v: f64) -> f64 {
        v / self.velocity
    }
    pub fn velocity_to_si(&self, v: f64) -> f64 {
        v * self.velocity
    }
    pub fn momentum_to_dimless(&self, p: f64) -> f64 {
        p / self.momentum
    }
    pub fn momentum_to_si(&self, p: f64) -> f64 {
        p * self.momentum
    }
    pub fn energy_to_dimless(&self, e: f64) -> f64 {
        e / self.energy
    }
    pub fn energy_to_si(&self, e: f64) -> f64 {
        e * self.energy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn na() -> LatticeParams {
        LatticeParams::sodium(91.0e3).unwrap()
    }

    #[test]
    fn sodium_recoil_velocity_matches_rounded_value() {
        let p = na();
        assert!(p.v_rec > 0.029 && p.v_rec < 0.031, "v_rec = {}", p.v_rec);
        assert_relative_eq!(p.v_rec, 0.03, max_relative = 0.02);
        assert_relative_eq!(p.v_rec, 0.0295, max_relative = 0.005);
    }

    #[test]
    fn sodium_recoil_frequency() {
        // ħ k_L² / (4π m), evaluated independently
        let m = SODIUM_23_AMU * AMU;
        let k = 2.0 * std::f64::consts::PI / 589e-9;
        let oracle = HBAR * k * k / (4.0 * std::f64::consts::PI * m);
        let p = na();
        assert_relative_eq!(p.recoil_freq(), oracle, max_relative = 1e-9);
        assert_relative_eq!(p.recoil_freq(), 25.0e3, max_relative = 0.01);
    }

    #[test]
    fn depth_in_recoil_units() {
        let p = na();
        assert_relative_eq!(p.depth_dimless, 91.0e3 / p.recoil_freq(), max_relative = 1e-12);
        assert!((p.depth_dimless - 3.64).abs() < 0.02, "{}", p.depth_dimless);
        assert_eq!(p.with_depth_freq(0.0).unwrap().depth_dimless, 0.0);
        assert_relative_eq!(
            p.depth_dimless * p.e_rec,
            PLANCK * p.depth_freq,
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LatticeParams::derive(0.0, 589e-9, 1.0).is_err());
        assert!(LatticeParams::derive(1e-26, -1.0, 1.0).is_err());
        assert!(LatticeParams::derive(1e-26, 589e-9, -1.0).is_err());
        assert!(na().bloch_period(0.0).is_err());
        assert!(na().bloch_period(-3.0).is_err());
    }

    #[test]
    fn bloch_periods() {
        let p = na();
        let tb = p.bloch_period(2000.0).unwrap();
        assert_relative_eq!(tb, 30e-6, max_relative = 0.02);
        let tb = p.bloch_period(15000.0).unwrap();
        assert_relative_eq!(tb, 2.0 * 0.0295 / 15000.0, max_relative = 0.005);
        assert!((tb * 1e6 - 3.93).abs() < 0.01);
    }

    #[test]
    fn brillouin_zone() {
        let p = na();
        let w = p.brillouin_zone_width();
        assert_relative_eq!(w, 2.0 * HBAR * p.k_l, max_relative = 1e-12);
        assert_relative_eq!(w, 2.0 * 1.0546e-34 * (2.0 * std::f64::consts::PI / 589e-9), max_relative = 1e-4);
        assert_relative_eq!(p.units().momentum_to_dimless(w), 2.0, max_relative = 1e-12);
        // doubling the mass at fixed v_rec doubles the width
        let mut heavy = p;
        heavy.mass *= 2.0;
        assert_relative_eq!(heavy.brillouin_zone_width(), 2.0 * w, max_relative = 1e-15);
    }

    #[test]
    fn bloch_period_closure_in_arbitrary_units() {
        let mut p = na();
        p.v_rec = 1.0;
        assert_eq!(p.bloch_period(2.0).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn unit_round_trip(x in 1e-12f64..1e6) {
            let u = na().units();
            let tol = 1e-12;
            prop_assert!((u.time_to_si(u.time_to_dimless(x)) / x - 1.0).abs() < tol);
            prop_assert!((u.accel_to_si(u.accel_to_dimless(x)) / x - 1.0).abs() < tol);
            prop_assert!((u.velocity_to_si(u.velocity_to_dimless(x)) / x - 1.0).abs() < tol);
            prop_assert!((u.momentum_to_si(u.momentum_to_dimless(x)) / x - 1.0).abs() < tol);
            prop_assert!((u.energy_to_si(u.energy_to_dimless(x)) / x - 1.0).abs() < tol);
        }

        #[test]
        fn bloch_period_times_accel(a in 1.0f64..1e6) {
            let p = na();
            let tb = p.bloch_period(a).unwrap();
            prop_assert!((tb * a / (2.0 * p.v_rec) - 1.0).abs() < 1e-14);
        }

        #[test]
        fn depth_closure(f in 0.0f64..1e6) {
            let p = LatticeParams::sodium(f).unwrap();
            if f > 0.0 {
                prop_assert!((p.depth_dimless * p.e_rec / (PLANCK * f) - 1.0).abs() < 1e-12);
            }
        }
    }
}
