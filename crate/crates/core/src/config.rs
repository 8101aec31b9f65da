//! Run configuration: a sectioned TOML document with a strict schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{EvolutionConfig, Stepper};
use crate::error::{Error, Result};
use crate::experiment::{Ensemble, ScheduleFamily, Simulator};
use crate::units::{LatticeParams, AMU};

/// Lines of the CSV metadata that carry the configuration.
pub const METADATA_BEGIN: &str = "# --- config ---";
pub const METADATA_END: &str = "# --- end config ---";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub atom: AtomConfig,
    pub lattice: LatticeConfig,
    pub schedule: ScheduleConfig,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub mass_amu: f64,
    pub wavelength_nm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub depth_khz: f64,
}

/// Accelerations in m/s², times in µs, velocities in units of `v_rec`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub a_tunnel: f64,
    pub a_trans: f64,
    pub a_interr: f64,
    pub t_segment_us: f64,
    pub t_interr_us: f64,
    pub v0_vrec: f64,
    pub v_final_vrec: f64,
    /// Interruption durations for the `sweep` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_t_interr_us: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasisSize {
    Fixed(usize),
    Named(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepperName {
    Midpoint,
    Cf4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(rename = "basis_N")]
    pub basis_n: BasisSize,
    pub substeps_per_bloch: usize,
    pub ensemble_count: usize,
    pub response_tau_us: f64,
    #[serde(default = "default_stepper")]
    pub stepper: StepperName,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder_reach: Option<usize>,
    /// Weight the ensemble by a Gaussian of this width (v_rec) folded into
    /// the zone instead of filling it uniformly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian_sigma_vrec: Option<f64>,
}

fn default_stepper() -> StepperName {
    StepperName::Midpoint
}

fn default_dt_max() -> f64 {
    EvolutionConfig::default().dt_max
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    /// Total tunnelling times at which curves are sampled, µs.
    pub t_tunnel_us: Vec<f64>,
    #[serde(default = "default_bands_q_points")]
    pub bands_q_points: usize,
}

fn default_bands_q_points() -> usize {
    101
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be non-negative, got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Recover the configuration embedded in a CSV written by the CLI.
    pub fn from_metadata(csv: &str) -> Result<Self> {
        let mut inside = false;
        let mut doc = String::new();
        for line in csv.lines() {
            if line == METADATA_BEGIN {
                inside = true;
            } else if line == METADATA_END {
                return Self::parse(&doc);
            } else if inside {
                let body = line
                    .strip_prefix('#')
                    .ok_or_else(|| Error::Config("unterminated configuration block".into()))?;
                doc.push_str(body.strip_prefix(' ').unwrap_or(body));
                doc.push('\n');
            }
        }
        Err(Error::Config("no configuration block in metadata".into()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// The configuration as `#`-prefixed metadata lines.
    pub fn to_metadata(&self) -> String {
        let mut out = String::new();
        out.push_str(METADATA_BEGIN);
        out.push('\n');
        for line in self.to_toml().lines() {
            if line.is_empty() {
                out.push_str("#\n");
            } else {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(METADATA_END);
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        positive("atom.mass_amu", self.atom.mass_amu)?;
        positive("atom.wavelength_nm", self.atom.wavelength_nm)?;
        non_negative("lattice.depth_khz", self.lattice.depth_khz)?;
        let s = &self.schedule;
        positive("schedule.a_tunnel", s.a_tunnel)?;
        positive("schedule.a_trans", s.a_trans)?;
        positive("schedule.a_interr", s.a_interr)?;
        positive("schedule.t_segment_us", s.t_segment_us)?;
        non_negative("schedule.t_interr_us", s.t_interr_us)?;
        positive("schedule.v0_vrec", s.v0_vrec)?;
        positive("schedule.v_final_vrec", s.v_final_vrec)?;
        if s.v_final_vrec <= s.v0_vrec {
            return Err(Error::Config("schedule.v_final_vrec must exceed schedule.v0_vrec".into()));
        }
        if let Some(list) = &s.sweep_t_interr_us {
            if list.is_empty() {
                return Err(Error::Config("schedule.sweep_t_interr_us is empty".into()));
            }
            for &t in list {
                non_negative("schedule.sweep_t_interr_us entry", t)?;
            }
        }
        let n = &self.numerics;
        match &n.basis_n {
            BasisSize::Fixed(0) => return Err(Error::Config("numerics.basis_N must be at least 1".into())),
            BasisSize::Named(name) if name != "auto" => {
                return Err(Error::Config(format!("numerics.basis_N must be an integer or \"auto\", got {name:?}")))
            }
            _ => {}
        }
        if n.substeps_per_bloch < 100 {
            return Err(Error::Config(format!(
                "numerics.substeps_per_bloch must be at least 100, got {}",
                n.substeps_per_bloch
            )));
        }
        if n.ensemble_count == 0 {
            return Err(Error::Config("numerics.ensemble_count must be at least 1".into()));
        }
        non_negative("numerics.response_tau_us", n.response_tau_us)?;
        positive("numerics.dt_max", n.dt_max)?;
        if let Some(sigma) = n.gaussian_sigma_vrec {
            positive("numerics.gaussian_sigma_vrec", sigma)?;
        }
        let t = &self.output.t_tunnel_us;
        if t.first() != Some(&0.0) {
            return Err(Error::Config("output.t_tunnel_us must start at 0".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("output.t_tunnel_us must be strictly increasing".into()));
        }
        if self.output.bands_q_points < 2 {
            return Err(Error::Config("output.bands_q_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn lattice_params(&self) -> Result<LatticeParams> {
        LatticeParams::derive(
            self.atom.mass_amu * AMU,
            self.atom.wavelength_nm * 1e-9,
            self.lattice.depth_khz * 1e3,
        )
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            dt_max: self.numerics.dt_max,
            stepper: match self.numerics.stepper {
                StepperName::Midpoint => Stepper::ExponentialMidpoint,
                StepperName::Cf4 => Stepper::CommutatorFree4,
            },
            substeps_per_bloch_period: self.numerics.substeps_per_bloch,
        }
    }

    pub fn simulator(&self) -> Result<Simulator> {
        let params = self.lattice_params()?;
        let mut sim = match self.numerics.basis_n {
            BasisSize::Fixed(n) => Simulator::new(params, n, self.evolution())?,
            BasisSize::Named(_) => Simulator::with_auto_basis(params, self.evolution())?,
        }
        .with_response_tau(self.numerics.response_tau_us * 1e-6)?;
        sim.ladder_reach = self.numerics.ladder_reach;
        Ok(sim)
    }

    pub fn ensemble(&self) -> Result<Ensemble> {
        match self.numerics.gaussian_sigma_vrec {
            Some(sigma) => Ensemble::gaussian(self.numerics.ensemble_count, sigma),
            None => Ensemble::uniform(self.numerics.ensemble_count),
        }
    }

    pub fn uninterrupted_family(&self, params: &LatticeParams) -> ScheduleFamily {
        let s = &self.schedule;
        ScheduleFamily::Uninterrupted {
            a_trans: s.a_trans,
            a_tunnel: s.a_tunnel,
            v0: s.v0_vrec * params.v_rec,
            v_final: s.v_final_vrec * params.v_rec,
        }
    }

    pub fn interrupted_family(&self, params: &LatticeParams) -> ScheduleFamily {
        let s = &self.schedule;
        ScheduleFamily::Interrupted {
            a_trans: s.a_trans,
            a_tunnel: s.a_tunnel,
            a_interr: s.a_interr,
            t_segment: s.t_segment_us * 1e-6,
            t_interr: s.t_interr_us * 1e-6,
            v0: s.v0_vrec * params.v_rec,
            v_final: s.v_final_vrec * params.v_rec,
        }
    }

    /// Sample times in seconds.
    pub fn t_tunnel(&self) -> Vec<f64> {
        self.output.t_tunnel_us.iter().map(|t| t * 1e-6).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::Preset;

    #[test]
    fn presets_parse() {
        for p in [Preset::Fig3, Preset::Fig4, Preset::Fig5] {
            let cfg = RunConfig::parse(p.text()).unwrap();
            assert_eq!(cfg.output.t_tunnel_us[0], 0.0);
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = Preset::Fig3.text().replace("depth_khz", "depth_kHz");
        match RunConfig::parse(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("depth_kHz"), "{msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_key_is_rejected() {
        let text: String = Preset::Fig3
            .text()
            .lines()
            .filter(|l| !l.starts_with("a_interr"))
            .map(|l| format!("{l}\n"))
            .collect();
        match RunConfig::parse(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("a_interr"), "{msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn bad_values_are_rejected() {
        let base = Preset::Fig3.text();
        for (from, to) in [
            ("basis_N = \"auto\"", "basis_N = \"big\""),
            ("basis_N = \"auto\"", "basis_N = 0"),
            ("a_tunnel = 15000.0", "a_tunnel = -1.0"),
            ("ensemble_count = 64", "ensemble_count = 0"),
            ("substeps_per_bloch = 100", "substeps_per_bloch = 10"),
        ] {
            assert!(base.contains(from), "{from}");
            let text = base.replace(from, to);
            assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn metadata_round_trip() {
        for p in [Preset::Fig3, Preset::Fig4, Preset::Fig5] {
            let cfg = RunConfig::parse(p.text()).unwrap();
            let csv = format!("# washboard\n{}t,s\n0,1\n", cfg.to_metadata());
            assert_eq!(RunConfig::from_metadata(&csv).unwrap(), cfg);
        }
    }

    #[test]
    fn families_follow_the_schedule_block() {
        let cfg = RunConfig::parse(Preset::Fig3.text()).unwrap();
        let p = cfg.lattice_params().unwrap();
        assert!((p.depth_dimless - 3.6377).abs() < 1e-3);
        let s = cfg.interrupted_family(&p).schedule_for(3e-6).unwrap();
        assert!((s.total_tunnel_time() - 3e-6).abs() < 1e-18);
        assert!((s.end_velocity() / p.v_rec - cfg.schedule.v_final_vrec).abs() < 1e-9);
    }
}
