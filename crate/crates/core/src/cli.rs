//! Command-line front end: subcommands, presets and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis;
use crate::bands;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{Simulator, SurvivalCurve};
use crate::units::LatticeParams;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fraction of the tunnelling Bloch period treated as "short time" when
/// estimating the onset exponent.
const SHORT_TIME_FRACTION: f64 = 0.3;

#[derive(Parser, Debug)]
#[command(name = "washboard", version, about = "Tunnelling decay in an accelerated optical lattice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in parameter set, used instead of --config.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Output directory, overriding output.directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for the ensemble (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Lowest three band energies across the Brillouin zone.
    Bands,
    /// Uninterrupted survival curve.
    Decay,
    /// Interrupted and uninterrupted curves at the configured interruption.
    Zeno,
    /// Same as `zeno`; separate name for the enhancement parameter set.
    Antizeno,
    /// One interrupted curve per entry of schedule.sweep_t_interr_us.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Decay => "decay",
            Command::Zeno => "zeno",
            Command::Antizeno => "antizeno",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig3,
    Fig4,
    Fig5,
}

impl Preset {
    pub fn text(self) -> &'static str {
        match self {
            Preset::Fig3 => include_str!("../presets/fig3.toml"),
            Preset::Fig4 => include_str!("../presets/fig4.toml"),
            Preset::Fig5 => include_str!("../presets/fig5.toml"),
        }
    }
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidSchedule(_) => 2,
        Error::Numerical(_) | Error::Integrator { .. } | Error::Fit(_) | Error::Dimension { .. } => 3,
        Error::Io { .. } => 1,
    }
}

/// `printf("%.12g")`.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed)
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| fmt_g12(*x)).collect();
    format!("[{}]", items.join(", "))
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = match (&cli.config, cli.preset) {
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(p)) => RunConfig::parse(p.text())?,
        (Some(_), Some(_)) => return Err(Error::Config("give either --config or --preset, not both".into())),
        (None, None) => return Err(Error::Config("a configuration is required (--config PATH or --preset NAME)".into())),
    };
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker threads: {e}")))?;
    let files = pool.install(|| match cli.command {
        Command::Bands => cmd_bands(&cfg),
        Command::Decay => cmd_decay(&cfg),
        Command::Zeno | Command::Antizeno => cmd_interrupted(&cfg, cli.command),
        Command::Sweep => cmd_sweep(&cfg),
    })?;
    fs::create_dir_all(&out_dir).map_err(|source| Error::Io { path: out_dir.display().to_string(), source })?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        written.push(path);
    }
    Ok(written)
}

/// Entry point used by the binary; returns the exit status.
pub fn main_with(cli: Cli) -> i32 {
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Header {
    text: String,
}

impl Header {
    fn new(cfg: &RunConfig, command: &str) -> Self {
        let mut text = format!("# washboard {VERSION} {command}\n");
        text.push_str(&cfg.to_metadata());
        text.push_str("# [run]\n");
        let mut h = Header { text };
        h.str("command", command);
        h.str("version", VERSION);
        h
    }

    fn raw(&mut self, key: &str, value: &str) {
        let _ = writeln!(self.text, "# {key} = {value}");
    }

    fn num(&mut self, key: &str, value: f64) {
        self.raw(key, &fmt_g12(value));
    }

    fn str(&mut self, key: &str, value: &str) {
        self.raw(key, &format!("{value:?}"));
    }

    fn lattice(&mut self, sim: &Simulator, cfg: &RunConfig) -> Result<()> {
        let p = &sim.params;
        self.raw("basis_N", &sim.basis_half_width.to_string());
        self.num("depth_E_rec", p.depth_dimless);
        self.num("recoil_velocity_m_per_s", p.v_rec);
        self.num("recoil_frequency_hz", p.recoil_freq());
        self.num("tau_b_tunnel_us", p.bloch_period(cfg.schedule.a_tunnel)? * 1e6);
        self.num("tau_b_interr_us", p.bloch_period(cfg.schedule.a_interr)? * 1e6);
        Ok(())
    }

    fn curve(&mut self, prefix: &str, curve: &SurvivalCurve, params: &LatticeParams, cfg: &RunConfig) -> Result<()> {
        let key = |k: &str| format!("{prefix}{k}");
        self.str(&key("label"), &curve.label);
        self.num(&key("normalization"), curve.normalization);
        self.num(&key("max_norm_deviation"), curve.max_norm_deviation);
        self.raw(&key("detected"), &fmt_list(&curve.detected));
        let t_min = analysis::default_t_min_fit(params, cfg.schedule.a_tunnel)?;
        match analysis::fit_exponential_tail(curve, t_min) {
            Ok(fit) => {
                self.num(&key("tail_fit_rate_per_s"), fit.rate);
                self.num(&key("tail_fit_amplitude"), fit.amplitude);
                self.num(&key("tail_fit_t_min_us"), fit.t_min_fit * 1e6);
                self.num(&key("tail_fit_residual_rms"), fit.residual_rms);
            }
            Err(e) => self.str(&key("tail_fit"), &format!("unavailable: {e}")),
        }
        if curve.len() >= 2 {
            match analysis::effective_rate(curve) {
                Ok(r) if r.depleted => self.str(&key("effective_rate_per_s"), "depleted"),
                Ok(r) => self.num(&key("effective_rate_per_s"), r.rate),
                Err(e) => self.str(&key("effective_rate"), &format!("unavailable: {e}")),
            }
        }
        let window = SHORT_TIME_FRACTION * params.bloch_period(cfg.schedule.a_tunnel)?;
        match analysis::short_time_exponent(curve, window) {
            Ok(k) => self.num(&key("short_time_exponent"), k),
            Err(e) => self.str(&key("short_time_exponent"), &format!("unavailable: {e}")),
        }
        Ok(())
    }

    fn finish(mut self, columns: &str) -> String {
        self.text.push_str(columns);
        self.text.push('\n');
        self.text
    }
}

fn curve_csv(header: Header, curve: &SurvivalCurve) -> String {
    let mut out = header.finish("t_tunnel_us,survival,raw_survival,n_ensemble");
    for i in 0..curve.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_g12(curve.t_tunnel[i] * 1e6),
            fmt_g12(curve.survival[i]),
            fmt_g12(curve.raw_survival[i]),
            curve.n_ensemble
        );
    }
    out
}

fn cmd_bands(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let sim = cfg.simulator()?;
    let n = sim.basis_half_width;
    let depth = sim.depth();
    let mut header = Header::new(cfg, "bands");
    header.lattice(&sim, cfg)?;
    let mut out = header.finish("q,E_band0,E_band1,E_band2");
    let points = cfg.output.bands_q_points;
    for i in 0..points {
        let q = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
        let sol = bands::solve_bands(q, depth, n)?;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_g12(q),
            fmt_g12(sol.energies[0]),
            fmt_g12(sol.energies[1]),
            fmt_g12(sol.energies[2])
        );
    }
    Ok(vec![("bands.csv".into(), out)])
}

fn cmd_decay(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let sim = cfg.simulator()?;
    let family = cfg.uninterrupted_family(&sim.params);
    let curve = sim.survival_curve(&cfg.ensemble()?, &family, &cfg.t_tunnel())?;
    let mut header = Header::new(cfg, "decay");
    header.lattice(&sim, cfg)?;
    header.curve("", &curve, &sim.params, cfg)?;
    Ok(vec![("decay.csv".into(), curve_csv(header, &curve))])
}

/// Effective tunnel times of the filtered drive, one per sample time.
fn effective_tunnel_times(sim: &Simulator, cfg: &RunConfig, interrupted: bool) -> Result<Option<Vec<f64>>> {
    if sim.response_tau == 0.0 {
        return Ok(None);
    }
    let family = if interrupted { cfg.interrupted_family(&sim.params) } else { cfg.uninterrupted_family(&sim.params) };
    cfg.t_tunnel()
        .iter()
        .map(|&t| {
            let sched = family.schedule_for(t)?.merged();
            let profile = crate::schedule::apply_response_filter(&sched, sim.response_tau, sim.response_tau / 10.0)?;
            Ok(crate::schedule::effective_tunnel_time(&profile, 0.9)? * 1e6)
        })
        .collect::<Result<Vec<f64>>>()
        .map(Some)
}

fn cmd_interrupted(cfg: &RunConfig, command: Command) -> Result<Vec<(String, String)>> {
    let sim = cfg.simulator()?;
    let ensemble = cfg.ensemble()?;
    let t = cfg.t_tunnel();
    let name = command.name();
    let mut files = Vec::new();
    for (interrupted, suffix) in [(true, "interrupted"), (false, "uninterrupted")] {
        let family = if interrupted { cfg.interrupted_family(&sim.params) } else { cfg.uninterrupted_family(&sim.params) };
        let curve = sim.survival_curve(&ensemble, &family, &t)?;
        let mut header = Header::new(cfg, name);
        header.lattice(&sim, cfg)?;
        header.curve("", &curve, &sim.params, cfg)?;
        if let Some(eff) = effective_tunnel_times(&sim, cfg, interrupted)? {
            header.raw("effective_tunnel_time_us", &fmt_list(&eff));
        }
        header.str("companion", &format!("{name}_{}.csv", if interrupted { "uninterrupted" } else { "interrupted" }));
        files.push((format!("{name}_{suffix}.csv"), curve_csv(header, &curve)));
    }
    Ok(files)
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let sim = cfg.simulator()?;
    let list_us = cfg
        .schedule
        .sweep_t_interr_us
        .clone()
        .unwrap_or_else(|| vec![0.0, cfg.schedule.t_interr_us]);
    let list: Vec<f64> = list_us.iter().map(|t| t * 1e-6).collect();
    let base = cfg.interrupted_family(&sim.params);
    let curves = sim.interruption_sweep(&cfg.ensemble()?, &base, &list, &cfg.t_tunnel())?;
    let mut header = Header::new(cfg, "sweep");
    header.lattice(&sim, cfg)?;
    header.raw("t_interr_us", &fmt_list(&list_us));
    let mut columns = String::from("t_tunnel_us");
    for (curve, t_int) in curves.iter().zip(&list_us) {
        let tag = format!("tint_{}us", fmt_g12(*t_int));
        header.curve(&format!("{tag}_"), curve, &sim.params, cfg)?;
        let _ = write!(columns, ",survival_{tag},raw_survival_{tag}");
    }
    columns.push_str(",n_ensemble");
    let mut out = header.finish(&columns);
    let n_ensemble = curves[0].n_ensemble;
    for i in 0..curves[0].len() {
        out.push_str(&fmt_g12(curves[0].t_tunnel[i] * 1e6));
        for c in &curves {
            let _ = write!(out, ",{},{}", fmt_g12(c.survival[i]), fmt_g12(c.raw_survival[i]));
        }
        let _ = writeln!(out, ",{n_ensemble}");
    }
    Ok(vec![("sweep.csv".into(), out)])
}

/// Read the numeric rows of a CSV written by this program.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: no column header", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((columns, rows))
}
