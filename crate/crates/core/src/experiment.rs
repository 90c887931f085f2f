//! Declarative experiments: configuration schema, validation, sweep
//! execution and result rows.
//!
//! A configuration is a TOML document. Powers are given in dBm and the path
//! loss reference gain in dB; everything else uses SI units. See
//! `configs/reference_point.toml` at the repository root for a complete file.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{isotropic_extended, reflective_only, snr_max_design, transmit_only};
use crate::error::{Error, Result};
use crate::estimate::{monte_carlo_mse, pairwise_sum, Design, GridParams, MseOptions};
use crate::opt_extended::{isotropic_crb, optimal_rx_extended};
use crate::opt_point::{optimize_joint, nominal_alpha, OptParams};
use crate::rng::{random_phases, Streams};
use crate::scene::{db_to_linear, dbm_to_watts, irs_angle, make_channel, Channel, PathLoss, Scenario, TargetSpec};
use crate::sensing::{crb_point, SensingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Point-target bound per scheme, averaged over channel draws.
    CrbPoint,
    /// Extended-target bound per scheme, averaged over channel draws.
    CrbExtended,
    /// Point-target bound per scheme on one channel draw.
    OptimizePoint,
    /// Extended-target bound per scheme on one channel draw.
    OptimizeExtended,
    /// Monte-Carlo MSE of the ML estimator next to the bound.
    MseSweep,
    /// Per-iteration bound of the alternating optimizer.
    Convergence,
}

impl ExperimentKind {
    fn target(self) -> Option<TargetKind> {
        match self {
            Self::CrbPoint | Self::OptimizePoint | Self::Convergence => Some(TargetKind::Point),
            Self::CrbExtended | Self::OptimizeExtended => Some(TargetKind::Extended),
            Self::MseSweep => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetKind {
    Point,
    Extended,
}

fn target_kind(t: &TargetSpec) -> TargetKind {
    match t {
        TargetSpec::Point { .. } => TargetKind::Point,
        TargetSpec::Extended { .. } => TargetKind::Extended,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Joint,
    SnrMax,
    ReflectiveOnly,
    TransmitOnly,
    Isotropic,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Joint => "joint",
            Scheme::SnrMax => "snr-max",
            Scheme::ReflectiveOnly => "reflective-only",
            Scheme::TransmitOnly => "transmit-only",
            Scheme::Isotropic => "isotropic",
        }
    }

    fn valid_for(self, target: TargetKind) -> bool {
        match target {
            TargetKind::Point => !matches!(self, Scheme::Isotropic),
            TargetKind::Extended => matches!(self, Scheme::Joint | Scheme::Isotropic),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    P0Dbm,
    M,
    N,
    Trials,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::P0Dbm => "p0_dbm",
            SweepAxis::M => "m",
            SweepAxis::N => "n",
            SweepAxis::Trials => "trials",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossConfig {
    pub k0_db: f64,
    pub d0: f64,
    pub exponent: f64,
}

impl Default for PathLossConfig {
    fn default() -> Self {
        Self {
            k0_db: -30.0,
            d0: 1.0,
            exponent: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ap_position: [f64; 2],
    pub irs_position: [f64; 2],
    pub target: TargetSpec,
    pub m: usize,
    pub n: usize,
    pub dwell: usize,
    pub p0_dbm: f64,
    pub noise_dbm: f64,
    pub rician_factor: f64,
    pub spacing_ratio: f64,
    pub pathloss: PathLossConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = Scenario::reference_point();
        Self {
            ap_position: s.ap_position,
            irs_position: s.irs_position,
            target: s.target,
            m: s.m,
            n: s.n,
            dwell: s.dwell,
            p0_dbm: 30.0,
            noise_dbm: -120.0,
            rician_factor: s.rician_factor,
            spacing_ratio: s.spacing_ratio,
            pathloss: PathLossConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn to_scenario(&self, seed: u64) -> Scenario {
        Scenario {
            ap_position: self.ap_position,
            irs_position: self.irs_position,
            target: self.target,
            m: self.m,
            n: self.n,
            dwell: self.dwell,
            p0: dbm_to_watts(self.p0_dbm),
            noise_power: dbm_to_watts(self.noise_dbm),
            rician_factor: self.rician_factor,
            pathloss: PathLoss {
                k0: db_to_linear(self.pathloss.k0_db),
                d0: self.pathloss.d0,
                exponent: self.pathloss.exponent,
            },
            spacing_ratio: self.spacing_ratio,
            seed,
        }
    }

    fn with_axis(&self, axis: SweepAxis, value: f64) -> Self {
        let mut out = self.clone();
        match axis {
            SweepAxis::P0Dbm => out.p0_dbm = value,
            SweepAxis::M => out.m = value as usize,
            SweepAxis::N => out.n = value as usize,
            SweepAxis::Trials => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Channel draws (bound experiments) or Monte-Carlo trials (MSE).
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// MSE only: fresh channel and target per trial.
    #[serde(default = "default_true")]
    pub redraw: bool,
    /// Angle the optimizers design for; defaults to the true target angle.
    #[serde(default)]
    pub design_theta_deg: Option<f64>,
    /// Empty selects every scheme valid for the experiment.
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub optimizer: OptParams,
    #[serde(default)]
    pub grid: GridParams,
    /// Output directory; the command line may override it.
    #[serde(default)]
    pub output: Option<String>,
}

fn default_id() -> String {
    "experiment".into()
}

fn default_trials() -> usize {
    100
}

fn default_true() -> bool {
    true
}

/// One validation finding, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn line_at(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[table]` (`""` for the root table).
fn locate(source: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') && line.ends_with(']') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                header = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

/// Parses a configuration, reporting syntax and schema errors with lines.
pub fn parse_config(source: &str) -> std::result::Result<ExperimentConfig, Vec<Diagnostic>> {
    toml::from_str::<ExperimentConfig>(source).map_err(|e| {
        vec![Diagnostic {
            line: e.span().map(|s| line_at(source, s.start)),
            message: e.message().trim().to_string(),
        }]
    })
}

impl ExperimentConfig {
    /// Schemes to run: the configured list or every valid scheme.
    pub fn resolved_schemes(&self) -> Vec<Scheme> {
        if !self.schemes.is_empty() {
            return self.schemes.clone();
        }
        match self.kind {
            ExperimentKind::Convergence => vec![Scheme::Joint],
            _ => match target_kind(&self.scenario.target) {
                TargetKind::Point => vec![Scheme::Joint, Scheme::SnrMax, Scheme::ReflectiveOnly, Scheme::TransmitOnly],
                TargetKind::Extended => vec![Scheme::Joint, Scheme::Isotropic],
            },
        }
    }

    fn points(&self) -> Vec<(Option<f64>, ScenarioConfig, usize)> {
        match &self.sweep {
            None => vec![(None, self.scenario.clone(), self.trials)],
            Some(sw) => sw
                .values
                .iter()
                .map(|&v| {
                    let trials = if sw.axis == SweepAxis::Trials { v as usize } else { self.trials };
                    (Some(v), self.scenario.with_axis(sw.axis, v), trials)
                })
                .collect(),
        }
    }

    /// Every schema and precondition violation, without running anything.
    /// `source` is the original text, used for line numbers.
    pub fn validate(&self, source: Option<&str>) -> Vec<Diagnostic> {
        let src = source.unwrap_or("");
        let at = |table: &str, key: &str| if source.is_some() { locate(src, table, key) } else { None };
        let mut out = Vec::new();
        let mut push = |line: Option<usize>, message: String| out.push(Diagnostic { line, message });

        let tkind = target_kind(&self.scenario.target);
        if let Some(required) = self.kind.target() {
            if required != tkind {
                push(
                    at("scenario.target", "kind"),
                    format!(
                        "experiment kind {:?} needs a {} target",
                        self.kind,
                        if required == TargetKind::Point { "point" } else { "extended" }
                    ),
                );
            }
        }
        let mut seen = Vec::new();
        for s in &self.schemes {
            if seen.contains(s) {
                push(at("", "schemes"), format!("scheme {} listed twice", s.name()));
            }
            seen.push(*s);
            let ok = if self.kind == ExperimentKind::Convergence {
                *s == Scheme::Joint
            } else {
                s.valid_for(tkind)
            };
            if !ok {
                push(at("", "schemes"), format!("scheme {} does not apply to this experiment", s.name()));
            }
        }
        if self.trials < 1 {
            push(at("", "trials"), "trials must be at least 1".into());
        }
        if let Some(t) = self.design_theta_deg {
            if !(t.abs() < 90.0) {
                push(at("", "design_theta_deg"), format!("design angle must lie in (-90, 90) degrees, got {t}"));
            }
        }
        let o = &self.optimizer;
        if !(o.tol_outer > 0.0 && o.tol_inner > 0.0) || o.max_outer < 1 || o.max_inner < 1 || o.randomizations < 1 {
            push(
                at("optimizer", ""),
                "optimizer tolerances must be positive and iteration/randomization counts at least 1".into(),
            );
        }
        if !(self.grid.step > 0.0 && self.grid.tol > 0.0) {
            push(at("grid", ""), "grid step and tolerance must be positive".into());
        }

        if let Some(sw) = &self.sweep {
            let line = at("sweep", "values");
            if self.kind == ExperimentKind::Convergence {
                push(at("sweep", "axis"), "convergence experiments do not take a sweep".into());
            }
            if sw.values.is_empty() {
                push(line, "sweep values must not be empty".into());
            }
            if sw.values.iter().any(|v| !v.is_finite()) {
                push(line, "sweep values must be finite".into());
            }
            let inc = sw.values.windows(2).all(|w| w[1] > w[0]);
            let dec = sw.values.windows(2).all(|w| w[1] < w[0]);
            if !(inc || dec) {
                push(line, "sweep values must be strictly monotone".into());
            }
            if matches!(sw.axis, SweepAxis::M | SweepAxis::N | SweepAxis::Trials) {
                let min = if sw.axis == SweepAxis::Trials { 1.0 } else { 2.0 };
                if sw.values.iter().any(|v| v.fract() != 0.0 || *v < min) {
                    push(line, format!("{} values must be integers of at least {min}", sw.axis.name()));
                }
            }
        }

        // Per-point physical checks, reported once per distinct message.
        let mut reported: Vec<String> = Vec::new();
        for (value, sc, _) in self.points() {
            let suffix = value.map(|v| format!(" (sweep value {v})")).unwrap_or_default();
            let mut msgs = Vec::new();
            if let Err(e) = sc.to_scenario(self.seed).validate() {
                msgs.push((at("scenario", ""), format!("{e}")));
            }
            if tkind == TargetKind::Extended && sc.m < sc.n {
                msgs.push((
                    at("scenario", "m"),
                    format!(
                        "extended target with M = {} < N = {}: the response matrix is estimable only when \
                         rank(G) = N, which requires M >= N",
                        sc.m, sc.n
                    ),
                ));
            }
            if self.kind == ExperimentKind::MseSweep && sc.dwell < sc.m {
                msgs.push((
                    at("scenario", "dwell"),
                    format!("dwell T = {} must be at least M = {} to synthesize the waveform", sc.dwell, sc.m),
                ));
            }
            for (line, m) in msgs {
                if !reported.contains(&m) {
                    reported.push(m.clone());
                    push(line, format!("{m}{suffix}"));
                }
            }
        }
        out
    }

    /// SHA-256 of the resolved configuration, excluding the output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.schemes = c.resolved_schemes();
        let json = serde_json::to_vec(&c).expect("configuration serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Parses and validates; returns the configuration only when clean.
pub fn load_config(source: &str) -> std::result::Result<ExperimentConfig, Vec<Diagnostic>> {
    let cfg = parse_config(source)?;
    let diags = cfg.validate(Some(source));
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub scheme: String,
    pub axis: String,
    pub axis_value: Option<f64>,
    /// `+∞` when the parameter is not estimable.
    pub crb: f64,
    pub mse: Option<f64>,
    pub mse_stderr: Option<f64>,
    pub iterations: Option<f64>,
    pub wall_ms: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

pub const CSV_HEADER: [&str; 13] = [
    "experiment",
    "scheme",
    "axis",
    "axis_value",
    "crb_linear",
    "crb_db",
    "mse_linear",
    "mse_db",
    "mse_stderr",
    "iterations",
    "wall_ms",
    "seed",
    "config_hash",
];

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        fmt_num(10.0 * v.log10())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.scheme.clone(),
            r.axis.clone(),
            fmt_opt(r.axis_value),
            fmt_num(r.crb),
            fmt_db(r.crb),
            fmt_opt(r.mse),
            r.mse.map(fmt_db).unwrap_or_default(),
            fmt_opt(r.mse_stderr),
            fmt_opt(r.iterations),
            fmt_opt(r.wall_ms),
            r.seed.to_string(),
            r.config_hash.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Metadata written next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub config_hash: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Fill `wall_ms`; off by default so output is byte-reproducible.
    pub timing: bool,
}

pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub sidecar: Sidecar,
}

struct Cell {
    crb: f64,
    iterations: Option<f64>,
    ms: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64() * 1e3)
}

fn point_theta(sc: &Scenario) -> f64 {
    match sc.target {
        TargetSpec::Point { position } => irs_angle(sc.irs_position, position),
        TargetSpec::Extended { center, .. } => irs_angle(sc.irs_position, center),
    }
}

/// Beamformers for one scheme on one channel; also the outer iteration
/// count for the joint optimizer.
fn point_design(
    scheme: Scheme,
    sc: &Scenario,
    channel: &Channel,
    theta: f64,
    params: &OptParams,
    streams: &Streams,
    index: u64,
) -> Result<(Design, Option<f64>)> {
    let mut rng = streams.child(scheme.name(), 0).stream("design", index);
    match scheme {
        Scheme::Joint => {
            let trace = optimize_joint(sc, channel, theta, params, &mut rng)?;
            let last = trace.final_record();
            let d = Design {
                r_x: last.r_x.clone(),
                v: last.v.clone(),
            };
            Ok((d, Some(trace.records.len() as f64)))
        }
        Scheme::SnrMax => Ok((snr_max_design(channel, theta, sc.p0, sc.spacing_ratio, params, &mut rng)?, None)),
        Scheme::ReflectiveOnly => Ok((reflective_only(sc, channel, theta, params, &mut rng)?, None)),
        Scheme::TransmitOnly => Ok((transmit_only(sc, channel, theta, params, &mut rng)?, None)),
        Scheme::Isotropic => Err(Error::Contract("isotropic scheme applies to extended targets".into())),
    }
}

fn extended_design(scheme: Scheme, sc: &Scenario, channel: &Channel, streams: &Streams, index: u64) -> Result<Design> {
    let v = random_phases(&mut streams.child(scheme.name(), 0).stream("design", index), sc.n);
    let r_x = match scheme {
        Scheme::Joint => optimal_rx_extended(channel, sc.p0, &SensingParams::from_scenario(sc))?.r_x,
        Scheme::Isotropic => isotropic_extended(sc),
        other => return Err(Error::Contract(format!("{} does not apply to extended targets", other.name()))),
    };
    Ok(Design { r_x, v })
}

impl ExperimentConfig {
    /// Executes the experiment. The configuration must validate.
    pub fn run(&self, options: &RunOptions) -> Result<RunOutput> {
        let diags = self.validate(None);
        if let Some(d) = diags.first() {
            return Err(Error::Config(d.to_string()));
        }
        let hash = self.hash();
        let schemes = self.resolved_schemes();
        let streams = Streams::new(self.seed);
        let axis = self.sweep.as_ref().map(|s| s.axis.name()).unwrap_or("");
        let mut rows = Vec::new();
        let row = |scheme: Scheme, axis: &str, value: Option<f64>| ResultRow {
            experiment: self.id.clone(),
            scheme: scheme.name().into(),
            axis: axis.into(),
            axis_value: value,
            crb: f64::INFINITY,
            mse: None,
            mse_stderr: None,
            iterations: None,
            wall_ms: None,
            seed: self.seed,
            config_hash: hash.clone(),
        };
        let ms = |v: f64| options.timing.then_some(v);

        if self.kind == ExperimentKind::Convergence {
            let sc = self.scenario.to_scenario(self.seed);
            let channel = make_channel(&sc, &mut streams.stream("channel", 0))?;
            let theta = self.design_theta_deg.map(f64::to_radians).unwrap_or_else(|| point_theta(&sc));
            let mut rng = streams.child("joint", 0).stream("design", 0);
            let start = Instant::now();
            let trace = optimize_joint(&sc, &channel, theta, &self.optimizer, &mut rng)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            for (l, rec) in trace.records.iter().enumerate() {
                let mut r = row(Scheme::Joint, "iteration", Some((l + 1) as f64));
                r.crb = rec.crb;
                r.iterations = Some(rec.inner_iterations as f64);
                r.wall_ms = ms(elapsed);
                rows.push(r);
            }
        }

        for (value, sc_cfg, trials) in self.points() {
            if self.kind == ExperimentKind::Convergence {
                break;
            }
            let sc = sc_cfg.to_scenario(self.seed);
            let theta_true = point_theta(&sc);
            let theta = self.design_theta_deg.map(f64::to_radians).unwrap_or(theta_true);
            let params = SensingParams::from_scenario(&sc);
            match self.kind {
                ExperimentKind::CrbPoint | ExperimentKind::OptimizePoint => {
                    let draws = if self.kind == ExperimentKind::OptimizePoint { 1 } else { trials };
                    let alpha = nominal_alpha(&sc)?;
                    let per_draw: Vec<Vec<Cell>> = (0..draws)
                        .into_par_iter()
                        .map(|r| {
                            let channel = make_channel(&sc, &mut streams.stream("channel", r as u64));
                            schemes
                                .iter()
                                .map(|&s| {
                                    let (res, t) = timed(|| {
                                        let ch = channel.as_ref().map_err(Clone::clone)?;
                                        let (d, it) = point_design(s, &sc, ch, theta, &self.optimizer, &streams, r as u64)?;
                                        Ok::<_, Error>((crb_point(ch, &d.v, &d.r_x, theta_true, alpha, &params).value, it))
                                    });
                                    match res {
                                        Ok((crb, iterations)) => Cell { crb, iterations, ms: t },
                                        Err(e) => {
                                            log::warn!("{} draw {r}: {e}", s.name());
                                            Cell { crb: f64::INFINITY, iterations: None, ms: t }
                                        }
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    rows.extend(aggregate(&schemes, &per_draw, |s| row(s, axis, value), options.timing));
                }
                ExperimentKind::CrbExtended | ExperimentKind::OptimizeExtended => {
                    let draws = if self.kind == ExperimentKind::OptimizeExtended { 1 } else { trials };
                    let per_draw: Vec<Vec<Cell>> = (0..draws)
                        .into_par_iter()
                        .map(|r| {
                            let channel = make_channel(&sc, &mut streams.stream("channel", r as u64));
                            schemes
                                .iter()
                                .map(|&s| {
                                    let (res, t) = timed(|| {
                                        let ch = channel.as_ref().map_err(Clone::clone)?;
                                        match s {
                                            Scheme::Joint => optimal_rx_extended(ch, sc.p0, &params).map(|d| d.crb),
                                            _ => isotropic_crb(ch, sc.p0, &params),
                                        }
                                    });
                                    Cell {
                                        crb: res.unwrap_or(f64::INFINITY),
                                        iterations: None,
                                        ms: t,
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    rows.extend(aggregate(&schemes, &per_draw, |s| row(s, axis, value), options.timing));
                }
                ExperimentKind::MseSweep => {
                    let opts = MseOptions {
                        trials,
                        redraw: self.redraw,
                        grid: self.grid,
                    };
                    let mse_streams = streams.child("mse", 0);
                    for &s in &schemes {
                        let designer = |ch: &Channel, k: usize| match target_kind(&sc.target) {
                            TargetKind::Point => {
                                point_design(s, &sc, ch, theta, &self.optimizer, &streams, k as u64).map(|d| d.0)
                            }
                            TargetKind::Extended => extended_design(s, &sc, ch, &streams, k as u64),
                        };
                        let (res, t) = timed(|| monte_carlo_mse(&sc, designer, &opts, &mse_streams));
                        let mut r = row(s, axis, value);
                        r.wall_ms = ms(t);
                        match res {
                            Ok(rep) => {
                                r.crb = rep.crb;
                                r.mse = Some(rep.mse);
                                r.mse_stderr = Some(rep.stderr);
                            }
                            Err(e) => log::warn!("{} at {value:?}: {e}", s.name()),
                        }
                        rows.push(r);
                    }
                }
                ExperimentKind::Convergence => unreachable!(),
            }
        }
        let sidecar = Sidecar {
            config: ExperimentConfig {
                schemes,
                ..self.clone()
            },
            library_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: hash,
            rows: rows.len(),
        };
        Ok(RunOutput { rows, sidecar })
    }
}

fn aggregate(
    schemes: &[Scheme],
    per_draw: &[Vec<Cell>],
    row: impl Fn(Scheme) -> ResultRow,
    timing: bool,
) -> Vec<ResultRow> {
    schemes
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let crbs: Vec<f64> = per_draw.iter().map(|d| d[k].crb).collect();
            let its: Vec<f64> = per_draw.iter().filter_map(|d| d[k].iterations).collect();
            let times: Vec<f64> = per_draw.iter().map(|d| d[k].ms).collect();
            let mut r = row(s);
            r.crb = pairwise_sum(&crbs) / crbs.len() as f64;
            r.iterations = (!its.is_empty()).then(|| pairwise_sum(&its) / its.len() as f64);
            r.wall_ms = timing.then(|| pairwise_sum(&times));
            r
        })
        .collect()
}
