//! Experiment harness behind the command-line tool: configuration files,
//! seeded perturbations, threshold sweeps, witness tables and report
//! rendering.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::integrator::{
    drift_report, format_float, integrate, DriftReport, IntegrationConfig, IntegrationError,
    Trajectory,
};
use crate::level_set::{
    certify_isolation, distance_to_equilibrium, level_residuals, IsolationVerdict, LevelSetError,
};
use crate::linear_stability::{
    classify_spectral, closed_form_verdict, growth_fit_window, measured_growth_rate,
    SpectralReport, SpectralVerdict,
};
use crate::top::{equilibrium, ParamError, TopParams, TopState};

pub const DEFAULT_PERTURBATION: f64 = 1e-4;

/// Growth fits start once the deviation has grown this much past its
/// initial size, so the decaying mode no longer matters.
pub const GROWTH_FIT_LIFT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {value:?}")]
    InvalidValue { key: &'static str, value: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Settings as read from a config file or the command line, before defaults
/// are applied. Later layers override earlier ones via [`Settings::merge`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub a: Option<f64>,
    pub c: Option<f64>,
    pub m: Option<f64>,
    pub g: Option<f64>,
    pub z: Option<f64>,
    pub m3: Option<Vec<f64>>,
    pub step: Option<f64>,
    pub n_steps: Option<usize>,
    pub record_every: Option<usize>,
    pub project_gamma: Option<bool>,
    pub perturbation: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl Settings {
    /// Parse flat `key = value` text. Blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut out = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ExperimentError::Syntax { line: idx + 1, text: raw.to_string() })?;
            out.set(key, value)?;
        }
        Ok(out)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        match key {
            "A" => self.a = Some(parse_num("A", value)?),
            "C" => self.c = Some(parse_num("C", value)?),
            "m" => self.m = Some(parse_num("m", value)?),
            "g" => self.g = Some(parse_num("g", value)?),
            "z" => self.z = Some(parse_num("z", value)?),
            "m3" => self.m3 = Some(parse_m3_spec(value)?),
            "step" => self.step = Some(parse_num("step", value)?),
            "n_steps" => self.n_steps = Some(parse_num("n_steps", value)?),
            "record_every" => self.record_every = Some(parse_num("record_every", value)?),
            "project_gamma" => self.project_gamma = Some(parse_num("project_gamma", value)?),
            "perturbation" => self.perturbation = Some(parse_num("perturbation", value)?),
            "seed" => self.seed = Some(parse_num("seed", value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            other => return Err(ExperimentError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Values set in `over` replace those in `self`.
    pub fn merge(self, over: Settings) -> Settings {
        Settings {
            a: over.a.or(self.a),
            c: over.c.or(self.c),
            m: over.m.or(self.m),
            g: over.g.or(self.g),
            z: over.z.or(self.z),
            m3: over.m3.or(self.m3),
            step: over.step.or(self.step),
            n_steps: over.n_steps.or(self.n_steps),
            record_every: over.record_every.or(self.record_every),
            project_gamma: over.project_gamma.or(self.project_gamma),
            perturbation: over.perturbation.or(self.perturbation),
            seed: over.seed.or(self.seed),
            output: over.output.or(self.output),
        }
    }

    /// Top parameters, defaulting every unset constant to 1.
    pub fn params(&self) -> Result<TopParams, ExperimentError> {
        let get = |v: Option<f64>| v.unwrap_or(1.0);
        Ok(TopParams::new(get(self.a), get(self.c), get(self.m), get(self.g), get(self.z))?)
    }

    pub fn build(&self) -> Result<ExperimentConfig, ExperimentError> {
        let params = self.params()?;
        let mut m3_values = self.m3.clone().ok_or(ExperimentError::Missing("m3"))?;
        if m3_values.is_empty() {
            return Err(ExperimentError::Missing("m3"));
        }
        if let Some(bad) = m3_values.iter().find(|x| !x.is_finite()) {
            return Err(ExperimentError::Invalid(format!("m3 value {bad} is not finite")));
        }
        m3_values.sort_by(f64::total_cmp);

        let perturbation = self.perturbation.unwrap_or(DEFAULT_PERTURBATION);
        if !(perturbation.is_finite() && perturbation >= 0.0) {
            return Err(ExperimentError::Invalid(format!(
                "perturbation must be finite and non-negative, got {perturbation}"
            )));
        }
        let defaults = IntegrationConfig::default();
        let integration = IntegrationConfig {
            step: self.step.unwrap_or(defaults.step),
            n_steps: self.n_steps.unwrap_or(defaults.n_steps),
            project_gamma: self.project_gamma.unwrap_or(false),
            record_every: self.record_every.unwrap_or(defaults.record_every),
        };
        integration.validate()?;
        Ok(ExperimentConfig {
            params,
            m3_values,
            perturbation,
            integration,
            seed: self.seed.unwrap_or(0),
            output_path: self.output.clone(),
        })
    }
}

fn parse_num<T: std::str::FromStr>(key: &'static str, value: &str) -> Result<T, ExperimentError> {
    value
        .trim()
        .parse()
        .map_err(|_| ExperimentError::InvalidValue { key, value: value.to_string() })
}

/// Parse an axial-momentum list: either comma-separated values or an
/// inclusive range `start:stop:step`.
pub fn parse_m3_spec(spec: &str) -> Result<Vec<f64>, ExperimentError> {
    let invalid = || ExperimentError::InvalidValue { key: "m3", value: spec.to_string() };
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let start: f64 = start.parse().map_err(|_| invalid())?;
            let stop: f64 = stop.parse().map_err(|_| invalid())?;
            let step: f64 = step.parse().map_err(|_| invalid())?;
            if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && start <= stop)
            {
                return Err(invalid());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            // Snap to 12 decimals so that e.g. 1.6 + 2 * 0.2 lands on 2.0
            // exactly instead of one ulp away from the threshold.
            Ok((0..count)
                .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => spec
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| invalid()))
            .collect(),
        _ => Err(invalid()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: TopParams,
    /// Sorted ascending.
    pub m3_values: Vec<f64>,
    /// Size of the transverse kick given to `M` and to `gamma`.
    pub perturbation: f64,
    pub integration: IntegrationConfig,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(params: TopParams, m3_values: Vec<f64>) -> Self {
        let mut m3_values = m3_values;
        m3_values.sort_by(f64::total_cmp);
        Self {
            params,
            m3_values,
            perturbation: DEFAULT_PERTURBATION,
            integration: IntegrationConfig::default(),
            seed: 0,
            output_path: None,
        }
    }

    /// Generator for the `index`-th run; independent of execution order.
    pub fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// Sleeping rotation kicked by `magnitude` in random transverse directions:
/// `(M1, M2)` and `(γ1, γ2)` each receive `magnitude · (cos ψ, sin ψ)` with
/// independent angles, and `gamma` is renormalized.
pub fn perturbed_equilibrium<R: Rng>(m3: f64, magnitude: f64, rng: &mut R) -> TopState {
    let psi_m: f64 = rng.random_range(0.0..TAU);
    let psi_g: f64 = rng.random_range(0.0..TAU);
    let mut s = equilibrium(m3);
    s.m.x += magnitude * psi_m.cos();
    s.m.y += magnitude * psi_m.sin();
    s.gamma.x += magnitude * psi_g.cos();
    s.gamma.y += magnitude * psi_g.sin();
    s.gamma /= s.gamma.norm();
    s
}

/// One sweep result. Field names double as the CSV header.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m3: f64,
    pub threshold_margin: f64,
    pub spectral_verdict: SpectralVerdict,
    pub growth_rate_predicted: f64,
    /// Log-linear fit; only attempted for unstable rows.
    pub growth_rate_measured: Option<f64>,
    /// `inf` when the integration blew up.
    pub max_deviation: f64,
    /// `None` when the integration blew up.
    pub drift: Option<DriftReport>,
}

pub const SWEEP_HEADER: [&str; 10] = [
    "m3",
    "threshold_margin",
    "spectral_verdict",
    "growth_rate_predicted",
    "growth_rate_measured",
    "max_deviation",
    "drift_H",
    "drift_C1",
    "drift_C2",
    "drift_F",
];

/// Verdicts of the three independent stability tests for one `m3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodVerdicts {
    pub closed_form_stable: bool,
    pub spectral_stable: bool,
    pub isolated: bool,
}

impl MethodVerdicts {
    pub fn evaluate(params: &TopParams, m3: f64) -> Result<Self, LevelSetError> {
        Ok(Self {
            closed_form_stable: closed_form_verdict(params, m3).is_stable(),
            spectral_stable: classify_spectral(params, m3).verdict.is_stable(),
            isolated: certify_isolation(params, m3)?.is_isolated(),
        })
    }

    pub fn agree(&self) -> bool {
        self.closed_form_stable == self.spectral_stable && self.spectral_stable == self.isolated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// `m3` values where the three stability tests disagree.
    pub disagreements: Vec<f64>,
}

impl Sweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            let opt = |x: Option<f64>| x.map(format_float).unwrap_or_default();
            let drift = r.drift.map(|d| d.to_array().map(Some)).unwrap_or([None; 4]);
            w.write_record([
                format_float(r.m3),
                format_float(r.threshold_margin),
                r.spectral_verdict.to_string(),
                format_float(r.growth_rate_predicted),
                opt(r.growth_rate_measured),
                format_float(r.max_deviation),
                opt(drift[0]),
                opt(drift[1]),
                opt(drift[2]),
                opt(drift[3]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run a perturbed trajectory for every configured `m3` and tabulate
/// predicted against observed behavior. Rows run in parallel and come back
/// in ascending `m3` order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Sweep, ExperimentError> {
    if config.m3_values.is_empty() {
        return Err(ExperimentError::Missing("m3"));
    }
    if !(config.perturbation > 0.0) {
        return Err(ExperimentError::Invalid("sweep perturbation must be > 0".into()));
    }
    let results: Vec<(SweepRow, bool)> = config
        .m3_values
        .par_iter()
        .enumerate()
        .map(|(idx, &m3)| sweep_row(config, idx, m3))
        .collect::<Result<_, _>>()?;
    let disagreements = results.iter().filter(|(_, ok)| !ok).map(|(r, _)| r.m3).collect();
    Ok(Sweep { rows: results.into_iter().map(|(r, _)| r).collect(), disagreements })
}

fn sweep_row(config: &ExperimentConfig, idx: usize, m3: f64) -> Result<(SweepRow, bool), ExperimentError> {
    let params = &config.params;
    let report = classify_spectral(params, m3);
    let verdicts = MethodVerdicts::evaluate(params, m3)?;
    let initial = perturbed_equilibrium(m3, config.perturbation, &mut config.rng_for(idx));
    let eq = equilibrium(m3);

    let (max_deviation, growth_rate_measured, drift) =
        match integrate(params, &initial, &config.integration) {
            Ok(traj) => {
                let measured = if report.verdict.is_stable() {
                    None
                } else {
                    fit_growth(&traj, &eq)
                };
                (traj.max_deviation(&eq), measured, Some(drift_report(&traj)))
            }
            Err(IntegrationError::BlowUp { .. }) => (f64::INFINITY, None, None),
            Err(e) => return Err(e.into()),
        };

    let row = SweepRow {
        m3,
        threshold_margin: report.margin,
        spectral_verdict: report.verdict,
        growth_rate_predicted: report.growth_rate,
        growth_rate_measured,
        max_deviation,
        drift,
    };
    Ok((row, verdicts.agree()))
}

/// Growth rate over the automatically chosen linear window, if there is one.
pub fn fit_growth(traj: &Trajectory, eq: &TopState) -> Option<f64> {
    let window = growth_fit_window(traj, eq, GROWTH_FIT_LIFT)?;
    measured_growth_rate(traj, eq, window).ok()
}

/// Integrate the single configured `m3` from a perturbed start.
pub fn run_simulation(config: &ExperimentConfig) -> Result<Trajectory, ExperimentError> {
    let m3 = single_m3(config)?;
    let initial = perturbed_equilibrium(m3, config.perturbation, &mut config.rng_for(0));
    Ok(integrate(&config.params, &initial, &config.integration)?)
}

pub fn single_m3(config: &ExperimentConfig) -> Result<f64, ExperimentError> {
    match config.m3_values.as_slice() {
        [m3] => Ok(*m3),
        other => Err(ExperimentError::Invalid(format!(
            "exactly one m3 value required, got {}",
            other.len()
        ))),
    }
}

/// Combined outcome of the spectral test and the isolation certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub m3: f64,
    pub spectral: SpectralReport,
    pub isolation: IsolationVerdict,
}

impl Classification {
    pub fn is_stable(&self) -> bool {
        self.spectral.verdict.is_stable()
    }

    pub fn label(&self) -> &'static str {
        match (self.is_stable(), self.spectral.is_boundary()) {
            (true, true) => "STABLE (boundary)",
            (true, false) => "STABLE",
            (false, _) => "UNSTABLE",
        }
    }

    pub fn render(&self) -> String {
        let s = &self.spectral;
        let mut out = String::new();
        let _ = writeln!(out, "m3          = {:?}", self.m3);
        let _ = writeln!(out, "threshold   = {:?}  (2*sqrt(A*m*g*z))", s.threshold);
        let _ = writeln!(out, "margin      = {:?}  (m3^2 - 4*A*m*g*z)", s.margin);
        let eig: Vec<String> = s.eigenvalues.iter().map(|l| format!("{:.6}{:+.6}i", l.re, l.im)).collect();
        let _ = writeln!(out, "eigenvalues = {}  (plus 0, 0)", eig.join(", "));
        let _ = writeln!(out, "growth_rate = {:?}", s.growth_rate);
        let _ = writeln!(out, "spectral    = {}", s.verdict);
        let _ = writeln!(out, "isolation   = {}", isolation_label(&self.isolation));
        let _ = writeln!(out, "verdict     = {}", self.label());
        out
    }
}

pub fn isolation_label(v: &IsolationVerdict) -> String {
    match v {
        IsolationVerdict::Isolated => "ISOLATED".to_string(),
        IsolationVerdict::NotIsolated(f) => {
            format!("NOT ISOLATED (witnesses for gamma3 in [{:?}, 1))", f.gamma3_min())
        }
    }
}

pub fn classify(params: &TopParams, m3: f64) -> Result<Classification, LevelSetError> {
    Ok(Classification {
        m3,
        spectral: classify_spectral(params, m3),
        isolation: certify_isolation(params, m3)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessRow {
    pub gamma3: f64,
    pub outcome: Result<WitnessPoint, LevelSetError>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessPoint {
    pub state: TopState,
    pub residuals: [f64; 4],
    pub distance: f64,
}

/// Witness states for each requested `gamma3`. Returns `None` when the
/// equilibrium is isolated and no witnesses exist.
pub fn witness_table(
    params: &TopParams,
    m3: f64,
    gamma3_list: &[f64],
) -> Result<Option<Vec<WitnessRow>>, LevelSetError> {
    let family = match certify_isolation(params, m3)? {
        IsolationVerdict::Isolated => return Ok(None),
        IsolationVerdict::NotIsolated(f) => f,
    };
    Ok(Some(
        gamma3_list
            .iter()
            .map(|&gamma3| WitnessRow {
                gamma3,
                outcome: family.at(gamma3).map(|state| WitnessPoint {
                    state,
                    residuals: level_residuals(params, m3, &state),
                    distance: distance_to_equilibrium(m3, &state),
                }),
            })
            .collect(),
    ))
}

pub const WITNESS_HEADER: [&str; 13] = [
    "gamma3", "M1", "M2", "M3", "g1", "g2", "g3", "res_H", "res_C1", "res_C2", "res_F", "distance",
    "status",
];

pub fn write_witness_csv<W: Write>(rows: &[WitnessRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WITNESS_HEADER)?;
    for row in rows {
        let mut rec = vec![format_float(row.gamma3)];
        match &row.outcome {
            Ok(p) => {
                let s = &p.state;
                rec.extend(
                    [s.m.x, s.m.y, s.m.z, s.gamma.x, s.gamma.y, s.gamma.z]
                        .into_iter()
                        .chain(p.residuals)
                        .chain([p.distance])
                        .map(format_float),
                );
                rec.push("ok".to_string());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 11));
                rec.push(format!("error: {e}"));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let text = "# unit top\nA = 1\nC=0.5\n m = 2 \ng = 9.81\nz = 0.1\nm3 = 1.6:2.4:0.2\nstep = 1e-3\nn_steps = 100\nperturbation = 1e-5\nseed = 7\noutput = out.csv\n";
        let s = Settings::parse(text).unwrap();
        assert_eq!(s.a, Some(1.0));
        assert_eq!(s.c, Some(0.5));
        assert_eq!(s.m3, Some(vec![1.6, 1.8, 2.0, 2.2, 2.4]));
        assert_eq!(s.n_steps, Some(100));
        assert_eq!(s.seed, Some(7));
        assert_eq!(s.output, Some(PathBuf::from("out.csv")));
        let cfg = s.build().unwrap();
        assert_eq!(cfg.params.mgz(), 2.0 * 9.81 * 0.1);
        assert_eq!(cfg.integration.n_steps, 100);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(Settings::parse("A 1"), Err(ExperimentError::Syntax { line: 1, .. })));
        assert!(matches!(Settings::parse("B = 1"), Err(ExperimentError::UnknownKey(_))));
        assert!(matches!(
            Settings::parse("n_steps = 1.5"),
            Err(ExperimentError::InvalidValue { key: "n_steps", .. })
        ));
        let no_m3 = Settings::parse("A = 1").unwrap();
        assert!(matches!(no_m3.build(), Err(ExperimentError::Missing("m3"))));
        let bad_z = Settings::parse("z = -1\nm3 = 1").unwrap();
        assert!(matches!(bad_z.build(), Err(ExperimentError::Params(_))));
        let bad_step = Settings::parse("step = 0\nm3 = 1").unwrap();
        assert!(matches!(bad_step.build(), Err(ExperimentError::Integration(_))));
    }

    #[test]
    fn overrides_win() {
        let file = Settings::parse("A = 2\nC = 3\nm3 = 1").unwrap();
        let flags = Settings { a: Some(5.0), m3: Some(vec![4.0, 3.0]), ..Default::default() };
        let merged = file.merge(flags).build().unwrap();
        assert_eq!(merged.params.a(), 5.0);
        assert_eq!(merged.params.c(), 3.0);
        assert_eq!(merged.m3_values, vec![3.0, 4.0]);
    }

    #[test]
    fn m3_specs() {
        assert_eq!(parse_m3_spec("1, 2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(parse_m3_spec("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_m3_spec("1.9:2.1:0.05").unwrap(), vec![1.9, 1.95, 2.0, 2.05, 2.1]);
        assert!(parse_m3_spec("1:0:0.1").is_err());
        assert!(parse_m3_spec("0:1:0").is_err());
        assert!(parse_m3_spec("a").is_err());
        assert!(parse_m3_spec("1:2").is_err());
    }

    #[test]
    fn perturbation_has_requested_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = perturbed_equilibrium(2.0, 1e-4, &mut rng);
        assert!((s.m.x.hypot(s.m.y) - 1e-4).abs() < 1e-18);
        assert_eq!(s.m.z, 2.0);
        assert!((s.gamma.norm() - 1.0).abs() < 1e-15);
        assert!(s.gamma.x.hypot(s.gamma.y) > 0.0);
    }

    #[test]
    fn per_row_streams_are_stable() {
        let cfg = ExperimentConfig::new(TopParams::unit(), vec![1.0, 2.0]);
        let a = perturbed_equilibrium(1.0, 1e-3, &mut cfg.rng_for(1));
        let b = perturbed_equilibrium(1.0, 1e-3, &mut cfg.rng_for(1));
        let c = perturbed_equilibrium(1.0, 1e-3, &mut cfg.rng_for(0));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn classification_labels() {
        let p = TopParams::unit();
        assert_eq!(classify(&p, 3.0).unwrap().label(), "STABLE");
        assert_eq!(classify(&p, 2.0).unwrap().label(), "STABLE (boundary)");
        assert_eq!(classify(&p, 1.0).unwrap().label(), "UNSTABLE");
        let text = classify(&p, 3.0).unwrap().render();
        assert!(text.contains("threshold   = 2.0"));
        assert!(text.contains("margin      = 5.0"));
        assert!(text.contains("isolation   = ISOLATED"));
    }

    #[test]
    fn witness_rows() {
        let p = TopParams::unit();
        assert_eq!(witness_table(&p, 3.0, &[0.5]).unwrap(), None);
        let rows = witness_table(&p, 1.0, &[0.0, 0.9, 0.99, 0.999, 1.5]).unwrap().unwrap();
        assert_eq!(rows.len(), 5);
        let d: Vec<f64> = rows[..4].iter().map(|r| r.outcome.as_ref().unwrap().distance).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
        for r in &rows[..4] {
            let res = r.outcome.as_ref().unwrap().residuals;
            assert!(res.iter().all(|x| x.abs() <= 1e-12));
        }
        assert!(rows[4].outcome.is_err());

        let mut buf = Vec::new();
        write_witness_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("gamma3,M1,M2,M3,g1,g2,g3,res_H,res_C1,res_C2,res_F,distance,status\n"));
        assert!(text.lines().last().unwrap().contains("error: gamma3 = 1.5"));
    }

    #[test]
    fn short_sweep_columns() {
        let mut cfg = ExperimentConfig::new(TopParams::unit(), vec![2.4, 1.6, 2.0]);
        cfg.integration = IntegrationConfig::new(1e-2, 200);
        let sweep = run_sweep(&cfg).unwrap();
        assert!(sweep.disagreements.is_empty());
        let m3: Vec<f64> = sweep.rows.iter().map(|r| r.m3).collect();
        assert_eq!(m3, vec![1.6, 2.0, 2.4]);
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn sweep_needs_a_kick() {
        let mut cfg = ExperimentConfig::new(TopParams::unit(), vec![1.0]);
        cfg.perturbation = 0.0;
        assert!(matches!(run_sweep(&cfg), Err(ExperimentError::Invalid(_))));
    }

    #[test]
    fn simulation_requires_single_m3() {
        let mut cfg = ExperimentConfig::new(TopParams::unit(), vec![1.0, 2.0]);
        cfg.integration = IntegrationConfig::new(1e-2, 10);
        assert!(run_simulation(&cfg).is_err());
        cfg.m3_values = vec![2.5];
        cfg.perturbation = 0.0;
        let traj = run_simulation(&cfg).unwrap();
        assert!(traj.drift.iter().all(|d| d.to_array() == [0.0; 4]));
    }
}
