//! Executes a configuration and writes the result files.
//!
//! Every run produces one JSON bundle (`<prefix>.json`) holding the
//! resolved configuration, provenance and all results, plus one CSV table
//! per trace or spectrum. CSV files begin with `#` comment lines carrying
//! the seed and the configuration hash; everything below the header row is
//! a pure function of (configuration, seed).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::{transition_label, OutputFormat, Protocol, RunConfig};
use super::units::format_number;
use crate::error::Error;
use crate::experiments::{
    echo_train_decay, fit_decay, fit_power_law, hahn_echo_decay, multiquantum_decays, three_pulse_phase_cycle,
    AlphaMode, DecayTrace, FitResult, MarkerPlacement, PathwaySpectrum, PowerLawFit,
};
use crate::spin::CoherenceLabel;

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success,
    ConfigError,
    FitFailure,
    InvariantViolation,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::ConfigError => 2,
            ExitStatus::FitFailure => 3,
            ExitStatus::InvariantViolation => 4,
        }
    }

    fn of(e: &Error) -> Self {
        match e {
            Error::Fit(_) => ExitStatus::FitFailure,
            _ => ExitStatus::InvariantViolation,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub artifact: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub config_sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub label: String,
    pub alpha_mode: AlphaMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FitRecord {
    fn new(label: impl Into<String>, trace: &DecayTrace, mode: AlphaMode) -> Self {
        let (result, error) = match fit_decay(trace, mode) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        FitRecord {
            label: label.into(),
            alpha_mode: mode,
            result,
            error,
        }
    }
}

/// T2 of the Δp = 2, 4, 6 pathways and their ratios.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatioSummary {
    /// SQT, DQT, TQT in seconds.
    pub t2: [f64; 3],
    /// Scaled so that the TQT entry is 2.
    pub normalized: [f64; 3],
    /// T2·|p|, equal for all three under a white field bath.
    pub t2_times_order: [f64; 3],
}

impl RatioSummary {
    pub fn new(t2: [f64; 3]) -> Self {
        RatioSummary {
            t2,
            normalized: t2.map(|t| 2.0 * t / t2[2]),
            t2_times_order: [t2[0], 2.0 * t2[1], 3.0 * t2[2]],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedTrace {
    pub name: String,
    pub trace: DecayTrace,
    pub fit: FitRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    /// n for CPMG, t_space (s) for t_space scans.
    pub parameter: f64,
    pub trace: DecayTrace,
    pub fit: FitRecord,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Results {
    Hahn {
        transition: CoherenceLabel,
        trace: NamedTrace,
    },
    PhaseCycle {
        spectrum: PathwaySpectrum,
    },
    Multiquantum {
        traces: Vec<NamedTrace>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ratios: Option<RatioSummary>,
    },
    Cpmg {
        transition: CoherenceLabel,
        points: Vec<ScanPoint>,
        #[serde(skip_serializing_if = "Option::is_none")]
        beta: Option<PowerLawFit>,
    },
    Tspace {
        transition: CoherenceLabel,
        points: Vec<ScanPoint>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub provenance: Provenance,
    pub config: RunConfig,
    pub status: ExitStatus,
    /// Set when any part of the protocol failed; whatever finished is kept.
    pub incomplete: bool,
    pub errors: Vec<String>,
    pub results: Option<Results>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the output directory of the configuration.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub bundle: ResultBundle,
    pub files: Vec<PathBuf>,
}

/// Collects errors while a protocol runs.
#[derive(Default)]
struct Progress {
    status: Option<ExitStatus>,
    errors: Vec<String>,
}

impl Progress {
    fn fail(&mut self, status: ExitStatus, msg: String) {
        self.status = self.status.max(Some(status));
        self.errors.push(msg);
    }

    fn fit(&mut self, rec: &FitRecord) {
        if let Some(e) = &rec.error {
            self.fail(ExitStatus::FitFailure, format!("{}: {e}", rec.label));
        }
    }

    fn error(&mut self, context: &str, e: &Error) {
        self.fail(ExitStatus::of(e), format!("{context}: {e}"));
    }
}

fn execute(cfg: &RunConfig, progress: &mut Progress) -> Option<Results> {
    let sys = cfg.spin_system();
    let env = cfg.environment();
    let ensemble = cfg.ensemble();
    match &cfg.protocol {
        Protocol::Hahn(p) => {
            let label = transition_label(&p.transition, &sys);
            let marker = p.marker.map(|m| m.placement());
            match hahn_echo_decay(&sys, &label, &p.tau.0, &ensemble, &env, marker.as_ref()) {
                Ok(trace) => {
                    let fit = FitRecord::new("hahn", &trace, p.alpha.0);
                    progress.fit(&fit);
                    Some(Results::Hahn {
                        transition: label,
                        trace: NamedTrace {
                            name: "hahn".into(),
                            trace,
                            fit,
                        },
                    })
                }
                Err(e) => {
                    progress.error("hahn", &e);
                    None
                }
            }
        }
        Protocol::PhaseCycle(p) => {
            let level = p.level(sys.dim());
            let steps = *p.phase_steps.get_ref();
            match three_pulse_phase_cycle(&sys, level, p.tau1.value, p.tau2.value, steps, &ensemble, &env) {
                Ok(spectrum) => Some(Results::PhaseCycle { spectrum }),
                Err(e) => {
                    progress.error("phase_cycle", &e);
                    None
                }
            }
        }
        Protocol::Multiquantum(p) => {
            let level = p.level(sys.dim());
            let steps = *p.phase_steps.get_ref();
            match multiquantum_decays(&sys, level, &p.tau.0, steps, &ensemble, &env) {
                Ok(mq) => {
                    let traces: Vec<NamedTrace> = mq
                        .traces()
                        .into_iter()
                        .map(|(name, trace)| {
                            let fit = FitRecord::new(name, trace, p.alpha.0);
                            progress.fit(&fit);
                            NamedTrace {
                                name: name.into(),
                                trace: trace.clone(),
                                fit,
                            }
                        })
                        .collect();
                    let t2: Option<Vec<f64>> = traces.iter().map(|t| t.fit.result.map(|r| r.t2)).collect();
                    let ratios = t2.map(|t| RatioSummary::new([t[0], t[1], t[2]]));
                    Some(Results::Multiquantum { traces, ratios })
                }
                Err(e) => {
                    progress.error("multiquantum", &e);
                    None
                }
            }
        }
        Protocol::Cpmg(p) => {
            let label = transition_label(&p.transition, &sys);
            let marker = p.marker.map(|m| m.placement());
            let grid = p.grid();
            let mut points = Vec::new();
            for n in p.n.iter().map(|n| n.get()) {
                match echo_train_decay(&sys, &label, n, &grid.times(n), &ensemble, &env, marker.as_ref()) {
                    Ok(trace) => {
                        let fit = FitRecord::new(format!("cpmg n={n}"), &trace, p.alpha.0);
                        progress.fit(&fit);
                        points.push(ScanPoint {
                            parameter: n as f64,
                            trace,
                            fit,
                        });
                    }
                    Err(e) => {
                        progress.error(&format!("cpmg n={n}"), &e);
                        break;
                    }
                }
            }
            let fitted: Option<Vec<(f64, f64)>> = points
                .iter()
                .map(|pt| pt.fit.result.map(|r| (pt.parameter, r.t2)))
                .collect();
            let beta = match fitted {
                Some(v) if v.len() >= 2 && progress.status.is_none() => {
                    let (ns, t2): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
                    match fit_power_law(&ns, &t2) {
                        Ok(b) => Some(b),
                        Err(e) => {
                            progress.fail(ExitStatus::FitFailure, format!("beta: {e}"));
                            None
                        }
                    }
                }
                _ => None,
            };
            Some(Results::Cpmg {
                transition: label,
                points,
                beta,
            })
        }
        Protocol::Tspace(p) => {
            let label = transition_label(&p.transition, &sys);
            let mut points = Vec::new();
            for &ts in &p.t_space.0 {
                let marker = MarkerPlacement::new(p.marker_kind, ts);
                match hahn_echo_decay(&sys, &label, &p.tau.0, &ensemble, &env, Some(&marker)) {
                    Ok(trace) => {
                        let fit = FitRecord::new(format!("t_space={}", format_number(ts)), &trace, p.alpha.0);
                        progress.fit(&fit);
                        points.push(ScanPoint {
                            parameter: ts,
                            trace,
                            fit,
                        });
                    }
                    Err(e) => {
                        progress.error(&format!("t_space={ts}"), &e);
                        break;
                    }
                }
            }
            Some(Results::Tspace {
                transition: label,
                points,
            })
        }
    }
}

/// Runs the protocol of `cfg` inside a worker pool of the configured size
/// and writes the result files.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> io::Result<RunOutcome> {
    let mut progress = Progress::default();
    let results = match cfg.execution.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.get())
            .build()
            .map_err(io::Error::other)?
            .install(|| execute(cfg, &mut progress)),
        None => execute(cfg, &mut progress),
    };
    let status = progress.status.unwrap_or(ExitStatus::Success);
    let bundle = ResultBundle {
        provenance: Provenance {
            artifact: ARTIFACT,
            version: VERSION,
            seed: cfg.execution.seed,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            config_sha256: cfg.hash(),
        },
        config: cfg.clone(),
        status,
        incomplete: status != ExitStatus::Success,
        errors: progress.errors,
        results,
    };
    let dir = opts
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let files = write_outputs(&bundle, &dir)?;
    Ok(RunOutcome { bundle, files })
}

fn preamble(bundle: &ResultBundle, what: &str) -> String {
    let p = &bundle.provenance;
    let mut s = format!(
        "# {} {}\n# seed: {}\n# config_sha256: {}\n# {what}\n",
        p.artifact, p.version, p.seed, p.config_sha256
    );
    if bundle.incomplete {
        s.push_str("# incomplete: true\n");
    }
    s
}

struct Table {
    name: String,
    what: String,
    header: &'static str,
    rows: Vec<Vec<String>>,
}

fn num(v: f64) -> String {
    format_number(v)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), num)
}

fn trace_table(name: String, t: &DecayTrace) -> Table {
    Table {
        what: format!("{} (amplitude normalized by {})", t.meta, num(t.reference)),
        name,
        header: "time_s,amplitude",
        rows: t
            .times
            .iter()
            .zip(&t.amplitudes)
            .map(|(&x, &y)| vec![num(x), num(y)])
            .collect(),
    }
}

fn fit_row(label: &str, parameter: f64, f: &FitRecord) -> Vec<String> {
    let r = f.result;
    vec![
        label.to_string(),
        num(parameter),
        opt(r.map(|r| r.t2)),
        opt(r.map(|r| r.t2_err)),
        opt(r.map(|r| r.alpha)),
        opt(r.and_then(|r| r.alpha_err)),
        opt(r.map(|r| r.amplitude)),
        opt(r.map(|r| r.residual_norm)),
        f.error.clone().unwrap_or_default().replace(',', ";"),
    ]
}

const FIT_HEADER: &str = "label,parameter,t2_s,t2_err_s,alpha,alpha_err,amplitude,residual_norm,error";

fn tables(results: &Results) -> Vec<Table> {
    let fits = |what: &str, rows: Vec<Vec<String>>| Table {
        name: "fits".into(),
        what: what.into(),
        header: FIT_HEADER,
        rows,
    };
    match results {
        Results::Hahn { trace, .. } => vec![
            trace_table("hahn".into(), &trace.trace),
            fits("hahn fit", vec![fit_row("hahn", 0.0, &trace.fit)]),
        ],
        Results::PhaseCycle { spectrum } => vec![
            Table {
                name: "phase_signal".into(),
                what: "detected signal per phase of the middle pulse".into(),
                header: "phase_rad,signal_re,signal_im",
                rows: spectrum
                    .phases
                    .iter()
                    .zip(&spectrum.signal)
                    .map(|(&p, s)| vec![num(p), num(s.re), num(s.im)])
                    .collect(),
            },
            Table {
                name: "pathways".into(),
                what: "coherence-transfer pathway amplitudes".into(),
                header: "delta_p,re,im,magnitude",
                rows: (-(spectrum.max_dp as i32)..=spectrum.max_dp as i32)
                    .map(|dp| {
                        let c = spectrum.component(dp);
                        vec![dp.to_string(), num(c.re), num(c.im), num(c.norm())]
                    })
                    .collect(),
            },
        ],
        Results::Multiquantum { traces, ratios } => {
            let mut out: Vec<Table> = traces.iter().map(|t| trace_table(t.name.clone(), &t.trace)).collect();
            out.push(fits(
                "multi-quantum fits",
                traces
                    .iter()
                    .zip([1.0, 2.0, 3.0])
                    .map(|(t, p)| fit_row(&t.name, p, &t.fit))
                    .collect(),
            ));
            if let Some(r) = ratios {
                out.push(Table {
                    name: "ratios".into(),
                    what: "T2 per coherence order; normalized so that TQT = 2".into(),
                    header: "order,t2_s,normalized,t2_times_order",
                    rows: (0..3)
                        .map(|k| {
                            vec![
                                (k + 1).to_string(),
                                num(r.t2[k]),
                                num(r.normalized[k]),
                                num(r.t2_times_order[k]),
                            ]
                        })
                        .collect(),
                });
            }
            out
        }
        Results::Cpmg { points, beta, .. } => {
            let mut out: Vec<Table> = points
                .iter()
                .map(|p| trace_table(format!("cpmg_n{}", p.parameter), &p.trace))
                .collect();
            let mut f = fits(
                "CPMG fits; parameter = number of refocusing pulses",
                points.iter().map(|p| fit_row(&p.fit.label, p.parameter, &p.fit)).collect(),
            );
            if let Some(b) = beta {
                f.what.push_str(&format!(
                    "\n# beta: {} +- {}",
                    num(b.exponent),
                    num(b.exponent_err)
                ));
            }
            out.push(f);
            out
        }
        Results::Tspace { points, .. } => {
            let mut out: Vec<Table> = points
                .iter()
                .enumerate()
                .map(|(k, p)| trace_table(format!("tspace_{k:02}"), &p.trace))
                .collect();
            out.push(fits(
                "t_space scan fits; parameter = t_space in seconds",
                points.iter().map(|p| fit_row(&p.fit.label, p.parameter, &p.fit)).collect(),
            ));
            out
        }
    }
}

fn write_outputs(bundle: &ResultBundle, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let out = &bundle.config.output;
    let mut files = Vec::new();
    if out.formats.contains(&OutputFormat::Csv) {
        if let Some(results) = &bundle.results {
            for t in tables(results) {
                let path = dir.join(format!("{}_{}.csv", out.prefix, t.name));
                let mut f = io::BufWriter::new(fs::File::create(&path)?);
                f.write_all(preamble(bundle, &t.what).as_bytes())?;
                writeln!(f, "{}", t.header)?;
                for row in &t.rows {
                    writeln!(f, "{}", row.join(","))?;
                }
                f.flush()?;
                files.push(path);
            }
        }
    }
    if out.formats.contains(&OutputFormat::Json) {
        let path = dir.join(format!("{}.json", out.prefix));
        let text = serde_json::to_string_pretty(bundle).map_err(io::Error::other)?;
        fs::write(&path, text + "\n")?;
        files.push(path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_summary() {
        let r = RatioSummary::new([0.06, 0.03, 0.02]);
        assert!((r.normalized[0] - 6.0).abs() < 1e-12);
        assert!((r.normalized[1] - 3.0).abs() < 1e-12);
        assert!(r.t2_times_order.iter().all(|v| (v - 0.06).abs() < 1e-12));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ExitStatus::Success.code(), 0);
        assert_eq!(ExitStatus::ConfigError.code(), 2);
        assert_eq!(ExitStatus::FitFailure.code(), 3);
        assert_eq!(ExitStatus::InvariantViolation.code(), 4);
    }
}
