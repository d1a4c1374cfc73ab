//! Human-readable protocol timelines.

use std::fmt::Write;

use super::config::{transition_label, Protocol, RunConfig};
use super::units::format_duration;
use crate::experiments::pathway::phase_grid;
use crate::experiments::{echo_train_sequence, hahn_sequence, three_pulse_sequence, MarkerPlacement};
use crate::pulse::{format_angle, MarkerKind, PulseEvent, ReadoutSpec, Sequence, SequenceEvent};
use crate::spin::CoherenceLabel;

fn pulse(p: &PulseEvent) -> String {
    let mut s = format_angle(p.angle);
    if p.phase != 0.0 {
        let deg = (p.phase.to_degrees() * 1e3).round() / 1e3;
        write!(s, "({deg}°)").unwrap();
    }
    s
}

fn marker(kind: MarkerKind, duration: f64) -> String {
    let name = match kind {
        MarkerKind::Light => "light",
        MarkerKind::LightAndBias => "light+bias",
    };
    format!("[{name} {}]", format_duration(duration))
}

/// One line per sequence: events separated by `|`, ending in `detect`.
pub fn timeline(seq: &Sequence) -> String {
    let mut parts: Vec<String> = seq
        .events
        .iter()
        .map(|e| match e {
            SequenceEvent::Pulse(p) => pulse(p),
            SequenceEvent::Delay(t) => format_duration(*t),
            SequenceEvent::Marker { kind, duration } => marker(*kind, *duration),
        })
        .collect();
    let projection = match &seq.readout {
        ReadoutSpec::ProjectedPopulation { projection, .. } | ReadoutSpec::ProjectedDifference { projection, .. } => {
            projection.as_ref()
        }
        ReadoutSpec::Coherence { .. } => None,
    };
    if let Some(p) = projection {
        parts.push(pulse(p));
    }
    parts.push("detect".into());
    parts.join(" | ")
}

fn transition_line(label: &CoherenceLabel) -> String {
    format!(
        "transition ({}, {}): m = {:+} <-> {:+} ({})",
        label.i, label.j, label.m_i, label.m_j, label.kind
    )
}

fn marker_line(m: &MarkerPlacement) -> String {
    format!(
        "marker: {} burst of {}, {} after initialization, t_space = {} before the echo",
        match m.kind {
            MarkerKind::Light => "light",
            MarkerKind::LightAndBias => "light+bias",
        },
        format_duration(m.duration),
        format_duration(m.after_init),
        format_duration(m.t_space)
    )
}

/// Resolved timeline of the configured protocol, without running it.
pub fn describe(cfg: &RunConfig) -> String {
    let sys = cfg.spin_system();
    let mut out = String::new();
    let w = &mut out;
    writeln!(
        w,
        "system: spin {}, nu0 = {} Hz, nu_Q = {} Hz, nu_rf = {} Hz",
        sys.spin(),
        sys.nu0(),
        sys.nu_q(),
        sys.nu_rf()
    )
    .unwrap();
    writeln!(w, "protocol: {}", cfg.protocol.name()).unwrap();
    match &cfg.protocol {
        Protocol::Hahn(p) => {
            let label = transition_label(&p.transition, &sys);
            writeln!(w, "{}", transition_line(&label)).unwrap();
            let m = p.marker.map(|m| m.placement());
            if let Some(m) = &m {
                writeln!(w, "{}", marker_line(m)).unwrap();
            }
            for &tau in &p.tau.0 {
                let seq = hahn_sequence(&label, tau, m.as_ref()).expect("validated");
                writeln!(w, "{}", timeline(&seq)).unwrap();
            }
        }
        Protocol::PhaseCycle(p) => {
            let level = p.level(sys.dim());
            let steps = *p.phase_steps.get_ref();
            writeln!(
                w,
                "init level {level} (m = {:+}), {steps} phase steps on the middle pulse",
                sys.spin().projection(level)
            )
            .unwrap();
            let seq = three_pulse_sequence(level, p.tau1.value, p.tau2.value, 0.0);
            writeln!(w, "{}", timeline(&seq).replacen("| 2π/3 |", "| 2π/3(φ) |", 1)).unwrap();
            writeln!(w, "k\tφ").unwrap();
            for (k, phi) in phase_grid(steps).into_iter().enumerate() {
                let deg = (phi.to_degrees() * 1e3).round() / 1e3;
                writeln!(w, "{k}\t{deg}°").unwrap();
            }
        }
        Protocol::Multiquantum(p) => {
            let level = p.level(sys.dim());
            writeln!(
                w,
                "init level {level}, {} phase steps per τ, pathways Δp = 2, 4, 6",
                p.phase_steps.get_ref()
            )
            .unwrap();
            for &tau in &p.tau.0 {
                let seq = three_pulse_sequence(level, tau, tau, 0.0);
                writeln!(w, "{}", timeline(&seq).replacen("| 2π/3 |", "| 2π/3(φ) |", 1)).unwrap();
            }
        }
        Protocol::Cpmg(p) => {
            let label = transition_label(&p.transition, &sys);
            writeln!(w, "{}", transition_line(&label)).unwrap();
            let m = p.marker.map(|m| m.placement());
            if let Some(m) = &m {
                writeln!(w, "{}", marker_line(m)).unwrap();
            }
            let grid = p.grid();
            for n in &p.n {
                let times = grid.times(n.get());
                let seq = echo_train_sequence(&label, n.get(), times[0], m.as_ref()).expect("validated");
                writeln!(
                    w,
                    "n = {n}, {} evolution times from {}: {}",
                    times.len(),
                    format_duration(times[0]),
                    timeline(&seq)
                )
                .unwrap();
            }
        }
        Protocol::Tspace(p) => {
            let label = transition_label(&p.transition, &sys);
            writeln!(w, "{}", transition_line(&label)).unwrap();
            let tau = p.tau.0[0];
            for &ts in &p.t_space.0 {
                let m = MarkerPlacement::new(p.marker_kind, ts);
                let seq = hahn_sequence(&label, tau, Some(&m)).expect("validated");
                writeln!(w, "t_space = {}: {}", format_duration(ts), timeline(&seq)).unwrap();
            }
            writeln!(
                w,
                "marker {} after initialization; τ scanned over {} values",
                format_duration(crate::experiments::MARKER_AFTER_INIT),
                p.tau.0.len()
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    fn cfg(protocol: &str) -> RunConfig {
        parse_config(&format!(
            "[system]\nnu0 = \"2.56 MHz\"\nnu_Q = \"10 kHz\"\n\n{protocol}\n\n[execution]\nseed = 1\n"
        ))
        .unwrap()
    }

    #[test]
    fn hahn_timeline() {
        let text = describe(&cfg("[protocol.hahn]\ntransition = \"center\"\ntau = [\"1 ms\"]"));
        assert!(text.contains("π/2 | 1 ms | π | 1 ms | π/2 | detect"), "{text}");
    }

    #[test]
    fn phase_table_has_one_row_per_step() {
        let text = describe(&cfg("[protocol.phase_cycle]\ntau1 = \"1 ms\"\ntau2 = \"1 ms\"\nphase_steps = 24"));
        let rows = text.lines().skip_while(|l| *l != "k\tφ").skip(1).count();
        assert_eq!(rows, 24, "{text}");
        assert!(text.contains("2π/3 | 1 ms | 2π/3(φ) | 1 ms | 2π/3 | detect"), "{text}");
    }

    #[test]
    fn marker_sits_after_initialization() {
        let text = describe(&cfg(
            "[protocol.tspace]\ntransition = \"satellite\"\nt_space = [\"100 ms\"]\ntau = [\"1 ms\", \"2 ms\"]",
        ));
        assert!(text.contains("5 ms | [light 500 µs] | 100 ms | π/2"), "{text}");
    }
}
