use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use iontweezer::calibrate::{config_hash, field_consistency, four_ion_table, run_sweep, write_atomically, FieldConsistency, SweepSpec};
use iontweezer::crystal::normal_modes;
use iontweezer::drive::GateHamiltonian;
use iontweezer::evolve::{qubit_label, run_gate, PulseSchedule};
use iontweezer::metric::{evaluate_gate, FidelityReport};
use iontweezer::C;
use iontweezer::units::cyclic;

use crate::config::{ConfigError, RunConfig};

/// Output directory bound to one resolved config.
pub struct Output {
    dir: PathBuf,
    hash: String,
    config: RunConfig,
}

#[derive(Serialize)]
struct Document<'a, B: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: B,
}

impl Output {
    pub fn new(dir: &Path, config: &RunConfig) -> anyhow::Result<Self> {
        Ok(Self { dir: dir.to_path_buf(), hash: config_hash(config)?, config: config.clone() })
    }

    fn path(&self, name: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        Ok(self.dir.join(name))
    }

    fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head: Vec<&str> = header.to_vec();
        head.push("config_hash");
        w.write_record(&head)?;
        for mut row in rows {
            row.push(self.hash.clone());
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        write_atomically(&self.path(name)?, &bytes)?;
        Ok(())
    }

    fn json<B: Serialize>(&self, name: &str, command: &str, body: B) -> anyhow::Result<()> {
        let doc = Document { command, config_hash: &self.hash, config: &self.config, body };
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        write_atomically(&self.path(name)?, &bytes)?;
        Ok(())
    }

    fn cache(&self) -> anyhow::Result<PathBuf> {
        self.path("cache")
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn modes(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let trap = cfg.trap();
    let modes = normal_modes(&trap)?;
    let length = trap.coulomb_length();
    let com = modes.com_frequency();
    let n = modes.n_ions();

    out.csv(
        "positions.csv",
        &["ion", "position_coulomb_lengths", "position_um"],
        modes.positions.iter().enumerate().map(|(i, &u)| vec![(i + 1).to_string(), num(u), num(u * length * 1e6)]),
    )?;
    let mut header = vec!["mode".to_string(), "frequency_hz".into(), "frequency_over_com".into()];
    header.extend((1..=n).map(|i| format!("b_ion{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "modes.csv",
        &header,
        modes.frequencies.iter().zip(&modes.vectors).enumerate().map(|(m, (&w, b))| {
            let mut row = vec![m.to_string(), num(cyclic(w)), num(w / com)];
            row.extend(b.iter().map(|&x| num(x)));
            row
        }),
    )?;
    #[derive(Serialize)]
    struct Body {
        files: [&'static str; 2],
        coulomb_length_m: f64,
    }
    out.json("manifest.json", "modes", Body { files: ["positions.csv", "modes.csv"], coulomb_length_m: length })?;
    println!("{} modes written to {}", n, out.dir.display());
    Ok(())
}

pub fn phasespace(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let config = cfg.gate_config()?;
    let modes = normal_modes(&config.trap)?;
    let gate = GateHamiltonian::new(&config, &modes, &cfg.space.cutoffs)?;
    let schedule = PulseSchedule::from_config(&config)?;
    let mut motion = vec![C::new(0.0, 0.0); gate.space().motional_dim()];
    motion[0] = C::new(1.0, 0.0);
    let opts = cfg.options();
    let samples = cfg.phasespace.samples_per_pulse;

    let runs = (0..4)
        .into_par_iter()
        .map(|x| {
            let mut qubits = vec![C::new(0.0, 0.0); 4];
            qubits[x] = C::new(1.0, 0.0);
            run_gate(&gate, &schedule, &qubits, &motion, &opts, samples).with_context(|| format!("propagating initial state |{}⟩", qubit_label(x)))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    #[derive(Serialize)]
    struct StateSummary {
        state: String,
        file: String,
        max_abs_alpha: f64,
        final_alpha: (f64, f64),
        steps: usize,
    }
    let mut summary = Vec::new();
    for (x, run) in runs.iter().enumerate() {
        let label = qubit_label(x);
        let (_, series) = run.trajectory.series.iter().find(|(l, _)| *l == label).context("trajectory missing")?;
        let file = format!("trajectory_{label}.csv");
        out.csv(
            &file,
            &["time_s", "re_alpha", "im_alpha", "qubit_state_label"],
            run.trajectory.times.iter().zip(series).map(|(&t, a)| vec![num(t), num(a.re), num(a.im), label.clone()]),
        )?;
        let last = series.last().copied().unwrap_or_default();
        summary.push(StateSummary {
            state: label.clone(),
            file,
            max_abs_alpha: run.trajectory.max_displacement(&label).unwrap_or(0.0),
            final_alpha: (last.re, last.im),
            steps: run.stats.accepted,
        });
        println!("|{label}⟩  max |α| = {:.4e}", summary[x].max_abs_alpha);
    }
    #[derive(Serialize)]
    struct Body {
        gate_duration_s: f64,
        states: Vec<StateSummary>,
    }
    out.json("manifest.json", "phasespace", Body { gate_duration_s: schedule.total_duration(), states: summary })
}

#[derive(Serialize)]
struct Consistency {
    field: FieldConsistency<f64>,
    simulated_conditional_phase: f64,
    ideal_conditional_phase: f64,
    relative_phase_deviation: f64,
}

pub fn gate(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let config = cfg.gate_config()?;
    let reports = evaluate_gate(&config, &cfg.space.cutoffs, &cfg.space.nbar, &cfg.options())?;
    let field = field_consistency(&config)?;
    let first = &reports[0];
    let consistency = Consistency {
        field,
        simulated_conditional_phase: first.conditional_phase,
        ideal_conditional_phase: first.ideal_conditional_phase,
        relative_phase_deviation: ((first.conditional_phase - first.ideal_conditional_phase) / first.ideal_conditional_phase).abs(),
    };
    out.csv(
        "gate.csv",
        &["nbar", "fidelity", "infidelity_x1e4", "conditional_phase", "ideal_conditional_phase", "g1_re", "g1_im", "g2", "choi_min_eigenvalue"],
        reports.iter().map(|r| {
            vec![
                join(&r.nbar),
                num(r.fidelity),
                num(r.infidelity * 1e4),
                num(r.conditional_phase),
                num(r.ideal_conditional_phase),
                num(r.g1.0),
                num(r.g1.1),
                num(r.g2),
                num(r.choi_min_eigenvalue),
            ]
        }),
    )?;
    for r in &reports {
        println!("nbar {}  F = {:.6}  (1-F)x1e4 = {:.3}  phi_c = {:.5}", join(&r.nbar), r.fidelity, r.infidelity * 1e4, r.conditional_phase);
    }
    println!(
        "field {:.4e} V/m; gamma^2/delta^2 = pi/4 needs {:.4e} V/m; phase deviation from effective model {:.2e}",
        consistency.field.configured_field, consistency.field.quarter_pi_field, consistency.relative_phase_deviation
    );
    #[derive(Serialize)]
    struct Body<'a> {
        reports: &'a [FidelityReport<f64>],
        consistency: Consistency,
    }
    out.json("report.json", "gate", Body { reports: &reports, consistency })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn sweep(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let section = cfg.sweep.as_ref().ok_or_else(|| ConfigError("config has no [sweep] section".into()))?;
    let (axis, scale) = cfg.sweep_axis().expect("sweep section present");
    let spec = SweepSpec {
        axis,
        grid: section.grid.iter().map(|v| v * scale).collect(),
        baseline: cfg.gate_config()?,
        cutoffs: cfg.space.cutoffs.clone(),
        nbars: cfg.space.nbar.clone(),
        targets: section.targets.clone(),
        correct_drive_frequency: cfg.gate.correct_drive_frequency,
        options: cfg.options(),
    };
    spec.validate().map_err(|e| ConfigError(e.to_string()))?;
    let mut result = run_sweep(&spec, Some(&out.cache()?))?;
    for p in &mut result.points {
        p.value /= scale;
    }
    for c in &mut result.crossings {
        c.value = c.value.map(|v| v / scale);
    }

    let mut rows = Vec::new();
    for (p, &axis_value) in result.points.iter().zip(&section.grid) {
        let hash = p.config_hash.clone().unwrap_or_default();
        match &p.error {
            Some(e) => rows.push(vec![axis_value.to_string(), String::new(), String::new(), String::new(), String::new(), hash, e.clone()]),
            None => rows.extend(p.reports.iter().map(|r| {
                vec![axis_value.to_string(), join(&r.nbar), num(r.fidelity), num(r.conditional_phase), num(r.infidelity * 1e4), hash.clone(), String::new()]
            })),
        }
    }
    out.csv("sweep.csv", &["axis", "nbar", "fidelity", "conditional_phase", "infidelity_x1e4", "point_hash", "error"], rows)?;
    for c in &result.crossings {
        match c.value {
            Some(v) => println!("F >= {} (nbar {}) from {:?} = {}", c.target, join(&c.nbar), section.axis, v),
            None => println!("F >= {} (nbar {}) not reached on the grid", c.target, join(&c.nbar)),
        }
    }
    let failed = result.points.iter().filter(|p| p.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} sweep point(s) failed; see the error column");
    }
    out.json("sweep.json", "sweep", &result)
}

pub fn table4(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let spec = cfg.table_spec()?;
    let rows = four_ion_table(&spec, Some(&out.cache()?))?;
    out.csv(
        "table1.csv",
        &["pair", "infidelity_x1e4", "omega_com_minus_mu_khz", "fidelity", "convergence_change"],
        rows.iter().map(|r| {
            vec![
                format!("({},{})", r.pair.0, r.pair.1),
                num(r.infidelity_x1e4),
                num(r.omega_com_minus_mu_khz),
                num(r.fidelity),
                r.convergence_change.map(num).unwrap_or_default(),
            ]
        }),
    )?;
    for r in &rows {
        println!("pair ({},{})  (1-F)x1e4 = {:.3}  omega_com - mu = {:.4} kHz", r.pair.0, r.pair.1, r.infidelity_x1e4, r.omega_com_minus_mu_khz);
    }
    #[derive(Serialize)]
    struct Body<'a> {
        pairs: &'a [iontweezer::calibrate::PairStudy<f64>],
    }
    out.json("table1.json", "table4", Body { pairs: &rows })
}
