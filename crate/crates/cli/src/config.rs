use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use iontweezer::calibrate::{field_for_gate_condition, with_corrected_drive, FieldRule, SweepAxis, TableSpec};
use iontweezer::crystal::TrapSpec;
use iontweezer::drive::GateConfig;
use iontweezer::evolve::PropagateOptions;
use iontweezer::units::{angular, AMU, YB171_AMU};

/// Bad or inconsistent user input; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

fn default_mass() -> f64 {
    YB171_AMU
}
fn default_pair() -> [usize; 2] {
    [1, 2]
}
fn default_detuning() -> f64 {
    -1e3
}
fn default_ramp() -> f64 {
    iontweezer::drive::DEFAULT_RAMP_FRACTION
}
fn default_cutoffs() -> Vec<usize> {
    vec![20]
}
fn default_nbar() -> Vec<Vec<f64>> {
    vec![vec![0.0]]
}
fn default_tol() -> f64 {
    1e-8
}
fn default_samples() -> usize {
    200
}
fn default_targets() -> Vec<f64> {
    vec![0.99, 0.999]
}
fn default_raise() -> usize {
    2
}
fn default_limit() -> f64 {
    1e-5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trap: TrapSection,
    pub gate: GateSection,
    #[serde(default)]
    pub space: SpaceSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub phasespace: PhaseSpaceSection,
    pub sweep: Option<SweepSection>,
    pub table: Option<TableSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub n_ions: usize,
    pub axial_frequency_hz: f64,
    #[serde(default = "default_mass")]
    pub ion_mass_amu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    /// `field_amplitude_v_per_m` as given.
    Configured,
    QuarterPi,
    /// Field reproducing `target_conditional_phase_rad`.
    TargetPhase,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    /// 1-based chain positions.
    #[serde(default = "default_pair")]
    pub pair: [usize; 2],
    pub tweezer_frequency_hz: Option<f64>,
    /// Tweezer frequency in units of the axial frequency.
    pub tweezer_ratio: Option<f64>,
    #[serde(default = "default_detuning")]
    pub detuning_hz: f64,
    pub field_source: FieldSource,
    pub field_amplitude_v_per_m: Option<f64>,
    pub target_conditional_phase_rad: Option<f64>,
    #[serde(default)]
    pub correct_drive_frequency: bool,
    pub drive_frequency_hz: Option<f64>,
    #[serde(default = "default_ramp")]
    pub ramp_fraction: f64,
    pub field_on: Option<Vec<bool>>,
    pub tweezer_on: Option<Vec<bool>>,
    /// π-pulses on (qubit i, qubit j) after each pulse.
    pub echo: Option<Vec<[bool; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    /// Mean occupations, one vector per thermal state, one entry per retained mode.
    #[serde(default = "default_nbar")]
    pub nbar: Vec<Vec<f64>>,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self { cutoffs: default_cutoffs(), nbar: default_nbar() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self { tol: default_tol() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpaceSection {
    #[serde(default = "default_samples")]
    pub samples_per_pulse: usize,
}

impl Default for PhaseSpaceSection {
    fn default() -> Self {
        Self { samples_per_pulse: default_samples() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    TweezerRatio,
    TweezerFrequencyHz,
    DetuningHz,
    Nbar,
    FieldAmplitudeVPerM,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: AxisName,
    pub grid: Vec<f64>,
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSection {
    pub tweezer_frequency_hz: f64,
    pub cutoffs: Vec<usize>,
    #[serde(default = "default_raise")]
    pub convergence_raise: usize,
    #[serde(default = "default_limit")]
    pub convergence_limit: f64,
}

const PRESETS: [(&str, &str); 6] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3_delta1kHz", include_str!("../presets/fig3_delta1kHz.toml")),
    ("fig3_delta2kHz", include_str!("../presets/fig3_delta2kHz.toml")),
    ("fig3_twomode", include_str!("../presets/fig3_twomode.toml")),
    ("table1", include_str!("../presets/table1.toml")),
    ("table1_254kHz", include_str!("../presets/table1_254kHz.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// A file path, or the name of a bundled preset.
    pub fn load(source: &str) -> Result<Self, ConfigError> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            return Self::parse(&text);
        }
        match PRESETS.iter().find(|(n, _)| *n == source) {
            Some((_, text)) => Self::parse(text),
            None => bad(format!("{source} is neither a config file nor a preset ({})", preset_names().join(", "))),
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let t = &self.trap;
        if t.n_ions == 0 || t.n_ions > 8 {
            return bad("trap.n_ions must be between 1 and 8");
        }
        if !(t.axial_frequency_hz > 0.0 && t.axial_frequency_hz.is_finite()) {
            return bad("trap.axial_frequency_hz must be positive");
        }
        if !(t.ion_mass_amu > 0.0 && t.ion_mass_amu.is_finite()) {
            return bad("trap.ion_mass_amu must be positive");
        }
        let g = &self.gate;
        if g.tweezer_frequency_hz.is_some() == g.tweezer_ratio.is_some() {
            return bad("give exactly one of gate.tweezer_frequency_hz and gate.tweezer_ratio");
        }
        if t.n_ions > 1 && (g.pair[0] == 0 || g.pair[1] == 0 || g.pair[0] == g.pair[1] || g.pair[0].max(g.pair[1]) > t.n_ions) {
            return bad(format!("gate.pair {:?} is not two distinct ions of 1..={}", g.pair, t.n_ions));
        }
        match g.field_source {
            FieldSource::Configured if g.field_amplitude_v_per_m.is_none() => return bad("field_source = \"configured\" needs gate.field_amplitude_v_per_m"),
            FieldSource::TargetPhase if g.target_conditional_phase_rad.is_none() => return bad("field_source = \"target_phase\" needs gate.target_conditional_phase_rad"),
            _ => {}
        }
        if g.correct_drive_frequency && g.drive_frequency_hz.is_some() {
            return bad("gate.drive_frequency_hz and gate.correct_drive_frequency are exclusive");
        }
        let s = &self.space;
        if s.cutoffs.is_empty() || s.cutoffs.len() > t.n_ions {
            return bad(format!("space.cutoffs needs between 1 and {} entries", t.n_ions));
        }
        if s.nbar.is_empty() || s.nbar.iter().any(|v| v.len() != s.cutoffs.len() || v.iter().any(|&x| !(x >= 0.0 && x.is_finite()))) {
            return bad("space.nbar must hold nonnegative vectors, one entry per cutoff");
        }
        if let Some(sw) = &self.sweep {
            if sw.grid.is_empty() {
                return bad("sweep.grid is empty");
            }
        }
        if let Some(tb) = &self.table {
            if tb.cutoffs.len() != t.n_ions {
                return bad("table.cutoffs needs one entry per ion");
            }
        }
        Ok(())
    }

    pub fn trap(&self) -> TrapSpec<f64> {
        TrapSpec::new(self.trap.n_ions, self.trap.ion_mass_amu * AMU, angular(self.trap.axial_frequency_hz))
    }

    pub fn tweezer_frequency(&self) -> f64 {
        match (self.gate.tweezer_frequency_hz, self.gate.tweezer_ratio) {
            (Some(hz), _) => angular(hz),
            (None, Some(r)) => r * angular(self.trap.axial_frequency_hz),
            (None, None) => 0.0,
        }
    }

    pub fn options(&self) -> PropagateOptions<f64> {
        PropagateOptions::with_tol(self.numerics.tol)
    }

    /// Gate configuration with the field and μ resolved.
    pub fn gate_config(&self) -> anyhow::Result<GateConfig<f64>> {
        let g = &self.gate;
        if self.trap.n_ions < 2 {
            return Err(ConfigError("a gate needs at least two ions".into()).into());
        }
        let pair = (g.pair[0] - 1, g.pair[1] - 1);
        let mut c = GateConfig::new(self.trap(), pair, self.tweezer_frequency(), g.field_amplitude_v_per_m.unwrap_or(0.0), angular(g.detuning_hz));
        c.ramp_fraction = g.ramp_fraction;
        if let Some(m) = &g.field_on {
            c.field_on_mask = m.clone();
        }
        if let Some(m) = &g.tweezer_on {
            c.tweezer_on_mask = m.clone();
        }
        if let Some(e) = &g.echo {
            c.echo_schedule = e.iter().map(|p| (p[0], p[1])).collect();
        }
        c.pulse_count = c.field_on_mask.len();
        c.validate().map_err(|e| ConfigError(e.to_string()))?;
        c.field_amplitude = match g.field_source {
            FieldSource::Configured => c.field_amplitude,
            FieldSource::QuarterPi => field_for_gate_condition(&c, FieldRule::QuarterPi)?,
            FieldSource::TargetPhase => field_for_gate_condition(&c, FieldRule::TargetConditionalPhase(g.target_conditional_phase_rad.unwrap_or(0.0)))?,
        };
        if let Some(hz) = g.drive_frequency_hz {
            c.drive_frequency = angular(hz);
        } else if g.correct_drive_frequency {
            c = with_corrected_drive(&c)?;
        }
        Ok(c)
    }

    /// Core axis and the factor converting a grid value into it.
    pub fn sweep_axis(&self) -> Option<(SweepAxis, f64)> {
        self.sweep.as_ref().map(|s| match s.axis {
            AxisName::TweezerRatio => (SweepAxis::TweezerFrequency, angular(self.trap.axial_frequency_hz)),
            AxisName::TweezerFrequencyHz => (SweepAxis::TweezerFrequency, angular(1.0)),
            AxisName::DetuningHz => (SweepAxis::Detuning, angular(1.0)),
            AxisName::Nbar => (SweepAxis::Nbar, 1.0),
            AxisName::FieldAmplitudeVPerM => (SweepAxis::FieldAmplitude, 1.0),
        })
    }

    pub fn table_spec(&self) -> anyhow::Result<TableSpec<f64>> {
        let Some(tb) = &self.table else {
            return Err(ConfigError("config has no [table] section".into()).into());
        };
        let base = self.gate_config()?;
        let mut spec = TableSpec::four_ion(angular(tb.tweezer_frequency_hz), base.detuning, base.field_amplitude, tb.cutoffs.clone());
        spec.trap = base.trap;
        spec.convergence_raise = tb.convergence_raise;
        spec.convergence_limit = tb.convergence_limit;
        spec.options = self.options();
        Ok(spec)
    }
}
