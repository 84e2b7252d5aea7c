//! Gate design: field amplitudes, drive-frequency corrections, parameter
//! sweeps and the four-ion pair table.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crystal::{drive_frequency_correction_for, normal_modes, TrapSpec, TweezerPerturbation};
use crate::drive::{field_from_gamma, gamma_from_field, GateConfig};
use crate::error::{Error, Result};
use crate::evolve::PropagateOptions;
use crate::metric::{evaluate_gate, ideal_gate, FidelityReport};
use crate::scalar::Real;
use crate::units;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRule<T> {
    /// `γ²/δ² = π/4`
    QuarterPi,
    /// Field giving the requested conditional phase of the ideal gate.
    TargetConditionalPhase(T),
}

/// Field amplitude (V/m) for the detuning, trap and pulse layout of `config`.
pub fn field_for_gate_condition<T: Real>(config: &GateConfig<T>, rule: FieldRule<T>) -> Result<T> {
    let delta = config.detuning;
    if delta == T::zero() || !delta.is_finite() {
        return Err(Error::InvalidParameter("detuning must be nonzero".into()));
    }
    match rule {
        FieldRule::QuarterPi => Ok(field_from_gamma(delta.abs() * T::PI().sqrt() / T::lit(2.0), &config.trap)),
        FieldRule::TargetConditionalPhase(phi) => {
            if phi == T::zero() {
                return Ok(T::zero());
            }
            let residual = |e0: T| -> Result<T> {
                let mut c = config.clone();
                c.field_amplitude = e0;
                Ok(ideal_gate(&c)?.unwrapped_conditional_phase() - phi)
            };
            let lo = T::zero();
            let f_lo = -phi;
            let mut hi = field_for_gate_condition(config, FieldRule::QuarterPi)?;
            let mut f_hi = residual(hi)?;
            let mut expansions = 0;
            while f_hi.signum() == f_lo.signum() {
                if expansions == 40 || !f_hi.is_finite() {
                    return Err(Error::NotBracketed { lo: lo.as_f64(), hi: hi.as_f64(), f_lo: f_lo.as_f64(), f_hi: f_hi.as_f64() });
                }
                hi = hi * T::lit(2.0);
                f_hi = residual(hi)?;
                expansions += 1;
            }
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = (a + b) / T::lit(2.0);
                if m <= a || m >= b {
                    break;
                }
                let fm = residual(m)?;
                if fm == T::zero() {
                    return Ok(m);
                }
                if fm.signum() == f_lo.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            Ok((a + b) / T::lit(2.0))
        }
    }
}

/// μ tuned `δ` away from the COM branch of the crystal with the tweezers in the mixed spin configuration.
pub fn corrected_drive_frequency<T: Real>(trap: &TrapSpec<T>, pair: (usize, usize), tweezer_frequency: T, detuning: T) -> Result<T> {
    let modes = normal_modes(trap)?;
    if tweezer_frequency == T::zero() {
        return Ok(modes.com_frequency() + detuning);
    }
    let pert = TweezerPerturbation::new(tweezer_frequency, pair, (1, -1));
    Ok(modes.com_frequency() - drive_frequency_correction_for(&modes, &pert)? + detuning)
}

/// `config` with μ replaced by [`corrected_drive_frequency`].
pub fn with_corrected_drive<T: Real>(config: &GateConfig<T>) -> Result<GateConfig<T>> {
    let mut c = config.clone();
    c.drive_frequency = corrected_drive_frequency(&c.trap, c.pair, c.tweezer_frequency, c.detuning)?;
    Ok(c)
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn config_hash<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.partial", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluationKey<'a, T> {
    config: &'a GateConfig<T>,
    cutoffs: &'a [usize],
    nbars: &'a [Vec<T>],
    tol: T,
    atol: T,
    max_step: Option<T>,
}

/// [`evaluate_gate`] memoized on disk under the hash of its inputs.
pub fn evaluate_cached<T>(config: &GateConfig<T>, cutoffs: &[usize], nbars: &[Vec<T>], opts: &PropagateOptions<T>, cache: Option<&Path>) -> Result<(String, Vec<FidelityReport<T>>)>
where
    T: Real + Serialize + DeserializeOwned,
{
    let key = EvaluationKey { config, cutoffs, nbars, tol: opts.tol, atol: opts.atol, max_step: opts.max_step };
    let hash = config_hash(&key)?;
    let file = cache.map(|dir| dir.join(format!("{hash}.json")));
    if let Some(file) = &file {
        if let Ok(text) = fs::read_to_string(file) {
            if let Ok(reports) = serde_json::from_str::<Vec<FidelityReport<T>>>(&text) {
                log::debug!("cache hit {hash}");
                return Ok((hash, reports));
            }
            log::warn!("ignoring unreadable cache entry {}", file.display());
        }
    }
    let reports = evaluate_gate(config, cutoffs, nbars, opts)?;
    if let (Some(file), Some(dir)) = (&file, cache) {
        fs::create_dir_all(dir)?;
        write_atomically(file, &serde_json::to_vec(&reports)?)?;
    }
    Ok((hash, reports))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// rad/s
    TweezerFrequency,
    /// rad/s, signed
    Detuning,
    /// Same mean occupation on every retained mode.
    Nbar,
    /// V/m
    FieldAmplitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec<T> {
    pub axis: SweepAxis,
    pub grid: Vec<T>,
    pub baseline: GateConfig<T>,
    pub cutoffs: Vec<usize>,
    /// Thermal occupations evaluated at every point; ignored on the `nbar` axis.
    pub nbars: Vec<Vec<T>>,
    /// Fidelity levels whose crossings are reported.
    pub targets: Vec<T>,
    /// Recompute μ from the mixed-configuration COM branch at every point.
    pub correct_drive_frequency: bool,
    pub options: PropagateOptions<T>,
}

impl<T: Real> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sweep grid has non-finite values".into()));
        }
        let up = self.grid.windows(2).all(|w| w[1] > w[0]);
        let down = self.grid.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::InvalidParameter("sweep grid must be strictly monotone".into()));
        }
        if self.axis != SweepAxis::Nbar && self.nbars.is_empty() {
            return Err(Error::InvalidParameter("no thermal occupation to evaluate".into()));
        }
        if self.targets.iter().any(|&t| !(t > T::zero() && t < T::one())) {
            return Err(Error::InvalidParameter("fidelity targets must lie in (0, 1)".into()));
        }
        self.options.validate()?;
        self.baseline.validate()
    }

    /// Gate configuration and thermal occupations of one grid value.
    pub fn point(&self, value: T) -> Result<(GateConfig<T>, Vec<Vec<T>>)> {
        let mut c = self.baseline.clone();
        let mut nbars = self.nbars.clone();
        match self.axis {
            SweepAxis::TweezerFrequency => c.tweezer_frequency = value,
            SweepAxis::Detuning => {
                c.detuning = value;
                c.drive_frequency = c.trap.axial_frequency + value;
            }
            SweepAxis::FieldAmplitude => c.field_amplitude = value,
            SweepAxis::Nbar => nbars = vec![vec![value; self.cutoffs.len()]],
        }
        if self.correct_drive_frequency {
            c = with_corrected_drive(&c)?;
        }
        c.validate()?;
        Ok((c, nbars))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint<T> {
    pub value: T,
    pub config_hash: Option<String>,
    pub reports: Vec<FidelityReport<T>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing<T> {
    pub target: T,
    pub nbar: Vec<T>,
    /// Smallest grid value from which every later point meets the target.
    pub value: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<T> {
    pub spec_hash: String,
    pub spec: SweepSpec<T>,
    pub points: Vec<SweepPoint<T>>,
    pub crossings: Vec<Crossing<T>>,
}

/// Evaluates every grid point in parallel; a failing point records its error and the sweep goes on.
pub fn run_sweep<T>(spec: &SweepSpec<T>, cache: Option<&Path>) -> Result<SweepResult<T>>
where
    T: Real + Serialize + DeserializeOwned,
{
    spec.validate()?;
    let points: Vec<SweepPoint<T>> = spec
        .grid
        .par_iter()
        .map(|&value| {
            let outcome = spec.point(value).and_then(|(config, nbars)| evaluate_cached(&config, &spec.cutoffs, &nbars, &spec.options, cache));
            match outcome {
                Ok((hash, reports)) => SweepPoint { value, config_hash: Some(hash), reports, error: None },
                Err(e) => {
                    log::warn!("sweep point {value} failed: {e}");
                    SweepPoint { value, config_hash: None, reports: Vec::new(), error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let n_series = if spec.axis == SweepAxis::Nbar { 1 } else { spec.nbars.len() };
    let mut crossings = Vec::new();
    for &target in &spec.targets {
        for series in 0..n_series {
            let nbar = if spec.axis == SweepAxis::Nbar { Vec::new() } else { spec.nbars[series].clone() };
            crossings.push(Crossing { target, nbar, value: crossing(&points, series, target) });
        }
    }
    Ok(SweepResult { spec_hash: config_hash(spec)?, spec: spec.clone(), points, crossings })
}

/// Smallest axis value at and above which every point of a series reaches `target`.
pub fn crossing<T: Real>(points: &[SweepPoint<T>], series: usize, target: T) -> Option<T> {
    let mut order: Vec<&SweepPoint<T>> = points.iter().collect();
    order.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
    let meets = |p: &SweepPoint<T>| p.reports.get(series).map_or(false, |r| r.fidelity >= target);
    let mut found = None;
    for p in order.iter().rev() {
        if meets(p) {
            found = Some(p.value);
        } else {
            break;
        }
    }
    found
}

/// One row per point and thermal occupation.
pub fn write_sweep_csv<T: Real, W: std::io::Write>(result: &SweepResult<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis", "nbar", "fidelity", "conditional_phase", "infidelity_x1e4", "config_hash", "error"])?;
    for p in &result.points {
        let hash = p.config_hash.clone().unwrap_or_default();
        if let Some(err) = &p.error {
            w.write_record([p.value.to_string(), String::new(), String::new(), String::new(), String::new(), hash, err.clone()])?;
            continue;
        }
        for r in &p.reports {
            let nbar = r.nbar.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
            w.write_record([
                p.value.to_string(),
                nbar,
                r.fidelity.to_string(),
                r.conditional_phase.to_string(),
                (r.infidelity * T::lit(1e4)).to_string(),
                hash.clone(),
                String::new(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pairs of a four-ion chain, 0-based.
pub const FOUR_ION_PAIRS: [(usize, usize); 4] = [(0, 1), (0, 2), (0, 3), (1, 2)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSpec<T> {
    pub trap: TrapSpec<T>,
    /// rad/s
    pub tweezer_frequency: T,
    /// rad/s, signed
    pub detuning: T,
    /// V/m
    pub field_amplitude: T,
    /// One cutoff per axial mode, lowest frequency first.
    pub cutoffs: Vec<usize>,
    /// Cutoff increase for the convergence rerun; 0 skips it.
    pub convergence_raise: usize,
    pub convergence_limit: T,
    pub pairs: Vec<(usize, usize)>,
    pub options: PropagateOptions<T>,
}

impl<T: Real> TableSpec<T> {
    pub fn four_ion(tweezer_frequency: T, detuning: T, field_amplitude: T, cutoffs: Vec<usize>) -> Self {
        Self {
            trap: TrapSpec::ytterbium(4, T::lit(units::angular(1e6))),
            tweezer_frequency,
            detuning,
            field_amplitude,
            cutoffs,
            convergence_raise: 2,
            convergence_limit: T::lit(1e-5),
            pairs: FOUR_ION_PAIRS.to_vec(),
            options: PropagateOptions::with_tol(T::lit(1e-8)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        if self.cutoffs.len() != self.trap.n_ions {
            return Err(Error::InvalidParameter(format!("{} cutoffs given for {} axial modes", self.cutoffs.len(), self.trap.n_ions)));
        }
        if self.pairs.is_empty() {
            return Err(Error::InvalidParameter("no ion pairs requested".into()));
        }
        self.options.validate()
    }

    pub fn gate(&self, pair: (usize, usize)) -> Result<GateConfig<T>> {
        let c = GateConfig::new(self.trap.clone(), pair, self.tweezer_frequency, self.field_amplitude, self.detuning);
        let c = with_corrected_drive(&c)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStudy<T> {
    /// 1-based chain positions.
    pub pair: (usize, usize),
    /// rad/s
    pub drive_frequency: T,
    pub omega_com_minus_mu_khz: T,
    pub fidelity: T,
    pub infidelity_x1e4: T,
    pub cutoffs: Vec<usize>,
    /// `|ΔF̄|` after raising every cutoff, when checked.
    pub convergence_change: Option<T>,
    pub config_hash: String,
    pub report: FidelityReport<T>,
}

/// Ground-state gate on every requested pair with all axial modes and the corrected μ.
pub fn four_ion_table<T>(spec: &TableSpec<T>, cache: Option<&Path>) -> Result<Vec<PairStudy<T>>>
where
    T: Real + Serialize + DeserializeOwned,
{
    spec.validate()?;
    spec.pairs.par_iter().map(|&pair| pair_study(spec, pair, cache)).collect()
}

pub fn pair_study<T>(spec: &TableSpec<T>, pair: (usize, usize), cache: Option<&Path>) -> Result<PairStudy<T>>
where
    T: Real + Serialize + DeserializeOwned,
{
    let config = spec.gate(pair)?;
    let ground = vec![vec![T::zero(); spec.cutoffs.len()]];
    let (hash, reports) = evaluate_cached(&config, &spec.cutoffs, &ground, &spec.options, cache)?;
    let report = reports.into_iter().next().ok_or_else(|| Error::InvalidParameter("no report produced".into()))?;
    let convergence_change = if spec.convergence_raise > 0 {
        let raised: Vec<usize> = spec.cutoffs.iter().map(|c| c + spec.convergence_raise).collect();
        let (_, again) = evaluate_cached(&config, &raised, &ground, &spec.options, cache)?;
        let change = (again[0].fidelity - report.fidelity).abs();
        if change > spec.convergence_limit {
            return Err(Error::NotConverged { raise: spec.convergence_raise, change: change.as_f64(), limit: spec.convergence_limit.as_f64() });
        }
        Some(change)
    } else {
        None
    };
    let khz = T::lit(units::angular(1e3));
    Ok(PairStudy {
        pair: (pair.0 + 1, pair.1 + 1),
        drive_frequency: config.drive_frequency,
        omega_com_minus_mu_khz: (config.trap.axial_frequency - config.drive_frequency) / khz,
        fidelity: report.fidelity,
        infidelity_x1e4: report.infidelity * T::lit(1e4),
        cutoffs: spec.cutoffs.clone(),
        convergence_change,
        config_hash: hash,
        report,
    })
}

/// Field-calibration bookkeeping at one operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConsistency<T> {
    /// V/m
    pub quarter_pi_field: T,
    /// V/m
    pub configured_field: T,
    pub field_ratio: T,
    /// rad/s
    pub configured_gamma: T,
    pub configured_gamma_sq_over_delta_sq: T,
    pub ideal_conditional_phase: T,
}

pub fn field_consistency<T: Real>(config: &GateConfig<T>) -> Result<FieldConsistency<T>> {
    let quarter_pi_field = field_for_gate_condition(config, FieldRule::QuarterPi)?;
    let gamma = gamma_from_field(config.field_amplitude, &config.trap);
    let ratio = quarter_pi_field / config.field_amplitude;
    if (ratio - T::one()).abs() > T::lit(0.01) {
        log::warn!(
            "configured field {} V/m differs from the γ²/δ² = π/4 field {} V/m by a factor {}",
            config.field_amplitude,
            quarter_pi_field,
            ratio
        );
    }
    Ok(FieldConsistency {
        quarter_pi_field,
        configured_field: config.field_amplitude,
        field_ratio: ratio,
        configured_gamma: gamma,
        configured_gamma_sq_over_delta_sq: (gamma / config.detuning).powi(2),
        ideal_conditional_phase: ideal_gate(config)?.conditional_phase(),
    })
}
