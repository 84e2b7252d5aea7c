//! Gate Hamiltonian in the phonon interaction picture.
//!
//! The tweezer term couples every pair of retained modes through
//! `Σ_{mn} c_mn X_m(t) X_n(t)` with `X_m = a_m e^{−iω_m t} + a_m† e^{iω_m t}`
//! and `c_mn = ω_tw²/(4√(ω_m ω_n)) (b_mi b_ni σ_z^i + b_mj b_nj σ_z^j)`,
//! written in normal order. The oscillating field drives the COM mode with
//! `2γ f(t) cos(μt) X_com(t)`. No rotating-wave approximation is made.

use serde::{Deserialize, Serialize};

use crate::crystal::{com_shift, CrystalModes, TrapSpec};
use crate::error::{Error, Result};
use crate::evolve::{Hamiltonian, TermHamiltonian};
use crate::hilbert::{embed, ladder_operators, CsrMatrix, Factor, SpaceSpec, TermSet};
use crate::scalar::{cis, cz, Real, C};
use crate::units;

pub const DEFAULT_RAMP_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateConfig<T> {
    pub trap: TrapSpec<T>,
    /// 0-based chain positions of the addressed ions.
    pub pair: (usize, usize),
    /// rad/s
    pub tweezer_frequency: T,
    /// V/m
    pub field_amplitude: T,
    /// Signed `μ − ω_com` used for the pulse length and the effective model, rad/s.
    pub detuning: T,
    /// μ, rad/s. Equals `ω_com + detuning` unless corrected for the tweezer shift.
    pub drive_frequency: T,
    pub pulse_count: usize,
    pub field_on_mask: Vec<bool>,
    pub tweezer_on_mask: Vec<bool>,
    /// π-pulses on (qubit i, qubit j) at the end of each pulse.
    pub echo_schedule: Vec<(bool, bool)>,
    pub ramp_fraction: T,
}

impl<T: Real> GateConfig<T> {
    pub fn new(trap: TrapSpec<T>, pair: (usize, usize), tweezer_frequency: T, field_amplitude: T, detuning: T) -> Self {
        let drive_frequency = trap.axial_frequency + detuning;
        Self {
            trap,
            pair,
            tweezer_frequency,
            field_amplitude,
            detuning,
            drive_frequency,
            pulse_count: 4,
            field_on_mask: vec![true, false, true, false],
            tweezer_on_mask: vec![true; 4],
            echo_schedule: vec![(false, true), (true, false), (false, true), (true, false)],
            ramp_fraction: T::lit(DEFAULT_RAMP_FRACTION),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        let (i, j) = self.pair;
        let n = self.trap.n_ions;
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidParameter(format!("pair ({i}, {j}) invalid for {n} ions")));
        }
        if !(self.tweezer_frequency >= T::zero()) || !(self.field_amplitude >= T::zero()) {
            return Err(Error::InvalidParameter("tweezer frequency and field amplitude must be non-negative".into()));
        }
        if !self.detuning.is_finite() || self.detuning == T::zero() {
            return Err(Error::InvalidParameter("detuning must be finite and nonzero".into()));
        }
        if self.detuning.abs() > T::lit(0.1) * self.trap.axial_frequency {
            return Err(Error::InvalidParameter("detuning must be small compared with the COM frequency".into()));
        }
        if !(self.drive_frequency > T::zero()) {
            return Err(Error::InvalidParameter("drive frequency must be positive".into()));
        }
        if !(self.ramp_fraction >= T::zero() && self.ramp_fraction <= T::lit(0.25)) {
            return Err(Error::InvalidParameter(format!("ramp fraction {} outside [0, 0.25]", self.ramp_fraction)));
        }
        let p = self.pulse_count;
        if p == 0 || self.field_on_mask.len() != p || self.tweezer_on_mask.len() != p || self.echo_schedule.len() != p {
            return Err(Error::InvalidParameter(format!("masks and echo schedule must have {p} entries")));
        }
        Ok(())
    }

    /// τ = 2π/|δ|
    pub fn pulse_duration(&self) -> T {
        T::TAU() / self.detuning.abs()
    }

    pub fn ramp_duration(&self) -> T {
        self.ramp_fraction * self.pulse_duration()
    }

    /// Window of one pulse: τ plus one ramp length. The envelope area is τ.
    pub fn pulse_window(&self) -> T {
        self.pulse_duration() + self.ramp_duration()
    }

    pub fn total_duration(&self) -> T {
        self.pulse_window() * T::from_usize_lossy(self.pulse_count)
    }

    pub fn gamma(&self) -> T {
        gamma_from_field(self.field_amplitude, &self.trap)
    }

    /// Envelope at time `t` measured from the start of a pulse.
    pub fn envelope(&self, t: T) -> T {
        envelope(t, self.pulse_window(), self.ramp_duration())
    }
}

/// γ = e E₀ √(ħ/(2Mω_com)) / (2ħ), in rad/s.
pub fn gamma_from_field<T: Real>(field_amplitude: T, trap: &TrapSpec<T>) -> T {
    let e = trap.charge.as_f64();
    let m = trap.ion_mass.as_f64();
    let w = trap.axial_frequency.as_f64();
    let l = (units::HBAR / (2.0 * m * w)).sqrt();
    T::lit(e * l / (2.0 * units::HBAR)) * field_amplitude
}

/// Inverse of [`gamma_from_field`].
pub fn field_from_gamma<T: Real>(gamma: T, trap: &TrapSpec<T>) -> T {
    gamma / gamma_from_field(T::one(), trap)
}

/// sin² rise over `ramp`, flat top, mirrored fall; zero outside `[0, window]`.
pub fn envelope<T: Real>(t: T, window: T, ramp: T) -> T {
    if t < T::zero() || t > window {
        return T::zero();
    }
    if ramp <= T::zero() {
        return T::one();
    }
    let edge = t.min(window - t);
    if edge >= ramp {
        T::one()
    } else {
        let s = (T::FRAC_PI_2() * edge / ramp).sin();
        s * s
    }
}

/// Rates of the effective qubit Hamiltonian `zz σ_zσ_z + w₊ Ŵ₊ + w₋ Ŵ₋`
/// with `Ŵ₊ = |11⟩⟨11|` and `Ŵ₋ = |00⟩⟨00|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel<T> {
    pub gamma: T,
    pub detuning: T,
    pub g_plus: T,
    pub g_minus: T,
    pub zz_rate: T,
    /// −γ²/(g₊ − δ)
    pub w_plus_rate: T,
    /// −γ²/(g₋ − δ)
    pub w_minus_rate: T,
}

impl<T: Real> EffectiveModel<T> {
    /// Energy `−γ²/(g_x − δ)` of two-qubit basis state `x` (label `|q_i q_j⟩`).
    pub fn state_energy(&self, x: usize) -> T {
        let g2 = self.gamma * self.gamma;
        match x & 3 {
            0 => self.w_minus_rate,
            3 => self.w_plus_rate,
            _ => g2 / self.detuning,
        }
    }

    /// Diagonal of `zz σ_zσ_z + w₊ Ŵ₊ + w₋ Ŵ₋`.
    pub fn diagonal(&self) -> [T; 4] {
        let zz = self.zz_rate;
        [zz + self.w_minus_rate, -zz, -zz, zz + self.w_plus_rate]
    }
}

pub fn effective_model<T: Real>(config: &GateConfig<T>) -> Result<EffectiveModel<T>> {
    config.validate()?;
    let gamma = config.gamma();
    let delta = config.detuning;
    let n = config.trap.n_ions;
    let w = config.trap.axial_frequency;
    let wt = config.tweezer_frequency;
    let g_plus = com_shift(w, wt, n, T::lit(2.0));
    let g_minus = com_shift(w, wt, n, T::lit(-2.0));
    if !g_minus.is_finite() {
        return Err(Error::UnstableMode { mode: 0, eigenvalue: (w * w - T::lit(2.0) * wt * wt / T::from_usize_lossy(n)).as_f64() });
    }
    for g in [g_plus, g_minus] {
        if (g - delta).abs() <= T::lit(1e-9) * delta.abs() {
            return Err(Error::Resonance { detuning: delta.as_f64(), shift: g.as_f64() });
        }
    }
    if delta.abs() > T::lit(0.1) * g_plus.abs().min(g_minus.abs()) {
        log::warn!("detuning {} rad/s is not small against the COM shifts ({}, {}); the ZZ term no longer dominates", delta, g_plus, g_minus);
    }
    let g2 = gamma * gamma;
    Ok(EffectiveModel {
        gamma,
        detuning: delta,
        g_plus,
        g_minus,
        zz_rate: -g2 / (T::lit(2.0) * delta),
        w_plus_rate: -g2 / (g_plus - delta),
        w_minus_rate: -g2 / (g_minus - delta),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TermKind<T> {
    /// `(s_i w_i + s_j w_j) e^{iνt}`
    Tweezer { weight_i: T, weight_j: T, frequency: T },
    /// `2γ cos(μt) e^{∓iωt}` on the COM lowering (raising) operator.
    Field { raising: bool, mode_frequency: T },
}

/// Real motional operator with its time dependence.
#[derive(Clone, Debug)]
pub struct MotionalTerm<T> {
    pub operator: CsrMatrix<T>,
    pub kind: TermKind<T>,
}

fn motional_space(space: &SpaceSpec) -> SpaceSpec {
    SpaceSpec { n_qubits: 0, mode_cutoffs: space.mode_cutoffs.clone() }
}

fn retained<T: Real>(modes: &CrystalModes<T>, space: &SpaceSpec) -> Result<()> {
    if space.n_modes() > modes.n_modes() {
        return Err(Error::DimensionMismatch { expected: modes.n_modes(), got: space.n_modes() });
    }
    Ok(())
}

/// Mode ladder operators embedded in the motional space of `space`.
fn mode_ladders<T: Real>(space: &SpaceSpec) -> Result<Vec<(CsrMatrix<T>, CsrMatrix<T>)>> {
    let ms = motional_space(space);
    (0..space.n_modes())
        .map(|m| {
            let (a, ad) = ladder_operators::<T>(space.mode_cutoffs[m]);
            Ok((embed(&a, Factor::Mode(m), &ms)?, embed(&ad, Factor::Mode(m), &ms)?))
        })
        .collect()
}

/// Normal-ordered tweezer terms on the lowest `space.n_modes()` crystal modes.
pub fn tweezer_terms<T: Real>(modes: &CrystalModes<T>, pair: (usize, usize), tweezer_frequency: T, space: &SpaceSpec) -> Result<Vec<MotionalTerm<T>>> {
    retained(modes, space)?;
    let (i, j) = pair;
    if i >= modes.n_ions() || j >= modes.n_ions() || i == j {
        return Err(Error::InvalidParameter(format!("pair ({i}, {j}) invalid for {} ions", modes.n_ions())));
    }
    let ladders = mode_ladders::<T>(space)?;
    let k = space.n_modes();
    let w = &modes.frequencies;
    let b = &modes.vectors;
    let t2 = tweezer_frequency * tweezer_frequency;
    let coupling = |m: usize, n: usize| {
        let pre = t2 / (T::lit(4.0) * (w[m] * w[n]).sqrt());
        (pre * b[m][i] * b[n][i], pre * b[m][j] * b[n][j])
    };
    let two = T::lit(2.0);
    let mut terms = Vec::new();
    let mut identity = (T::zero(), T::zero());
    for m in 0..k {
        for n in 0..k {
            let (ci, cj) = coupling(m, n);
            terms.push(MotionalTerm {
                operator: ladders[m].1.matmul(&ladders[n].0),
                kind: TermKind::Tweezer { weight_i: two * ci, weight_j: two * cj, frequency: w[m] - w[n] },
            });
            if n < m {
                continue;
            }
            let factor = if m == n { T::one() } else { two };
            terms.push(MotionalTerm {
                operator: ladders[m].0.matmul(&ladders[n].0),
                kind: TermKind::Tweezer { weight_i: factor * ci, weight_j: factor * cj, frequency: -(w[m] + w[n]) },
            });
            terms.push(MotionalTerm {
                operator: ladders[m].1.matmul(&ladders[n].1),
                kind: TermKind::Tweezer { weight_i: factor * ci, weight_j: factor * cj, frequency: w[m] + w[n] },
            });
            if m == n {
                identity.0 += ci;
                identity.1 += cj;
            }
        }
    }
    terms.push(MotionalTerm {
        operator: CsrMatrix::identity(space.motional_dim()),
        kind: TermKind::Tweezer { weight_i: identity.0, weight_j: identity.1, frequency: T::zero() },
    });
    Ok(terms)
}

/// COM field terms; γ and μ enter through the coefficients.
pub fn field_terms<T: Real>(modes: &CrystalModes<T>, space: &SpaceSpec) -> Result<Vec<MotionalTerm<T>>> {
    retained(modes, space)?;
    let com = modes.com_branch();
    if com >= space.n_modes() {
        return Err(Error::InvalidParameter("the COM mode must be retained".into()));
    }
    let ladders = mode_ladders::<T>(space)?;
    let w = modes.frequencies[com];
    Ok(vec![
        MotionalTerm { operator: ladders[com].0.clone(), kind: TermKind::Field { raising: false, mode_frequency: w } },
        MotionalTerm { operator: ladders[com].1.clone(), kind: TermKind::Field { raising: true, mode_frequency: w } },
    ])
}

/// Timing and switches of one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseContext<T> {
    pub start: T,
    pub window: T,
    pub ramp: T,
    pub field_on: bool,
    pub tweezer_on: bool,
}

/// Spin signs `(s_i, s_j)` of basis label `x` with σ_z|1⟩ = +|1⟩.
pub fn spins<T: Real>(x: usize) -> (T, T) {
    let s = |bit: usize| if bit == 1 { T::one() } else { -T::one() };
    (s((x >> 1) & 1), s(x & 1))
}

/// Assembled gate Hamiltonian for a two-qubit ⊗ retained-mode space.
#[derive(Clone, Debug)]
pub struct GateHamiltonian<T> {
    space: SpaceSpec,
    terms: TermSet<T>,
    kinds: Vec<TermKind<T>>,
    com_lowering: CsrMatrix<T>,
    gamma: T,
    drive_frequency: T,
    max_step: T,
}

impl<T: Real> GateHamiltonian<T> {
    /// Retains the lowest `cutoffs.len()` modes with the given Fock cutoffs.
    pub fn new(config: &GateConfig<T>, modes: &CrystalModes<T>, cutoffs: &[usize]) -> Result<Self> {
        config.validate()?;
        let space = SpaceSpec::new(2, cutoffs.to_vec())?;
        let mut all = tweezer_terms(modes, config.pair, config.tweezer_frequency, &space)?;
        let field = field_terms(modes, &space)?;
        let com_lowering = field[0].operator.clone();
        all.extend(field);
        let ops: Vec<CsrMatrix<T>> = all.iter().map(|t| t.operator.clone()).collect();
        let kinds = all.iter().map(|t| t.kind).collect();
        let mu = config.drive_frequency;
        Ok(Self {
            space,
            terms: TermSet::new(&ops)?,
            kinds,
            com_lowering,
            gamma: config.gamma(),
            drive_frequency: mu,
            max_step: T::TAU() / (T::lit(8.0) * mu),
        })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn n_terms(&self) -> usize {
        self.kinds.len()
    }

    /// COM lowering operator on the motional space.
    pub fn com_lowering(&self) -> CsrMatrix<T> {
        self.com_lowering.clone()
    }

    /// Hard cap on the integration step: 20 steps per drive period.
    pub fn max_step(&self) -> T {
        self.max_step
    }

    /// Coefficients of every term for qubit basis state `x` at time `t`.
    pub fn coefficients(&self, x: usize, ctx: &PulseContext<T>, t: T, out: &mut [C<T>]) {
        let (si, sj) = spins::<T>(x);
        let f = envelope(t - ctx.start, ctx.window, ctx.ramp);
        let drive = if ctx.field_on { T::lit(2.0) * self.gamma * f * (self.drive_frequency * t).cos() } else { T::zero() };
        for (o, kind) in out.iter_mut().zip(&self.kinds) {
            *o = match *kind {
                TermKind::Tweezer { weight_i, weight_j, frequency } => {
                    if ctx.tweezer_on {
                        cis(frequency * t) * (f * (si * weight_i + sj * weight_j))
                    } else {
                        cz()
                    }
                }
                TermKind::Field { raising, mode_frequency } => {
                    let phase = if raising { mode_frequency * t } else { -mode_frequency * t };
                    cis(phase) * drive
                }
            };
        }
    }

    /// Motional Hamiltonian seen by qubit basis state `x` during a pulse.
    pub fn block(&self, x: usize, ctx: PulseContext<T>) -> TermHamiltonian<'_, T, impl Fn(T, &mut [C<T>]) + Sync + '_> {
        TermHamiltonian::new(&self.terms, move |t, out: &mut [C<T>]| self.coefficients(x, &ctx, t, out)).with_max_step(self.max_step)
    }

    /// Hamiltonian on the composite space with the π-pulse `frame` applied.
    pub fn full(&self, frame: (bool, bool), ctx: PulseContext<T>) -> FullGateHamiltonian<'_, T> {
        FullGateHamiltonian { gate: self, frame, ctx }
    }

    /// Sparse composite-space matrix at time `t`.
    pub fn matrix_at(&self, t: T, frame: (bool, bool), ctx: &PulseContext<T>) -> CsrMatrix<C<T>> {
        let md = self.space.motional_dim();
        let mut coefs = vec![cz(); self.n_terms()];
        let mut trip = Vec::new();
        for x in 0..4 {
            self.coefficients(x ^ frame_bits(frame), ctx, t, &mut coefs);
            let block = self.terms.to_csr(&coefs);
            trip.extend(block.entries().map(|(r, c, v)| (x * md + r, x * md + c, v)));
        }
        CsrMatrix::from_triplets(self.space.dim(), self.space.dim(), trip)
    }

    /// Composite-space matrix of the tweezer terms alone (field switched off).
    pub fn tweezer_matrix_at(&self, t: T, ctx: &PulseContext<T>) -> CsrMatrix<C<T>> {
        let ctx = PulseContext { field_on: false, ..*ctx };
        self.matrix_at(t, (false, false), &ctx)
    }
}

fn frame_bits(frame: (bool, bool)) -> usize {
    ((frame.0 as usize) << 1) | frame.1 as usize
}

pub struct FullGateHamiltonian<'a, T> {
    gate: &'a GateHamiltonian<T>,
    frame: (bool, bool),
    ctx: PulseContext<T>,
}

impl<'a, T: Real> Hamiltonian<T> for FullGateHamiltonian<'a, T> {
    fn dim(&self) -> usize {
        self.gate.space.dim()
    }

    fn workspace_len(&self) -> usize {
        self.gate.n_terms() + self.gate.terms.nnz()
    }

    fn apply(&self, t: T, x: &[C<T>], out: &mut [C<T>], work: &mut [C<T>]) {
        let md = self.gate.space.motional_dim();
        let dim = self.dim();
        let (coefs, values) = work.split_at_mut(self.gate.n_terms());
        for q in 0..4 {
            self.gate.coefficients(q ^ frame_bits(self.frame), &self.ctx, t, coefs);
            self.gate.terms.assemble(coefs, values);
            for (xc, oc) in x.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
                self.gate.terms.apply(values, &xc[q * md..(q + 1) * md], &mut oc[q * md..(q + 1) * md]);
            }
        }
    }

    fn max_step(&self) -> Option<T> {
        Some(self.gate.max_step)
    }
}
