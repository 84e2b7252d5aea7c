//! Time-ordered propagation of the gate sequence.
//!
//! States are advanced with an adaptive Dormand–Prince 8(5,3) integrator on
//! `dψ/dt = −i H(t) ψ`. Several state vectors can be propagated together by
//! storing them as contiguous columns.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dop853;
use crate::drive::{GateConfig, GateHamiltonian, PulseContext};
use crate::error::{Error, Result};
use crate::hilbert::{CsrMatrix, StateVector, TermSet};
use crate::linalg::CMatrix;
use crate::scalar::{c1, cz, Real, C};

/// Time-dependent Hamiltonian acting on column blocks of state vectors.
pub trait Hamiltonian<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Scratch length required by [`Hamiltonian::apply`].
    fn workspace_len(&self) -> usize {
        0
    }

    /// `out ← H(t)·x` for every column of `x`.
    fn apply(&self, t: T, x: &[C<T>], out: &mut [C<T>], work: &mut [C<T>]);

    /// Largest step the integrator may take.
    fn max_step(&self) -> Option<T> {
        None
    }
}

/// `H(t) = Σ_k c_k(t) O_k` over a [`TermSet`], with the coefficients written by a closure.
pub struct TermHamiltonian<'a, T, F> {
    terms: &'a TermSet<T>,
    coefficients: F,
    max_step: Option<T>,
}

impl<'a, T: Real, F: Fn(T, &mut [C<T>]) + Sync> TermHamiltonian<'a, T, F> {
    pub fn new(terms: &'a TermSet<T>, coefficients: F) -> Self {
        Self { terms, coefficients, max_step: None }
    }

    pub fn with_max_step(mut self, max_step: T) -> Self {
        self.max_step = Some(max_step);
        self
    }
}

impl<'a, T: Real, F: Fn(T, &mut [C<T>]) + Sync> Hamiltonian<T> for TermHamiltonian<'a, T, F> {
    fn dim(&self) -> usize {
        self.terms.dim()
    }

    fn workspace_len(&self) -> usize {
        self.terms.n_terms() + self.terms.nnz()
    }

    fn apply(&self, t: T, x: &[C<T>], out: &mut [C<T>], work: &mut [C<T>]) {
        let (coefs, values) = work.split_at_mut(self.terms.n_terms());
        (self.coefficients)(t, coefs);
        self.terms.assemble(coefs, values);
        self.terms.apply(values, x, out);
    }

    fn max_step(&self) -> Option<T> {
        self.max_step
    }
}

/// Zero operator of a given dimension.
pub struct ZeroHamiltonian(pub usize);

impl<T: Real> Hamiltonian<T> for ZeroHamiltonian {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, _t: T, _x: &[C<T>], out: &mut [C<T>], _work: &mut [C<T>]) {
        out.iter_mut().for_each(|o| *o = cz());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagateOptions<T> {
    /// Relative local error target.
    pub tol: T,
    /// Absolute local error target per amplitude.
    pub atol: T,
    pub max_step: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for PropagateOptions<T> {
    fn default() -> Self {
        Self::with_tol(T::lit(1e-9))
    }
}

impl<T: Real> PropagateOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, atol: tol * T::lit(0.1), max_step: None, max_steps: 50_000_000 }
    }

    pub fn validate(&self) -> Result<()> {
        let tol = self.tol.as_f64();
        if !(1e-12..=1e-6).contains(&tol) {
            return Err(Error::InvalidParameter(format!("tolerance {tol:e} outside [1e-12, 1e-6]")));
        }
        if !(self.atol > T::zero()) {
            return Err(Error::InvalidParameter("absolute tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Data handed to step observers after every accepted step.
pub struct StepView<'a, T> {
    pub t0: T,
    pub t1: T,
    pub y0: &'a [C<T>],
    pub f0: &'a [C<T>],
    pub y1: &'a [C<T>],
    pub f1: &'a [C<T>],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl std::ops::AddAssign for IntegrationStats {
    fn add_assign(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

struct Rhs<'h, T, H: ?Sized> {
    ham: &'h H,
    work: Vec<C<T>>,
    evaluations: usize,
}

impl<'h, T: Real, H: Hamiltonian<T> + ?Sized> Rhs<'h, T, H> {
    fn eval(&mut self, t: T, y: &[C<T>], out: &mut [C<T>]) {
        self.ham.apply(t, y, out, &mut self.work);
        for o in out.iter_mut() {
            *o = C::new(o.im, -o.re);
        }
        self.evaluations += 1;
    }
}

fn rms<T: Real>(v: impl Iterator<Item = T>, n: usize) -> T {
    (v.map(|x| x * x).sum::<T>() / T::from_usize_lossy(n.max(1))).sqrt()
}

/// Integrates `dy/dt = −i H(t) y` from `t0` to `t1` in place. `y` holds
/// `y.len() / H::dim()` columns. `observer` sees every accepted step.
pub fn integrate<T, H, O>(ham: &H, y: &mut [C<T>], t0: T, t1: T, opts: &PropagateOptions<T>, mut observer: O) -> Result<IntegrationStats>
where
    T: Real,
    H: Hamiltonian<T> + ?Sized,
    O: FnMut(&StepView<'_, T>),
{
    opts.validate()?;
    let dim = ham.dim();
    if dim == 0 || y.len() % dim != 0 {
        return Err(Error::DimensionMismatch { expected: dim, got: y.len() });
    }
    let mut stats = IntegrationStats::default();
    if t1 == t0 {
        return Ok(stats);
    }
    let n = y.len();
    let dir = if t1 > t0 { T::one() } else { -T::one() };
    let span = (t1 - t0).abs();
    let max_step = match (opts.max_step, ham.max_step()) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => span,
    }
    .min(span);
    let (rtol, atol) = (opts.tol, opts.atol);

    let mut rhs = Rhs { ham, work: vec![cz(); ham.workspace_len()], evaluations: 0 };
    let stages = dop853::STAGES;
    let mut k: Vec<Vec<C<T>>> = (0..=stages).map(|_| vec![cz(); n]).collect();
    let mut ytmp = vec![cz(); n];
    let mut ynew = vec![cz(); n];
    let mut f = vec![cz(); n];
    rhs.eval(t0, y, &mut f);

    let a: Vec<Vec<T>> = dop853::A.iter().map(|row| row.iter().map(|&v| T::lit(v)).collect()).collect();
    let b: Vec<T> = dop853::B.iter().map(|&v| T::lit(v)).collect();
    let c: Vec<T> = dop853::C.iter().map(|&v| T::lit(v)).collect();
    let e3: Vec<T> = dop853::E3.iter().map(|&v| T::lit(v)).collect();
    let e5: Vec<T> = dop853::E5.iter().map(|&v| T::lit(v)).collect();

    let scale0: Vec<T> = y.iter().map(|v| atol + v.norm() * rtol).collect();
    let mut h_abs = {
        let d0 = rms(y.iter().zip(&scale0).map(|(v, s)| v.norm() / *s), n);
        let d1 = rms(f.iter().zip(&scale0).map(|(v, s)| v.norm() / *s), n);
        let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) { T::lit(1e-6) * span } else { T::lit(0.01) * d0 / d1 };
        let h0 = h0.min(max_step);
        for i in 0..n {
            ytmp[i] = y[i] + f[i] * (dir * h0);
        }
        rhs.eval(t0 + dir * h0, &ytmp, &mut k[0]);
        let d2 = rms(k[0].iter().zip(&f).zip(&scale0).map(|((a, b), s)| (*a - *b).norm() / *s), n) / h0;
        let h1 = if d1 <= T::lit(1e-15) && d2 <= T::lit(1e-15) {
            (h0 * T::lit(1e-3)).max(T::lit(1e-6) * span)
        } else {
            (T::lit(0.01) / d1.max(d2)).powf(T::one() / T::lit(8.0))
        };
        (T::lit(100.0) * h0).min(h1).min(max_step)
    };

    let (safety, min_factor, max_factor) = (T::lit(0.9), T::lit(0.2), T::lit(10.0));
    let exponent = -T::one() / T::lit(8.0);
    let mut t = t0;
    while dir * (t1 - t) > T::zero() {
        let min_step = T::lit(10.0) * T::epsilon() * t.abs().max(span);
        h_abs = h_abs.min(max_step).max(min_step);
        let mut rejected_once = false;
        loop {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::TooManySteps { max_steps: opts.max_steps, time: t.as_f64() });
            }
            let mut t_new = t + dir * h_abs;
            if dir * (t_new - t1) > T::zero() {
                t_new = t1;
            }
            let h = t_new - t;
            let habs = h.abs();

            k[0].copy_from_slice(&f);
            for s in 1..stages {
                ytmp.copy_from_slice(y);
                for (j, kj) in k.iter().enumerate().take(s) {
                    let coef = a[s][j];
                    if coef != T::zero() {
                        let w = h * coef;
                        for (yt, kv) in ytmp.iter_mut().zip(kj) {
                            *yt += kv * w;
                        }
                    }
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                rhs.eval(t + c[s] * h, &ytmp, &mut tail[0]);
            }
            ynew.copy_from_slice(y);
            for (j, kj) in k.iter().enumerate().take(stages) {
                if b[j] != T::zero() {
                    let w = h * b[j];
                    for (yn, kv) in ynew.iter_mut().zip(kj) {
                        *yn += kv * w;
                    }
                }
            }
            {
                let (head, tail) = k.split_at_mut(stages);
                let _ = head;
                rhs.eval(t_new, &ynew, &mut tail[0]);
            }

            let mut err5 = T::zero();
            let mut err3 = T::zero();
            for i in 0..n {
                let scale = atol + y[i].norm().max(ynew[i].norm()) * rtol;
                let mut s5 = cz::<T>();
                let mut s3 = cz::<T>();
                for (j, kj) in k.iter().enumerate() {
                    if e5[j] != T::zero() {
                        s5 += kj[i] * e5[j];
                    }
                    if e3[j] != T::zero() {
                        s3 += kj[i] * e3[j];
                    }
                }
                err5 += s5.norm_sqr() / (scale * scale);
                err3 += s3.norm_sqr() / (scale * scale);
            }
            let error_norm = if err5 == T::zero() && err3 == T::zero() {
                T::zero()
            } else {
                habs * err5 / ((err5 + T::lit(0.01) * err3) * T::from_usize_lossy(n)).sqrt()
            };

            if error_norm < T::one() {
                let mut factor = if error_norm == T::zero() { max_factor } else { max_factor.min(safety * error_norm.powf(exponent)) };
                if rejected_once {
                    factor = factor.min(T::one());
                }
                observer(&StepView { t0: t, t1: t_new, y0: y, f0: &f, y1: &ynew, f1: &k[stages] });
                y.copy_from_slice(&ynew);
                f.copy_from_slice(&k[stages]);
                t = t_new;
                h_abs = habs * factor;
                stats.accepted += 1;
                break;
            }
            stats.rejected += 1;
            rejected_once = true;
            h_abs = habs * min_factor.max(safety * error_norm.powf(exponent));
            if h_abs < min_step {
                return Err(Error::StepUnderflow { time: t.as_f64(), step: h_abs.as_f64() });
            }
        }
    }
    stats.evaluations = rhs.evaluations;
    Ok(stats)
}

/// Propagates one state vector from `t0` to `t1`.
pub fn propagate<T: Real, H: Hamiltonian<T> + ?Sized>(ham: &H, state: &[C<T>], t0: T, t1: T, opts: &PropagateOptions<T>) -> Result<Vec<C<T>>> {
    if state.len() != ham.dim() {
        return Err(Error::DimensionMismatch { expected: ham.dim(), got: state.len() });
    }
    let mut y = state.to_vec();
    integrate(ham, &mut y, t0, t1, opts, |_| {})?;
    Ok(y)
}

/// Dense propagator `U(t1, t0)`; column `k` is the propagated basis vector `k`.
pub fn propagator<T: Real, H: Hamiltonian<T> + ?Sized>(ham: &H, t0: T, t1: T, opts: &PropagateOptions<T>) -> Result<CMatrix<T>> {
    let d = ham.dim();
    let mut y = vec![cz(); d * d];
    for k in 0..d {
        y[k * d + k] = c1();
    }
    integrate(ham, &mut y, t0, t1, opts, |_| {})?;
    Ok(CMatrix::from_columns(&y.chunks_exact(d).map(<[C<T>]>::to_vec).collect::<Vec<_>>()))
}

/// One segment of the gate sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse<T> {
    pub start: T,
    /// Length of the pulse window including both ramps.
    pub window: T,
    pub ramp: T,
    pub field_on: bool,
    pub tweezer_on: bool,
    /// Instantaneous σ_x on (qubit i, qubit j) at the end of the pulse.
    pub flip_after: (bool, bool),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule<T> {
    pub pulses: Vec<Pulse<T>>,
}

impl<T: Real> PulseSchedule<T> {
    pub fn from_config(config: &GateConfig<T>) -> Result<Self> {
        config.validate()?;
        let window = config.pulse_window();
        let ramp = config.ramp_duration();
        let pulses = (0..config.pulse_count)
            .map(|p| Pulse {
                start: window * T::from_usize_lossy(p),
                window,
                ramp,
                field_on: config.field_on_mask[p],
                tweezer_on: config.tweezer_on_mask[p],
                flip_after: config.echo_schedule[p],
            })
            .collect();
        let schedule = Self { pulses };
        schedule.check_echo()?;
        Ok(schedule)
    }

    pub fn total_duration(&self) -> T {
        self.pulses.iter().map(|p| p.window).sum()
    }

    /// Number of π-pulses received by each qubit.
    pub fn flip_counts(&self) -> (usize, usize) {
        self.pulses.iter().fold((0, 0), |(a, b), p| (a + p.flip_after.0 as usize, b + p.flip_after.1 as usize))
    }

    /// Fails unless both qubits are flipped an even number of times, so the
    /// net Pauli frame after the sequence is the identity.
    pub fn check_echo(&self) -> Result<()> {
        let (fi, fj) = self.flip_counts();
        if fi % 2 != 0 || fj % 2 != 0 {
            return Err(Error::InvalidParameter(format!("echo schedule leaves a net σ_x frame (flips {fi}, {fj})")));
        }
        if self.pulses.iter().any(|p| !(p.window > T::zero()) || p.ramp < T::zero() || p.ramp * T::lit(2.0) > p.window) {
            return Err(Error::InvalidParameter("pulse windows must be positive and hold both ramps".into()));
        }
        Ok(())
    }

    /// Accumulated flip frame in force during each pulse.
    pub fn frames(&self) -> Vec<(bool, bool)> {
        let mut frame = (false, false);
        self.pulses
            .iter()
            .map(|p| {
                let current = frame;
                frame = (frame.0 ^ p.flip_after.0, frame.1 ^ p.flip_after.1);
                current
            })
            .collect()
    }

    pub fn context(&self, p: usize) -> PulseContext<T> {
        let pulse = &self.pulses[p];
        PulseContext { start: pulse.start, window: pulse.window, ramp: pulse.ramp, field_on: pulse.field_on, tweezer_on: pulse.tweezer_on }
    }

    /// Qubit basis state (2-bit label, first qubit most significant) seen by
    /// the Hamiltonian during pulse `p` when the sequence starts in `x`.
    pub fn effective_state(&self, x: usize, p: usize) -> usize {
        let (fi, fj) = self.frames()[p];
        x ^ ((fi as usize) << 1) ^ (fj as usize)
    }
}

/// Two-qubit basis label `|q_i q_j⟩`.
pub fn qubit_label(x: usize) -> String {
    format!("{}{}", (x >> 1) & 1, x & 1)
}

/// `⟨a_com⟩` sampled on a fixed time grid, one series per initial qubit basis state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub series: Vec<(String, Vec<C<T>>)>,
}

impl<T: Real> Trajectory<T> {
    pub fn max_displacement(&self, label: &str) -> Option<T> {
        self.series.iter().find(|(l, _)| l == label).map(|(_, s)| s.iter().fold(T::zero(), |m, a| m.max(a.norm())))
    }

    pub fn final_value(&self, label: &str) -> Option<C<T>> {
        self.series.iter().find(|(l, _)| l == label).and_then(|(_, s)| s.last().copied())
    }

    /// CSV with columns `time_s, re_alpha, im_alpha, qubit_state_label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "re_alpha", "im_alpha", "qubit_state_label"])?;
        for (label, values) in &self.series {
            for (t, a) in self.times.iter().zip(values) {
                w.write_record([format!("{:e}", t.as_f64()), format!("{:e}", a.re.as_f64()), format!("{:e}", a.im.as_f64()), label.clone()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Cubic Hermite interpolation of a scalar observable across one step.
fn hermite<T: Real>(t0: T, t1: T, v0: C<T>, d0: C<T>, v1: C<T>, d1: C<T>, t: T) -> C<T> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let h00 = two * s3 - three * s2 + T::one();
    let h10 = s3 - two * s2 + s;
    let h01 = three * s2 - two * s3;
    let h11 = s3 - s2;
    v0 * h00 + d0 * (h10 * h) + v1 * h01 + d1 * (h11 * h)
}

/// `⟨y|A|z⟩` for a real operator.
fn braket<T: Real>(y: &[C<T>], op: &CsrMatrix<T>, z: &[C<T>]) -> C<T> {
    let mut az = vec![cz(); z.len()];
    op.apply_add(c1(), z, &mut az);
    y.iter().zip(&az).fold(cz(), |acc, (a, b)| acc + a.conj() * b)
}

/// Result of [`run_gate`].
#[derive(Clone, Debug)]
pub struct GateRun<T> {
    pub final_state: StateVector<T>,
    pub trajectory: Trajectory<T>,
    pub stats: IntegrationStats,
}

/// Runs the pulse sequence from `|qubits⟩ ⊗ |motion⟩`, sampling `⟨a_com⟩`
/// at `samples_per_pulse` equally spaced times within every pulse.
pub fn run_gate<T: Real>(
    gate: &GateHamiltonian<T>,
    schedule: &PulseSchedule<T>,
    qubits: &[C<T>],
    motion: &[C<T>],
    opts: &PropagateOptions<T>,
    samples_per_pulse: usize,
) -> Result<GateRun<T>> {
    let space = gate.space().clone();
    let md = space.motional_dim();
    if qubits.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: qubits.len() });
    }
    if motion.len() != md {
        return Err(Error::DimensionMismatch { expected: md, got: motion.len() });
    }
    if samples_per_pulse < 2 {
        return Err(Error::InvalidParameter("at least two samples per pulse".into()));
    }
    let mut times = Vec::new();
    for pulse in &schedule.pulses {
        let first = if times.is_empty() { 0 } else { 1 };
        for k in first..=samples_per_pulse {
            times.push(pulse.start + pulse.window * T::from_usize_lossy(k) / T::from_usize_lossy(samples_per_pulse));
        }
    }
    let lower = gate.com_lowering();
    let active: Vec<usize> = (0..4).filter(|&x| qubits[x].norm_sqr() > T::zero()).collect();
    let runs = active
        .par_iter()
        .map(|&x| -> Result<(usize, Vec<C<T>>, Vec<C<T>>, IntegrationStats)> {
            let mut y = motion.to_vec();
            let mut samples = Vec::with_capacity(times.len());
            let mut next = 0usize;
            let mut stats = IntegrationStats::default();
            samples.push(braket(&y, &lower, &y));
            next += 1;
            for p in 0..schedule.pulses.len() {
                let ham = gate.block(schedule.effective_state(x, p), schedule.context(p));
                let ctx = schedule.context(p);
                stats += integrate(&ham, &mut y, ctx.start, ctx.start + ctx.window, opts, |step| {
                    while next < times.len() && times[next] <= step.t1 {
                        let v0 = braket(step.y0, &lower, step.y0);
                        let v1 = braket(step.y1, &lower, step.y1);
                        let d0 = braket(step.f0, &lower, step.y0) + braket(step.y0, &lower, step.f0);
                        let d1 = braket(step.f1, &lower, step.y1) + braket(step.y1, &lower, step.f1);
                        samples.push(hermite(step.t0, step.t1, v0, d0, v1, d1, times[next]));
                        next += 1;
                    }
                })?;
            }
            while samples.len() < times.len() {
                samples.push(braket(&y, &lower, &y));
            }
            Ok((x, y, samples, stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut final_state = StateVector::zeros(&space);
    let mut series = Vec::new();
    let mut stats = IntegrationStats::default();
    let (fi, fj) = schedule.flip_counts();
    for (x, y, samples, s) in runs {
        let out = x ^ ((fi % 2) << 1) ^ (fj % 2);
        for (k, v) in y.iter().enumerate() {
            final_state.amplitudes[space.index(out, k)] = qubits[x] * v;
        }
        series.push((qubit_label(x), samples));
        stats += s;
    }
    Ok(GateRun { final_state, trajectory: Trajectory { times, series }, stats })
}

/// Motional images `W_x|n⟩` of selected Fock basis columns for every qubit
/// basis state `x`, where the full sequence acts as `Σ_x |x⟩⟨x| ⊗ W_x`.
#[derive(Clone, Debug)]
pub struct BlockPropagation<T> {
    pub motional_dim: usize,
    /// Motional basis indices of the propagated columns.
    pub columns: Vec<usize>,
    /// `images[x][c·motional_dim + r]` is row `r` of `W_x|columns[c]⟩`.
    pub images: Vec<Vec<C<T>>>,
    pub stats: IntegrationStats,
}

pub fn propagate_blocks<T: Real>(
    gate: &GateHamiltonian<T>,
    schedule: &PulseSchedule<T>,
    columns: &[usize],
    opts: &PropagateOptions<T>,
) -> Result<BlockPropagation<T>> {
    schedule.check_echo()?;
    let md = gate.space().motional_dim();
    if let Some(&bad) = columns.iter().find(|&&c| c >= md) {
        return Err(Error::IndexOutOfRange { index: bad, len: md });
    }
    let results = (0..4usize)
        .into_par_iter()
        .map(|x| -> Result<(Vec<C<T>>, IntegrationStats)> {
            let mut y = vec![cz(); md * columns.len()];
            for (k, &c) in columns.iter().enumerate() {
                y[k * md + c] = c1();
            }
            let mut stats = IntegrationStats::default();
            for p in 0..schedule.pulses.len() {
                let ctx = schedule.context(p);
                let ham = gate.block(schedule.effective_state(x, p), ctx);
                stats += integrate(&ham, &mut y, ctx.start, ctx.start + ctx.window, opts, |_| {})?;
            }
            Ok((y, stats))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = IntegrationStats::default();
    let images = results
        .into_iter()
        .map(|(y, s)| {
            stats += s;
            y
        })
        .collect();
    Ok(BlockPropagation { motional_dim: md, columns: columns.to_vec(), images, stats })
}

/// Dense propagator of the whole sequence on the composite space, π-pulses included.
pub fn sequence_propagator<T: Real>(gate: &GateHamiltonian<T>, schedule: &PulseSchedule<T>, opts: &PropagateOptions<T>) -> Result<CMatrix<T>> {
    let space = gate.space();
    let md = space.motional_dim();
    let mut u = CMatrix::identity(space.dim());
    for p in 0..schedule.pulses.len() {
        let ctx = schedule.context(p);
        let frame = schedule.frames()[p];
        let full = gate.full(frame, ctx);
        let step = propagator(&full, ctx.start, ctx.start + ctx.window, opts)?;
        u = &step * &u;
        let (fi, fj) = schedule.pulses[p].flip_after;
        let flip = ((fi as usize) << 1) | fj as usize;
        if flip != 0 {
            let mut perm = CMatrix::zeros(space.dim(), space.dim());
            for x in 0..4 {
                for k in 0..md {
                    perm[(space.index(x ^ flip, k), space.index(x, k))] = c1();
                }
            }
            u = &perm * &u;
        }
    }
    Ok(u)
}
