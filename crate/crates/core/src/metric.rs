//! Process fidelity of the simulated gate against the ideal phase gate,
//! thermally averaged over initial Fock states, plus phase and
//! local-equivalence diagnostics.

use serde::{Deserialize, Serialize};

use crate::crystal::normal_modes;
use crate::drive::{effective_model, GateConfig, GateHamiltonian};
use crate::error::{Error, Result};
use crate::evolve::{propagate_blocks, BlockPropagation, IntegrationStats, PropagateOptions, PulseSchedule};
use crate::hilbert::{SpaceSpec, ThermalEnsemble};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::scalar::{c1, cis, cz, Real, C};

/// Two-qubit dimension.
pub const D: usize = 4;

/// Single-qubit Pauli matrix `k` ∈ {1, σ_x, σ_y, σ_z}.
pub fn pauli<T: Real>(k: usize) -> CMatrix<T> {
    let (o, z) = (T::one(), T::zero());
    let rows = match k {
        0 => [[C::new(o, z), C::new(z, z)], [C::new(z, z), C::new(o, z)]],
        1 => [[C::new(z, z), C::new(o, z)], [C::new(o, z), C::new(z, z)]],
        2 => [[C::new(z, z), C::new(z, -o)], [C::new(z, o), C::new(z, z)]],
        3 => [[C::new(o, z), C::new(z, z)], [C::new(z, z), C::new(-o, z)]],
        _ => panic!("Pauli index {k} out of range"),
    };
    CMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

/// Two-qubit Pauli basis `σ_a ⊗ σ_b`, index `4a + b`.
pub fn pauli_basis<T: Real>() -> Vec<CMatrix<T>> {
    (0..16).map(|l| pauli::<T>(l / 4).kron(&pauli(l % 4))).collect()
}

/// Two-qubit channel stored as the images of the Pauli basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumChannel<T> {
    pub images: Vec<CMatrix<T>>,
    pub nbar: Vec<T>,
    pub cutoffs: Vec<usize>,
}

impl<T: Real> QuantumChannel<T> {
    pub fn identity() -> Self {
        Self { images: pauli_basis(), nbar: Vec::new(), cutoffs: Vec::new() }
    }

    /// `ρ ↦ V ρ V†`
    pub fn from_unitary(v: &CMatrix<T>) -> Self {
        let vd = v.adjoint();
        Self { images: pauli_basis().iter().map(|p| &(v * p) * &vd).collect(), nbar: Vec::new(), cutoffs: Vec::new() }
    }

    /// Channel `|x⟩⟨y| ↦ C_xy |x⟩⟨y|` of a qubit-diagonal evolution with coherence matrix `C`.
    pub fn from_coherences(c: &CMatrix<T>) -> Self {
        let images = pauli_basis::<T>()
            .into_iter()
            .map(|mut p| {
                for x in 0..D {
                    for y in 0..D {
                        p[(x, y)] = p[(x, y)] * c[(x, y)];
                    }
                }
                p
            })
            .collect();
        Self { images, nbar: Vec::new(), cutoffs: Vec::new() }
    }

    /// `σ_l ↦ Σ_n p_n tr_FS(U (|n⟩⟨n| ⊗ σ_l) U†)` from a dense composite-space propagator.
    pub fn from_propagator(u: &CMatrix<T>, space: &SpaceSpec, thermal: &ThermalEnsemble<T>) -> Result<Self> {
        if u.rows() != space.dim() || u.cols() != space.dim() || space.n_qubits != 2 {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: u.rows() });
        }
        let md = space.motional_dim();
        let paulis = pauli_basis::<T>();
        let mut images = vec![CMatrix::zeros(D, D); 16];
        for (n, &p) in thermal.weights.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            let cols: Vec<Vec<C<T>>> = (0..D).map(|q| u.column(space.index(q, n))).collect();
            for (l, sigma) in paulis.iter().enumerate() {
                for a in 0..D {
                    for b in 0..D {
                        let mut acc = cz::<T>();
                        for k in 0..md {
                            let ra = a * md + k;
                            let rb = b * md + k;
                            for q1 in 0..D {
                                for q2 in 0..D {
                                    let s = sigma[(q1, q2)];
                                    if s != cz() {
                                        acc += cols[q1][ra] * s * cols[q2][rb].conj();
                                    }
                                }
                            }
                        }
                        images[l][(a, b)] += acc * p;
                    }
                }
            }
        }
        Ok(Self { images, nbar: thermal.nbar.clone(), cutoffs: thermal.cutoffs.clone() })
    }

    /// Image of an arbitrary 4×4 operator by linearity.
    pub fn apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let inv_d = T::one() / T::from_usize_lossy(D);
        pauli_basis::<T>().iter().zip(&self.images).fold(CMatrix::zeros(D, D), |acc, (p, img)| {
            let coef = (p * rho).trace() * inv_d;
            acc.add(&img.scale(coef))
        })
    }

    /// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ E(|i⟩⟨j|)`.
    pub fn choi(&self) -> CMatrix<T> {
        let mut j = CMatrix::zeros(D * D, D * D);
        for a in 0..D {
            for b in 0..D {
                let mut unit = CMatrix::zeros(D, D);
                unit[(a, b)] = c1();
                let img = self.apply(&unit);
                for r in 0..D {
                    for c in 0..D {
                        j[(a * D + r, b * D + c)] = img[(r, c)];
                    }
                }
            }
        }
        j
    }

    pub fn choi_eigenvalues(&self) -> Vec<T> {
        hermitian_eigenvalues(&self.choi())
    }

    /// `|tr E(1) − 4|`
    pub fn trace_defect(&self) -> T {
        (self.images[0].trace() - C::new(T::from_usize_lossy(D), T::zero())).norm()
    }

    /// Fails when the Choi matrix has an eigenvalue below `−tol`.
    pub fn check_complete_positivity(&self, tol: T) -> Result<T> {
        let min = self.choi_eigenvalues().into_iter().fold(T::infinity(), T::min);
        if min < -tol {
            return Err(Error::InvalidParameter(format!("channel is not completely positive (Choi eigenvalue {min})")));
        }
        Ok(min)
    }
}

/// Coherence matrix `C_xy = Σ_n p_n ⟨n|W_y† W_x|n⟩` over the propagated columns.
pub fn coherence_matrix<T: Real>(blocks: &BlockPropagation<T>, thermal: &ThermalEnsemble<T>) -> Result<CMatrix<T>> {
    let md = blocks.motional_dim;
    if thermal.weights.len() != md {
        return Err(Error::DimensionMismatch { expected: md, got: thermal.weights.len() });
    }
    let kept: T = blocks.columns.iter().map(|&c| thermal.weights[c]).sum();
    if !(kept > T::zero()) {
        return Err(Error::InvalidParameter("no propagated column carries thermal weight".into()));
    }
    let mut c = CMatrix::zeros(D, D);
    for x in 0..D {
        for y in 0..D {
            let mut acc = cz::<T>();
            for (k, &col) in blocks.columns.iter().enumerate() {
                let p = thermal.weights[col];
                if p == T::zero() {
                    continue;
                }
                let wx = &blocks.images[x][k * md..(k + 1) * md];
                let wy = &blocks.images[y][k * md..(k + 1) * md];
                let overlap = wy.iter().zip(wx).fold(cz::<T>(), |a, (u, v)| a + u.conj() * v);
                acc += overlap * (p / kept);
            }
            c[(x, y)] = acc;
        }
    }
    Ok(c)
}

/// Diagonal phase gate with phases relative to `|00⟩`, read off a coherence matrix.
pub fn phase_gate_from_coherences<T: Real>(c: &CMatrix<T>) -> CMatrix<T> {
    let diag: Vec<C<T>> = (0..D)
        .map(|x| {
            let v = c[(x, 0)];
            if v.norm() > T::zero() {
                v / v.norm()
            } else {
                c1()
            }
        })
        .collect();
    CMatrix::from_diagonal(&diag)
}

/// Ideal diagonal gate from the effective model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealGate<T> {
    /// Phases of `|00⟩, |01⟩, |10⟩, |11⟩` with the `|00⟩` phase removed.
    pub phases: Vec<T>,
}

impl<T: Real> IdealGate<T> {
    pub fn identity() -> Self {
        Self { phases: vec![T::zero(); D] }
    }

    pub fn from_phases(phases: [T; 4]) -> Self {
        Self { phases: phases.iter().map(|&p| p - phases[0]).collect() }
    }

    pub fn matrix(&self) -> CMatrix<T> {
        CMatrix::from_diagonal(&self.phases.iter().map(|&p| cis(p)).collect::<Vec<_>>())
    }

    pub fn conditional_phase(&self) -> T {
        wrap_phase(self.unwrapped_conditional_phase())
    }

    pub fn unwrapped_conditional_phase(&self) -> T {
        self.phases[0] + self.phases[3] - self.phases[1] - self.phases[2]
    }
}

/// Phases `−Σ_p E_{x_p} A` accumulated over the field-on pulses, where `x_p`
/// is the basis state seen in pulse `p` after the π-pulse frame flips and
/// `A` the envelope area of one pulse.
pub fn ideal_gate<T: Real>(config: &GateConfig<T>) -> Result<IdealGate<T>> {
    let model = effective_model(config)?;
    let schedule = PulseSchedule::from_config(config)?;
    let mut phases = [T::zero(); 4];
    for (x, phase) in phases.iter_mut().enumerate() {
        for (p, pulse) in schedule.pulses.iter().enumerate() {
            if pulse.field_on {
                let area = pulse.window - pulse.ramp;
                *phase -= model.state_energy(schedule.effective_state(x, p)) * area;
            }
        }
    }
    Ok(IdealGate::from_phases(phases))
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase<T: Real>(phi: T) -> T {
    let tau = T::TAU();
    let mut w = phi - tau * (phi / tau).round();
    if w <= -T::PI() {
        w += tau;
    } else if w > T::PI() {
        w -= tau;
    }
    w
}

/// `F̄ = (Σ_l tr[U σ_l† U† E(σ_l)] + d²)/(d²(d+1))`
pub fn process_fidelity<T: Real>(channel: &QuantumChannel<T>, ideal: &CMatrix<T>) -> T {
    let d = T::from_usize_lossy(D);
    let ud = ideal.adjoint();
    let sum = pauli_basis::<T>().iter().zip(&channel.images).fold(cz::<T>(), |acc, (p, img)| {
        let target = &(ideal * &p.adjoint()) * &ud;
        acc + (&target * img).trace()
    });
    (sum.re + d * d) / (d * d * (d + T::one()))
}

/// `(|tr U†V|² + d)/(d(d+1))`
pub fn unitary_fidelity<T: Real>(u: &CMatrix<T>, v: &CMatrix<T>) -> T {
    let d = T::from_usize_lossy(u.rows());
    let tr = (&u.adjoint() * v).trace();
    (tr.norm_sqr() + d) / (d * (d + T::one()))
}

fn off_diagonal_mass<T: Real>(g: &CMatrix<T>) -> T {
    let mut m = T::zero();
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            if r != c {
                m += g[(r, c)].norm_sqr();
            }
        }
    }
    m.sqrt()
}

/// `arg u₀₀ + arg u₁₁ − arg u₀₁ − arg u₁₀`, wrapped to `(−π, π]`.
pub fn conditional_phase<T: Real>(gate: &CMatrix<T>) -> Result<T> {
    if gate.rows() != D || gate.cols() != D {
        return Err(Error::DimensionMismatch { expected: D, got: gate.rows() });
    }
    let off = off_diagonal_mass(gate);
    if off > T::lit(1e-6) {
        return Err(Error::NotDiagonal(off.as_f64()));
    }
    let u = |k: usize| gate[(k, k)];
    Ok((u(0) * u(3) * (u(1) * u(2)).conj()).arg())
}

/// Makhlin invariants `(G₁, G₂)`.
pub fn local_invariants<T: Real>(gate: &CMatrix<T>) -> Result<(C<T>, T)> {
    if gate.rows() != D || gate.cols() != D {
        return Err(Error::DimensionMismatch { expected: D, got: gate.rows() });
    }
    let defect = gate.unitarity_defect();
    if defect > T::lit(1e-8) {
        return Err(Error::NotUnitary(defect.as_f64()));
    }
    let h = T::FRAC_1_SQRT_2();
    let (o, z) = (C::new(h, T::zero()), cz::<T>());
    let i = C::new(T::zero(), h);
    let q = CMatrix::from_rows(&[vec![o, z, z, i], vec![z, i, o, z], vec![z, i, -o, z], vec![o, z, z, -i]]);
    let ub = &(&q.adjoint() * gate) * &q;
    let m = &ub.transpose() * &ub;
    let det = gate.det();
    let tr = m.trace();
    let tr2 = (&m * &m).trace();
    let g1 = tr * tr / (det * T::lit(16.0));
    let g2 = (tr * tr - tr2) / (det * T::lit(4.0));
    Ok((g1, g2.re))
}

/// Fidelity and diagnostics of one simulated gate at one thermal occupation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport<T> {
    pub fidelity: T,
    pub infidelity: T,
    pub conditional_phase: T,
    pub ideal_conditional_phase: T,
    pub g1: (T, T),
    pub g2: T,
    pub nbar: Vec<T>,
    pub cutoffs: Vec<usize>,
    pub thermal_tails: Vec<T>,
    pub choi_min_eigenvalue: T,
    pub trace_defect: T,
    pub ideal_phases: Vec<T>,
    pub config: GateConfig<T>,
    pub tol: T,
    pub steps: usize,
}

/// Thermal weights below this are not propagated.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Largest thermal mass allowed above a cutoff.
pub const TAIL_LIMIT: f64 = 1e-4;

/// Simulates the gate on the lowest `cutoffs.len()` modes once and evaluates
/// the process fidelity for every requested thermal occupation vector.
pub fn evaluate_gate<T: Real>(config: &GateConfig<T>, cutoffs: &[usize], nbars: &[Vec<T>], opts: &PropagateOptions<T>) -> Result<Vec<FidelityReport<T>>> {
    let modes = normal_modes(&config.trap)?;
    let gate = GateHamiltonian::new(config, &modes, cutoffs)?;
    let schedule = PulseSchedule::from_config(config)?;
    let space = gate.space().clone();
    let ensembles = nbars.iter().map(|nb| ThermalEnsemble::new(nb, &space)).collect::<Result<Vec<_>>>()?;
    for e in &ensembles {
        e.check_tail(TAIL_LIMIT)?;
    }
    let floor = T::lit(WEIGHT_FLOOR);
    let columns: Vec<usize> = (0..space.motional_dim()).filter(|&k| ensembles.iter().any(|e| e.weights[k] > floor)).collect();
    let ideal = ideal_gate(config)?;
    let blocks = propagate_blocks(&gate, &schedule, &columns, opts)?;
    reports_from_blocks(config, &blocks, &ensembles, &ideal, opts.tol)
}

pub fn reports_from_blocks<T: Real>(
    config: &GateConfig<T>,
    blocks: &BlockPropagation<T>,
    ensembles: &[ThermalEnsemble<T>],
    ideal: &IdealGate<T>,
    tol: T,
) -> Result<Vec<FidelityReport<T>>> {
    let u_id = ideal.matrix();
    let IntegrationStats { accepted, .. } = blocks.stats;
    ensembles
        .iter()
        .map(|thermal| {
            let coh = coherence_matrix(blocks, thermal)?;
            let mut channel = QuantumChannel::from_coherences(&coh);
            channel.nbar = thermal.nbar.clone();
            channel.cutoffs = thermal.cutoffs.clone();
            let fidelity = process_fidelity(&channel, &u_id);
            let simulated = phase_gate_from_coherences(&coh);
            let (g1, g2) = local_invariants(&simulated)?;
            Ok(FidelityReport {
                fidelity,
                infidelity: T::one() - fidelity,
                conditional_phase: conditional_phase(&simulated)?,
                ideal_conditional_phase: ideal.conditional_phase(),
                g1: (g1.re, g1.im),
                g2,
                nbar: thermal.nbar.clone(),
                cutoffs: thermal.cutoffs.clone(),
                thermal_tails: thermal.tails.clone(),
                choi_min_eigenvalue: channel.choi_eigenvalues().into_iter().fold(T::infinity(), T::min),
                trace_defect: channel.trace_defect(),
                ideal_phases: ideal.phases.clone(),
                config: config.clone(),
                tol,
                steps: accepted,
            })
        })
        .collect()
}
