//! Axial mechanics of a linear ion chain: equilibrium geometry, Hessian,
//! normal modes and their shifts under state-dependent tweezer potentials.
//!
//! Internally lengths are measured in the Coulomb length
//! `ℓ = (e²/(4πε₀Mω_z²))^{1/3}` and frequencies in the axial trap frequency
//! `ω_z`; the public API converts frequencies back to rad/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, sym_eigen, Matrix};
use crate::scalar::Real;
use crate::units;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec<T> {
    pub n_ions: usize,
    /// kg
    pub ion_mass: T,
    /// C
    pub charge: T,
    /// rad/s; equals the COM frequency of the bare chain
    pub axial_frequency: T,
}

impl<T: Real> TrapSpec<T> {
    pub fn new(n_ions: usize, ion_mass: T, axial_frequency: T) -> Self {
        Self { n_ions, ion_mass, charge: T::lit(units::ELEMENTARY_CHARGE), axial_frequency }
    }

    /// Chain of ¹⁷¹Yb⁺ ions.
    pub fn ytterbium(n_ions: usize, axial_frequency: T) -> Self {
        Self::new(n_ions, T::lit(units::YB171_AMU * units::AMU), axial_frequency)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::InvalidParameter("n_ions must be at least 1".into()));
        }
        if !(self.ion_mass > T::zero()) {
            return Err(Error::InvalidParameter("ion_mass must be positive".into()));
        }
        if !(self.axial_frequency > T::zero()) {
            return Err(Error::InvalidParameter("axial_frequency must be positive".into()));
        }
        if !(self.charge > T::zero()) {
            return Err(Error::InvalidParameter("charge must be positive".into()));
        }
        Ok(())
    }

    /// Coulomb length in metres.
    pub fn coulomb_length(&self) -> T {
        let e = self.charge.as_f64();
        let m = self.ion_mass.as_f64();
        let w = self.axial_frequency.as_f64();
        let l3 = e * e / (4.0 * std::f64::consts::PI * units::EPSILON_0 * m * w * w);
        T::lit(l3.cbrt())
    }
}

/// Normal modes of the axial motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalModes<T> {
    /// rad/s
    pub axial_frequency: T,
    /// Equilibrium positions in Coulomb lengths, ascending.
    pub positions: Vec<T>,
    /// Mode frequencies in rad/s, ascending; index 0 is the COM mode.
    pub frequencies: Vec<T>,
    /// `vectors[m][i]` is the participation `b_{m,i}` of ion `i` in mode `m`.
    pub vectors: Vec<Vec<T>>,
}

impl<T: Real> CrystalModes<T> {
    pub fn n_ions(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn com_frequency(&self) -> T {
        self.frequencies[0]
    }

    /// Mode frequencies in units of the axial frequency.
    pub fn scaled_frequencies(&self) -> Vec<T> {
        self.frequencies.iter().map(|&w| w / self.axial_frequency).collect()
    }

    /// Hessian rebuilt from the spectral decomposition, in units of `ω_z²`.
    pub fn hessian(&self) -> Matrix<T> {
        let n = self.n_ions();
        let mut a = Matrix::zeros(n, n);
        for (w, b) in self.scaled_frequencies().iter().zip(&self.vectors) {
            let lambda = *w * *w;
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] += lambda * b[i] * b[j];
                }
            }
        }
        a
    }

    /// Index of the mode with the largest overlap with the uniform (COM) vector.
    pub fn com_branch(&self) -> usize {
        let n = T::from_usize_lossy(self.n_ions());
        let overlap = |b: &Vec<T>| (b.iter().copied().sum::<T>() / n.sqrt()).abs();
        (0..self.n_modes())
            .max_by(|&a, &b| overlap(&self.vectors[a]).partial_cmp(&overlap(&self.vectors[b])).unwrap())
            .unwrap_or(0)
    }
}

fn gradient<T: Real>(u: &[T]) -> Vec<T> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let mut g = u[i];
            for j in 0..n {
                if j != i {
                    let d = u[i] - u[j];
                    g -= d.signum() / (d * d);
                }
            }
            g
        })
        .collect()
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Hessian of the dimensionless potential `Σ u²/2 + Σ_{i<j} 1/|u_i − u_j|`.
fn scaled_hessian<T: Real>(u: &[T]) -> Result<Matrix<T>> {
    let n = u.len();
    let mut a = Matrix::zeros(n, n);
    let two = T::lit(2.0);
    for i in 0..n {
        a[(i, i)] = T::one();
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (u[i] - u[j]).abs();
            if d <= T::epsilon() {
                return Err(Error::CoincidentIons(i.min(j), i.max(j)));
            }
            let k = two / (d * d * d);
            a[(i, i)] += k;
            a[(i, j)] = -k;
        }
    }
    Ok(a)
}

/// Dimensionless equilibrium positions of the chain, ascending and
/// antisymmetric about the trap centre.
pub fn equilibrium_positions<T: Real>(trap: &TrapSpec<T>) -> Result<Vec<T>> {
    trap.validate()?;
    let n = trap.n_ions;
    if n == 1 {
        return Ok(vec![T::zero()]);
    }
    let tol = T::tol(1e-12);
    let half = T::from_usize_lossy(n - 1) / T::lit(2.0);
    let spacing = T::lit(2.018) / T::from_usize_lossy(n).powf(T::lit(0.559));
    let mut u: Vec<T> = (0..n).map(|i| (T::from_usize_lossy(i) - half) * spacing).collect();

    const MAX_ITER: usize = 200;
    let mut residual = max_abs(&gradient(&u));
    for _ in 0..MAX_ITER {
        if residual < tol {
            break;
        }
        let g = gradient(&u);
        let h = scaled_hessian(&u)?;
        let step = solve(&h, &g).ok_or(Error::NoConvergence { iterations: 0, residual: residual.as_f64() })?;
        // damped Newton: halve until the residual drops and the ordering survives
        let mut lambda = T::one();
        loop {
            let trial: Vec<T> = u.iter().zip(&step).map(|(&x, &s)| x - lambda * s).collect();
            let ordered = trial.windows(2).all(|w| w[0] < w[1]);
            if ordered {
                let r = max_abs(&gradient(&trial));
                if r < residual || lambda < T::lit(1e-6) {
                    u = trial;
                    residual = r;
                    break;
                }
            }
            lambda = lambda * T::lit(0.5);
            if lambda < T::lit(1e-12) {
                return Err(Error::NoConvergence { iterations: MAX_ITER, residual: residual.as_f64() });
            }
        }
    }
    for i in 0..n / 2 {
        let s = (u[n - 1 - i] - u[i]) / T::lit(2.0);
        u[i] = -s;
        u[n - 1 - i] = s;
    }
    if n % 2 == 1 {
        u[n / 2] = T::zero();
    }
    residual = max_abs(&gradient(&u));
    if residual >= tol {
        return Err(Error::NoConvergence { iterations: MAX_ITER, residual: residual.as_f64() });
    }
    Ok(u)
}

/// Axial Hessian about `positions`, in units of `ω_z²`.
pub fn axial_hessian<T: Real>(trap: &TrapSpec<T>, positions: &[T]) -> Result<Matrix<T>> {
    trap.validate()?;
    if positions.len() != trap.n_ions {
        return Err(Error::DimensionMismatch { expected: trap.n_ions, got: positions.len() });
    }
    scaled_hessian(positions)
}

fn canonical_sign<T: Real>(v: &mut [T]) {
    let scale = max_abs(v);
    if let Some(first) = v.iter().copied().find(|x| x.abs() > scale * T::lit(1e-8)) {
        if first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn modes_from_hessian<T: Real>(a: &Matrix<T>, axial: T, positions: Vec<T>) -> Result<CrystalModes<T>> {
    let (lambda, vecs) = sym_eigen(a);
    let scale = lambda.iter().fold(T::zero(), |m, l| m.max(l.abs()));
    let mut frequencies = Vec::with_capacity(lambda.len());
    for (m, &l) in lambda.iter().enumerate() {
        if l < -scale * T::epsilon() * T::lit(16.0) {
            return Err(Error::UnstableMode { mode: m, eigenvalue: l.as_f64() });
        }
        frequencies.push(axial * l.max(T::zero()).sqrt());
    }
    let vectors = (0..lambda.len())
        .map(|m| {
            let mut v = vecs.column(m);
            canonical_sign(&mut v);
            v
        })
        .collect();
    Ok(CrystalModes { axial_frequency: axial, positions, frequencies, vectors })
}

/// Axial normal modes of the bare chain.
pub fn normal_modes<T: Real>(trap: &TrapSpec<T>) -> Result<CrystalModes<T>> {
    let u = equilibrium_positions(trap)?;
    let a = axial_hessian(trap, &u)?;
    modes_from_hessian(&a, trap.axial_frequency, u)
}

/// State-dependent tweezers on an ion pair. `spin_config` holds the σ_z
/// eigenvalues (±1) of the two addressed qubits, with σ_z|1⟩ = +|1⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweezerPerturbation<T> {
    /// rad/s
    pub tweezer_frequency: T,
    pub pair: (usize, usize),
    pub spin_config: (i8, i8),
}

impl<T: Real> TweezerPerturbation<T> {
    pub fn new(tweezer_frequency: T, pair: (usize, usize), spin_config: (i8, i8)) -> Self {
        Self { tweezer_frequency, pair, spin_config }
    }

    pub fn validate(&self, n_ions: usize) -> Result<()> {
        let (i, j) = self.pair;
        if i == j {
            return Err(Error::InvalidParameter(format!("tweezer pair ({i}, {j}) addresses one ion twice")));
        }
        if i >= n_ions || j >= n_ions {
            return Err(Error::IndexOutOfRange { index: i.max(j), len: n_ions });
        }
        for s in [self.spin_config.0, self.spin_config.1] {
            if s != 1 && s != -1 {
                return Err(Error::InvalidParameter(format!("spin sign {s} is not ±1")));
            }
        }
        if !(self.tweezer_frequency >= T::zero()) {
            return Err(Error::InvalidParameter("tweezer frequency must be non-negative".into()));
        }
        Ok(())
    }

    fn signs(&self) -> (T, T) {
        (T::lit(f64::from(self.spin_config.0)), T::lit(f64::from(self.spin_config.1)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMethod {
    /// First-order shift of the Hessian eigenvalues.
    Perturbative,
    /// Diagonalization of the Hessian with the tweezer curvature added.
    Exact,
}

/// Modes of the Hessian with the tweezer curvature `±ω_tw²` added on the
/// two addressed sites.
pub fn exact_shifted_modes<T: Real>(modes: &CrystalModes<T>, pert: &TweezerPerturbation<T>) -> Result<CrystalModes<T>> {
    pert.validate(modes.n_ions())?;
    let mut a = modes.hessian();
    let t = pert.tweezer_frequency / modes.axial_frequency;
    let t2 = t * t;
    let (si, sj) = pert.signs();
    let (i, j) = pert.pair;
    a[(i, i)] += t2 * si;
    a[(j, j)] += t2 * sj;
    modes_from_hessian(&a, modes.axial_frequency, modes.positions.clone())
}

/// Mode frequencies (rad/s, ascending) in the presence of the tweezers.
pub fn shifted_mode_frequencies<T: Real>(
    modes: &CrystalModes<T>,
    pert: &TweezerPerturbation<T>,
    method: ShiftMethod,
) -> Result<Vec<T>> {
    pert.validate(modes.n_ions())?;
    match method {
        ShiftMethod::Exact => Ok(exact_shifted_modes(modes, pert)?.frequencies),
        ShiftMethod::Perturbative => {
            let (si, sj) = pert.signs();
            let (i, j) = pert.pair;
            let wtw2 = pert.tweezer_frequency * pert.tweezer_frequency;
            let mut out = Vec::with_capacity(modes.n_modes());
            for (m, (&w, b)) in modes.frequencies.iter().zip(&modes.vectors).enumerate() {
                let arg = w * w + wtw2 * (b[i] * b[i] * si + b[j] * b[j] * sj);
                if arg < T::zero() {
                    let scale = modes.axial_frequency * modes.axial_frequency;
                    return Err(Error::UnstableMode { mode: m, eigenvalue: (arg / scale).as_f64() });
                }
                out.push(arg.sqrt());
            }
            out.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(out)
        }
    }
}

/// First-order COM shift `g_com = √(ω_com² + ω_tw²·Σσ/N) − ω_com` for a
/// given sum of the two σ_z eigenvalues.
pub fn com_shift<T: Real>(com_frequency: T, tweezer_frequency: T, n_ions: usize, sigma_sum: T) -> T {
    let w = com_frequency;
    let arg = w * w + tweezer_frequency * tweezer_frequency * sigma_sum / T::from_usize_lossy(n_ions);
    arg.sqrt() - w
}

/// `ω_com − ω̃_com` for the mixed spin configuration (+1, −1), from exact
/// diagonalization. Positive when the tweezers pull the COM branch down.
pub fn drive_frequency_correction<T: Real>(trap: &TrapSpec<T>, pert: &TweezerPerturbation<T>) -> Result<T> {
    let modes = normal_modes(trap)?;
    drive_frequency_correction_for(&modes, pert)
}

/// As [`drive_frequency_correction`], reusing precomputed modes.
pub fn drive_frequency_correction_for<T: Real>(modes: &CrystalModes<T>, pert: &TweezerPerturbation<T>) -> Result<T> {
    let mixed = TweezerPerturbation { spin_config: (1, -1), ..pert.clone() };
    let shifted = exact_shifted_modes(modes, &mixed)?;
    Ok(modes.com_frequency() - shifted.frequencies[shifted.com_branch()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trap(n: usize) -> TrapSpec<f64> {
        TrapSpec::ytterbium(n, units::angular(1e6))
    }

    #[test]
    fn single_ion_sits_at_centre() {
        assert_eq!(equilibrium_positions(&trap(1)).unwrap(), vec![0.0]);
        let a = axial_hessian(&trap(1), &[0.0]).unwrap();
        assert_eq!(a[(0, 0)], 1.0);
    }

    #[test]
    fn two_ion_positions_closed_form() {
        let u = equilibrium_positions(&trap(2)).unwrap();
        let expected = 0.5f64.powf(2.0 / 3.0);
        assert!((u[1] - expected).abs() < 1e-13);
        assert!((u[0] + expected).abs() < 1e-13);
    }

    #[test]
    fn two_ion_hessian() {
        let t = trap(2);
        let u = equilibrium_positions(&t).unwrap();
        let a = axial_hessian(&t, &u).unwrap();
        let expected = Matrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        assert!(a.sub(&expected).max_abs() < 1e-12);
    }

    #[test]
    fn coincident_positions_rejected() {
        let t = trap(2);
        assert!(matches!(axial_hessian(&t, &[0.3, 0.3]), Err(Error::CoincidentIons(0, 1))));
    }

    #[test]
    fn invalid_traps_rejected() {
        let mut t = trap(2);
        t.n_ions = 0;
        assert!(equilibrium_positions(&t).is_err());
        let mut t = trap(2);
        t.ion_mass = 0.0;
        assert!(normal_modes(&t).is_err());
    }

    #[test]
    fn three_ion_frequencies() {
        let modes = normal_modes(&trap(3)).unwrap();
        let r = modes.scaled_frequencies();
        let expected = [1.0, 3f64.sqrt(), (29.0f64 / 5.0).sqrt()];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((modes.positions[2] - 1.0772173450159).abs() < 1e-12);
    }

    #[test]
    fn mixed_config_cancels_first_order_com_shift() {
        let modes = normal_modes(&trap(4)).unwrap();
        let w = modes.com_frequency();
        for pair in [(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)] {
            let p = TweezerPerturbation::new(0.2 * w, pair, (1, -1));
            let shifted = shifted_mode_frequencies(&modes, &p, ShiftMethod::Perturbative).unwrap();
            assert!((shifted[0] - w).abs() < 1e-9 * w);
        }
    }

    #[test]
    fn two_ion_perturbative_com_matches_closed_form() {
        let modes = normal_modes(&trap(2)).unwrap();
        let w = modes.com_frequency();
        let wtw = 0.25 * w;
        let p = TweezerPerturbation::new(wtw, (0, 1), (1, 1));
        let shifted = shifted_mode_frequencies(&modes, &p, ShiftMethod::Perturbative).unwrap();
        assert!((shifted[0] - (w * w + wtw * wtw).sqrt()).abs() < 1e-9 * w);
    }

    #[test]
    fn exact_two_ion_eigenvalues() {
        // exact 2×2: 2 ± √(1 + t²) for spin (+1, −1), t = ω_tw²/ω_z²
        let modes = normal_modes(&trap(2)).unwrap();
        let w = modes.com_frequency();
        let ratio: f64 = 0.05;
        let t = ratio * ratio;
        let p = TweezerPerturbation::new(ratio * w, (0, 1), (1, -1));
        let exact = shifted_mode_frequencies(&modes, &p, ShiftMethod::Exact).unwrap();
        let root = (1.0 + t * t).sqrt();
        assert!((exact[0] / w - (2.0 - root).sqrt()).abs() < 1e-13);
        assert!((exact[1] / w - (2.0 + root).sqrt()).abs() < 1e-13);
        let pert = shifted_mode_frequencies(&modes, &p, ShiftMethod::Perturbative).unwrap();
        for (a, b) in exact.iter().zip(&pert) {
            assert!((a - b).abs() / w <= ratio.powi(4));
        }
    }

    #[test]
    fn anti_trapping_is_reported() {
        let modes = normal_modes(&trap(2)).unwrap();
        let w = modes.com_frequency();
        let p = TweezerPerturbation::new(1.5 * w, (0, 1), (-1, -1));
        for method in [ShiftMethod::Exact, ShiftMethod::Perturbative] {
            let err = shifted_mode_frequencies(&modes, &p, method).unwrap_err();
            assert!(matches!(err, Error::UnstableMode { mode: 0, .. }), "{err}");
        }
    }

    #[test]
    fn perturbation_validation() {
        let modes = normal_modes(&trap(3)).unwrap();
        let bad_pair = TweezerPerturbation::new(1.0, (1, 1), (1, 1));
        assert!(shifted_mode_frequencies(&modes, &bad_pair, ShiftMethod::Exact).is_err());
        let out_of_range = TweezerPerturbation::new(1.0, (0, 3), (1, 1));
        assert!(shifted_mode_frequencies(&modes, &out_of_range, ShiftMethod::Exact).is_err());
        let bad_sign = TweezerPerturbation::new(1.0, (0, 1), (2, 1));
        assert!(shifted_mode_frequencies(&modes, &bad_sign, ShiftMethod::Exact).is_err());
    }

    #[test]
    fn zero_tweezer_means_zero_correction() {
        let p = TweezerPerturbation::new(0.0, (0, 1), (1, -1));
        assert_eq!(drive_frequency_correction(&trap(4), &p).unwrap(), 0.0);
    }

    #[test]
    fn single_precision_modes() {
        let t: TrapSpec<f32> = TrapSpec::ytterbium(3, units::angular(1e6) as f32);
        let modes = normal_modes(&t).unwrap();
        let r = modes.scaled_frequencies();
        assert!((r[1] - 3f32.sqrt()).abs() < 1e-5);
    }
}
