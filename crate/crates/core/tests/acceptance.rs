//! Acceptance gate. Prints one PASS/FAIL line per criterion and a summary;
//! a consistency document is written next to the other test artifacts.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use iontweezer::calibrate::{field_consistency, four_ion_table, pair_study, FieldConsistency, PairStudy, TableSpec};
use iontweezer::crystal::{equilibrium_positions, normal_modes, TrapSpec};
use iontweezer::drive::{envelope, GateConfig, GateHamiltonian};
use iontweezer::evolve::{run_gate, PropagateOptions, PulseSchedule};
use iontweezer::linalg::CMatrix;
use iontweezer::metric::{evaluate_gate, local_invariants, pauli, process_fidelity, unitary_fidelity, FidelityReport, QuantumChannel};
use iontweezer::units::angular;
use iontweezer::C;

const MODE_FREQ_REL: f64 = 1e-9;
const COM_WEIGHT_ABS: f64 = 1e-10;
const POSITION_ABS: f64 = 1e-10;

const FIG3_CUTOFF: usize = 20;
const FIG3_GRID: [f64; 10] = [0.12, 0.14, 0.16, 0.18, 0.20, 0.22, 0.24, 0.25, 0.27, 0.30];
const FIG3_NBARS: [f64; 3] = [0.0, 0.6, 1.0];
const F_LOW: f64 = 0.99;
const F_LOW_FROM: f64 = 0.12;
const F_HIGH: f64 = 0.999;
const F_HIGH_FROM: f64 = 0.22;

const TWO_MODE_RATIO: f64 = 0.25;
const TWO_MODE_CUTOFFS: [usize; 2] = [14, 10];
const TWO_MODE_AGREEMENT: f64 = 1e-3;

const TABLE_TWEEZER_HZ: f64 = 257e3;
const TABLE_ALT_TWEEZER_HZ: f64 = 254e3;
const TABLE_CUTOFFS: [usize; 4] = [5, 2, 2, 2];
const TABLE_INFIDELITY_MAX_X1E4: f64 = 10.0;
const TABLE_INFIDELITY_FACTOR: f64 = 3.0;
const TABLE_OFFSET_REL: f64 = 0.10;
const TABLE_REF_INFIDELITY_X1E4: [f64; 4] = [3.7, 4.7, 2.4, 1.1];
const TABLE_REF_OFFSET_KHZ: [f64; 4] = [1.212, 1.325, 1.488, 1.162];

const NORM_DRIFT: f64 = 1e-9;
const NORM_TOL: f64 = 1e-12;
const CLOSED_FORM_ABS: f64 = 1e-6;
const LOOP_RATIO: f64 = 10.0;
const IDENTITY_FIDELITY_ABS: f64 = 1e-12;
const MAKHLIN_ABS: f64 = 1e-10;

const PHASE_AGREEMENT_REL: f64 = 0.02;

const GATE_TOL: f64 = 1e-8;

struct Gate {
    results: Vec<(String, bool)>,
}

impl Gate {
    fn record(&mut self, id: &str, pass: bool, detail: String, started: Instant) {
        println!("{} criterion {id}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64());
        self.results.push((id.to_string(), pass));
    }
}

fn two_ion(ratio: f64) -> GateConfig<f64> {
    GateConfig::new(TrapSpec::ytterbium(2, angular(1e6)), (0, 1), ratio * angular(1e6), 0.269e-3, -angular(1e3))
}

fn criterion_1(gate: &mut Gate) {
    let t = Instant::now();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let two = normal_modes(&TrapSpec::ytterbium(2, angular(1e6))).unwrap();
    let s = two.scaled_frequencies();
    worst.0 = ((s[0] - 1.0).abs()).max((s[1] / 3f64.sqrt() - 1.0).abs());
    for n in [2usize, 3, 4, 6] {
        let modes = normal_modes(&TrapSpec::ytterbium(n, angular(1e6))).unwrap();
        let com = &modes.vectors[0];
        for b in com {
            worst.1 = worst.1.max((b * b - 1.0 / n as f64).abs());
        }
    }
    let oracle: [(usize, &[f64]); 4] = [
        (2, &[-0.62996052494743658238, 0.62996052494743658238]),
        (3, &[-1.0772173450159418609, 0.0, 1.0772173450159418609]),
        (4, &[-1.4368019919241754605, -0.45437928068567089882, 0.45437928068567089882, 1.4368019919241754605]),
        (6, &[-2.012274680101770901, -1.136125341741675998, -0.36992062601002436052, 0.36992062601002436052, 1.136125341741675998, 2.012274680101770901]),
    ];
    for (n, want) in oracle {
        let got = equilibrium_positions(&TrapSpec::ytterbium(n, angular(1e6))).unwrap();
        for (g, w) in got.iter().zip(want) {
            worst.2 = worst.2.max((g - w).abs());
        }
    }
    let pass = worst.0 < MODE_FREQ_REL && worst.1 < COM_WEIGHT_ABS && worst.2 < POSITION_ABS && t.elapsed().as_secs_f64() < 1.0;
    gate.record("1", pass, format!("mode oracle: freq rel err {:.1e}, b²_com err {:.1e}, position err {:.1e}", worst.0, worst.1, worst.2), t);
}

fn criterion_2(gate: &mut Gate) -> Vec<(f64, Vec<FidelityReport<f64>>)> {
    let t = Instant::now();
    let nbars: Vec<Vec<f64>> = FIG3_NBARS.iter().map(|&n| vec![n]).collect();
    let opts = PropagateOptions::with_tol(GATE_TOL);
    let mut rows = Vec::new();
    let mut pass = true;
    for &ratio in &FIG3_GRID {
        let reports = evaluate_gate(&two_ion(ratio), &[FIG3_CUTOFF], &nbars, &opts).unwrap();
        let thermal: Vec<f64> = reports.iter().filter(|r| r.nbar[0] > 0.0).map(|r| r.fidelity).collect();
        let worst = thermal.iter().cloned().fold(1.0, f64::min);
        let need = if ratio >= F_HIGH_FROM - 1e-12 { F_HIGH } else if ratio >= F_LOW_FROM - 1e-12 { F_LOW } else { 0.0 };
        pass &= worst >= need;
        println!("      ratio {ratio:.2}: F(n̄=0.6) = {:.6}, F(n̄=1) = {:.6}, need ≥ {need}", thermal[0], thermal[1]);
        rows.push((ratio, reports));
    }
    gate.record("2", pass, format!("fidelity thresholds on a {}-point grid, n̄ ∈ {{0.6, 1}}", FIG3_GRID.len()), t);
    rows
}

fn criterion_3(gate: &mut Gate, single: &[(f64, Vec<FidelityReport<f64>>)]) -> FidelityReport<f64> {
    let t = Instant::now();
    let single_f = single.iter().find(|(r, _)| (r - TWO_MODE_RATIO).abs() < 1e-12).map(|(_, reps)| reps[0].fidelity).unwrap();
    let cfg = iontweezer::calibrate::with_corrected_drive(&two_ion(TWO_MODE_RATIO)).unwrap();
    let report = evaluate_gate(&cfg, &TWO_MODE_CUTOFFS, &[vec![0.0, 0.0]], &PropagateOptions::with_tol(GATE_TOL)).unwrap().remove(0);
    let diff = (report.fidelity - single_f).abs();
    gate.record(
        "3",
        diff < TWO_MODE_AGREEMENT,
        format!("two-mode F = {:.6} vs single-mode F = {:.6} at n̄ = 0, |Δ| = {:.2e}", report.fidelity, single_f, diff),
        t,
    );
    report
}

fn table_line(s: &PairStudy<f64>, k: usize) -> (bool, String) {
    let inf = s.infidelity_x1e4;
    let r = TABLE_REF_INFIDELITY_X1E4[k];
    let off_err = (s.omega_com_minus_mu_khz / TABLE_REF_OFFSET_KHZ[k] - 1.0).abs();
    let ok = inf < TABLE_INFIDELITY_MAX_X1E4 && inf < TABLE_INFIDELITY_FACTOR * r && inf > r / TABLE_INFIDELITY_FACTOR && off_err < TABLE_OFFSET_REL;
    (
        ok,
        format!(
            "pair ({},{}): (1-F)x1e4 = {:.3} (ref {r}), ω_com − μ = {:.4} kHz (ref {}), convergence |ΔF| = {}",
            s.pair.0,
            s.pair.1,
            inf,
            s.omega_com_minus_mu_khz,
            TABLE_REF_OFFSET_KHZ[k],
            s.convergence_change.map(|c| format!("{c:.1e}")).unwrap_or_else(|| "unchecked".into())
        ),
    )
}

fn criterion_4(gate: &mut Gate) -> Vec<PairStudy<f64>> {
    let t = Instant::now();
    let spec = TableSpec::four_ion(angular(TABLE_TWEEZER_HZ), -angular(1e3), 0.269e-3, TABLE_CUTOFFS.to_vec());
    let rows = match four_ion_table(&spec, None) {
        Ok(rows) => rows,
        Err(e) => {
            gate.record("4", false, format!("four-ion table failed: {e}"), t);
            return Vec::new();
        }
    };
    let mut pass = true;
    for (k, s) in rows.iter().enumerate() {
        let (ok, line) = table_line(s, k);
        pass &= ok;
        println!("      {} {line}", if ok { "ok " } else { "off" });
    }
    gate.record("4", pass, format!("four-ion pairs at ω_tw = 2π×{} kHz", TABLE_TWEEZER_HZ / 1e3), t);

    let t = Instant::now();
    let mut alt = TableSpec::four_ion(angular(TABLE_ALT_TWEEZER_HZ), -angular(1e3), 0.269e-3, TABLE_CUTOFFS.to_vec());
    alt.convergence_raise = 0;
    println!("INFO  same table at ω_tw = 2π×{} kHz:", TABLE_ALT_TWEEZER_HZ / 1e3);
    for (k, &pair) in alt.pairs.iter().enumerate() {
        match pair_study(&alt, pair, None) {
            Ok(s) => {
                let (ok, line) = table_line(&s, k);
                println!("      {} {line}", if ok { "ok " } else { "off" });
            }
            Err(e) => println!("      pair {pair:?} failed: {e}"),
        }
    }
    println!("      [{:.1} s]", t.elapsed().as_secs_f64());
    rows
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix<f64> {
    let mut cols: Vec<Vec<C<f64>>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<C<f64>> = (0..n).map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        for c in &cols {
            let proj: C<f64> = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= proj * ci;
            }
        }
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    CMatrix::from_columns(&cols)
}

fn criterion_5(gate: &mut Gate) {
    let t = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();

    let cfg = two_ion(0.25);
    let modes = normal_modes(&cfg.trap).unwrap();
    let ham = GateHamiltonian::new(&cfg, &modes, &[FIG3_CUTOFF]).unwrap();
    let schedule = PulseSchedule::from_config(&cfg).unwrap();
    let mut motion = vec![C::new(0.0, 0.0); FIG3_CUTOFF + 1];
    motion[0] = C::new(1.0, 0.0);
    let opts = PropagateOptions::with_tol(NORM_TOL);
    let half = C::new(0.5, 0.0);
    let run = run_gate(&ham, &schedule, &[half, half, half, half], &motion, &opts, 200).unwrap();
    let drift = (run.final_state.norm() - 1.0).abs();
    pass &= drift < NORM_DRIFT;
    notes.push(format!("norm drift {drift:.1e}"));
    let m = |l: &str| run.trajectory.max_displacement(l).unwrap();
    let ratio = (m("01") / m("11")).min(m("10") / m("00"));
    pass &= ratio >= LOOP_RATIO;
    notes.push(format!("loop ratio {ratio:.1} (|α|max 01 {:.3}, 11 {:.4})", m("01"), m("11")));

    let mut free = two_ion(0.25);
    free.tweezer_frequency = 0.0;
    let ham = GateHamiltonian::new(&free, &modes, &[12]).unwrap();
    let schedule = PulseSchedule::from_config(&free).unwrap();
    let mut motion = vec![C::new(0.0, 0.0); 13];
    motion[0] = C::new(1.0, 0.0);
    let samples = 200;
    let run = run_gate(&ham, &schedule, &[C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)], &motion, &opts, samples).unwrap();
    let p = &schedule.pulses[0];
    let (gamma, mu, w) = (free.gamma(), free.drive_frequency, modes.com_frequency());
    let panels = 4_000_000usize;
    let h = p.window / panels as f64;
    let integrand = |s: f64| C::from_polar(2.0 * gamma * envelope(s, p.window, p.ramp) * (mu * s).cos(), w * s);
    let mut acc = integrand(0.0) + integrand(p.window);
    for k in 1..panels {
        acc += integrand(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let exact = C::new(0.0, -1.0) * acc * (h / 3.0);
    let (_, series) = run.trajectory.series.iter().find(|(l, _)| l == "00").unwrap();
    let err = (series[samples] - exact).norm();
    pass &= err < CLOSED_FORM_ABS;
    notes.push(format!("driven-oscillator error {err:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_id = 0.0f64;
    for _ in 0..20 {
        let u = random_unitary(&mut rng, 4);
        worst_id = worst_id.max((process_fidelity(&QuantumChannel::from_unitary(&u), &u) - 1.0).abs());
    }
    let u = random_unitary(&mut rng, 4);
    let zi = &pauli::<f64>(3).kron(&pauli(0)) * &u;
    let orth = (process_fidelity(&QuantumChannel::from_unitary(&zi), &u) - 0.2).abs().max((unitary_fidelity(&u, &zi) - 0.2).abs());
    pass &= worst_id < IDENTITY_FIDELITY_ABS && orth < IDENTITY_FIDELITY_ABS;
    notes.push(format!("F(U,U) err {worst_id:.1e}, orthogonal err {orth:.1e}"));

    let mut worst_inv = 0.0f64;
    for _ in 0..20 {
        let u = random_unitary(&mut rng, 4);
        let (g1, g2) = local_invariants(&u).unwrap();
        let local = random_unitary(&mut rng, 2).kron(&random_unitary(&mut rng, 2));
        let local2 = random_unitary(&mut rng, 2).kron(&random_unitary(&mut rng, 2));
        let (h1, h2) = local_invariants(&(&(&local * &u) * &local2)).unwrap();
        worst_inv = worst_inv.max((g1 - h1).norm()).max((g2 - h2).abs());
    }
    pass &= worst_inv < MAKHLIN_ABS;
    notes.push(format!("Makhlin drift {worst_inv:.1e}"));
    pass &= t.elapsed().as_secs_f64() < 300.0;
    gate.record("5", pass, notes.join("; "), t);
}

#[derive(Serialize)]
struct OperatingPoint {
    label: String,
    tweezer_ratio: f64,
    simulated_conditional_phase: f64,
    effective_model_conditional_phase: f64,
    relative_deviation: f64,
}

#[derive(Serialize)]
struct ConsistencyDocument {
    field: FieldConsistency<f64>,
    operating_points: Vec<OperatingPoint>,
    two_mode_conditional_phase: f64,
    four_ion: Vec<(String, f64, f64)>,
}

fn criterion_6(gate: &mut Gate, fig3: &[(f64, Vec<FidelityReport<f64>>)], two_mode: &FidelityReport<f64>, table: &[PairStudy<f64>]) {
    let t = Instant::now();
    let field = field_consistency(&two_ion(0.25)).unwrap();
    let mut points = Vec::new();
    for (ratio, reports) in fig3 {
        let r = &reports[0];
        points.push(OperatingPoint {
            label: if (*ratio - 0.25).abs() < 1e-12 { "phase-space point".into() } else { "fidelity scan".into() },
            tweezer_ratio: *ratio,
            simulated_conditional_phase: r.conditional_phase,
            effective_model_conditional_phase: r.ideal_conditional_phase,
            relative_deviation: ((r.conditional_phase - r.ideal_conditional_phase) / r.ideal_conditional_phase).abs(),
        });
    }
    let worst = points.iter().map(|p| p.relative_deviation).fold(0.0, f64::max);
    let doc = ConsistencyDocument {
        field,
        operating_points: points,
        two_mode_conditional_phase: two_mode.conditional_phase,
        four_ion: table.iter().map(|s| (format!("({},{})", s.pair.0, s.pair.1), s.report.conditional_phase, s.report.ideal_conditional_phase)).collect(),
    };
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("consistency.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    println!(
        "INFO  E₀ = {:.4e} V/m gives γ²/δ² = {:.4}; γ²/δ² = π/4 needs E₀ = {:.4e} V/m (×{:.3}); report at {}",
        doc.field.configured_field,
        doc.field.configured_gamma_sq_over_delta_sq,
        doc.field.quarter_pi_field,
        doc.field.field_ratio,
        path.display()
    );
    gate.record("6", worst < PHASE_AGREEMENT_REL, format!("effective-model conditional phase vs full dynamics, worst relative deviation {worst:.2e}"), t);
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let started = Instant::now();
    let mut gate = Gate { results: Vec::new() };
    criterion_1(&mut gate);
    criterion_5(&mut gate);
    let fig3 = criterion_2(&mut gate);
    let two_mode = criterion_3(&mut gate, &fig3);
    let table = criterion_4(&mut gate);
    criterion_6(&mut gate, &fig3, &two_mode, &table);
    let passed = gate.results.iter().filter(|(_, p)| *p).count();
    let failed: Vec<&str> = gate.results.iter().filter(|(_, p)| !*p).map(|(id, _)| id.as_str()).collect();
    println!("acceptance: {passed}/{} criteria passed{} in {:.0} s", gate.results.len(), if failed.is_empty() { String::new() } else { format!(", failed: {}", failed.join(", ")) }, started.elapsed().as_secs_f64());
}
