use iontweezer::crystal::TrapSpec;
use iontweezer::drive::GateConfig;
use iontweezer::evolve::PropagateOptions;
use iontweezer::metric::evaluate_gate;
use iontweezer::units::angular;

fn fig2(detuning_hz: f64) -> GateConfig<f64> {
    GateConfig::new(TrapSpec::ytterbium(2, angular(1e6)), (0, 1), angular(0.25e6), 0.269e-3, angular(detuning_hz))
}

fn fidelity(cfg: &GateConfig<f64>) -> f64 {
    evaluate_gate(cfg, &[12], &[vec![0.0]], &PropagateOptions::with_tol(1e-8)).unwrap()[0].fidelity
}

#[test]
fn doubling_the_ramp_barely_moves_the_fidelity() {
    let base = fig2(-1e3);
    let mut doubled = base.clone();
    doubled.ramp_fraction *= 2.0;
    let (a, b) = (fidelity(&base), fidelity(&doubled));
    assert!((a - b).abs() < 1e-4, "ramp {} -> {}: {a} vs {b}", base.ramp_fraction, doubled.ramp_fraction);
}

#[test]
fn both_detuning_signs_run() {
    let below = fidelity(&fig2(-1e3));
    let above = fidelity(&fig2(1e3));
    println!("F(delta = -1 kHz) = {below:.6}, F(delta = +1 kHz) = {above:.6}");
    assert!(below > 0.999, "{below}");
    assert!(above.is_finite() && above <= 1.0 + 1e-12);
}
