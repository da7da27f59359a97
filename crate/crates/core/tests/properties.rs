use lunar_descent::dynamics::{jacobi_energy, LanderState, MoonConstants, ThrustCommand};
use lunar_descent::engine::{EngineCharacterization, QuadraticEngineModel};
use lunar_descent::integrate::{propagate, StepControl};
use lunar_descent::pareto::{parse_table, sweep, tabulate, FnSolver, SweepGrid, SweepMode, SweepSpec};
use lunar_descent::transcription::ScenarioSpec;
use proptest::prelude::*;

fn spec() -> SweepSpec {
    SweepSpec {
        grid: SweepGrid::thrust_range(4000.0, 32_000.0, 2000.0, QuadraticEngineModel::default()).unwrap(),
        scenario: ScenarioSpec::default(),
        warm_start: false,
    }
}

fn stub(a: f64, b: f64) -> impl Fn(&EngineCharacterization) -> Option<f64> + Sync {
    move |e: &EngineCharacterization| Some(a - b / (e.max_thrust * e.max_thrust))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coasting_conserves_energy(
        alt in 5_000.0..60_000.0f64, w in -20.0..20.0f64, u in 1600.0..1900.0f64,
        v in -300.0..300.0f64, phi in -1.0..1.0f64,
    ) {
        let k = MoonConstants { omega: 0.0, ..MoonConstants::default() };
        let s0 = LanderState { r: k.radius + alt, phi, w, u, v, m: 3000.0, ..Default::default() };
        let tr = propagate(&s0, &ThrustCommand::coast(), 310.0, &k, 120.0, StepControl::Adaptive { rel_tol: 1e-12 }).unwrap();
        let e0 = jacobi_energy(&s0, &k);
        for s in &tr.states {
            prop_assert!(((jacobi_energy(s, &k) - e0) / e0).abs() < 1e-9);
            prop_assert_eq!(s.m, s0.m);
        }
    }

    #[test]
    fn payload_is_final_mass_less_engine_mass(a in 1500.0..3000.0f64, b in 1e8..8e9f64) {
        let r = sweep(&spec(), &FnSolver(stub(a, b)), 2).unwrap();
        for p in &r.points {
            prop_assert_eq!(p.effective_payload, p.final_mass - p.engine_dry_mass);
            prop_assert_eq!(p.thrust_to_mass0, p.t_max / 4000.0);
        }
        let best = r.best().unwrap();
        prop_assert!(r.converged().all(|p| p.effective_payload <= best.effective_payload));
    }

    #[test]
    fn argmax_ignores_a_constant_mass_offset(a in 1500.0..3000.0f64, b in 1e8..8e9f64, shift in -500.0..500.0f64) {
        let base = sweep(&spec(), &FnSolver(stub(a, b)), 1).unwrap();
        let moved = sweep(&spec(), &FnSolver(stub(a + shift, b)), 3).unwrap();
        prop_assert_eq!(base.maximizer, moved.maximizer);
    }

    #[test]
    fn table_text_round_trips(a in 1500.0..3000.0f64, b in 1e8..8e9f64) {
        let r = sweep(&spec(), &FnSolver(stub(a, b)), 1).unwrap();
        let text = tabulate(&r);
        let back = parse_table(&text, SweepMode::MaxThrust).unwrap();
        prop_assert_eq!(tabulate(&back), text);
        prop_assert_eq!(back.maximizer, r.maximizer);
    }
}
