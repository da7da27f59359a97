use lunar_descent::dynamics::MoonConstants;
use lunar_descent::engine::{resolve_cluster, ClusterEngineModel, EngineCharacterization, QuadraticEngineModel};
use lunar_descent::nlp::SolverStatus;
use lunar_descent::oracle::{solve_vertical_bangbang, vertical_as_trajectory, verify_solution, VerticalScenario};
use lunar_descent::transcription::{solve_scenario, trajectory_solver_config, ScenarioSpec, TrajectorySolution};

fn solve(scenario: &ScenarioSpec, engine: &EngineCharacterization) -> TrajectorySolution {
    solve_scenario(scenario, engine, &MoonConstants::default(), &trajectory_solver_config(), None).unwrap().0
}

fn planar() -> ScenarioSpec {
    ScenarioSpec { planar: true, ..ScenarioSpec::default() }
}

fn engine_12kn() -> EngineCharacterization {
    QuadraticEngineModel::default().characterize(12_000.0).unwrap()
}

#[test]
fn planar_descent_lands_and_survives_repropagation() {
    let scenario = planar();
    let engine = engine_12kn();
    let consts = MoonConstants::default();
    let sol = solve(&scenario, &engine);
    assert_eq!(sol.status, SolverStatus::Converged);
    assert!(sol.max_defect <= 1e-6, "{}", sol.max_defect);
    let end = sol.states.last().unwrap();
    assert!((end.r - consts.radius - 800.0).abs() < 1.0);
    assert!(end.w.abs() < 0.01 && end.u.abs() < 0.01 && end.v.abs() < 0.01, "{end:?}");
    assert!(sol.states.iter().all(|s| s.phi == 0.0 && s.v == 0.0));

    let report = verify_solution(&sol, &scenario, &engine, &consts).unwrap();
    assert!(report.pass(), "{report}");
    assert!(report.terminal.altitude.abs() < 29.2, "{report}");
}

#[test]
fn propellant_matches_thrust_quadrature() {
    let engine = engine_12kn();
    let sol = solve(&planar(), &engine);
    let c = engine.isp * MoonConstants::default().g0;
    let burned: f64 = sol
        .times
        .windows(2)
        .zip(sol.controls.windows(2))
        .map(|(t, u)| 0.5 * (t[1] - t[0]) * (u[0].thrust + u[1].thrust) / c)
        .sum();
    assert!((burned - sol.propellant()).abs() < 1e-6 * sol.propellant(), "{burned} vs {}", sol.propellant());
    assert!(sol.controls.iter().all(|u| u.thrust >= -1e-9 && u.thrust <= engine.max_thrust + 1e-9));
}

#[test]
fn vertical_landing_matches_closed_form() {
    let scn = VerticalScenario { h0: 2000.0, v0: 0.0, g: 1.62, t_max: 12_000.0, isp: 305.0, m0: 4000.0 };
    let exact = solve_vertical_bangbang(&scn, 9.81).unwrap();
    let (spec, engine, consts) = vertical_as_trajectory(&scn, 9.81, 60).unwrap();
    let sol = solve_scenario(&spec, &engine, &consts, &trajectory_solver_config(), None).unwrap().0;
    assert_eq!(sol.status, SolverStatus::Converged);
    let rel = (sol.propellant() - exact.propellant).abs() / exact.propellant;
    assert!(rel < 0.01, "{} vs {}", sol.propellant(), exact.propellant);
}

#[test]
fn one_small_engine_cannot_land() {
    let engine = resolve_cluster(&ClusterEngineModel::default().with_count(1)).unwrap();
    let sol = solve(&planar(), &engine);
    assert_ne!(sol.status, SolverStatus::Converged);
}

#[test]
fn equal_engines_give_equal_final_mass_in_either_model() {
    let cluster = resolve_cluster(&ClusterEngineModel::default().with_count(10)).unwrap();
    let q = QuadraticEngineModel::default();
    let t = cluster.max_thrust;
    let matched = QuadraticEngineModel { isp0: cluster.isp - q.d1 * t - q.d2 * t * t, ..q };
    let single = matched.characterize(t).unwrap();
    assert!((single.isp - cluster.isp).abs() < 1e-9);

    let a = solve(&planar(), &cluster);
    let b = solve(&planar(), &single);
    assert_eq!(a.status, SolverStatus::Converged);
    assert_eq!(b.status, SolverStatus::Converged);
    assert!((a.final_mass - b.final_mass).abs() < 0.01, "{} vs {}", a.final_mass, b.final_mass);
}

#[test]
fn rotating_descent_converges_and_lands() {
    let scenario = ScenarioSpec::default();
    let engine = engine_12kn();
    let consts = MoonConstants::default();
    let sol = solve(&scenario, &engine);
    assert_eq!(sol.status, SolverStatus::Converged);
    let end = sol.states.last().unwrap();
    assert!(end.w.abs() < 0.01 && end.u.abs() < 0.01 && end.v.abs() < 0.01, "{end:?}");
    let report = verify_solution(&sol, &scenario, &engine, &consts).unwrap();
    assert!(report.pass(), "{report}");
}

#[test]
fn warm_start_from_a_solution_returns_it() {
    let scenario = planar();
    let engine = engine_12kn();
    let consts = MoonConstants::default();
    let (first, z) = solve_scenario(&scenario, &engine, &consts, &trajectory_solver_config(), None).unwrap();
    let (again, _) = solve_scenario(&scenario, &engine, &consts, &trajectory_solver_config(), Some(&z)).unwrap();
    assert_eq!(again.status, SolverStatus::Converged);
    assert!((again.final_mass - first.final_mass).abs() < 1e-3);
}
