use semitrack::io::{parse_scenario, parse_scenario_str, Scenario, ScenarioFile};
use semitrack::model::{Carcass, ModelForm, PressureProfile, VehicleParams};
use semitrack::Error;

#[test]
fn empty_file_is_the_reference_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, "").unwrap();
    let s = parse_scenario(&path).unwrap();
    assert_eq!(s.params, VehicleParams::table1());
    assert_eq!(s.carcass, Carcass::Flexible);
    assert_eq!(s.pressure, [PressureProfile::Constant, PressureProfile::Constant]);
    assert_eq!(s.file, ScenarioFile::default());
}

#[test]
fn single_override_changes_only_that_field() {
    let s = parse_scenario_str("v_x = 20.0\n", "t").unwrap();
    let mut expected = VehicleParams::table1();
    expected.v_x = 20.0;
    assert_eq!(s.params, expected);
    let base = ModelForm::default_for(&VehicleParams::table1(), Carcass::Flexible).unwrap();
    let form = ModelForm::default_for(&s.params, Carcass::Flexible).unwrap();
    assert_eq!(form.lbar, base.lbar);
    assert!((form.eps - base.eps * 2.5).abs() < 1e-15);
}

#[test]
fn wrong_key_is_named_with_a_suggestion() {
    let err = parse_scenario_str("mass = 1300.0\n", "cfg.toml").unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("cfg.toml:1:1"), "{msg}");
    assert!(msg.contains("unknown key `mass`; did you mean `m`?"), "{msg}");
}

#[test]
fn unknown_section_key_is_rejected() {
    let msg = parse_scenario_str("[numerics]\nN = 100\n", "c").unwrap_err().to_string();
    assert!(msg.contains("c:2:1") && msg.contains("`N`") && msg.contains("`n_cells`"), "{msg}");
}

#[test]
fn malformed_value_reports_line_and_column() {
    let msg = parse_scenario_str("m = 1300.0\nl1 = \"long\"\n", "c").unwrap_err().to_string();
    assert!(msg.starts_with("configuration error: c:2:6:"), "{msg}");
}

#[test]
fn out_of_range_values_are_rejected() {
    let err = parse_scenario_str("phi_1 = 1.5\n", "c").unwrap_err();
    assert!(matches!(err, Error::InvalidParameter { field: "phi_1", .. }), "{err}");
    let err = parse_scenario_str("chi = 2\n", "c").unwrap_err();
    assert!(matches!(err, Error::InvalidParameter { field: "chi", .. }), "{err}");
    assert!(parse_scenario_str("Lbar_rule = \"median\"\n", "c").is_err());
    assert!(parse_scenario_str("[model]\ncarcass = \"soft\"\n", "c").is_err());
}

#[test]
fn angles_accept_unit_suffixes() {
    let s = parse_scenario_str("[initial]\nU = [\"2 deg\", \"0.01 rad\"]\n[control]\nU_star = [0.001, 0]\n", "c").unwrap();
    assert!((s.input()[0] - 2f64.to_radians()).abs() < 1e-16);
    assert_eq!(s.input()[1], 0.01);
    assert_eq!(s.closed_loop_config().u_star[0], 0.001);
}

#[test]
fn sections_and_pressure_profiles() {
    let text = r#"
Lbar_rule = "product_over_sum"
chi = 1

[model]
carcass = "rigid"
pressure_1 = { kind = "exponential", decay = 1.5 }
pressure_2 = { kind = "tabulated", xi = [0.0, 0.5, 1.0], p = [1.2, 1.0, 0.8] }

[numerics]
n_cells = 100
dt = 2e-6
T = 3.0

[control]
mode = "state"
F = [1.0, 0.0, 0.0, 0.0]
seed = 42

[chart]
vx_steps = 5
"#;
    let s = parse_scenario_str(text, "c").unwrap();
    assert!(s.params.rear_steer);
    assert_eq!(s.params.lbar_rule.name(), "product_over_sum");
    assert_eq!(s.carcass, Carcass::Rigid);
    assert!(matches!(s.pressure[0], PressureProfile::Exponential { .. }));
    assert!(matches!(s.pressure[1], PressureProfile::Tabulated(_)));
    assert_eq!((s.numerics.n_cells, s.numerics.dt, s.numerics.t_end), (100, 2e-6, 3.0));
    let cfg = s.closed_loop_config();
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.gains.f[(0, 0)], 1.0);
    assert_eq!(s.chart_spec().v_x.len(), 5);
    let echoed = parse_scenario_str(&s.echo_toml(), "echo").unwrap();
    assert_eq!(echoed.file, s.file);
}

#[test]
fn default_scenario_matches_reference_experiment() {
    let s = Scenario::default();
    assert_eq!(s.x0().as_slice(), &[0.03, -0.25]);
    assert_eq!(s.z0().as_slice(), &[0.027, 0.033]);
    let cfg = s.closed_loop_config();
    assert_eq!(cfg.delay, 0.02);
    assert_eq!(cfg.noise_std, 0.1);
    assert_eq!(cfg.noise_dt, 0.005);
    assert_eq!(cfg.gains.l.as_slice(), &[-16.02, -147.267]);
}
