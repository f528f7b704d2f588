use distkf_harness::config::{ExperimentConfig, Mode, ModelSpec};
use distkf_harness::registry::{self, fixture, BuiltModel, FIXTURES, MODELS};
use distkf_harness::runner::{prepare, run_experiment, Estimator};
use distkf_harness::HarnessError;

const INLINE: &str = r#"
name = "inline"
steps = 10
seed = 4
x0 = [1.0, 0.0, -1.0]

[model]
kind = "linear"
dims = [1, 2]
out_dims = [1, 1]
a = [[0.9, 0.1, 0.0], [0.0, 0.8, 0.1], [0.05, 0.0, 0.7]]
c = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.5]]

[noise]
w_std = [0.1, 0.1, 0.1]
v_std = [0.2, 0.2]

[estimator]
q_diag = [0.01, 0.01, 0.01]
r_diag = [0.04, 0.04]
p0_diag = [1.0, 1.0, 1.0]
prior_mean = [0.0, 0.0, 0.0]
"#;

#[test]
fn inline_linear_config_parses_with_defaults() {
    let c = ExperimentConfig::from_toml(INLINE).unwrap();
    assert_eq!(c.runs, 1);
    assert_eq!(c.mode, Mode::Auto);
    assert!(c.monitors);
    assert_eq!(c.noise.bound_sigma, Some(6.0));
    let p = prepare(&c).unwrap();
    assert!(matches!(p.estimator, Estimator::Dkf(_)));
    assert_eq!(p.model.partition().dims(), &[1, 2]);
    run_experiment(&c).unwrap();
}

#[test]
fn toml_round_trip() {
    for name in FIXTURES {
        let c = fixture(name).unwrap();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c, "{name}");
    }
    let c = ExperimentConfig::from_toml(INLINE).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
}

#[test]
fn every_fixture_prepares() {
    for name in FIXTURES {
        let c = fixture(name).unwrap();
        let p = prepare(&c).unwrap_or_else(|e| panic!("{name}: {e}"));
        let linear = name.contains("linear");
        assert_eq!(p.model.is_linear(), linear, "{name}");
        assert_eq!(matches!(p.estimator, Estimator::Dkf(_)), linear, "{name}");
    }
    assert_eq!(MODELS.len(), 3);
}

#[test]
fn zero_steps_rejected() {
    let mut c = fixture("paper-linear-4state").unwrap();
    c.steps = 0;
    assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
}

#[test]
fn zero_runs_rejected() {
    let mut c = fixture("paper-linear-4state").unwrap();
    c.runs = 0;
    assert!(matches!(prepare(&c), Err(HarnessError::Config(_))));
}

#[test]
fn dimension_mismatches_rejected() {
    let base = fixture("paper-linear-4state").unwrap();
    let mut c = base.clone();
    c.x0.pop();
    assert!(matches!(prepare(&c), Err(HarnessError::Config(m)) if m.contains("x0")));
    let mut c = base.clone();
    c.estimator.r_diag.push(1.0);
    assert!(matches!(prepare(&c), Err(HarnessError::Config(m)) if m.contains("r_diag")));
    let mut c = base.clone();
    c.estimator.p0_diag[0] = 0.0;
    assert!(prepare(&c).is_err());
    let mut c = base;
    c.noise.bound_sigma = Some(0.5);
    assert!(prepare(&c).is_err());
}

#[test]
fn ragged_inline_matrix_rejected() {
    let text = INLINE.replace("[0.0, 0.8, 0.1]", "[0.0, 0.8]");
    let c = ExperimentConfig::from_toml(&text).unwrap();
    assert!(matches!(prepare(&c), Err(HarnessError::Config(m)) if m.contains("model.a")));
}

#[test]
fn output_coupling_in_inline_model_rejected() {
    let text = INLINE.replace("[0.0, 1.0, 0.5]]", "[0.3, 1.0, 0.5]]");
    let c = ExperimentConfig::from_toml(&text).unwrap();
    assert!(matches!(prepare(&c), Err(HarnessError::Core(_))));
}

#[test]
fn unknown_names_rejected() {
    assert!(matches!(fixture("nope"), Err(HarnessError::UnknownModel(_))));
    let mut c = fixture("paper-linear-4state").unwrap();
    c.model = ModelSpec::Registered { name: "nope".into(), coupling: 1.0 };
    assert!(matches!(prepare(&c), Err(HarnessError::UnknownModel(_))));
    assert!(ExperimentConfig::from_toml("name = 1").is_err());
}

#[test]
fn mode_selection() {
    let mut c = fixture("reactor-chain").unwrap();
    c.mode = Mode::Dkf;
    assert!(matches!(prepare(&c), Err(HarnessError::Config(_))));
    let mut c = fixture("paper-linear-4state").unwrap();
    c.mode = Mode::Dekf;
    assert!(matches!(prepare(&c).unwrap().estimator, Estimator::Dekf(_)));
}

#[test]
fn registered_model_alias_resolves() {
    assert_eq!(registry::resolve("paper-linear").unwrap(), fixture("paper-linear-4state").unwrap());
}

#[test]
fn coupling_scale_applies_to_registered_linear() {
    let mut c = fixture("paper-linear-4state").unwrap();
    let BuiltModel::Linear(base) = prepare(&c).unwrap().model else { panic!() };
    c.model = ModelSpec::Registered { name: "paper-linear".into(), coupling: 2.0 };
    let BuiltModel::Linear(scaled) = prepare(&c).unwrap().model else { panic!() };
    assert_eq!(scaled.a_block(0, 1), base.a_block(0, 1) * 2.0);
    assert_eq!(scaled.a_block(0, 0), base.a_block(0, 0));
}

#[test]
fn decoupled_fixture_has_no_cross_blocks() {
    let BuiltModel::Linear(m) = prepare(&fixture("decoupled-linear").unwrap()).unwrap().model else { panic!() };
    assert!(m.neighbors(0).is_empty() && m.neighbors(1).is_empty());
}
