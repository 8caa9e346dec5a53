use sobo_cli::config::{SolverName, GridPreset};
use sobo_cli::{CliError, ExperimentConfig, Overrides};

const BASE: &str = r#"
name = "q"
seed = 3

[problem]
family = "quadratic"
d_x = 3
d_y = 4
cond = 5.0

[[solver]]
name = "fsba"
eps = 1e-3
t_max = 50

[[solver]]
name = "lfsba"
eps = 1e-3
m = 4
"#;

const REORDERED: &str = r#"
seed = 3
name = "q"

[problem]
cond = 5.0
d_y = 4
family = "quadratic"
d_x = 3

[[solver]]
t_max = 50
eps = 0.001
name = "fsba"

[[solver]]
m = 4
name = "lfsba"
eps = 1e-3
M = 1.0
"#;

fn parse(s: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(s).unwrap()
}

#[test]
fn hash_ignores_field_order_and_explicit_defaults() {
    assert_eq!(parse(BASE).hash(), parse(REORDERED).hash());
    assert_eq!(parse(BASE).hash().len(), 64);
}

#[test]
fn every_semantic_field_changes_the_hash() {
    let base = parse(BASE).hash();
    let edits = [
        ("seed = 3", "seed = 4"),
        ("d_x = 3", "d_x = 2"),
        ("cond = 5.0", "cond = 5.5"),
        ("eps = 1e-3\nt_max", "eps = 2e-3\nt_max"),
        ("t_max = 50", "t_max = 51"),
        ("m = 4", "m = 5"),
        ("name = \"q\"", "name = \"r\""),
        ("name = \"fsba\"", "name = \"ifsba\""),
    ];
    for (from, to) in edits {
        let text = BASE.replacen(from, to, 1);
        assert_ne!(text, BASE, "{from}");
        assert_ne!(parse(&text).hash(), base, "{from} -> {to}");
    }
    let mut with_repeat = parse(BASE);
    with_repeat.repeat = 2;
    assert_ne!(with_repeat.hash(), base);
    let mut with_lambda = parse(BASE);
    Overrides {
        lambda: Some(100.0),
        ..Default::default()
    }
    .apply(&mut with_lambda);
    assert_ne!(with_lambda.hash(), base);
}

fn config_err(text: &str) -> String {
    match ExperimentConfig::from_toml(text) {
        Err(e @ CliError::Config(_)) => {
            assert_eq!(e.exit_code(), 2);
            e.to_string()
        }
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn rejects_bad_configs() {
    config_err(&BASE.replace("\"lfsba\"", "\"newton\""));
    config_err(&BASE.replace("cond = 5.0", "cond = 5.0\ncolour = 1"));
    config_err(&BASE.replace("t_max = 50", "t_max = 50\nbogus = true"));
    config_err(&BASE.replace("family = \"quadratic\"", "family = \"cubic\""));
    config_err(&BASE.replace("eps = 1e-3\nt_max", "eps = -1.0\nt_max"));
    config_err(&format!("repeat = 0\n{BASE}"));
    config_err(&format!("output = \"../escape\"\n{BASE}"));
    config_err(&BASE.replace("\"fsba\"", "\"f2ba\""));
    let no_solvers = BASE.split("[[solver]]").next().unwrap();
    config_err(no_solvers);
}

#[test]
fn solver_seeds_depend_on_index_only() {
    let c = parse(BASE);
    assert_ne!(c.solver_seed(0), c.solver_seed(1));
    assert_eq!(c.solver_seed(1), parse(REORDERED).solver_seed(1));
    let mut other = c.clone();
    other.seed = 4;
    assert_ne!(other.solver_seed(0), c.solver_seed(0));
}

#[test]
fn overrides_touch_every_solver() {
    let mut c = parse(BASE);
    Overrides {
        eps: Some(1e-5),
        m: Some(7),
        big_m: Some(3.0),
        t_max: Some(9),
        ..Default::default()
    }
    .apply(&mut c);
    for s in &c.solvers {
        assert_eq!((s.eps, s.m, s.big_m, s.t_max), (1e-5, 7, 3.0, Some(9)));
    }
}

#[test]
fn grid_presets_expand() {
    let c = parse(BASE);
    let f3 = GridPreset::named("f3").unwrap().expand(&c);
    assert_eq!(f3.len(), 16);
    let lazy = GridPreset::named("f3-lazy").unwrap().expand(&c);
    assert_eq!(lazy.len(), 64);
    for (_, cfg) in &lazy {
        // m only moves for LFSBA
        assert_eq!(cfg.solvers[0].name, SolverName::Fsba);
        assert_eq!(cfg.solvers[0].m, 1);
    }
    let mut hashes: Vec<String> = lazy.iter().map(|(_, c)| c.hash()).collect();
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), 64);
    assert!(GridPreset::named("f4").is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap();
            n += 1;
        }
    }
    assert!(n >= 4);
}
