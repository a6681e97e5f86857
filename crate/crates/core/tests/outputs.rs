//! Report files, persistence round trips and CLI exit codes.

mod common;

use std::path::Path;
use std::process::Command;

use common::{config, fixtures_dir, uniform_component, Scripted, SumTask};
use evostage::engine::{run_evolution, RunReport};
use evostage::persist::{load_population, load_run, save_population, PersistedPopulation};
use evostage::population::{assemble_algorithm, AlgorithmIndividual, Legality, Population, StageRecord};
use evostage::report::{emit_report, summarize, CONVERGENCE_FILE, SUMMARY_FILE};
use proptest::prelude::*;

fn boom_on_first_offspring(g: usize, o: usize, s: usize) -> String {
    if g > 0 && o == 0 {
        "boom".into()
    } else {
        format!("score = {}", (g * 5 + o * 2 + s) % 9)
    }
}

fn run_with(provider: &Scripted) -> RunReport {
    run_evolution(&config(5, 5, 5, 25, 3), &SumTask { stages: 3 }, provider).unwrap()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn twenty_of_twenty_five_gives_four_fifths() {
    let mut provider = Scripted::new(3);
    provider.body = boom_on_first_offspring;
    let report = run_with(&provider);
    let s = summarize(&report);
    assert_eq!((s.passed, s.evaluations), (20, 25));
    assert!((s.pass_rate - 0.80).abs() < 1e-12);
    assert!(s.aborted.is_none());

    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join(CONVERGENCE_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 26);
    assert!(lines[0].starts_with("evaluation_index,generation,operator"));
    assert_eq!(lines.iter().filter(|l| l.contains(",RuntimeFailure,")).count(), 5);
}

#[test]
fn reemission_is_byte_identical() {
    let report = run_with(&Scripted::new(3));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&report, a.path()).unwrap();
    emit_report(&report, a.path()).unwrap();
    let reloaded = load_run(a.path().join("run.json")).unwrap();
    emit_report(&reloaded, b.path()).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(ta.iter().any(|(name, _)| name.starts_with("best")));
    assert_eq!(ta, tb);
}

#[test]
fn aborted_run_is_marked() {
    let mut provider = Scripted::new(3);
    provider.fail_generation = Some(3);
    let report = run_with(&provider);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["aborted"]["kind"], "provider");
    assert_eq!(summary["generations_completed"], 2);
    assert!(summary["evaluations"].as_u64().unwrap() < 25);
}

fn individual(id: u64, score: f64, sources: Vec<String>, metric: f64) -> AlgorithmIndividual {
    let k = sources.len();
    let comps = vec![
        evostage::population::MultiStageHeuristic::new(
            "a",
            sources
                .iter()
                .enumerate()
                .map(|(i, s)| evostage::population::StageFragment {
                    stage_index: i,
                    source: s.clone(),
                    goal_text: format!("goal \"{i}\"\n\twith escapes"),
                })
                .collect(),
        ),
        uniform_component("b", "pass", k),
    ];
    let mut ind = assemble_algorithm(comps).unwrap();
    ind.id = id;
    ind.info.stages = (0..k).map(|i| StageRecord::new(format!("s{i}")).with_metric("m", metric * i as f64)).collect();
    ind.set_outcome(Legality::Pass, Some(score), "");
    ind
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn populations_survive_save_and_load(
        entries in prop::collection::vec(
            (any::<f64>().prop_filter("finite", |x| x.is_finite()),
             prop::collection::vec("[ -~\n]{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty()), 1..4),
             -1e12f64..1e12),
            0..7),
        capacity in 1usize..6,
        generation in 0usize..20,
    ) {
        let k = entries.iter().map(|e| e.1.len()).min().unwrap_or(1);
        let inds: Vec<_> = entries
            .into_iter()
            .enumerate()
            .map(|(i, (score, sources, metric))| individual(i as u64 + 1, score, sources[..k].to_vec(), metric))
            .collect();
        let pop = Population::from_entries(capacity, inds);
        let saved = PersistedPopulation::new(config(capacity, 3, 3, 9, k), generation, pop);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("population.json");
        save_population(&saved, &path).unwrap();
        prop_assert_eq!(load_population(&path).unwrap(), saved);
    }
}

fn evostage() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evostage"))
}

fn exit_code(cmd: &mut Command) -> i32 {
    let out = cmd.output().unwrap();
    out.status.code().unwrap_or_else(|| panic!("killed: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "profile = \"bo\"\nseed = 1\nbogus = 3\n").unwrap();
    let code = exit_code(evostage().arg("replay").arg("--fixtures").arg(fixtures_dir().join("replay/bo"))
        .arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("out")));
    assert_eq!(code, 2);
}

#[test]
fn missing_responses_abort_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    std::fs::create_dir_all(&fixtures).unwrap();
    std::fs::copy(fixtures_dir().join("replay/bo/config.toml"), fixtures.join("config.toml")).unwrap();
    let out = dir.path().join("out");
    let code = exit_code(evostage().arg("replay").arg("--fixtures").arg(&fixtures).arg("--out").arg(&out));
    assert_eq!(code, 3);
    let summary = std::fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    assert!(summary.contains("\"provider\""), "{summary}");
}

#[test]
fn missing_instance_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gp.toml");
    std::fs::write(&cfg, "profile = \"gp\"\n\n[placement]\ninstance = \"nowhere.json\"\n").unwrap();
    let code = exit_code(evostage().arg("replay").arg("--fixtures").arg(fixtures_dir().join("replay/gp"))
        .arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("out")));
    assert_eq!(code, 4);
}
