//! Acceptance suite. Runs without the libtest harness so the PASS/FAIL line
//! of every criterion is always printed; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{config, evaluate_constant_schedule, evaluate_lr_fixture, fixtures_dir, uniform_component, Scripted, SumTask};
use evostage::bo::{bo_run, ei, gp_fit, random_search, BoObjective, BoSettings, BuiltinAcquisition, GpHyper, SyntheticKind, SyntheticObjective};
use evostage::engine::{run_evolution, OperatorKind};
use evostage::harness::stage_boundaries;
use evostage::persist::load_run;
use evostage::placement::instance::{generate_instance, Cell, InstanceParams};
use evostage::placement::{adam_step, density_overflow, hpwl, smooth_wl, AdamState, MicroPlacementInstance};
use evostage::population::{assemble_algorithm, select_parents, Legality, Population};
use evostage::sandbox::{live_candidate_count, pass_rate};

/// Final HPWL of the constant 0.5 learning rate with ten steps per
/// subproblem on the shipped 100-cell instance.
const GOLDEN_CONSTANT_HPWL: f64 = 444.26836561274735;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("{what} took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

// 1 ---------------------------------------------------------------------------

fn selection_law() -> Outcome {
    let start = Instant::now();
    let entries = (0..5u64)
        .map(|i| {
            let mut ind = assemble_algorithm(vec![uniform_component("f", "x = 1", 1)]).unwrap();
            ind.id = i + 1;
            ind.set_outcome(Legality::Pass, Some(10.0 - i as f64), "");
            ind
        })
        .collect();
    let pop = Population::from_entries(5, entries);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 100_000;
    let mut counts = [0usize; 5];
    for parent in select_parents(&pop, draws, &mut rng).map_err(|e| e.to_string())? {
        counts[(parent.id - 1) as usize] += 1;
    }
    let raw: Vec<f64> = (1..=5).map(|r| 1.0 / (r as f64 + 5.0)).collect();
    let norm: f64 = raw.iter().sum();
    let expected: Vec<f64> = raw.iter().map(|w| w / norm).collect();
    let table = [0.2582, 0.2213, 0.1936, 0.1721, 0.1549];
    // The table is rounded to four places; its first entry is off by one in
    // the last place, so compare at that precision.
    for (e, t) in expected.iter().zip(table) {
        check((e - t).abs() < 1e-4, || format!("normalized weight {e} vs tabulated {t}"))?;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&c, p)| {
            let exp = p * draws as f64;
            (c as f64 - exp).powi(2) / exp
        })
        .sum();
    let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
    check(p > 0.01, || format!("chi-square {chi2:.3}, p = {p:.4}"))?;
    within(start.elapsed(), 5.0, "selection")?;
    Ok(format!("counts {counts:?}, chi2 {chi2:.3}, p {p:.3}"))
}

// 2 ---------------------------------------------------------------------------

fn operator_ratio(bo_run_json: &Path) -> Outcome {
    for t in 1..=8usize {
        let cfg = config(3, t, 3, 3 * t, 2);
        let report = run_evolution(&cfg, &SumTask { stages: 2 }, &Scripted::new(2)).map_err(|e| e.to_string())?;
        check(report.records.len() == 3 * t, || format!("t={t}: {} records", report.records.len()))?;
        let mut from_log: BTreeMap<OperatorKind, usize> = BTreeMap::new();
        for r in &report.records {
            *from_log.entry(r.operator).or_default() += 1;
        }
        for kind in OperatorKind::CYCLE {
            check(from_log.get(&kind) == Some(&t), || format!("t={t}: {kind} used {:?} times", from_log.get(&kind)))?;
        }
    }
    let bo = load_run(bo_run_json).map_err(|e| e.to_string())?;
    check(bo.records.len() == 9, || format!("bo profile logged {} evaluations", bo.records.len()))?;
    for kind in OperatorKind::CYCLE {
        let n = bo.records.iter().filter(|r| r.operator == kind).count();
        check(n == 3, || format!("bo profile: {kind} used {n} times"))?;
    }
    Ok("t = 1..8 and the bo profile run are 1:1:1".into())
}

// 3 ---------------------------------------------------------------------------

fn gp_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.random_range(1..=8usize);
        let d = rng.random_range(1..=3usize);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let hyper = GpHyper {
            lengthscales: (0..d).map(|_| rng.random_range(0.15..0.8)).collect(),
            signal_variance: rng.random_range(0.5..2.0),
        };
        let model = gp_fit(&x, &y, &hyper, 1e-6).map_err(|e| format!("case {case}: {e}"))?;

        // Explicit inverse on standardized targets, population sd.
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let scale = if sd > 1e-12 { sd } else { 1.0 };
        let k = |a: &[f64], b: &[f64]| {
            let r2: f64 = (0..d).map(|i| ((a[i] - b[i]) / hyper.lengthscales[i]).powi(2)).sum();
            hyper.signal_variance * (-0.5 * r2).exp()
        };
        let gram = DMatrix::from_fn(n, n, |i, j| k(&x[i], &x[j]) + if i == j { model.noise } else { 0.0 });
        let inv = gram.try_inverse().ok_or_else(|| format!("case {case}: singular"))?;
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / scale));
        let mut queries = x.clone();
        queries.extend((0..5).map(|_| (0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>()));
        for q in &queries {
            let kq = DVector::from_iterator(n, x.iter().map(|xi| k(xi, q)));
            let mu = mean + scale * kq.dot(&(&inv * &ys));
            let var = (scale * scale * (hyper.signal_variance - kq.dot(&(&inv * &kq)))).max(0.0);
            let (m, s) = model.posterior(q);
            let err = (m - mu).abs().max((s * s - var).abs());
            worst = worst.max(err);
            check(err <= 1e-8, || format!("case {case}: mean {m} vs {mu}, var {} vs {var}", s * s))?;
        }
    }
    within(start.elapsed(), 10.0, "gp oracle")?;
    Ok(format!("50 datasets, worst abs error {worst:.2e}"))
}

// 4 ---------------------------------------------------------------------------

fn ei_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let samples = 1_000_000;
    let mut worst_z: f64 = 0.0;
    for case in 0..100 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.05..2.0);
        // Beyond a few sigma the sampled gain is almost surely zero and the
        // oracle has no resolution.
        let best: f64 = mu + sigma * rng.random_range(-3.0..3.0);
        let normal = Normal::new(mu, sigma).unwrap();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..samples {
            let gain = (best - normal.sample(&mut rng)).max(0.0);
            sum += gain;
            sum_sq += gain * gain;
        }
        let mean = sum / samples as f64;
        let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
        let se = (var / samples as f64).sqrt();
        let closed = ei(mu, sigma, best);
        let z = (closed - mean).abs() / se.max(1e-300);
        worst_z = worst_z.max(z);
        check((closed - mean).abs() <= 3.0 * se, || {
            format!("case {case}: ei {closed} vs mc {mean} (se {se:.2e}) at mu {mu}, sigma {sigma}, best {best}")
        })?;
    }
    for (mu, best) in [(0.3, 1.0), (1.0, 0.3), (-2.5, -2.5), (0.0, 7.25)] {
        let v = ei(mu, 0.0, best);
        check(v == f64::max(best - mu, 0.0), || format!("ei({mu}, 0, {best}) = {v}"))?;
    }
    Ok(format!("100 triples, worst |z| {worst_z:.2}; sigma = 0 exact"))
}

// 5 ---------------------------------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n.is_multiple_of(2) {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    } else {
        v[n / 2]
    }
}

fn bo_sanity() -> Outcome {
    let start = Instant::now();
    let objective = BoObjective::Synthetic(SyntheticObjective::new(SyntheticKind::Ackley2d));
    let plan = stage_boundaries(15, 3).map_err(|e| e.to_string())?;
    check(plan.boundaries == vec![5, 5, 5], || format!("plan {:?}", plan.boundaries))?;
    let settings = BoSettings::default();
    check(settings.init_count == 3, || format!("init count {}", settings.init_count))?;
    let (mut ei_gaps, mut random_gaps) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let trace = bo_run(objective.clone(), &mut BuiltinAcquisition::Ei, 15, plan.clone(), seed, settings.clone())
            .map_err(|e| e.to_string())?;
        ei_gaps.push(trace.optimal_gap);
        random_gaps.push(random_search(&objective, 15, seed).map_err(|e| e.to_string())?);
    }
    let (e, r) = (median(ei_gaps), median(random_gaps));
    check(e < r, || format!("median gap ei {e:.4} vs random {r:.4}"))?;
    within(start.elapsed(), 30.0, "bo sanity")?;
    Ok(format!("median gap ei {e:.4} < random {r:.4}"))
}

// 6 ---------------------------------------------------------------------------

fn brute_hpwl(instance: &MicroPlacementInstance, pos: &[f64]) -> f64 {
    let mut total = 0.0;
    for net in &instance.nets {
        let mut per_axis = [0.0f64; 2];
        for (axis, widest) in per_axis.iter_mut().enumerate() {
            for &a in net {
                for &b in net {
                    *widest = widest.max(pos[2 * a + axis] - pos[2 * b + axis]);
                }
            }
        }
        total += per_axis[0] + per_axis[1];
    }
    total
}

fn random_positions(instance: &MicroPlacementInstance, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut pos = Vec::with_capacity(2 * instance.cells.len());
    for _ in &instance.cells {
        pos.push(rng.random_range(0.0..instance.layout_width));
        pos.push(rng.random_range(0.0..instance.layout_height));
    }
    instance.clamp_positions(&mut pos);
    pos
}

/// Compares an analytic gradient against central differences at coordinates
/// where the one-sided slopes agree, i.e. away from kinks. Returns the number
/// of coordinates compared.
fn gradient_matches(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &[f64],
    pos: &[f64],
    coords: &[usize],
    what: &str,
) -> Result<usize, String> {
    let h = 1e-5;
    let f0 = f(pos);
    let mut compared = 0;
    for &i in coords {
        let mut p = pos.to_vec();
        p[i] = pos[i] + h;
        let fp = f(&p);
        p[i] = pos[i] - h;
        let fm = f(&p);
        let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
        if (right - left).abs() > 1e-3 * (1.0 + right.abs().max(left.abs())) {
            continue;
        }
        let fd = (fp - fm) / (2.0 * h);
        let g = grad[i];
        let scale = g.abs().max(fd.abs());
        if scale < 1e-7 {
            compared += 1;
            continue;
        }
        check((g - fd).abs() <= 1e-4 * scale, || format!("{what}: coordinate {i} analytic {g} vs fd {fd}"))?;
        compared += 1;
    }
    Ok(compared)
}

fn placement_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for case in 0..100u64 {
        let params = InstanceParams {
            cells: rng.random_range(2..40),
            nets: rng.random_range(1..25),
            max_net: rng.random_range(2..7),
            ..InstanceParams::default()
        };
        let params = InstanceParams { max_net: params.max_net.min(params.cells), ..params };
        let instance = generate_instance("random", &params, 1000 + case);
        let pos = random_positions(&instance, &mut rng);
        let (fast, slow) = (hpwl(&instance, &pos), brute_hpwl(&instance, &pos));
        check(fast == slow, || format!("instance {case}: hpwl {fast} vs brute force {slow}"))?;
    }

    let (mut wl_checked, mut density_checked) = (0, 0);
    for case in 0..20u64 {
        let params = InstanceParams { cells: 40, nets: 30, ..InstanceParams::default() };
        let instance = generate_instance("grad", &params, 2000 + case);
        let pos = random_positions(&instance, &mut rng);
        let coords: Vec<usize> = (0..40).map(|_| rng.random_range(0..pos.len())).collect();
        let gamma = rng.random_range(0.5..4.0);
        let (_, wl_grad) = smooth_wl(&instance, &pos, gamma);
        wl_checked += gradient_matches(&|p| smooth_wl(&instance, p, gamma).0, &wl_grad, &pos, &coords, "smooth_wl")?;
        let dens = density_overflow(&instance, &pos);
        density_checked +=
            gradient_matches(&|p| density_overflow(&instance, p).penalty, &dens.gradient, &pos, &coords, "density")?;
    }
    check(wl_checked >= 700 && density_checked >= 400, || {
        format!("too few smooth coordinates: {wl_checked} wirelength, {density_checked} density")
    })?;

    let single = MicroPlacementInstance {
        name: "pair".into(),
        cells: vec![Cell { id: "a".into(), w: 1.0, h: 1.0 }, Cell { id: "b".into(), w: 1.0, h: 1.0 }],
        nets: vec![vec![0, 1]],
        layout_width: 8.0,
        layout_height: 8.0,
        bins_x: 2,
        bins_y: 2,
        target_density: 1.0,
        target_overflow: 0.1,
        seed: 0,
        initial_positions: vec![0.0, 0.0, 3.0, 4.0],
    };
    let v = hpwl(&single, &[0.0, 0.0, 3.0, 4.0]);
    check(v == 7.0, || format!("single net hpwl {v}"))?;
    Ok(format!(
        "hpwl exact on 100 instances; gradients on {wl_checked} wirelength and {density_checked} density coordinates"
    ))
}

// 7 ---------------------------------------------------------------------------

/// Textbook Adam, written out independently of the library.
struct ReferenceAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ReferenceAdam {
    fn step(&mut self, g: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        self.t += 1;
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                self.m[i] = b1 * self.m[i] + (1.0 - b1) * gi;
                self.v[i] = b2 * self.v[i] + (1.0 - b2) * gi * gi;
                let m_hat = self.m[i] / (1.0 - b1.powi(self.t));
                let v_hat = self.v[i] / (1.0 - b2.powi(self.t));
                -lr * m_hat / (v_hat.sqrt() + eps)
            })
            .collect()
    }
}

fn adam_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let dim = 6;
    let mut state = AdamState::new(dim);
    let mut reference = ReferenceAdam { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 };
    let (mut x, mut x_ref) = (vec![1.0; dim], vec![1.0; dim]);
    let mut worst: f64 = 0.0;
    for step in 0..100 {
        // Gradient of a shifted quadratic plus noise, evaluated at each copy.
        let noise: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        let g: Vec<f64> = (0..dim).map(|i| 2.0 * (x[i] - i as f64) + noise[i]).collect();
        let g_ref: Vec<f64> = (0..dim).map(|i| 2.0 * (x_ref[i] - i as f64) + noise[i]).collect();
        let lr = 0.05;
        let d = adam_step(&mut state, &g, lr).map_err(|v| v.to_string())?;
        let d_ref = reference.step(&g_ref, lr);
        for i in 0..dim {
            x[i] += d[i];
            x_ref[i] += d_ref[i];
            let err = (x[i] - x_ref[i]).abs();
            worst = worst.max(err);
            check(err <= 1e-10, || format!("step {step}, coordinate {i}: {} vs {}", x[i], x_ref[i]))?;
        }
    }
    let mut fresh = AdamState::new(1);
    let first = adam_step(&mut fresh, &[1.0], 0.3).map_err(|v| v.to_string())?[0];
    check((first.abs() - 0.3).abs() <= 1e-6, || format!("first step magnitude {first}"))?;
    Ok(format!("100 steps, worst deviation {worst:.1e}; first step {first:.9}"))
}

// 8 ---------------------------------------------------------------------------

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

fn replay(profile: &str, out: &Path) -> Result<(), String> {
    let output = Command::new(env!("CARGO_BIN_EXE_evostage"))
        .arg("replay")
        .arg("--fixtures")
        .arg(fixtures_dir().join("replay").join(profile))
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    check(output.status.success(), || {
        format!("{profile} replay failed: {}", String::from_utf8_lossy(&output.stderr))
    })
}

fn golden_replay(root: &Path) -> Outcome {
    let start = Instant::now();
    let acquisition = std::fs::read_to_string(
        fixtures_dir().join("replay/bo/coder-acquisition/coder_initial/g0_o0_s0_a0.txt"),
    )
    .map_err(|e| e.to_string())?;
    let later = std::fs::read_to_string(fixtures_dir().join("replay/bo/coder-acquisition/coder_stage/g0_o0_s1_a0.txt"))
        .map_err(|e| e.to_string())?;
    check(acquisition.contains("return list(sigma)") && later.contains("0.4 * _ei(") && later.contains("0.6 * (-m + "), || {
        "bo fixture is not the staged sigma then 0.4 EI + 0.6 UCB design".into()
    })?;
    let mut lines = Vec::new();
    for (profile, expected) in [("bo", 9usize), ("gp", 25)] {
        let (a, b) = (root.join(format!("{profile}-a")), root.join(format!("{profile}-b")));
        replay(profile, &a)?;
        replay(profile, &b)?;
        let report = load_run(a.join("run.json")).map_err(|e| e.to_string())?;
        check(report.records.len() == expected && report.aborted.is_none(), || {
            format!("{profile}: {} evaluations, aborted {:?}", report.records.len(), report.aborted)
        })?;
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        check(ta == tb, || format!("{profile}: outputs differ between runs"))?;
        lines.push(format!("{profile} {expected} evaluations, pass rate {:.2}", report.pass_rate.rate));
    }
    within(start.elapsed(), 120.0, "golden replay")?;
    Ok(format!("{}; byte-identical reruns", lines.join(", ")))
}

// 9 ---------------------------------------------------------------------------

#[cfg(target_os = "linux")]
fn child_processes() -> usize {
    let Ok(tasks) = std::fs::read_dir("/proc/self/task") else { return 0 };
    tasks
        .flatten()
        .filter_map(|t| std::fs::read_to_string(t.path().join("children")).ok())
        .map(|s| s.split_whitespace().count())
        .sum()
}

#[cfg(not(target_os = "linux"))]
fn child_processes() -> usize {
    0
}

fn legality_accounting() -> Outcome {
    let batch: Vec<_> = ["legal_0.py", "legal_1.py", "legal_2.py", "legal_3.py", "syntax_error.py"]
        .iter()
        .map(|n| evaluate_lr_fixture(&format!("batch/{n}")).legality)
        .collect();
    let rate = pass_rate(batch.iter().copied());
    check(rate.passed == 4 && rate.total == 5 && (rate.rate - 0.8).abs() < 1e-12, || {
        format!("batch verdicts {batch:?}")
    })?;
    let verdicts: Vec<Legality> = ["timeout_lr.py", "nan_lr.py", "target_miss_lr.py"]
        .iter()
        .map(|f| evaluate_lr_fixture(f).legality)
        .collect();
    check(verdicts == [Legality::Timeout, Legality::NonFinite, Legality::TargetMissed], || {
        format!("failure fixtures gave {verdicts:?}")
    })?;
    let (live, children) = (live_candidate_count(), child_processes());
    check(live == 0 && children == 0, || format!("{live} live candidates, {children} child processes"))?;
    Ok(format!("pass rate {:.2}; {verdicts:?}; no leaked processes", rate.rate))
}

// 10 --------------------------------------------------------------------------

fn constraint_pressure() -> Outcome {
    let runs = [evaluate_constant_schedule(), evaluate_constant_schedule()];
    for (i, ind) in runs.iter().enumerate() {
        check(ind.legality == Legality::Pass, || format!("run {i}: {} {}", ind.legality, ind.legality_detail))?;
        let overflow = ind.info.final_metrics["overflow"];
        let wl = ind.info.final_metrics["hpwl"];
        check(overflow <= 0.10, || format!("run {i}: overflow {overflow}"))?;
        check(wl.to_bits() == GOLDEN_CONSTANT_HPWL.to_bits(), || {
            format!("run {i}: hpwl {wl:?} vs golden {GOLDEN_CONSTANT_HPWL:?}")
        })?;
    }
    Ok(format!(
        "overflow {:.4}, hpwl {:?} on both runs",
        runs[0].info.final_metrics["overflow"], GOLDEN_CONSTANT_HPWL
    ))
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let root: PathBuf = scratch.path().to_path_buf();
    let replay_result = golden_replay(&root);
    let bo_run_json = root.join("bo-a").join("run.json");

    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "selection law", selection_law()),
        (2, "operator ratio", operator_ratio(&bo_run_json)),
        (3, "gp oracle equivalence", gp_oracle()),
        (4, "expected improvement", ei_oracle()),
        (5, "bo sanity", bo_sanity()),
        (6, "placement numerics", placement_numerics()),
        (7, "adam oracle", adam_oracle()),
        (8, "golden end-to-end replay", replay_result),
        (9, "legality accounting", legality_accounting()),
        (10, "constraint pressure", constraint_pressure()),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
