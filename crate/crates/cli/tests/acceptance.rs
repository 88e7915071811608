//! End-to-end acceptance checks. Each criterion prints one `PASS`/`FAIL` line
//! to stderr before asserting.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use suction_core::candidates::{extract_patch, point_grid, region_candidates, select_point, BinaryMap, KernelE, RegionCandidate, GRID_POINTS, GRID_SIDE};
use suction_core::config::RunConfig;
use suction_core::datasets::{
    augment_rotations, load, make_region_label, relabel_high_gradient, save, split_indices, Dataset, PointSample, RegionSample,
    DEFAULT_GRADIENT_THRESHOLD,
};
use suction_core::nn::{architecture, io, HeadKind, ModelParams};
use suction_core::pipeline::{
    compare_region_methods, final_test, greedy_fraction, measure_omission, run_learning, Detector, MetricsLog, ScheduleForm,
    ScheduleParams,
};
use suction_core::rng::derive_seed;
use suction_core::scenesim::{generate_scene, suction_oracle, DepthScene, ObjectKind, ObjectSet, SceneConfig, Shape};

const BIN: &str = env!("CARGO_BIN_EXE_suction");

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {id:>2} {name}: {verdict} ({detail})");
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_gradient_oracle() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut all_ok = true;
    for seed in 0..5u64 {
        let out = Command::new(BIN).args(["gradcheck", "--seed", &seed.to_string()]).output().unwrap();
        let text = String::from_utf8_lossy(&out.stdout).into_owned();
        let err: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("max relative error "))
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(f64::INFINITY);
        all_ok &= out.status.success() && text.contains("Classification") && text.contains("Regression");
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = all_ok && worst < 1e-4 && secs < 60.0;
    report(1, "gradient oracle", pass, &format!("max relative error {worst:.2e} over 5 seeds, {secs:.1} s"));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_schedule_values() {
    let base = ScheduleParams { alpha_e: 0.05, alpha_s: 0.8, alpha_d: 2000.0, form: ScheduleForm::Interpolated };
    // 1 - (0.05 + 0.75 exp(-n/2000)) and 1 - 0.8 exp(-n/2000).
    let cases: [(u64, f64, f64); 4] = [
        (0, 0.2, 0.2),
        (500, 0.365_899_412_696_446_3, 0.376_959_373_542_876),
        (2000, 0.674_090_419_121_418_3, 0.705_696_447_062_846_2),
        (10000, 0.944_946_539_750_685_9, 0.994_609_642_400_731_6),
    ];
    let mut worst = 0.0f64;
    for (n, interp, literal) in cases {
        let i = greedy_fraction(n, &base);
        let l = greedy_fraction(n, &ScheduleParams { form: ScheduleForm::Literal, ..base });
        worst = worst.max((i - interp).abs()).max((l - literal).abs());
    }
    let pass = worst <= 1e-12;
    report(2, "exploration schedule", pass, &format!("max deviation {worst:.1e} at n in {{0, 500, 2000, 10000}}, both forms"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

/// Kernel weights in tenths, so the brute-force response is an exact integer.
const SYMMETRIC_TENTHS: [[i64; 5]; 5] = [[1, 3, 5, 3, 1], [3, 5, 8, 5, 3], [5, 8, 10, 8, 5], [3, 5, 8, 5, 3], [1, 3, 5, 3, 1]];
const LITERAL_TENTHS: [[i64; 5]; 5] = [[1, 3, 5, 3, 1], [3, 5, 8, 5, 3], [5, 8, 10, 8, 5], [3, 5, 8, 5, 3], [1, 5, 8, 3, 1]];

fn brute_force_select(cells: &[u8], kernel: &[[i64; 5]; 5]) -> Option<(usize, usize)> {
    let n = GRID_SIDE as i64;
    let mut best: Option<((usize, usize), i64)> = None;
    for i in 0..n {
        for j in 0..n {
            if cells[(i * n + j) as usize] == 0 {
                continue;
            }
            let mut acc = 0;
            for a in -2..=2i64 {
                for b in -2..=2i64 {
                    let (r, c) = (i + a, j + b);
                    if (0..n).contains(&r) && (0..n).contains(&c) && cells[(r * n + c) as usize] == 1 {
                        acc += kernel[(a + 2) as usize][(b + 2) as usize];
                    }
                }
            }
            if best.map_or(true, |(_, v)| acc > v) {
                best = Some(((i as usize, j as usize), acc));
            }
        }
    }
    best.map(|(p, _)| p)
}

#[test]
fn criterion_03_point_selection() {
    let mut maps: Vec<Vec<u8>> = vec![vec![0; GRID_POINTS]];
    for a in 0..GRID_POINTS {
        let mut m = vec![0; GRID_POINTS];
        m[a] = 1;
        maps.push(m.clone());
        for b in a + 1..GRID_POINTS {
            let mut m2 = m.clone();
            m2[b] = 1;
            maps.push(m2);
        }
    }
    let exhaustive = maps.len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let density: f64 = rng.gen_range(0.05..0.95);
        maps.push((0..GRID_POINTS).map(|_| u8::from(rng.gen_bool(density))).collect());
    }
    let mut mismatches = 0;
    for cells in &maps {
        let map = BinaryMap(cells.clone());
        mismatches += usize::from(select_point(&map, KernelE::Symmetric) != brute_force_select(cells, &SYMMETRIC_TENTHS));
        mismatches += usize::from(select_point(&map, KernelE::Literal) != brute_force_select(cells, &LITERAL_TENTHS));
    }
    let all_ones = select_point(&BinaryMap(vec![1; GRID_POINTS]), KernelE::Symmetric);
    let pass = exhaustive == 1 + 289 + 289 * 288 / 2 && mismatches == 0 && all_ones == Some((2, 2));
    report(
        3,
        "kernel point selection",
        pass,
        &format!("{} maps ({exhaustive} exhaustive), {mismatches} mismatches, all-ones -> {all_ones:?}", maps.len()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

fn tensor_index(name: &str) -> usize {
    architecture(HeadKind::Classification).iter().position(|(n, _)| *n == name).unwrap()
}

fn brute_force_label(params: &ModelParams<f32>, scene: &DepthScene, region: &RegionCandidate) -> f32 {
    let obs = scene.observation();
    let positives = point_grid(region)
        .iter()
        .filter(|p| {
            let input = extract_patch(obs, p.pixel.0, p.pixel.1).unwrap().to_model_input(obs.floor_depth, obs.box_depth);
            let logits = params.forward(&input).unwrap();
            logits[1] > logits[0]
        })
        .count();
    positives as f32 / GRID_POINTS as f32
}

/// Classifier that fires when the normalized height somewhere in the 4x4 pixel
/// block starting at the target pixel exceeds `threshold`: one identity tap
/// through each depth conv, both pools, the fusion conv and the hidden layer.
fn height_probe(threshold: f32) -> ModelParams<f32> {
    let mut p = ModelParams::<f32>::zeros(HeadKind::Classification);
    p.tensors[tensor_index("depth.conv1.weight")][4] = 1.0;
    p.tensors[tensor_index("depth.conv2.weight")][4] = 1.0;
    // Output channel 0 reads fused input channel 16 (first depth channel).
    p.tensors[tensor_index("fusion.weight")][16 * 9 + 4] = 1.0;
    // Channel 0 at feature cell (4, 4) covers input pixels 16..20 both ways.
    p.tensors[tensor_index("fc1.weight")][4 * 8 + 4] = 1.0;
    p.tensors[tensor_index("head.weight")][64] = 1.0;
    p.tensors[tensor_index("head.bias")][1] = -threshold;
    p
}

#[test]
fn criterion_04_region_label_exactness() {
    let cfg = SceneConfig::default();
    let regions = region_candidates(cfg.raster_h, cfg.raster_w).unwrap();
    let mut checked = 0;
    let mut mismatches = 0;
    for seed in 0..3u64 {
        let scene = generate_scene(SceneConfig { seed, ..cfg.clone() }).unwrap();
        let mut params = ModelParams::<f32>::init(HeadKind::Classification, 40 + seed);
        // Center the decision boundary on this scene so both classes occur.
        let obs = scene.observation();
        let mut margins: Vec<f32> = point_grid(&regions[5])
            .iter()
            .map(|p| {
                let l = params.forward(&extract_patch(obs, p.pixel.0, p.pixel.1).unwrap().to_model_input(obs.floor_depth, obs.box_depth)).unwrap();
                l[1] - l[0]
            })
            .collect();
        margins.sort_by(f32::total_cmp);
        params.tensors[tensor_index("head.bias")][1] -= margins[margins.len() / 3];
        for region in &regions {
            checked += 1;
            mismatches += usize::from(make_region_label(&params, obs, region).unwrap() != brute_force_label(&params, &scene, region));
        }
    }

    let mut never = ModelParams::<f32>::zeros(HeadKind::Classification);
    never.tensors[tensor_index("head.bias")][0] = 1.0;
    let mut always = ModelParams::<f32>::zeros(HeadKind::Classification);
    always.tensors[tensor_index("head.bias")][1] = 1.0;
    let busy = generate_scene(SceneConfig { seed: 9, ..cfg.clone() }).unwrap();
    let zero = make_region_label(&never, busy.observation(), &regions[0]).unwrap();
    let one = make_region_label(&always, busy.observation(), &regions[0]).unwrap();

    // A flat box over pixel rows and columns 1..=58 raises exactly grid rows and
    // columns 0..10 of the top-left region.
    let mut block = DepthScene::empty(SceneConfig { num_objects: 0, ..cfg.clone() }).unwrap();
    let shape = Shape::FlatBox { length: 58.4 * cfg.pitch_x, width: 58.4 * cfg.pitch_y, height: 0.05 };
    block.add_object(ObjectKind::FlatBoxSmall, shape, 29.5, 29.5, 0.0, [0.5; 3]).unwrap();
    let probe = height_probe(0.1);
    let hundred = make_region_label(&probe, block.observation(), &regions[0]).unwrap();
    let hundred_brute = brute_force_label(&probe, &block, &regions[0]);
    let elsewhere = make_region_label(&probe, block.observation(), &regions[11]).unwrap();

    let pass = mismatches == 0
        && zero == 0.0
        && one == 1.0
        && hundred == 100.0 / 289.0
        && hundred_brute == hundred
        && elsewhere == 0.0;
    report(
        4,
        "region label exactness",
        pass,
        &format!("{checked} regions, {mismatches} mismatches; spot values {zero}, {hundred} (100/289), {one}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5-8

const MASTER_SEEDS: [u64; 3] = [1, 2, 3];

struct TrainedRun {
    seed: u64,
    cfg: RunConfig,
    metrics: MetricsLog,
    sgpa: ModelParams<f32>,
    fre: ModelParams<f32>,
    elapsed: Duration,
}

impl TrainedRun {
    fn detector(&self) -> Detector<'_> {
        Detector { sgpa: &self.sgpa, fre: &self.fre, kernel: self.cfg.kernel }
    }
}

fn trained_runs() -> &'static [TrainedRun] {
    static RUNS: OnceLock<Vec<TrainedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        MASTER_SEEDS
            .iter()
            .map(|&seed| {
                let cfg = RunConfig { seed, ..RunConfig::default() };
                let start = Instant::now();
                let learner = run_learning(cfg.clone()).unwrap();
                let elapsed = start.elapsed();
                let _ = writeln!(std::io::stderr(), "trained seed {seed} in {:.0} s", elapsed.as_secs_f64());
                TrainedRun { seed, cfg, metrics: learner.metrics.clone(), sgpa: learner.sgpa.clone(), fre: learner.fre.clone(), elapsed }
            })
            .collect()
    })
}

#[test]
fn criterion_05_learning_curve() {
    let runs = trained_runs();
    let mut passes = 0;
    let mut details = Vec::new();
    for run in runs {
        let cps = &run.metrics.checkpoints;
        let early = cps.iter().find(|c| c.n == 100).map(|c| c.success_rate);
        let last = cps.last().map(|c| (c.n, c.success_rate));
        let ok = match (early, last) {
            (Some(e), Some((_, l))) => l - e >= 0.20 && l >= 0.90 && run.elapsed <= Duration::from_secs(30 * 60),
            _ => false,
        };
        passes += usize::from(ok);
        details.push(format!(
            "seed {}: n=100 {:.2} -> n={} {:.2} in {:.0} s",
            run.seed,
            early.unwrap_or(f64::NAN),
            last.map_or(0, |l| l.0),
            last.map_or(f64::NAN, |l| l.1),
            run.elapsed.as_secs_f64()
        ));
    }
    let pass = passes >= 2;
    report(5, "learning curve", pass, &format!("{passes}/3 seeds; {}", details.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_06_final_tests() {
    let runs = trained_runs();
    let mut passes = 0;
    let mut details = Vec::new();
    for run in runs {
        let det = run.detector();
        let known = final_test(&det, &run.cfg, ObjectSet::Known, 150, derive_seed(run.seed, "final-known", 0)).unwrap();
        let unseen = final_test(&det, &run.cfg, ObjectSet::Unseen, 150, derive_seed(run.seed, "final-unseen", 0)).unwrap();
        passes += usize::from(known.success_rate >= 0.90 && unseen.success_rate >= 0.80);
        details.push(format!("seed {}: known {:.3}, unseen {:.3}", run.seed, known.success_rate, unseen.success_rate));
    }
    let pass = passes >= 2;
    report(6, "final tests", pass, &format!("{passes}/3 seeds; {}", details.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_07_omission() {
    let runs = trained_runs();
    let rates: Vec<(u64, f64)> = runs
        .iter()
        .map(|r| (r.seed, measure_omission(&r.fre, &r.cfg, 200, derive_seed(r.seed, "acceptance-omission", 0)).unwrap().rate))
        .collect();
    let pass = rates.iter().all(|&(_, rate)| rate <= 0.05);
    let detail = rates.iter().map(|(s, r)| format!("seed {s}: {r:.3}")).collect::<Vec<_>>().join(", ");
    report(7, "omission", pass, &format!("200 trials per seed; {detail}"));
    assert!(pass);
}

#[test]
fn criterion_08_cost_comparison() {
    let runs = trained_runs();
    let mut pass = true;
    let mut details = Vec::new();
    for run in runs {
        let reports = compare_region_methods(&run.detector(), &run.cfg, run.cfg.compare_trials, derive_seed(run.seed, "acceptance-compare", 0)).unwrap();
        let by = |name: &str| reports.iter().find(|r| r.method.name() == name).unwrap();
        let (two, full, random) = (by("fre_sgpa"), by("full_coverage_sgpa"), by("random_region_sgpa"));
        let ratio = full.eval_count as f64 / two.eval_count as f64;
        pass &= two.eval_count == 301 && ratio >= 5.0 && random.success_rate < two.success_rate;
        details.push(format!(
            "seed {}: evals {} vs {} (x{ratio:.2}), success two-step {:.2} random {:.2}",
            run.seed, two.eval_count, full.eval_count, two.success_rate, random.success_rate
        ));
    }
    report(8, "cost comparison", pass, &details.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 9

fn captured_points(scenes: u64, per_scene: usize) -> Dataset<PointSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut samples = Vec::new();
    let oracle = suction_core::scenesim::OracleParams::default();
    for s in 0..scenes {
        let scene = generate_scene(SceneConfig { seed: 100 + s, ..SceneConfig::default() }).unwrap();
        let obs = scene.observation();
        for _ in 0..per_scene {
            let (r, c) = (rng.gen_range(0..obs.raster_h), rng.gen_range(0..obs.raster_w));
            let outcome = suction_oracle(&scene, r, c, &oracle, &mut rng).unwrap();
            samples.push(PointSample {
                patch: extract_patch(obs, r, c).unwrap(),
                label: u8::from(outcome.success),
                relabeled: false,
                pick_index: samples.len() as u64,
                pixel: (r as u16, c as u16),
            });
        }
    }
    Dataset::new(samples, vec![17])
}

#[test]
fn criterion_09_dataset_rules() {
    let raw = captured_points(6, 40);
    let once = relabel_high_gradient(&raw, DEFAULT_GRADIENT_THRESHOLD);
    let twice = relabel_high_gradient(&once, DEFAULT_GRADIENT_THRESHOLD);
    let idempotent = once == twice;
    let no_promotion = raw.samples.iter().zip(&once.samples).all(|(a, b)| a.label == 1 || b.label == 0);

    let mut worst_flip = 0.0f32;
    let mut rotations_ok = true;
    let mut augmented = Vec::new();
    for s in &once.samples {
        let copies = augment_rotations(s);
        rotations_ok &= copies.len() == 16 && copies.iter().all(|c| c.label == s.label && c.pick_index == s.pick_index);
        rotations_ok &= copies[0].patch == s.patch;
        let n = 32;
        for (plane_out, plane_in) in copies[8].patch.depth.chunks(n * n).chain(copies[8].patch.rgb.chunks(n * n)).zip(s.patch.depth.chunks(n * n).chain(s.patch.rgb.chunks(n * n))) {
            for r in 0..n {
                for c in 0..n {
                    worst_flip = worst_flip.max((plane_out[r * n + c] - plane_in[(n - 1 - r) * n + (n - 1 - c)]).abs());
                }
            }
        }
        augmented.extend(copies);
    }

    let groups: Vec<u64> = augmented.iter().map(|s| s.pick_index).collect();
    let (train, val) = split_indices(&groups, 0.7, 5);
    let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
    all.sort_unstable();
    let covers = all == (0..groups.len()).collect::<Vec<_>>();
    let train_groups: std::collections::BTreeSet<u64> = train.iter().map(|&i| groups[i]).collect();
    let val_groups: std::collections::BTreeSet<u64> = val.iter().map(|&i| groups[i]).collect();
    let leak_free = train_groups.is_disjoint(&val_groups);
    let distinct = train_groups.len() + val_groups.len();
    let seventy = train_groups.len() == (0.7 * distinct as f64).ceil() as usize;

    let relabeled = once.samples.iter().filter(|s| s.relabeled).count();
    let pass = idempotent && no_promotion && rotations_ok && worst_flip <= 1e-6 && covers && leak_free && seventy;
    report(
        9,
        "dataset rules",
        pass,
        &format!(
            "{} samples, {relabeled} relabeled, idempotent {idempotent}, no 0->1 {no_promotion}, rotations {rotations_ok}, flip error {worst_flip:.1e}, split {}/{} groups leak-free {leak_free}",
            raw.len(),
            train_groups.len(),
            val_groups.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 10

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

const SHORT_RUN: &str = r#"{
    "max_picks": 200,
    "sgpa": {"epochs": 3},
    "fre": {"epochs": 3},
    "checkpoint_test_picks": 10,
    "final_test_picks": 10,
    "omission_trials": 10,
    "compare_trials": 5
}"#;

#[test]
fn criterion_10_persistence() {
    let tmp = tempfile::tempdir().unwrap();

    let mut weights_exact = true;
    for head in [HeadKind::Classification, HeadKind::Regression] {
        let params = ModelParams::<f32>::init(head, 12);
        let path = tmp.path().join(format!("{head:?}.weights"));
        io::save(&params, &path).unwrap();
        let back = io::load(&path).unwrap();
        weights_exact &= back.head == params.head
            && back.tensors.len() == params.tensors.len()
            && back.tensors.iter().zip(&params.tensors).all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    let points = relabel_high_gradient(&captured_points(2, 10), DEFAULT_GRADIENT_THRESHOLD);
    save(&points, &tmp.path().join("points")).unwrap();
    let points_back = load::<PointSample>(&tmp.path().join("points")).unwrap();
    let regions_ds = Dataset::new(
        points
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| RegionSample { image: s.patch.clone(), score: (i % 290) as f32 / 289.0, pick_index: i as u64, region: (0, (i % 4) as u16) })
            .collect(),
        vec![1, 2],
    );
    save(&regions_ds, &tmp.path().join("regions")).unwrap();
    let regions_back = load::<RegionSample>(&tmp.path().join("regions")).unwrap();
    let datasets_exact = points_back.encode_samples() == points.encode_samples()
        && points_back.manifest() == points.manifest()
        && regions_back.encode_samples() == regions_ds.encode_samples()
        && regions_back.manifest() == regions_ds.manifest();

    let config = tmp.path().join("short.json");
    std::fs::write(&config, SHORT_RUN).unwrap();
    let learn = |out: &Path| {
        let o = Command::new(BIN)
            .args(["learn", "--config", config.to_str().unwrap(), "--seed", "21", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    // Same output path both times: the directory is part of the recorded config.
    let out = tmp.path().join("run");
    let snapshot = |dir: &Path| files_under(dir).into_iter().map(|f| (std::fs::read(dir.join(&f)).unwrap(), f)).collect::<Vec<_>>();
    learn(&out);
    let first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    learn(&out);
    let second = snapshot(&out);
    let differing: Vec<String> = first
        .iter()
        .filter(|(bytes, f)| !second.iter().any(|(b2, f2)| f2 == f && b2 == bytes))
        .map(|(_, f)| f.display().to_string())
        .collect();
    let reproducible = first.len() == second.len() && !first.is_empty() && differing.is_empty();

    let pass = weights_exact && datasets_exact && reproducible;
    report(
        10,
        "persistence",
        pass,
        &format!(
            "weights bit-exact {weights_exact}, datasets bit-exact {datasets_exact}, {} run files identical {reproducible} {differing:?}",
            first.len()
        ),
    );
    assert!(pass);
}
