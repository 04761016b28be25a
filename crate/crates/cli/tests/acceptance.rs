//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use resfed_core::data::{
    generate_synthetic, normalize, partition, ClientDataset, NormalizationMethod, PartitionPolicy, SyntheticSpec,
    TimeSeriesDataset,
};
use resfed_core::federation::{rsmx, simulate, Client, ClientRidge, FederationRun, Role};
use resfed_core::mdrs::{fit_precision, frobenius_relative, PrecisionPath};
use resfed_core::metrics::{auc_pr, auc_roc, LabeledScores};
use resfed_core::pipeline::{train_centralized, TrainOptions};
use resfed_core::readout::{fit_ridge, BetaPlacement};
use resfed_core::{Method, Reservoir, ReservoirSpec};

const FED_EQ_TOL: f64 = 1e-10;
const ONLINE_TOL: f64 = 1e-8;
const READOUT_TOL: f64 = 1e-10;
const SCORE_REL_TOL: f64 = 1e-10;
const SUBSAMPLE_GAP: f64 = 0.05;
const MIN_AUC_ROC: f64 = 0.90;
const METRIC_TOL: f64 = 1e-12;
const TIME_LIMIT_SECS: f64 = 30.0;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

type Outcome = Result<String, String>;

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn default_spec(n_input: usize, n_x: usize, sub: usize, seed: u64) -> ReservoirSpec {
    ReservoirSpec {
        n_reservoir: n_x,
        subsample_size: sub,
        seed,
        ..ReservoirSpec::new(n_input)
    }
}

fn random_instance(r: &mut Xoshiro256PlusPlus, n_input: usize, n_clients: usize) -> (Vec<DMatrix<f64>>, Vec<ClientDataset>) {
    let n_seq = n_clients + r.random_range(0..=n_clients);
    let sequences: Vec<DMatrix<f64>> = (0..n_seq)
        .map(|_| {
            let len = r.random_range(1..=200);
            DMatrix::from_fn(n_input, len, |_, _| r.random_range(0.0..1.0))
        })
        .collect();
    let mut clients: Vec<ClientDataset> = (0..n_clients)
        .map(|c| ClientDataset {
            client_id: c as u32,
            sequences: Vec::new(),
        })
        .collect();
    for (i, s) in sequences.iter().enumerate() {
        clients[i % n_clients].sequences.push(s.clone());
    }
    (sequences, clients)
}

fn within_time(start: Instant) -> Result<f64, String> {
    let secs = start.elapsed().as_secs_f64();
    if secs < TIME_LIMIT_SECS {
        Ok(secs)
    } else {
        Err(format!("took {secs:.1}s, limit {TIME_LIMIT_SECS}s"))
    }
}

fn federated_equals_centralized() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n_x = r.random_range(8..=64);
        let n_clients = r.random_range(1..=8);
        let n_input = r.random_range(1..=3);
        let sub = r.random_range(n_x / 2..=n_x);
        let spec = default_spec(n_input, n_x, sub, r.random());
        let (sequences, clients) = random_instance(&mut r, n_input, n_clients);
        let fed = simulate(&FederationRun::new(spec.clone(), Method::Mdrs, clients, vec![])).map_err(|e| e.to_string())?;
        let reservoir = Reservoir::new(spec).map_err(|e| e.to_string())?;
        let central = train_centralized(&reservoir, &sequences, &TrainOptions::default()).map_err(|e| e.to_string())?;
        worst = worst.max(frobenius_relative(fed.model.matrix(), central.matrix()));
    }
    let secs = within_time(start)?;
    let detail = format!("100 instances, worst Frobenius relative {worst:.2e} (tol {FED_EQ_TOL:.0e}), {secs:.1}s");
    if worst <= FED_EQ_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn online_equals_batch() -> Outcome {
    let start = Instant::now();
    let mut r = rng(202);
    let mut cases: Vec<(usize, usize)> = (0..12).map(|_| (r.random_range(1..=64), r.random_range(1..=10_000))).collect();
    cases.push((64, 10_000));
    let mut worst = 0.0f64;
    for (i, &(d, t)) in cases.iter().enumerate() {
        // Alternate between reservoir states and raw uniform vectors.
        let states = if i % 2 == 0 {
            let spec = default_spec(2, d.max(8), d, i as u64);
            let reservoir = Reservoir::new(spec).map_err(|e| e.to_string())?;
            let inputs = DMatrix::from_fn(2, t, |_, _| r.random_range(0.0..1.0));
            reservoir.features(&inputs).map_err(|e| e.to_string())?
        } else {
            DMatrix::from_fn(d, t, |_, _| r.random_range(-1.0..1.0))
        };
        let online = fit_precision(&[states.clone()], d, 1e-4, PrecisionPath::Online).map_err(|e| e.to_string())?;
        let batch = fit_precision(&[states], d, 1e-4, PrecisionPath::Batch).map_err(|e| e.to_string())?;
        worst = worst.max(frobenius_relative(online.matrix(), batch.matrix()));
    }
    let secs = within_time(start)?;
    let detail = format!(
        "{} cases up to d=64, T=10^4, worst Frobenius relative {worst:.2e} (tol {ONLINE_TOL:.0e}), {secs:.1}s",
        cases.len()
    );
    if worst <= ONLINE_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn readout_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(303);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n_x = r.random_range(8..=64);
        let n_clients = r.random_range(1..=8);
        let n_input = r.random_range(1..=3);
        let spec = default_spec(n_input, n_x, n_x, r.random());
        let (sequences, clients) = random_instance(&mut r, n_input, n_clients);
        let mut run = FederationRun::new(spec.clone(), Method::EsnSre, clients, vec![]);
        run.beta_placement = BetaPlacement::Server;
        let fed = simulate(&run).map_err(|e| e.to_string())?;

        let reservoir = Reservoir::new(spec).map_err(|e| e.to_string())?;
        let total: usize = sequences.iter().map(|s| s.ncols()).sum();
        let mut x = DMatrix::zeros(n_x, total);
        let mut d = DMatrix::zeros(n_input, total);
        let mut at = 0;
        for s in &sequences {
            x.columns_mut(at, s.ncols())
                .copy_from(&reservoir.run(s).map_err(|e| e.to_string())?.states);
            d.columns_mut(at, s.ncols()).copy_from(s);
            at += s.ncols();
        }
        let pooled = fit_ridge(&x, &d, run.beta).map_err(|e| e.to_string())?;
        worst = worst.max(frobenius_relative(fed.model.matrix(), &pooled.w_out));
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("100 instances, server-side beta, worst Frobenius relative {worst:.2e} (tol {READOUT_TOL:.0e}), {secs:.1}s");
    if worst <= READOUT_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn benchmark(seed: u64) -> TimeSeriesDataset {
    let raw = generate_synthetic(&SyntheticSpec::benchmark(seed)).expect("benchmark generates");
    normalize(&raw, NormalizationMethod::Minmax).expect("benchmark normalizes")
}

struct BenchRun {
    mean_auc_roc: f64,
    scores: Vec<Vec<f64>>,
}

fn bench_run(ds: &TimeSeriesDataset, method: Method, seed: u64, sub: usize, n_clients: usize) -> Result<BenchRun, String> {
    let spec = default_spec(ds.n_channels(), 500, sub, seed);
    let clients = partition(ds, n_clients, PartitionPolicy::BySequence).map_err(|e| e.to_string())?;
    let out = simulate(&FederationRun::new(spec, method, clients, ds.test.clone())).map_err(|e| e.to_string())?;
    let report = out.report.evaluation.report.ok_or("no evaluable test series")?;
    Ok(BenchRun {
        mean_auc_roc: report.mean_auc_roc,
        scores: out.scores.into_iter().map(|s| s.0).collect(),
    })
}

fn client_count_invariance() -> Outcome {
    let ds = benchmark(0);
    let reference = bench_run(&ds, Method::Mdrs, 0, 200, 1)?;
    let mut worst = 0.0f64;
    let mut aucs = vec![reference.mean_auc_roc];
    for c in [2, 6, 24] {
        let run = bench_run(&ds, Method::Mdrs, 0, 200, c)?;
        for (a, b) in run.scores.iter().flatten().zip(reference.scores.iter().flatten()) {
            worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
        aucs.push(run.mean_auc_roc);
    }
    let same_auc = aucs.iter().all(|&a| a == aucs[0]);
    let detail = format!(
        "C in {{1,2,6,24}}, worst per-timestep relative score gap {worst:.2e} (tol {SCORE_REL_TOL:.0e}), mean AUC-ROC {:?}",
        aucs
    );
    if worst <= SCORE_REL_TOL && same_auc {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// MD-RS runs at Ñ = 200 with 24 clients, shared by criteria 5 and 7.
fn mdrs_200(cache: &Mutex<Vec<Option<f64>>>, ds: &TimeSeriesDataset, i: usize, seed: u64) -> Result<f64, String> {
    if let Some(v) = cache.lock().unwrap()[i] {
        return Ok(v);
    }
    let v = bench_run(ds, Method::Mdrs, seed, 200, 24)?.mean_auc_roc;
    cache.lock().unwrap()[i] = Some(v);
    Ok(v)
}

fn subsampling_robustness(data: &[TimeSeriesDataset], cache: &Mutex<Vec<Option<f64>>>) -> Outcome {
    let mut at_200 = Vec::new();
    let mut at_500 = Vec::new();
    for (i, &seed) in SEEDS.iter().enumerate() {
        at_200.push(mdrs_200(cache, &data[i], i, seed)?);
        at_500.push(bench_run(&data[i], Method::Mdrs, seed, 500, 24)?.mean_auc_roc);
    }
    let m200 = at_200.iter().sum::<f64>() / SEEDS.len() as f64;
    let m500 = at_500.iter().sum::<f64>() / SEEDS.len() as f64;
    let gap = (m200 - m500).abs();
    let detail = format!(
        "{} seeds, mean AUC-ROC {m200:.4} at 200 vs {m500:.4} at 500, gap {gap:.4} (tol {SUBSAMPLE_GAP})",
        SEEDS.len()
    );
    if gap <= SUBSAMPLE_GAP {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn payload_law() -> Outcome {
    let phi = DMatrix::from_fn(200, 200, |i, j| (i * 200 + j) as f64);
    let frame = rsmx::encode(&phi, Role::MdrsCov).map_err(|e| e.to_string())?;
    let header_ok = &frame[..4] == b"RSMX"
        && frame[4] == 1
        && frame[5] == Role::MdrsCov.tag()
        && frame[6..10] == 200u32.to_le_bytes()
        && frame[10..14] == 200u32.to_le_bytes();
    let body_ok = frame[14..14 + 320_000]
        .chunks_exact(8)
        .zip(phi.transpose().iter())
        .all(|(b, v)| b == v.to_le_bytes());
    let crc_ok = frame[frame.len() - 4..] == crc_ieee(&frame[..frame.len() - 4]).to_le_bytes();
    if frame.len() != 320_018 || !header_ok || !body_ok || !crc_ok {
        return Err(format!(
            "200x200 frame: {} bytes, header {header_ok}, body {body_ok}, crc {crc_ok}",
            frame.len()
        ));
    }

    // A real client message at the reference sizes.
    let ds = benchmark(0);
    let spec = default_spec(ds.n_channels(), 500, 200, 0);
    let reservoir = Arc::new(Reservoir::new(spec.clone()).map_err(|e| e.to_string())?);
    let ridge = ClientRidge {
        beta: 1e-4,
        placement: BetaPlacement::Server,
    };
    let mut mdrs = Client::new(0, Arc::clone(&reservoir), Method::Mdrs, ridge);
    let mdrs_msgs = mdrs.round(&spec, 1, &ds.train[..1]).map_err(|e| e.to_string())?;
    let mdrs_bytes: usize = mdrs_msgs.iter().map(|m| m.matrix.len()).sum();
    let mut esn = Client::new(0, reservoir, Method::EsnSre, ridge);
    let esn_msgs = esn.round(&spec, 1, &ds.train[..1]).map_err(|e| e.to_string())?;
    let esn_bytes: usize = esn_msgs.iter().map(|m| m.matrix.len()).sum();
    let n_y = ds.n_channels();
    let esn_expected = 8 * (500 * 500 + 500 * n_y) + 2 * 18;

    let mut ny1_larger = true;
    for n_x in [200usize, 500] {
        ny1_larger &= rsmx::encoded_len(n_x, n_x) + rsmx::encoded_len(1, n_x) > rsmx::encoded_len(200, 200);
    }
    let detail = format!(
        "MDRS_COV {mdrs_bytes} bytes = 8*200^2 + 18; ESN per client {esn_bytes} bytes = 8*(500^2 + 500*{n_y}) + 2*18"
    );
    if mdrs_bytes == 320_018 && esn_bytes == esn_expected && esn_bytes > mdrs_bytes && ny1_larger {
        Ok(detail)
    } else {
        Err(format!("{detail} (expected ESN {esn_expected}, N_y=1 larger: {ny1_larger})"))
    }
}

/// Bitwise CRC-32 (IEEE, reflected 0xEDB88320), independent of the codec.
fn crc_ieee(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 == 1 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
        }
    }
    !crc
}

fn detection_capability(data: &[TimeSeriesDataset], cache: &Mutex<Vec<Option<f64>>>) -> Outcome {
    let mut mdrs = Vec::new();
    let mut esn = Vec::new();
    for (i, &seed) in SEEDS.iter().enumerate() {
        mdrs.push(mdrs_200(cache, &data[i], i, seed)?);
        esn.push(bench_run(&data[i], Method::EsnSre, seed, 200, 24)?.mean_auc_roc);
    }
    let m = mdrs.iter().sum::<f64>() / SEEDS.len() as f64;
    let e = esn.iter().sum::<f64>() / SEEDS.len() as f64;
    let detail = format!(
        "24 clients, {} seeds, MD-RS mean AUC-ROC {m:.4} (min {MIN_AUC_ROC}), ESN-SRE {e:.4}; per seed MD-RS {:?}",
        SEEDS.len(),
        mdrs.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
    if m >= MIN_AUC_ROC && m > e {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn roc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn pr_thresholds(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let (mut area, mut prev) = (0.0, 0.0);
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count() as f64;
        area += (tp / positives - prev) * tp / (tp + fp);
        prev = tp / positives;
    }
    area
}

fn metric_correctness() -> Outcome {
    let mut r = rng(808);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 1000 {
        let n = r.random_range(2..=60);
        let quantized = r.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if quantized {
                    r.random_range(0..6) as f64
                } else {
                    r.random_range(-1.0..1.0)
                }
            })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let ls = LabeledScores::new(&scores, &labels).map_err(|e| e.to_string())?;
        let roc = auc_roc(&ls).map_err(|e| e.to_string())?;
        let pr = auc_pr(&ls).map_err(|e| e.to_string())?;
        worst = worst
            .max((roc - roc_pairs(&scores, &labels)).abs())
            .max((pr - pr_thresholds(&scores, &labels)).abs());
        done += 1;
    }
    let detail = format!("1000 vectors (n <= 60, half with ties), worst deviation {worst:.2e} (tol {METRIC_TOL:.0e})");
    if worst <= METRIC_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn resfed(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_resfed"))
        .args(args)
        .current_dir(cwd)
        .env("RESFED_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("resfed {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn end_to_end(dir: &Path, run: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for (cmd, sub) in [("train", "central"), ("fed", "federated")] {
        let out = format!("{run}/{sub}");
        resfed(&[cmd, "-c", "config.toml", "-o", &out], dir)?;
        resfed(&["score", "-c", "config.toml", "-o", &out], dir)?;
        let root = dir.join(&out);
        let mut names = vec!["model.rsmx".to_string()];
        let mut scores: Vec<String> = std::fs::read_dir(root.join("scores"))
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok())
            .map(|e| format!("scores/{}", e.file_name().to_string_lossy()))
            .filter(|n| n.ends_with(".csv"))
            .collect();
        scores.sort();
        names.extend(scores);
        for n in names {
            let bytes = std::fs::read(root.join(&n)).map_err(|e| format!("{n}: {e}"))?;
            files.push((format!("{sub}/{n}"), bytes));
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(
        dir.path().join("config.toml"),
        "mode = \"incfed\"\nn_clients = 24\n\n[reservoir]\nseed = 7\n\n[synthetic]\npreset = \"benchmark\"\nseed = 3\n",
    )
    .map_err(|e| e.to_string())?;
    let a = end_to_end(dir.path(), "a")?;
    let b = end_to_end(dir.path(), "b")?;
    let identical = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x == y);
    let detail = format!("{} artifacts (2 model files, {} score CSVs) compared byte for byte", a.len(), a.len() - 2);
    if identical && a.len() > 2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let data: Vec<TimeSeriesDataset> = SEEDS.iter().map(|&s| benchmark(s)).collect();
    let cache = Mutex::new(vec![None; SEEDS.len()]);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("federated precision equals centralized", Box::new(federated_equals_centralized)),
        ("online Woodbury equals batch inversion", Box::new(online_equals_batch)),
        ("federated readout equals centralized ridge", Box::new(readout_equivalence)),
        ("scores invariant to client count", Box::new(client_count_invariance)),
        ("subsampling robustness", Box::new(|| subsampling_robustness(&data, &cache))),
        ("communication payload law", Box::new(payload_law)),
        ("detection capability on the benchmark", Box::new(|| detection_capability(&data, &cache))),
        ("metric correctness against brute force", Box::new(metric_correctness)),
        ("end-to-end determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
