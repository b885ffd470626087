//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). The exit status is 0 so that
//! `cargo test` reports the lines without aborting the workspace run; set
//! `ACCEPTANCE_STRICT=1` to exit 1 when any gated criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use pqi_prune::data::{
    gen_synthetic, read_run_record, write_run_record, RunRecord, SyntheticSpec, CSV_HEADER,
};
use pqi_prune::harness::{
    build_report, cell_dirs, replay_summary, run_experiment, AlgorithmName, ExperimentConfig,
    CELLS_CSV, SUMMARY_CSV,
};
use pqi_prune::nn::{init_network, loss_and_grad, Activation, LayerSpec, ModelKind, TrainConfig};
use pqi_prune::pruning::{
    replay_counts, run_pruning, AlgorithmKind, AlgorithmSpec, SapHyperParams, Scope,
};
use pqi_prune::sparsity::{
    audit_measure, eta_r, pq_index, retained_lower_bound, AuditConfig, MeasureSpec, NormPair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VALID_PAIRS: [(f64, f64); 3] = [(0.5, 1.0), (1.0, 2.0), (0.5, 2.0)];

struct Outcome {
    id: u8,
    name: &'static str,
    gated: bool,
    pass: bool,
    detail: String,
}

fn pairs() -> Vec<NormPair> {
    VALID_PAIRS
        .iter()
        .map(|&(p, q)| NormPair::new(p, q).unwrap())
        .collect()
}

/// A non-zero magnitude vector of length `d` with a randomly chosen shape.
fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let kind = rng.random_range(0..4);
    let mut w: Vec<f64> = (0..d)
        .map(|_| match kind {
            0 => rng.random::<f64>(),
            1 => 10f64.powf(rng.random_range(-8.0..8.0)),
            2 => {
                if rng.random_bool(0.6) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            }
            _ => -rng.random::<f64>().ln(),
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        let i = rng.random_range(0..d);
        w[i] = 1.0;
    }
    w
}

fn c1_axioms() -> Outcome {
    let start = Instant::now();
    let cfg = AuditConfig {
        trials: 1000,
        min_dim: 2,
        max_dim: 64,
        seed: 0,
    };
    let mut measures: Vec<MeasureSpec> = pairs()
        .into_iter()
        .map(|norms| MeasureSpec::PqIndex { norms })
        .collect();
    measures.push(MeasureSpec::Gini);
    let mut parts = Vec::new();
    let mut total = 0;
    for m in &measures {
        let report = audit_measure(m, &cfg);
        total += report.total_violations();
        parts.push(format!("{}: {}", m.label(), report.total_violations()));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "axiom suite",
        gated: true,
        pass: total == 0 && secs < 30.0,
        detail: format!("violations [{}], {secs:.1} s (limit 30 s)", parts.join(", ")),
    }
}

fn c2_range() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let norms = pairs();
    let mut worst_low = 0.0f64;
    let mut worst_high = 0.0f64;
    for _ in 0..100_000 {
        let d = rng.random_range(1..=64);
        let w = random_vector(&mut rng, d);
        for n in &norms {
            let i = pq_index(&w, *n).unwrap();
            worst_low = worst_low.max(-i);
            worst_high = worst_high.max(i - n.max_index(d));
        }
    }
    let mut worst_exact = 0.0f64;
    for d in 1..=64 {
        for c in [1e-9, 0.3, 1.0, 7.0, 1e9] {
            let uniform = vec![c; d];
            let mut one_hot = vec![0.0; d];
            one_hot[d / 2] = c;
            for n in &norms {
                worst_exact = worst_exact.max(pq_index(&uniform, *n).unwrap().abs());
                let top = pq_index(&one_hot, *n).unwrap();
                worst_exact = worst_exact.max((top - n.max_index(d)).abs());
            }
        }
    }
    Outcome {
        id: 2,
        name: "range",
        gated: true,
        pass: worst_low <= 1e-9 && worst_high <= 1e-9 && worst_exact <= 1e-12,
        detail: format!(
            "1e5 vectors: max below 0 = {worst_low:.2e}, max above cap = {worst_high:.2e} (tol 1e-9); \
             uniform/one-hot max error {worst_exact:.2e} (tol 1e-12)"
        ),
    }
}

fn four_sig(x: f64) -> String {
    format!("{x:.3e}")
}

fn c3_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let norms = pairs();
    let mut min_slack = f64::INFINITY;
    for _ in 0..1000 {
        let d = rng.random_range(1..=64);
        let w = random_vector(&mut rng, d);
        for n in &norms {
            let index = pq_index(&w, *n).unwrap();
            for r in 1..=d {
                let eta = eta_r(&w, n.p(), r).unwrap();
                let bound = retained_lower_bound(d as f64, index, eta, *n);
                min_slack = min_slack.min(r as f64 - bound);
            }
        }
    }

    let half_one = NormPair::new(0.5, 1.0).unwrap();
    let w = [1.0, 2.0, 3.0, 4.0];
    let i = pq_index(&w, half_one).unwrap();
    let eta2 = eta_r(&w, 0.5, 2).unwrap();
    let examples = [
        (retained_lower_bound(4.0, 0.75, 0.0, half_one), 1.0),
        (retained_lower_bound(4.0, i, 0.0, half_one), 3.7777),
        (retained_lower_bound(4.0, i, eta2, half_one), 1.3930),
    ];
    let examples_ok = examples.iter().all(|(got, want)| four_sig(*got) == four_sig(*want));
    let shown: Vec<String> = examples
        .iter()
        .map(|(got, want)| format!("{got:.6} vs {want}"))
        .collect();
    Outcome {
        id: 3,
        name: "bound soundness",
        gated: true,
        pass: min_slack >= -1e-9 && examples_ok,
        detail: format!(
            "min slack r - bound = {min_slack:.3e} (tol -1e-9); worked examples [{}] at 4 significant digits",
            shown.join(", ")
        ),
    }
}

fn c4_gradient() -> Outcome {
    let spec = [
        LayerSpec::dense(4, 4, Activation::Relu),
        LayerSpec::dense(4, 4, Activation::Relu),
        LayerSpec::dense(4, 2, Activation::None),
    ];
    // Zero initial biases can put a pre-activation exactly on the ReLU kink,
    // where the central difference sees half the slope; use random values.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = init_network(&spec, 4).unwrap();
    let random: Vec<f64> = (0..params.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = params.with_flat_params(&random).unwrap();
    let batch = 8;
    let inputs: Vec<f64> = (0..batch * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels: Vec<usize> = (0..batch).map(|i| i % 2).collect();
    let (_, grads) = loss_and_grad(&params, &inputs, &labels);
    let analytic = grads.flatten();
    let theta = params.flat_params();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..theta.len() {
        let mut plus = theta.clone();
        plus[k] += h;
        let mut minus = theta.clone();
        minus[k] -= h;
        let lp = loss_and_grad(&params.with_flat_params(&plus).unwrap(), &inputs, &labels).0;
        let lm = loss_and_grad(&params.with_flat_params(&minus).unwrap(), &inputs, &labels).0;
        let numeric = (lp - lm) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs());
        let err = if scale < 1e-10 {
            0.0
        } else {
            (analytic[k] - numeric).abs() / scale
        };
        worst = worst.max(err);
    }
    Outcome {
        id: 4,
        name: "gradient check",
        gated: true,
        pass: theta.len() == 50 && worst < 1e-4,
        detail: format!(
            "{} parameters, max relative error {worst:.2e} (tol 1e-4)",
            theta.len()
        ),
    }
}

fn c5_schedule(lt: &[RunRecord]) -> Outcome {
    let mut mismatches = 0;
    for rec in lt {
        let mut expected = rec.d_0;
        for it in &rec.iterations {
            if it.d_t != expected || it.percent_remaining != it.d_t as f64 / rec.d_0 as f64 {
                mismatches += 1;
            }
            expected -= expected / 5;
        }
        if rec.d_final != expected {
            mismatches += 1;
        }
    }
    let t5 = lt
        .first()
        .and_then(|r| r.iterations.get(5))
        .map_or(f64::NAN, |it| it.percent_remaining);
    let shape_ok = lt.len() == 4 && lt.iter().all(|r| r.iterations.len() == 11);
    Outcome {
        id: 5,
        name: "baseline schedule",
        gated: true,
        pass: shape_ok && mismatches == 0,
        detail: format!(
            "{} Lottery Ticket runs, {mismatches} rows off the floor recursion; t=5 remaining {t5:.6} vs 0.8^5 = 0.32768",
            lt.len()
        ),
    }
}

/// `c_t` straight from the SAP formula, as `floor(min(gamma (d - r), beta d))`.
fn sap_count_oracle(d: usize, index: f64, hp: &SapHyperParams) -> (usize, usize) {
    let (p, q) = (hp.norms.p(), hp.norms.q());
    let d = d as f64;
    let r = d * (1.0 + hp.eta).powf(-q / (q - p)) * (1.0 - index).min(1.0).powf(q * p / (q - p));
    let rearranged = (hp.gamma * (d - r)).min(hp.beta * d).floor().max(0.0) as usize;
    let literal = (d * (hp.gamma * (1.0 - r / d)).min(hp.beta)).floor().max(0.0) as usize;
    (rearranged, literal)
}

fn c6_replay(root: &Path) -> Outcome {
    let data = gen_synthetic(&SyntheticSpec::default()).unwrap();
    let layers = ModelKind::Mlp.layers(20, 2);
    let mut cells = 0;
    let mut checked = 0;
    let mut mismatches = 0;
    let mut literal_differs = 0;
    let mut capped = 0;
    let mut broken = Vec::new();
    for gamma in [0.5, 1.0, 2.0] {
        for eta in [0.0, 1.0] {
            let hp = SapHyperParams {
                gamma,
                eta,
                ..SapHyperParams::default()
            };
            let spec = AlgorithmSpec {
                kind: AlgorithmKind::Sap(hp),
                iterations: 10,
            };
            let rec = run_pruning(&spec, Scope::Global, &layers, &TrainConfig::desk(), 0, &data)
                .unwrap();
            let dir = root.join(format!("sap_g{gamma}_e{eta}"));
            write_run_record(&rec, &dir).unwrap();
            let rec = read_run_record(&dir).unwrap();
            cells += 1;
            if !rec.completed() || !replay_counts(&rec).is_empty() {
                broken.push(format!("gamma={gamma} eta={eta}"));
            }
            for (t, it) in rec.iterations.iter().enumerate() {
                let mut total = 0;
                for g in &it.groups {
                    let Some(index) = g.index else { continue };
                    let (want, literal) = sap_count_oracle(g.d, index, &hp);
                    checked += 1;
                    if want != g.count {
                        mismatches += 1;
                    }
                    if literal != want {
                        literal_differs += 1;
                    }
                    if (hp.beta * g.d as f64).floor() as usize == g.count && gamma > 1.0 {
                        capped += 1;
                    }
                    total += g.count;
                }
                let next = rec.iterations.get(t + 1).map_or(rec.d_final, |n| n.d_t);
                if total != it.pruned_total || it.d_t - total != next {
                    mismatches += 1;
                }
            }
        }
    }
    Outcome {
        id: 6,
        name: "SAP replay",
        gated: true,
        pass: cells == 6 && checked == 66 && mismatches == 0 && broken.is_empty(),
        detail: format!(
            "{cells} cells (gamma in {{0.5,1,2}} x eta in {{0,1}}), {checked} logged counts, {mismatches} mismatches, \
             {capped} beta-capped; unrearranged float form differs on {literal_differs}{}",
            if broken.is_empty() {
                String::new()
            } else {
                format!("; failed cells {broken:?}")
            }
        ),
    }
}

struct Desk {
    records: Vec<RunRecord>,
    secs: f64,
}

fn desk_run(root: &Path) -> Desk {
    let cfg = ExperimentConfig {
        algorithms: vec![AlgorithmName::Sap, AlgorithmName::LotteryTicket],
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let outcome = run_experiment(&cfg, root, cfg.seeds.len()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let records = outcome.cells.into_iter().filter_map(|c| c.record).collect();
    Desk { records, secs }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn c7_desk(desk: &Desk) -> Outcome {
    let sap: Vec<&RunRecord> = desk
        .records
        .iter()
        .filter(|r| matches!(r.config.algorithm.kind, AlgorithmKind::Sap(_)))
        .collect();
    let dense: Vec<f64> = desk
        .records
        .iter()
        .filter_map(|r| r.iterations.first().map(|it| it.acc_retrained))
        .collect();
    let dense_min = dense.iter().copied().fold(f64::INFINITY, f64::min);
    let dense_mean = mean(dense.iter().copied());
    let last = |r: &&RunRecord| r.iterations.last().cloned().expect("iterations");
    let sap_remaining = mean(sap.iter().map(|r| last(r).percent_remaining));
    let sap_acc = mean(sap.iter().map(|r| last(r).acc_retrained));
    let complete = sap.len() == 4 && desk.records.len() == 8 && desk.records.iter().all(|r| r.completed());
    Outcome {
        id: 7,
        name: "end-to-end desk run",
        gated: true,
        pass: complete
            && dense_min >= 0.95
            && sap_remaining < 0.5
            && (sap_acc - dense_mean).abs() <= 0.02
            && desk.secs < 300.0,
        detail: format!(
            "dense accuracy min {dense_min:.4} (>= 0.95); SAP(0.5,1) at t=10: remaining {sap_remaining:.4} (< 0.5), \
             accuracy {sap_acc:.4} vs dense {dense_mean:.4} (within 0.02); {:.1} s for 8 cells (< 300 s)",
            desk.secs
        ),
    }
}

fn c8_alignment(desk: &Desk) -> Outcome {
    let report = build_report(&desk.records).unwrap();
    let mut parts = Vec::new();
    let mut worst = f64::INFINITY;
    for (alg, s) in &report.trajectories {
        let per_run: Vec<f64> = s.runs.iter().filter_map(|r| r.stats.spearman_pqi_gini).collect();
        let run_min = per_run.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.min(run_min);
        parts.push(format!(
            "{alg}: mean-trajectory {:.4}, per-run min {run_min:.4}, pqi argmin t={:?}",
            s.mean.spearman_pqi_gini.unwrap_or(f64::NAN),
            s.mean.pqi_argmin
        ));
    }
    Outcome {
        id: 8,
        name: "PQI-Gini alignment (reported, not gated)",
        gated: false,
        pass: worst >= 0.8,
        detail: format!("spearman >= 0.8 wanted; {}", parts.join("; ")),
    }
}

fn c9_persistence(root: &Path, copy: &Path) -> Outcome {
    let written = fs::read_to_string(root.join(SUMMARY_CSV)).unwrap();
    let replayed = replay_summary(root).unwrap();
    // Round-trip every record through read and write into a fresh root.
    for dir in cell_dirs(root).unwrap() {
        let rec = read_run_record(&dir).unwrap();
        write_run_record(&rec, &copy.join(dir.file_name().unwrap())).unwrap();
    }
    fs::copy(root.join(CELLS_CSV), copy.join(CELLS_CSV)).unwrap();
    let copied = replay_summary(copy).unwrap();
    let header_ok = fs::read_to_string(root.join("sap_seed0").join("iterations.csv"))
        .unwrap()
        .starts_with(CSV_HEADER);
    Outcome {
        id: 9,
        name: "persistence",
        gated: true,
        pass: written == replayed && written == copied && header_ok,
        detail: format!(
            "summary.csv {} bytes; replay identical: {}; after read/write copy: {}",
            written.len(),
            written == replayed,
            written == copied
        ),
    }
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let root = scratch.path().join("desk");
    let mut outcomes = vec![c1_axioms(), c2_range(), c3_bound(), c4_gradient()];
    let desk = desk_run(&root);
    let lt: Vec<RunRecord> = desk
        .records
        .iter()
        .filter(|r| matches!(r.config.algorithm.kind, AlgorithmKind::LotteryTicket { .. }))
        .cloned()
        .collect();
    outcomes.push(c5_schedule(&lt));
    outcomes.push(c6_replay(&scratch.path().join("ablation")));
    outcomes.push(c7_desk(&desk));
    outcomes.push(c8_alignment(&desk));
    outcomes.push(c9_persistence(&root, &scratch.path().join("copy")));

    let mut failed = 0;
    for o in &outcomes {
        let verdict = match (o.pass, o.gated) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        if !o.pass && o.gated {
            failed += 1;
        }
        println!("{verdict} [{}] {}: {}", o.id, o.name, o.detail);
    }
    println!(
        "acceptance: {} of {} gated criteria passed",
        outcomes.iter().filter(|o| o.gated && o.pass).count(),
        outcomes.iter().filter(|o| o.gated).count()
    );
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
