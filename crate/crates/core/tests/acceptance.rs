//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attdep::attention::Direction;
use attdep::cli::{self, random_attention, random_simplex, ModelArchive, RunConfig};
use attdep::corpus::{crossed_arcs, is_tree, read_conll, write_gold_to, Sentence, Token};
use attdep::decoder::{combine_scores, cycle_fixture, greedy_decode, mst_decode, ArcScores, DecodeMode};
use attdep::eval::score;
use attdep::model::Directions;
use attdep::numerics::RealMatrix;
use attdep::trainer::{
    build_model, cross_entropy_identity_check, gradient_check, gradient_fixture, init_params_with_std, train,
    verify_agreement_bound, EpochRunner, TrainConfig,
};

const GRADIENT_STEP: f64 = 1e-5;
const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_BUDGET: Duration = Duration::from_secs(10);
const MST_INSTANCES: usize = 200;
const MST_MAX_LEN: usize = 6;
const MST_BUDGET: Duration = Duration::from_secs(30);
const BOUND_TRIPLES: usize = 1000;
const BOUND_SLACK: f64 = 1e-12;
const IDENTITY_TOLERANCE: f64 = 1e-10;
const NORMALIZATION_SENTENCES: usize = 100;
const NORMALIZATION_TOLERANCE: f64 = 1e-10;
const OVERFIT_HIDDEN: usize = 32;
const OVERFIT_EPOCHS: usize = 50;
const OVERFIT_TARGET_UAS: f64 = 0.99;
const OVERFIT_LR: f64 = 0.003;
const OVERFIT_BUDGET: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn toy() -> Vec<Sentence> {
    read_conll(data("toy_train.conll")).expect("toy treebank")
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, start: Instant, detail: String) -> Outcome {
    let spent = start.elapsed();
    check(spent < budget, format!("{}; {:.2}s of {}s", detail, spent.as_secs_f64(), budget.as_secs()))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let (model, sentence) = gradient_fixture(4, 11);
    if sentence.len() != 3 || model.vocab.relations().labels().iter().filter(|l| !l.starts_with('<')).count() != 2 {
        return Err("fixture is not a 3-token, 2-relation sentence".into());
    }
    let report = gradient_check(&model, &sentence, GRADIENT_STEP, GRADIENT_TOLERANCE, false).map_err(|e| e.to_string())?;
    if !report.passed() {
        return Err(format!("mismatch in {:?}", report.failures()));
    }
    within(
        GRADIENT_BUDGET,
        start,
        format!("{} tensors, max relative error {:.2e}", report.tensors.len(), report.worst()),
    )
}

/// Exhaustive search over head assignments with its own tree test.
fn brute_force_best(scores: &ArcScores) -> f64 {
    let n = scores.len();
    let reaches_root = |heads: &[usize]| {
        (1..=n).all(|t| {
            let mut node = t;
            for _ in 0..=n {
                if node == 0 {
                    return true;
                }
                node = heads[node - 1];
            }
            false
        })
    };
    let mut best = f64::NEG_INFINITY;
    let total = (n + 1).pow(n as u32);
    let mut heads = vec![0; n];
    for code in 0..total {
        let mut c = code;
        for h in heads.iter_mut() {
            *h = c % (n + 1);
            c /= n + 1;
        }
        if heads.iter().enumerate().any(|(i, &h)| h == i + 1) || !reaches_root(&heads) {
            continue;
        }
        best = best.max(scores.total(&heads));
    }
    best
}

fn mst_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..MST_INSTANCES {
        let n = rng.gen_range(1..=MST_MAX_LEN);
        let scores = combine_scores(&random_attention(n, &mut rng), &random_attention(n, &mut rng)).unwrap();
        let heads = mst_decode(&scores, false);
        let oracle = brute_force_best(&scores);
        if !is_tree(&heads) || (scores.total(&heads) - oracle).abs() > 1e-9 {
            return Err(format!("instance {} (n = {}): {} vs optimum {}", k, n, scores.total(&heads), oracle));
        }
    }
    within(MST_BUDGET, start, format!("{} instances, n <= {}", MST_INSTANCES, MST_MAX_LEN))
}

fn agreement_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for k in 0..BOUND_TRIPLES {
        let dim = rng.gen_range(2..=10);
        let (p, q, g) = (random_simplex(dim, &mut rng), random_simplex(dim, &mut rng), random_simplex(dim, &mut rng));
        let r = verify_agreement_bound(&p, &q, &g).map_err(|e| e.to_string())?;
        let holds = r.terms.windows(2).all(|w| w[0] <= w[1] + BOUND_SLACK);
        if !holds || !r.holds() {
            return Err(format!("triple {} breaks the chain: {:?}", k, r.terms));
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..BOUND_TRIPLES {
        let dim = rng.gen_range(2..=10);
        let g = random_simplex(dim, &mut rng);
        let positive = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (p, q) = (positive(&mut rng), positive(&mut rng));
        let (lhs, rhs) = cross_entropy_identity_check(&g, &p, &q);
        worst = worst.max((lhs - rhs).abs());
    }
    check(
        worst <= IDENTITY_TOLERANCE,
        format!("{} triples hold the chain; identity max difference {:.2e}", BOUND_TRIPLES, worst),
    )
}

fn random_sentence(pool: &[Token], n: usize, rng: &mut impl Rng) -> Sentence {
    let tokens = (0..n)
        .map(|i| {
            let mut t = pool[rng.gen_range(0..pool.len())].clone();
            t.head = if i == 0 { 0 } else { rng.gen_range(1..=i) };
            t
        })
        .collect();
    Sentence::new(tokens)
}

fn row_sums_ok(m: &RealMatrix) -> bool {
    (0..m.rows()).all(|r| (m.row(r).iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOLERANCE)
}

fn normalization() -> Outcome {
    let corpus = toy();
    let pool: Vec<Token> = corpus.iter().flat_map(|s| s.tokens().to_vec()).collect();
    let mut config = TrainConfig::default();
    config.hidden = 8;
    let mut model = build_model(&corpus, &config, None).map_err(|e| e.to_string())?;
    model.params = init_params_with_std(model.layout.specs().to_vec(), 5, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows = 0;
    for k in 0..NORMALIZATION_SENTENCES {
        let n = rng.gen_range(1..=25);
        let s = random_sentence(&pool, n, &mut rng);
        let rec = model.forward(&model.encode(&s)).map_err(|e| e.to_string())?.record();
        let mats = [rec.a_l.as_ref().unwrap(), rec.a_r.as_ref().unwrap(), &rec.y];
        if !mats.iter().all(|m| row_sums_ok(m)) {
            return Err(format!("sentence {} has a row off the simplex", k));
        }
        rows += 3 * n;
    }
    Ok(format!("{} sentences, {} distributions within {:e}", NORMALIZATION_SENTENCES, rows, NORMALIZATION_TOLERANCE))
}

fn complexity_counter() -> Outcome {
    let corpus = toy();
    let pool: Vec<Token> = corpus.iter().flat_map(|s| s.tokens().to_vec()).collect();
    let mut config = TrainConfig::default();
    config.hidden = 4;
    let model = build_model(&corpus, &config, None).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seen = Vec::new();
    for n in [1usize, 5, 20] {
        let s = random_sentence(&pool, n, &mut rng);
        let count = model.forward(&model.encode(&s)).map_err(|e| e.to_string())?.score_evaluations;
        if count != 2 * n * (n + 1) {
            return Err(format!("n = {}: {} evaluations, expected {}", n, count, 2 * n * (n + 1)));
        }
        seen.push(format!("n={}:{}", n, count));
    }
    Ok(seen.join(" "))
}

fn with_heads(s: &Sentence, heads: &[usize]) -> Sentence {
    let tokens = s
        .tokens()
        .iter()
        .zip(heads)
        .map(|(t, &h)| Token { head: h, ..t.clone() })
        .collect();
    Sentence::new(tokens)
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let corpus = toy();
    let mut config = TrainConfig::default();
    config.hidden = OVERFIT_HIDDEN;
    config.seed = 1;
    let mut model = build_model(&corpus, &config, None).map_err(|e| e.to_string())?;
    let encoded: Vec<_> = corpus.iter().map(|s| model.encode(s)).collect();
    let mut runner = EpochRunner::new(&model, encoded.len(), config.seed);
    let mut uas = 0.0;
    for epoch in 1..=OVERFIT_EPOCHS {
        runner.run(&mut model, &encoded, OVERFIT_LR, &config.adam).map_err(|e| e.to_string())?;
        let predicted = corpus
            .iter()
            .map(|s| model.parse(s, DecodeMode::Mst, false).map(|t| with_heads(s, &t.heads)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        uas = score(&corpus, &predicted).map_err(|e| e.to_string())?.uas.unwrap();
        if uas >= OVERFIT_TARGET_UAS {
            return within(
                OVERFIT_BUDGET,
                start,
                format!("{} sentences, d = {}, UAS {:.4} after epoch {}", corpus.len(), OVERFIT_HIDDEN, uas, epoch),
            );
        }
    }
    Err(format!("UAS {:.4} after {} epochs", uas, OVERFIT_EPOCHS))
}

fn ablation() -> Outcome {
    let corpus = toy();
    let mut config = TrainConfig::default();
    config.hidden = 8;
    config.directions = Directions::LeftToRight;
    config.max_epochs = 2;
    config.initial_lr = 0.003;
    let model = build_model(&corpus, &config, None).map_err(|e| e.to_string())?;
    let before = model.params.clone();
    let outcome = train(model, &corpus, &corpus, &config).map_err(|e| e.to_string())?;
    let after = &outcome.model;
    for i in after.layout.query_tensors(Direction::RightToLeft) {
        let same = before.get(i).as_slice().iter().zip(after.params.get(i).as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(format!("{} changed", before.spec(i).name));
        }
    }
    if after.layout.query_tensors(Direction::LeftToRight).iter().all(|&i| before.get(i) == after.params.get(i)) {
        return Err("left-to-right query never trained".into());
    }
    let fixture = cycle_fixture();
    let greedy = greedy_decode(&fixture);
    let mst = mst_decode(&fixture, false);
    check(
        greedy != mst && is_tree(&mst) && !is_tree(&greedy),
        format!("right query bit-identical; cycle fixture greedy {:?} vs mst {:?}", greedy, mst),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(args.iter().copied(), &mut out, &mut err);
    if code == 0 {
        Ok(())
    } else {
        Err(format!("exit {}: {}", code, String::from_utf8_lossy(&err)))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let small: Vec<Sentence> = toy().into_iter().take(10).collect();
    let train_path = dir.path().join("train.conll");
    let mut buf = Vec::new();
    write_gold_to(&mut buf, &small).map_err(|e| e.to_string())?;
    fs::write(&train_path, buf).map_err(|e| e.to_string())?;
    let mut archives = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("model{}.bin", run));
        run_cli(&[
            "attdep",
            "train",
            "--train",
            train_path.to_str().unwrap(),
            "--dev",
            train_path.to_str().unwrap(),
            "--model-out",
            out.to_str().unwrap(),
            "--seed",
            "42",
            "--set",
            "train.hidden_size=8",
            "--set",
            "train.max_epochs=3",
            "--set",
            "train.initial_lr=0.003",
        ])?;
        archives.push(fs::read(&out).map_err(|e| e.to_string())?);
    }
    check(
        archives[0] == archives[1],
        format!("two seeded runs, {} byte archives identical", archives[0].len()),
    )
}

/// Pairwise check: arcs cross when their spans interleave; ROOT arcs are
/// left out.
fn crossed_oracle(heads: &[usize]) -> BTreeSet<usize> {
    let arcs: Vec<(usize, usize, usize)> = heads
        .iter()
        .enumerate()
        .filter(|(_, &h)| h != 0)
        .map(|(i, &h)| (i + 1, h.min(i + 1), h.max(i + 1)))
        .collect();
    let mut out = BTreeSet::new();
    for &(m1, a1, b1) in &arcs {
        for &(_, a2, b2) in &arcs {
            if (a1 < a2 && a2 < b1 && b1 < b2) || (a2 < a1 && a1 < b2 && b2 < b1) {
                out.insert(m1);
            }
        }
    }
    out
}

fn random_tree(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    loop {
        let heads: Vec<usize> = (1..=n).map(|t| loop {
            let h = rng.gen_range(0..=n);
            if h != t {
                break h;
            }
        }).collect();
        if is_tree(&heads) {
            return heads;
        }
    }
}

fn eval_parity() -> Outcome {
    let gold = read_conll(data("punct_gold.conll")).map_err(|e| e.to_string())?;
    let pred = read_conll(data("punct_pred.conll")).map_err(|e| e.to_string())?;
    let r = score(&gold, &pred).map_err(|e| e.to_string())?;
    if r.uas != Some(1.0) || r.las != Some(1.0) || r.counts.counted != 3 || gold[0].heads() == pred[0].heads() {
        return Err(format!("punctuation fixture gives {:?}", r));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut crossing = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=8);
        let heads = random_tree(n, &mut rng);
        let got = crossed_arcs(&heads);
        if got != crossed_oracle(&heads) {
            return Err(format!("crossed arcs differ on {:?}", heads));
        }
        crossing += !got.is_empty() as usize;
    }
    if crossed_arcs(&[3, 4, 0, 3]) != BTreeSet::from([1, 2]) {
        return Err("heads [3,4,0,3] should cross at {1,2}".into());
    }
    Ok(format!("UAS 1.00 with an excluded punctuation error; 500 random trees ({} non-projective) match", crossing))
}

fn io_round_trips() -> Outcome {
    for name in ["roundtrip.conll", "nonprojective.conll", "punct_gold.conll", "toy_train.conll"] {
        let original = fs::read(data(name)).map_err(|e| e.to_string())?;
        let mut written = Vec::new();
        write_gold_to(&mut written, &read_conll(data(name)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if written != original {
            return Err(format!("{} changed on rewrite", name));
        }
    }
    let (model, _) = gradient_fixture(5, 9);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.bin");
    let archive = ModelArchive { model, config: RunConfig::default() };
    archive.save(&path).map_err(|e| e.to_string())?;
    let loaded = ModelArchive::load(&path).map_err(|e| e.to_string())?;
    let mut entries = 0;
    for ((sa, ta), (sb, tb)) in archive.model.params.iter().zip(loaded.model.params.iter()) {
        let bits = |m: &RealMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if sa != sb || bits(ta) != bits(tb) {
            return Err(format!("tensor {} differs after load", sa.name));
        }
        entries += ta.len();
    }
    Ok(format!("4 CoNLL fixtures byte-identical; {} tensor entries bit-exact", entries))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient suite", gradient_suite),
        ("MST oracle", mst_oracle),
        ("agreement-bound suite", agreement_bound),
        ("normalization", normalization),
        ("complexity counter", complexity_counter),
        ("overfit smoke test", overfit),
        ("ablation direction test", ablation),
        ("determinism", determinism),
        ("eval parity", eval_parity),
        ("I/O round-trips", io_round_trips),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {}: {}", name, detail),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}: {}", name, detail);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
