//! Self-checks run by the `check` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::{combine_scores, exhaustive_decode, mst_decode};
use crate::error::Result;
use crate::numerics::{softmax, RealMatrix};
use crate::trainer::{cross_entropy_identity_check, gradient_check, gradient_fixture, verify_agreement_bound};

pub const BOUND_TRIALS: usize = 1000;
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const MST_TRIALS: usize = 200;
pub const MST_MAX_LEN: usize = 6;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Random point on the simplex, with an occasional exact zero.
pub fn random_simplex(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..dim)
        .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1.0f64).powi(2) })
        .collect();
    if raw.iter().all(|&x| x == 0.0) {
        raw[rng.gen_range(0..dim)] = 1.0;
    }
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn positive_simplex(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn check_agreement_bound(rng: &mut impl Rng) -> Result<CheckResult> {
    let mut violations = 0;
    for _ in 0..BOUND_TRIALS {
        let dim = rng.gen_range(2..=10);
        let p = random_simplex(dim, rng);
        let q = random_simplex(dim, rng);
        let g = random_simplex(dim, rng);
        if !verify_agreement_bound(&p, &q, &g)?.holds() {
            violations += 1;
        }
    }
    Ok(CheckResult {
        name: "agreement-bound",
        passed: violations == 0,
        detail: format!("{} of {} triples violate the chain", violations, BOUND_TRIALS),
    })
}

pub fn check_cross_entropy_identity(rng: &mut impl Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..BOUND_TRIALS {
        let dim = rng.gen_range(2..=10);
        let g = random_simplex(dim, rng);
        let p = positive_simplex(dim, rng);
        let q = positive_simplex(dim, rng);
        let (lhs, rhs) = cross_entropy_identity_check(&g, &p, &q);
        worst = worst.max((lhs - rhs).abs());
    }
    CheckResult {
        name: "cross-entropy-identity",
        passed: worst <= IDENTITY_TOLERANCE,
        detail: format!("max difference {:e}", worst),
    }
}

pub fn check_gradients(seed: u64, sabotage: bool) -> Result<CheckResult> {
    let (model, sentence) = gradient_fixture(4, seed);
    let report = gradient_check(&model, &sentence, GRADIENT_STEP, GRADIENT_TOLERANCE, sabotage)?;
    let failures = report.failures();
    Ok(CheckResult {
        name: "gradient",
        passed: report.passed(),
        detail: if failures.is_empty() {
            format!("{} tensors, max relative error {:e}", report.tensors.len(), report.worst())
        } else {
            format!("mismatch in {}", failures.join(", "))
        },
    })
}

/// Row-stochastic `n x (n+1)` matrix with random logits.
pub fn random_attention(n: usize, rng: &mut impl Rng) -> RealMatrix {
    let mut m = RealMatrix::zeros(n, n + 1);
    for t in 0..n {
        let logits: Vec<f64> = (0..=n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let p = softmax(&logits.into()).expect("non-empty");
        for j in 0..=n {
            m.set(t, j, p[j]);
        }
    }
    m
}

pub fn check_mst(rng: &mut impl Rng) -> Result<CheckResult> {
    let mut mismatches = 0;
    for _ in 0..MST_TRIALS {
        let n = rng.gen_range(1..=MST_MAX_LEN);
        let scores = combine_scores(&random_attention(n, rng), &random_attention(n, rng))?;
        let heads = mst_decode(&scores, false);
        let oracle = exhaustive_decode(&scores, false).expect("a tree exists");
        if (scores.total(&heads) - scores.total(&oracle)).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    Ok(CheckResult {
        name: "mst-oracle",
        passed: mismatches == 0,
        detail: format!("{} of {} instances off the optimum", mismatches, MST_TRIALS),
    })
}

pub fn run_checks(seed: u64, sabotage: bool) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        check_agreement_bound(&mut rng)?,
        check_cross_entropy_identity(&mut rng),
        check_gradients(seed, sabotage)?,
        check_mst(&mut rng)?,
    ])
}
