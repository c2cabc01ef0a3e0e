//! Training objective, divergence bounds, Adam, learning-rate schedule, and
//! the epoch loop.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attention::QueryOptions;
use crate::corpus::{build_vocab, parse_conll, Channel, Sentence};
use crate::embedding::load_pretrained;
use crate::error::{Error, Result};
use crate::model::{AttentionRecord, Directions, EncodedSentence, Forward, Model, ModelConfig};
use crate::numerics::{NodeId, RealMatrix};
use crate::params::{ParameterSet, TensorSpec};

/// Standard deviation of the initial weights (variance 0.01).
pub const INIT_STD: f64 = 0.1;
/// Additive embedding size used with pretrained word vectors.
pub const PRETRAINED_DIM: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl LrGrid {
    pub fn candidates(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl Default for LrGrid {
    fn default() -> Self {
        LrGrid {
            start: 0.0004,
            step: 0.0002,
            count: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// When set, the initial rate is chosen from this grid instead.
    pub lr_grid: Option<LrGrid>,
    pub adam: AdamConfig,
    pub hidden: usize,
    /// `None`: 300 with pretrained vectors, `hidden` otherwise.
    pub embed_dim: Option<usize>,
    pub channels: Vec<Channel>,
    pub pretrained_init: bool,
    pub use_pos: bool,
    pub directions: Directions,
    pub feed_soft_head: bool,
    pub soft_head_root: bool,
    pub seed: u64,
    pub max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.0006,
            lr_grid: None,
            adam: AdamConfig::default(),
            hidden: 128,
            embed_dim: None,
            channels: Channel::ALL.to_vec(),
            pretrained_init: true,
            use_pos: true,
            directions: Directions::Both,
            feed_soft_head: true,
            soft_head_root: true,
            seed: 1,
            max_epochs: 30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be at least 1".to_owned()));
        }
        if self.embed_dim == Some(0) {
            return Err(Error::Config("embedding size must be at least 1".to_owned()));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".to_owned()));
        }
        if let Some(grid) = self.lr_grid {
            if grid.count == 0 || grid.candidates().iter().any(|&lr| !(lr > 0.0)) {
                return Err(Error::Config(
                    "learning-rate grid must hold positive rates".to_owned(),
                ));
            }
        }
        if self.channels.is_empty() {
            return Err(Error::Config("at least one channel is required".to_owned()));
        }
        Ok(())
    }

    pub fn model_config(&self, pretrained: bool) -> ModelConfig {
        let default_embed = if pretrained { PRETRAINED_DIM } else { self.hidden };
        ModelConfig {
            hidden: self.hidden,
            embed_dim: self.embed_dim.unwrap_or(default_embed),
            directions: self.directions,
            query: QueryOptions {
                feed_soft_head: self.feed_soft_head,
                soft_head_root: self.soft_head_root,
            },
        }
    }

    /// Configured channels minus POS when disabled and minus channels the
    /// training data never fills in.
    pub fn effective_channels(&self, train: &[Sentence]) -> Vec<Channel> {
        self.channels
            .iter()
            .copied()
            .filter(|c| self.use_pos || !c.is_pos())
            .filter(|c| *c == Channel::Form || c.present_in(train))
            .collect()
    }
}

/// Vocabulary from `train`, seeded random weights, and optionally pretrained
/// form vectors.
pub fn build_model(train: &[Sentence], config: &TrainConfig, pretrained: Option<&Path>) -> Result<Model> {
    config.validate()?;
    let pretrained = pretrained.filter(|_| config.pretrained_init);
    let vocab = build_vocab(train, &config.effective_channels(train))?;
    let mut model = Model::zeros(config.model_config(pretrained.is_some()), vocab);
    model.params = init_params(model.layout.specs().to_vec(), config.seed);
    if let Some(path) = pretrained {
        let idx = model.layout.table_index(Channel::Form).expect("form channel");
        let form_vocab = model.vocab.channel(Channel::Form).expect("form channel").clone();
        let loaded = load_pretrained(path, model.params.get_mut(idx), &form_vocab)?;
        info!("initialized {} form vectors from {}", loaded, path.display());
    }
    Ok(model)
}

/// Weights drawn from N(0, 0.01) in layout order, biases zero.
pub fn init_params(specs: Vec<TensorSpec>, seed: u64) -> ParameterSet {
    init_params_with_std(specs, seed, INIT_STD)
}

pub fn init_params_with_std(specs: Vec<TensorSpec>, seed: u64, std: f64) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("finite std");
    ParameterSet::from_fn(specs, |s| {
        if s.bias {
            RealMatrix::zeros(s.rows, s.cols)
        } else {
            RealMatrix::from_fn(s.rows, s.cols, |_, _| normal.sample(&mut rng))
        }
    })
}

/// Adds the negated gold log-likelihood to the graph and returns its node.
pub fn loss_node(f: &mut Forward, sentence: &EncodedSentence) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(3 * sentence.len());
    for t in 0..sentence.len() {
        terms.push(f.graph.pick_log(f.y[t], sentence.rels[t])?);
        for trace in [&f.left, &f.right].into_iter().flatten() {
            terms.push(f.graph.pick_log(trace.a[t], sentence.heads[t])?);
        }
    }
    let ll = f.graph.sum(&terms)?;
    let zero = f.graph.zeros(1);
    f.graph.sub(zero, ll)
}

/// `-Σ_t [ln y_t[rel_t] + ln a^l_t[head_t] + ln a^r_t[head_t]]`, skipping
/// a disabled direction.
pub fn sentence_loss(record: &AttentionRecord, sentence: &EncodedSentence) -> f64 {
    let mut ll = 0.0;
    for t in 0..sentence.len() {
        ll += record.y.get(t, sentence.rels[t]).ln();
        for a in [&record.a_l, &record.a_r].into_iter().flatten() {
            ll += a.get(t, sentence.heads[t]).ln();
        }
    }
    -ll
}

/// The same objective written as `Σ_t D(g_t||a^l_t) + D(g_t||a^r_t) - ln y_t`
/// with one-hot gold distributions `g_t`.
pub fn divergence_objective(record: &AttentionRecord, sentence: &EncodedSentence) -> f64 {
    let n = sentence.len();
    let mut total = 0.0;
    for t in 0..n {
        let mut g = vec![0.0; n + 1];
        g[sentence.heads[t]] = 1.0;
        for a in [&record.a_l, &record.a_r].into_iter().flatten() {
            total += kl_div(&g, a.row(t));
        }
        total -= record.y.get(t, sentence.rels[t]).ln();
    }
    total
}

/// Loss and per-tensor gradients for one sentence. Tensors the sentence
/// does not reach get `None`.
pub fn loss_and_gradients(model: &Model, sentence: &EncodedSentence) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
    let mut f = model.forward(sentence)?;
    let loss = loss_node(&mut f, sentence)?;
    let mut grads = f.graph.backward(loss)?;
    let value = f.graph.scalar(loss);
    Ok((value, f.params.iter().map(|&p| grads.take(p)).collect()))
}

fn check_simplex(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| x < 0.0 || x.is_nan()) {
        return Err(Error::Contract(format!("{} has a negative entry", name)));
    }
    Ok(())
}

/// `½ Σ (√p_i - √q_i)²`.
pub fn hellinger_sq(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            op: "hellinger",
            left: p.len().to_string(),
            right: q.len().to_string(),
        });
    }
    check_simplex("p", p)?;
    check_simplex("q", q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>())
}

/// `D(g||p) = Σ g_i ln(g_i / p_i)`, with `0 ln 0 = 0`.
pub fn kl_div(g: &[f64], p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&gi, &pi) in g.iter().zip(p) {
        if gi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return f64::INFINITY;
        }
        total += gi * (gi / pi).ln();
    }
    total
}

/// Slack allowed on each link of the bound chain.
pub const BOUND_SLACK: f64 = 1e-12;

/// Terms of `H²(p,q) ≤ √2·H(p,q) ≤ √2(H(p,g)+H(q,g)) ≤ 2√(H²(p,g)+H²(q,g))
/// ≤ 2√(D(g||p)+D(g||q))`, left to right.
#[derive(Clone, Debug, PartialEq)]
pub struct AgreementReport {
    pub terms: [f64; 5],
    pub links: [bool; 4],
}

impl AgreementReport {
    pub fn h2(&self) -> f64 {
        self.terms[0]
    }

    pub fn rhs(&self) -> f64 {
        self.terms[4]
    }

    pub fn holds(&self) -> bool {
        self.links.iter().all(|&l| l)
    }
}

pub fn verify_agreement_bound(p: &[f64], q: &[f64], g: &[f64]) -> Result<AgreementReport> {
    let h2 = hellinger_sq(p, q)?;
    let h2_pg = hellinger_sq(p, g)?;
    let h2_qg = hellinger_sq(q, g)?;
    let s2 = std::f64::consts::SQRT_2;
    let terms = [
        h2,
        s2 * h2.sqrt(),
        s2 * (h2_pg.sqrt() + h2_qg.sqrt()),
        2.0 * (h2_pg + h2_qg).sqrt(),
        2.0 * (kl_div(g, p) + kl_div(g, q)).sqrt(),
    ];
    let mut links = [false; 4];
    for k in 0..4 {
        links[k] = terms[k] <= terms[k + 1] + BOUND_SLACK;
    }
    Ok(AgreementReport { terms, links })
}

/// `(D(g||p) + D(g||q), 2 Σ g_i ln(g_i / √(p_i q_i)))`.
pub fn cross_entropy_identity_check(g: &[f64], p: &[f64], q: &[f64]) -> (f64, f64) {
    let lhs = kl_div(g, p) + kl_div(g, q);
    let rhs = 2.0
        * g.iter()
            .zip(p.iter().zip(q))
            .filter(|(&gi, _)| gi > 0.0)
            .map(|(&gi, (&pi, &qi))| gi * (gi / (pi * qi).sqrt()).ln())
            .sum::<f64>();
    (lhs, rhs)
}

/// Adam moments, one slot per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    touched: Vec<bool>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            touched: vec![false; params.len()],
            step: 0,
        }
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }
}

/// One bias-corrected Adam update. A missing gradient counts as zero. Any
/// non-finite gradient aborts the step before anything changes.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &[Option<Vec<f64>>],
    state: &mut AdamState,
    lr: f64,
    config: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.len() != params.get(i).len() {
                return Err(Error::Contract(format!(
                    "gradient of {} has {} entries, expected {}",
                    params.spec(i).name,
                    g.len(),
                    params.get(i).len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(params.spec(i).name.clone()));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        if g.is_none() && !state.touched[i] {
            // zero moments stay zero and the update is exactly zero
            continue;
        }
        state.touched[i] = true;
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let w = params.get_mut(i).as_mut_slice();
        for k in 0..w.len() {
            let gk = g.as_ref().map_or(0.0, |g| g[k]);
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            w[k] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleAction {
    Continue,
    Stop,
}

/// Learning-rate policy driven by the dev log-likelihood: once it first
/// drops below the previous epoch's value the rate is halved after every
/// epoch, and the second drop ends training.
#[derive(Clone, Debug)]
pub struct LrSchedule {
    pub lr: f64,
    previous: Option<f64>,
    decreases: usize,
}

impl LrSchedule {
    pub fn new(lr: f64) -> Self {
        LrSchedule {
            lr,
            previous: None,
            decreases: 0,
        }
    }

    pub fn observe(&mut self, dev_ll: f64) -> ScheduleAction {
        let decreased = self.previous.map_or(false, |p| dev_ll < p);
        self.previous = Some(dev_ll);
        if decreased {
            self.decreases += 1;
            if self.decreases >= 2 {
                return ScheduleAction::Stop;
            }
        }
        if self.decreases > 0 {
            self.lr *= 0.5;
        }
        ScheduleAction::Continue
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub dev_ll: f64,
    /// Rate used during the epoch.
    pub lr: f64,
    pub seconds: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {}\tdev_ll {:.6}\tlr {:e}\ttime {:.3}s",
            self.epoch, self.dev_ll, self.lr, self.seconds
        )
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
}

/// Sum of gold log-likelihoods (the negated loss) over `sentences`.
pub fn log_likelihood(model: &Model, sentences: &[EncodedSentence]) -> Result<f64> {
    let mut total = 0.0;
    for s in sentences {
        total -= sentence_loss(&model.forward(s)?.record(), s);
    }
    Ok(total)
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Optimizer state and shuffling stream carried across epochs.
pub struct EpochRunner {
    adam: AdamState,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl EpochRunner {
    pub fn new(model: &Model, train_len: usize, seed: u64) -> Self {
        EpochRunner {
            adam: AdamState::new(&model.params),
            rng: shuffle_rng(seed),
            order: (0..train_len).collect(),
        }
    }

    /// Shuffles, then takes one Adam step per sentence.
    pub fn run(&mut self, model: &mut Model, train: &[EncodedSentence], lr: f64, config: &AdamConfig) -> Result<()> {
        self.order.shuffle(&mut self.rng);
        for &i in &self.order {
            let (_, grads) = loss_and_gradients(model, &train[i])?;
            adam_step(&mut model.params, &grads, &mut self.adam, lr, config)?;
        }
        Ok(())
    }
}

/// Trains `model` in place: one Adam step per shuffled training sentence,
/// the dev log-likelihood after each epoch, and the schedule deciding the
/// next rate or the end.
pub fn train(mut model: Model, train: &[Sentence], dev: &[Sentence], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Corpus("training needs non-empty train and dev sets".to_owned()));
    }
    let train_enc: Vec<_> = train.iter().map(|s| model.encode(s)).collect();
    let dev_enc: Vec<_> = dev.iter().map(|s| model.encode(s)).collect();

    let lr = match config.lr_grid {
        Some(grid) => lr_grid_search(&model, &train_enc, &dev_enc, &grid.candidates(), config)?,
        None => config.initial_lr,
    };
    let mut schedule = LrSchedule::new(lr);
    let mut runner = EpochRunner::new(&model, train_enc.len(), config.seed);
    let mut log = Vec::new();
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let lr = schedule.lr;
        runner.run(&mut model, &train_enc, lr, &config.adam)?;
        let dev_ll = log_likelihood(&model, &dev_enc)?;
        if dev_ll.is_nan() {
            return Err(Error::Divergence(format!("dev log-likelihood is NaN after epoch {}", epoch)));
        }
        let record = EpochRecord {
            epoch,
            dev_ll,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        info!("{}", record);
        log.push(record);
        if schedule.observe(dev_ll) == ScheduleAction::Stop {
            break;
        }
    }
    Ok(TrainOutcome { model, log })
}

/// Trains one epoch per candidate from the same starting point and shuffle
/// and returns the rate with the best dev log-likelihood. Ties go to the
/// smaller rate; a candidate that blows up scores minus infinity.
pub fn lr_grid_search(
    model: &Model,
    train: &[EncodedSentence],
    dev: &[EncodedSentence],
    candidates: &[f64],
    config: &TrainConfig,
) -> Result<f64> {
    let mut results = Vec::with_capacity(candidates.len());
    for &lr in candidates {
        let mut trial = model.clone();
        let mut runner = EpochRunner::new(&trial, train.len(), config.seed);
        let ll = match runner.run(&mut trial, train, lr, &config.adam) {
            Ok(()) => log_likelihood(&trial, dev)?,
            Err(Error::NonFinite(msg)) => {
                warn!("learning rate {} diverged: {}", lr, msg);
                f64::NEG_INFINITY
            }
            Err(e) => return Err(e),
        };
        let ll = if ll.is_nan() { f64::NEG_INFINITY } else { ll };
        info!("learning rate {}: dev_ll {:.6}", lr, ll);
        results.push((lr, ll));
    }
    best_rate(&results).ok_or_else(|| Error::Config("learning-rate grid is empty".to_owned()))
}

/// Highest log-likelihood wins, then the smaller rate.
fn best_rate(results: &[(f64, f64)]) -> Option<f64> {
    results
        .iter()
        .copied()
        .max_by(|(lr_a, ll_a), (lr_b, ll_b)| ll_a.total_cmp(ll_b).then(lr_b.total_cmp(lr_a)))
        .map(|(lr, _)| lr)
}

/// Largest relative error between analytic and central-difference
/// gradients, per tensor.
#[derive(Clone, Debug)]
pub struct GradientReport {
    pub tensors: Vec<(String, f64)>,
    pub tolerance: f64,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.tensors.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < self.tolerance
    }

    pub fn failures(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|(_, e)| !(*e < self.tolerance))
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Entries whose analytic and numeric values are both this small are
/// treated as agreeing.
const GRAD_ABS_FLOOR: f64 = 1e-9;

fn relative_error(a: f64, b: f64) -> f64 {
    if (a - b).abs() < GRAD_ABS_FLOOR {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares every gradient entry of every tensor against central
/// differences with step `h`. `sabotage` flips the sign of the first
/// non-zero analytic gradient, which the report must then flag.
pub fn gradient_check(
    model: &Model,
    sentence: &EncodedSentence,
    h: f64,
    tolerance: f64,
    sabotage: bool,
) -> Result<GradientReport> {
    let (_, mut grads) = loss_and_gradients(model, sentence)?;
    if sabotage {
        if let Some(g) = grads.iter_mut().flatten().find(|g| g.iter().any(|&x| x != 0.0)) {
            g.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(model.params.len());
    for i in 0..model.params.len() {
        let mut worst: f64 = 0.0;
        for k in 0..model.params.get(i).len() {
            let orig = model.params.get(i).as_slice()[k];
            probe.params.get_mut(i).as_mut_slice()[k] = orig + h;
            let up = sentence_loss(&probe.forward(sentence)?.record(), sentence);
            probe.params.get_mut(i).as_mut_slice()[k] = orig - h;
            let down = sentence_loss(&probe.forward(sentence)?.record(), sentence);
            probe.params.get_mut(i).as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[i].as_ref().map_or(0.0, |g| g[k]);
            let err = relative_error(analytic, numeric);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
        tensors.push((model.params.spec(i).name.clone(), worst));
    }
    Ok(GradientReport { tensors, tolerance })
}

const GRADIENT_FIXTURE: &str = "\
1\tdogs\tdog\tN\tNNS\tnum=pl\t2\tnsubj\t_\t_
2\tbark\tbark\tV\tVBP\t_\t0\troot\t_\t_
3\tloudly\tloudly\tR\tRB\t_\t2\tnsubj\t_\t_
";

/// A 3-token sentence with 2 relations and a `d = hidden` model over every
/// channel, with weights large enough to give non-trivial gradients.
pub fn gradient_fixture(hidden: usize, seed: u64) -> (Model, EncodedSentence) {
    let s = parse_conll(GRADIENT_FIXTURE.as_bytes(), "gradient-fixture").expect("fixture parses");
    let corpus = vec![s[0].clone(), s[0].clone()];
    let vocab = build_vocab(&corpus, &Channel::ALL).expect("non-empty");
    let mut model = Model::zeros(ModelConfig::new(hidden), vocab);
    model.params = init_params_with_std(model.layout.specs().to_vec(), seed, 0.5);
    let encoded = model.encode(&corpus[0]);
    (model, encoded)
}

#[cfg(test)]
mod tests {
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    use super::*;
    use crate::attention::Direction;
    use crate::embedding::TokenIds;

    fn simplex(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
        let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn hellinger_examples() {
        assert_eq!(hellinger_sq(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(hellinger_sq(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(hellinger_sq(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = simplex(5, &mut rng);
        let q = simplex(5, &mut rng);
        let direct: f64 = (0..5).map(|i| 0.5 * (p[i].sqrt() - q[i].sqrt()).powi(2)).sum();
        assert_relative_eq!(hellinger_sq(&p, &q).unwrap(), direct, max_relative = 1e-14);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_div(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert_abs_diff_eq!(kl_div(&[1.0, 0.0], &[0.5, 0.5]), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(kl_div(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = simplex(4, &mut rng);
        let p = simplex(4, &mut rng);
        let direct: f64 = (0..4).map(|i| g[i] * (g[i] / p[i]).ln()).sum();
        assert_relative_eq!(kl_div(&g, &p), direct, max_relative = 1e-12);
    }

    #[test]
    fn agreement_bound_examples() {
        let p = [0.25, 0.75];
        let r = verify_agreement_bound(&p, &p, &p).unwrap();
        assert!(r.holds());
        assert!(r.terms.iter().all(|&t| t == 0.0));
        let r = verify_agreement_bound(&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(r.h2(), 1.0);
        assert_eq!(r.rhs(), f64::INFINITY);
        assert!(r.holds());
    }

    #[test]
    fn agreement_bound_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let dim = rng.gen_range(2..=10);
            let (p, q, g) = (simplex(dim, &mut rng), simplex(dim, &mut rng), simplex(dim, &mut rng));
            let r = verify_agreement_bound(&p, &q, &g).unwrap();
            assert!(r.holds(), "{:?}", r);
        }
    }

    #[test]
    fn cross_entropy_identity() {
        let (l, r) = cross_entropy_identity_check(&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]);
        assert_eq!((l, r), (0.0, 0.0));
        let (l, r) = cross_entropy_identity_check(&[1.0, 0.0], &[0.5, 0.5], &[0.5, 0.5]);
        assert_abs_diff_eq!(l, 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(r, 2.0 * 2f64.ln(), epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let dim = rng.gen_range(2..=10);
            let (g, p, q) = (simplex(dim, &mut rng), simplex(dim, &mut rng), simplex(dim, &mut rng));
            let (l, r) = cross_entropy_identity_check(&g, &p, &q);
            assert_abs_diff_eq!(l, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn init_statistics() {
        let specs = vec![TensorSpec::weight("w", 316, 316), TensorSpec::bias("b", 7)];
        let p = init_params(specs.clone(), 5);
        assert!(p.get(1).as_slice().iter().all(|&x| x == 0.0));
        let w = p.get(0).as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var - 0.01).abs() < 0.0005, "variance {}", var);
        assert_eq!(p, init_params(specs.clone(), 5));
        assert_ne!(p, init_params(specs, 6));
    }

    fn scalar_set(w: f64) -> ParameterSet {
        ParameterSet::from_fn(vec![TensorSpec::weight("w", 1, 1)], |_| {
            RealMatrix::from_vec(1, 1, vec![w]).unwrap()
        })
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = scalar_set(0.0);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &[Some(vec![1.0])], &mut st, 0.01, &AdamConfig::default()).unwrap();
        assert_abs_diff_eq!(p.get(0).get(0, 0), -0.01, epsilon = 1e-9);
    }

    #[test]
    fn adam_zero_gradient() {
        let mut p = scalar_set(0.5);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[Some(vec![1.0])], &mut st, 0.01, &cfg).unwrap();
        let before = p.get(0).get(0, 0);
        let (m, v) = (st.first_moment(0)[0], st.second_moment(0)[0]);
        let mut untouched = scalar_set(0.5);
        let mut st2 = AdamState::new(&untouched);
        adam_step(&mut untouched, &[Some(vec![0.0])], &mut st2, 0.01, &cfg).unwrap();
        adam_step(&mut untouched, &[None], &mut st2, 0.01, &cfg).unwrap();
        assert_eq!(untouched.get(0).get(0, 0), 0.5);
        adam_step(&mut p, &[Some(vec![0.0])], &mut st, 0.01, &cfg).unwrap();
        assert_eq!(st.first_moment(0)[0], 0.9 * m);
        assert_eq!(st.second_moment(0)[0], 0.999 * v);
        // momentum keeps moving the weight even with a zero gradient
        assert!(p.get(0).get(0, 0) < before);
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut p = scalar_set(1.0);
        let mut st = AdamState::new(&p);
        let mut f = 1.0;
        for _ in 0..5 {
            let w = p.get(0).get(0, 0);
            adam_step(&mut p, &[Some(vec![2.0 * w])], &mut st, 0.1, &AdamConfig::default()).unwrap();
            let next = p.get(0).get(0, 0).powi(2);
            assert!(next < f);
            f = next;
        }
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = scalar_set(1.0);
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &[Some(vec![f64::NAN])], &mut st, 0.1, &AdamConfig::default());
        match err {
            Err(Error::NonFinite(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {:?}", other),
        }
        assert_eq!(p.get(0).get(0, 0), 1.0);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn schedule_halves_then_stops() {
        let mut s = LrSchedule::new(1.0);
        let lls = [-10.0, -9.0, -9.5, -9.2, -9.4];
        let mut lrs = Vec::new();
        let mut stopped_at = None;
        for (i, &ll) in lls.iter().enumerate() {
            lrs.push(s.lr);
            if s.observe(ll) == ScheduleAction::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(lrs, vec![1.0, 1.0, 1.0, 0.5, 0.25]);
        assert_eq!(stopped_at, Some(5));
    }

    #[test]
    fn schedule_monotone_never_stops() {
        let mut s = LrSchedule::new(0.1);
        for k in 0..100 {
            assert_eq!(s.observe(-100.0 + k as f64), ScheduleAction::Continue);
        }
        assert_eq!(s.lr, 0.1);
    }

    #[test]
    fn loss_examples() {
        // n = 1, two labels, everything uniform
        let enc = EncodedSentence {
            tokens: vec![TokenIds(vec![]), TokenIds(vec![])],
            heads: vec![0],
            rels: vec![1],
        };
        let uniform = RealMatrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        let rec = AttentionRecord {
            a_l: Some(uniform.clone()),
            a_r: Some(uniform.clone()),
            q_l: vec![],
            q_r: vec![],
            soft_l: vec![],
            soft_r: vec![],
            y: uniform,
            score_evaluations: 0,
        };
        assert_abs_diff_eq!(sentence_loss(&rec, &enc), 3.0 * 2f64.ln(), epsilon = 1e-15);
        let one_hot = RealMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let perfect = AttentionRecord {
            a_l: Some(one_hot.clone()),
            a_r: Some(one_hot),
            y: RealMatrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap(),
            ..rec
        };
        assert_eq!(sentence_loss(&perfect, &enc), 0.0);
    }

    #[test]
    fn graph_and_value_losses_agree() {
        let (model, enc) = gradient_fixture(4, 3);
        let rec = model.forward(&enc).unwrap().record();
        let (graph_loss, _) = loss_and_gradients(&model, &enc).unwrap();
        let value_loss = sentence_loss(&rec, &enc);
        assert_relative_eq!(graph_loss, value_loss, max_relative = 1e-12);
        let mut direct = 0.0;
        for t in 0..enc.len() {
            direct -= rec.y.get(t, enc.rels[t]).ln();
            direct -= rec.a_l.as_ref().unwrap().get(t, enc.heads[t]).ln();
            direct -= rec.a_r.as_ref().unwrap().get(t, enc.heads[t]).ln();
        }
        assert_relative_eq!(value_loss, direct, max_relative = 1e-12);
        assert_abs_diff_eq!(divergence_objective(&rec, &enc), value_loss, epsilon = 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (model, enc) = gradient_fixture(3, 1);
        let report = gradient_check(&model, &enc, 1e-5, 1e-4, false).unwrap();
        assert!(report.passed(), "{:?}", report);
        let sabotaged = gradient_check(&model, &enc, 1e-5, 1e-4, true).unwrap();
        assert!(!sabotaged.passed());
        assert_eq!(sabotaged.failures().len(), 1);
    }

    #[test]
    fn l2r_training_leaves_r2l_query_untouched() {
        let (mut model, enc) = gradient_fixture(3, 2);
        model.config.directions = Directions::LeftToRight;
        let before = model.params.clone();
        let mut adam = AdamState::new(&model.params);
        for _ in 0..3 {
            let (_, grads) = loss_and_gradients(&model, &enc).unwrap();
            adam_step(&mut model.params, &grads, &mut adam, 0.01, &AdamConfig::default()).unwrap();
        }
        for i in model.layout.query_tensors(Direction::RightToLeft) {
            assert_eq!(model.params.get(i), before.get(i), "{}", before.spec(i).name);
        }
        for i in model.layout.query_tensors(Direction::LeftToRight) {
            assert_ne!(model.params.get(i), before.get(i), "{}", before.spec(i).name);
        }
    }

    #[test]
    fn grid_prefers_sane_rate_and_smaller_on_tie() {
        let (model, enc) = gradient_fixture(3, 4);
        let config = TrainConfig::default();
        let data = vec![enc];
        let lr = lr_grid_search(&model, &data, &data, &[10.0, 0.01], &config).unwrap();
        assert_eq!(lr, 0.01);
        assert_eq!(lr_grid_search(&model, &data, &data, &[0.02], &config).unwrap(), 0.02);
    }

    #[test]
    fn grid_tie_goes_to_smaller_rate() {
        assert_eq!(best_rate(&[(0.002, -5.0), (0.001, -5.0), (0.003, -6.0)]), Some(0.001));
        assert_eq!(best_rate(&[]), None);
    }
}
