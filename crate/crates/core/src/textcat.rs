//! Two-stage hierarchical text categorization.
//!
//! Stage 1 clusters words for the coarse topic label with no side
//! information. Stage 2 clusters words for the fine class label while the
//! decoder also sees the stage-1 cluster. Documents are classified by a
//! log-linear rule over counts of `(u1, u2)` cluster pairs.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Encoder, FourWay, JointXYZ, Vars};
use crate::solver::{self, InitScheme, SolverConfig};

/// Cluster-pair probabilities are clamped to this before the log.
pub const SCORE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    /// Sparse `(word_id, count)` pairs.
    pub words: Vec<(usize, u32)>,
    pub class: usize,
}

impl Document {
    pub fn len(&self) -> u64 {
        self.words.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub vocab_size: usize,
    pub documents: Vec<Document>,
    /// Topic of each class.
    pub hierarchy: Vec<usize>,
}

impl Corpus {
    /// Checks labels, word ids and the hierarchy.
    pub fn new(vocab_size: usize, documents: Vec<Document>, hierarchy: Vec<usize>) -> Result<Self> {
        if vocab_size == 0 || hierarchy.is_empty() {
            return Err(Error::InvalidConfig("empty vocabulary or hierarchy".into()));
        }
        for d in &documents {
            if d.class >= hierarchy.len() {
                return Err(Error::Parse(format!("document {} has class {} outside the hierarchy", d.id, d.class)));
            }
            if let Some(&(w, _)) = d.words.iter().find(|&&(w, _)| w >= vocab_size) {
                return Err(Error::Parse(format!("document {} has word {w} outside the vocabulary", d.id)));
            }
        }
        Ok(Corpus {
            vocab_size,
            documents,
            hierarchy,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.hierarchy.len()
    }

    pub fn n_topics(&self) -> usize {
        self.hierarchy.iter().max().map_or(0, |&t| t + 1)
    }
}

/// Class prior and smoothed class-conditional word distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub vocab_size: usize,
    /// Document-frequency `P(y)`.
    pub class_prior: Vec<f64>,
    /// Add-one `P(x|y)`, laid out `(y, x)`.
    pub word_given_class: Vec<f64>,
}

impl ClassModel {
    pub fn n_classes(&self) -> usize {
        self.class_prior.len()
    }

    pub fn p_word(&self, x: usize, y: usize) -> f64 {
        self.word_given_class[y * self.vocab_size + x]
    }
}

/// `P(y)` from document counts and `P(x|y) = (n(x,y) + 1) / (n(y) + |X|)`.
pub fn estimate_model(corpus: &Corpus) -> Result<ClassModel> {
    let nx = corpus.vocab_size;
    let ny = corpus.n_classes();
    let mut docs = vec![0usize; ny];
    let mut counts = vec![0u64; ny * nx];
    for d in &corpus.documents {
        docs[d.class] += 1;
        for &(w, c) in &d.words {
            counts[d.class * nx + w] += c as u64;
        }
    }
    if let Some(y) = docs.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(y));
    }
    let total_docs = corpus.documents.len() as f64;
    let class_prior = docs.iter().map(|&n| n as f64 / total_docs).collect();
    let mut word_given_class = vec![0.0; ny * nx];
    for y in 0..ny {
        let row = &counts[y * nx..(y + 1) * nx];
        let denom = row.iter().sum::<u64>() as f64 + nx as f64;
        for (p, &c) in word_given_class[y * nx..(y + 1) * nx].iter_mut().zip(row) {
            *p = (c as f64 + 1.0) / denom;
        }
    }
    Ok(ClassModel {
        vocab_size: nx,
        class_prior,
        word_given_class,
    })
}

/// `P(x, y1) = Σ_{y2 : h(y2) = y1} P(x|y2) P(y2)` as a joint with `|Z| = 1`.
pub fn topic_joint(model: &ClassModel, hierarchy: &[usize]) -> Result<JointXYZ> {
    let nx = model.vocab_size;
    let nt = hierarchy.iter().max().map_or(0, |&t| t + 1);
    let mut raw = vec![0.0; nx * nt];
    for (y, &t) in hierarchy.iter().enumerate() {
        for x in 0..nx {
            raw[x * nt + t] += model.p_word(x, y) * model.class_prior[y];
        }
    }
    JointXYZ::new((nx, nt, 1), raw)
}

/// `P(x, y2)` with `|Z| = 1`.
pub fn class_joint(model: &ClassModel) -> Result<JointXYZ> {
    let nx = model.vocab_size;
    let ny = model.n_classes();
    JointXYZ::from_fn((nx, ny, 1), |x, y, _| model.p_word(x, y) * model.class_prior[y])
}

/// `P(x, y2, u1) = P(u1|x) P(x|y2) P(y2)`.
pub fn side_info_joint(model: &ClassModel, enc1: &Encoder) -> Result<JointXYZ> {
    let nx = model.vocab_size;
    JointXYZ::from_fn((nx, model.n_classes(), enc1.nu()), |x, y, u1| {
        enc1.get(x, u1) * model.p_word(x, y) * model.class_prior[y]
    })
}

/// Stage 1: word clusters for the topic label, no side information.
pub fn stage1_train(model: &ClassModel, hierarchy: &[usize], config: &SolverConfig) -> Result<solver::SolverResult> {
    solver::solve(&topic_joint(model, hierarchy)?, config)
}

/// Stage 2: word clusters for the class label with the stage-1 cluster at
/// the decoder.
pub fn stage2_train(model: &ClassModel, enc1: &Encoder, config: &SolverConfig) -> Result<solver::SolverResult> {
    solver::solve(&side_info_joint(model, enc1)?, config)
}

/// Single-task baseline: word clusters for the class label alone.
pub fn single_task_train(model: &ClassModel, config: &SolverConfig) -> Result<solver::SolverResult> {
    solver::solve(&class_joint(model)?, config)
}

/// A trained classifier over cluster pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierModel {
    pub class_prior: Vec<f64>,
    /// `P(x|y2)`, laid out `(y2, x)`.
    pub word_given_class: Vec<f64>,
    pub enc1: Encoder,
    pub enc2: Encoder,
    pub cluster_map1: Vec<usize>,
    pub cluster_map2: Vec<usize>,
    /// `P(u1, u2 | y2)`, laid out `(y2, u1, u2)`.
    pub joint_u1u2_given_y2: Vec<f64>,
}

impl HierModel {
    /// Assembles the classifier from the class model and both encoders.
    pub fn build(model: &ClassModel, enc1: Encoder, enc2: Encoder) -> Self {
        let nx = model.vocab_size;
        let (n1, n2) = (enc1.nu(), enc2.nu());
        let ny = model.n_classes();
        let mut pair = vec![0.0; ny * n1 * n2];
        for y in 0..ny {
            let cell = &mut pair[y * n1 * n2..(y + 1) * n1 * n2];
            for x in 0..nx {
                let w = model.p_word(x, y);
                for (u1, &e1) in enc1.row(x).iter().enumerate() {
                    for (u2, &e2) in enc2.row(x).iter().enumerate() {
                        cell[u1 * n2 + u2] += w * e1 * e2;
                    }
                }
            }
            let s: f64 = cell.iter().sum();
            cell.iter_mut().for_each(|v| *v /= s);
        }
        HierModel {
            class_prior: model.class_prior.clone(),
            word_given_class: model.word_given_class.clone(),
            cluster_map1: (0..nx).map(|x| enc1.argmax(x)).collect(),
            cluster_map2: (0..nx).map(|x| enc2.argmax(x)).collect(),
            enc1,
            enc2,
            joint_u1u2_given_y2: pair,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_prior.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.cluster_map1.len()
    }

    /// `argmax_y log P(y) + Σ n(u1,u2) log P(u1,u2|y)` with ties to the
    /// lowest class; an empty document gets the prior argmax.
    pub fn classify(&self, words: &[(usize, u32)]) -> usize {
        let (n1, n2) = (self.enc1.nu(), self.enc2.nu());
        let mut pair_counts = vec![0u64; n1 * n2];
        for &(x, c) in words {
            if x < self.cluster_map1.len() {
                pair_counts[self.cluster_map1[x] * n2 + self.cluster_map2[x]] += c as u64;
            }
        }
        let mut best = (0, f64::NEG_INFINITY);
        for y in 0..self.n_classes() {
            let p = &self.joint_u1u2_given_y2[y * n1 * n2..(y + 1) * n1 * n2];
            let mut score = self.class_prior[y].max(SCORE_FLOOR).ln();
            for (&k, &q) in pair_counts.iter().zip(p) {
                if k > 0 {
                    score += k as f64 * q.max(SCORE_FLOOR).ln();
                }
            }
            if score > best.1 {
                best = (y, score);
            }
        }
        best.0
    }
}

/// Fraction of documents whose predicted class equals the label.
pub fn evaluate_accuracy(model: &HierModel, test: &Corpus) -> f64 {
    if test.documents.is_empty() {
        return 0.0;
    }
    let correct: usize = test
        .documents
        .par_iter()
        .filter(|d| model.classify(&d.words) == d.class)
        .count();
    correct as f64 / test.documents.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextcatParams {
    pub lambda: f64,
    pub card_u1: usize,
    pub card_u2: usize,
    pub restarts: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for TextcatParams {
    fn default() -> Self {
        TextcatParams {
            lambda: 0.99,
            card_u1: 20,
            card_u2: 5,
            restarts: 3,
            epsilon: 1e-6,
            max_iterations: 2000,
            seed: 0,
        }
    }
}

impl TextcatParams {
    fn solver(&self, card: usize, seed: u64) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            restarts: self.restarts,
            cardinality_u: Some(card),
            seed,
            init_scheme: InitScheme::Dirichlet,
            record_trace: false,
        }
    }
}

/// Trained pipelines with their solver diagnostics.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: HierModel,
    pub stages: Vec<solver::SolverResult>,
}

/// Both stages on `corpus`.
pub fn train_hierarchical(corpus: &Corpus, params: &TextcatParams) -> Result<Trained> {
    let cm = estimate_model(corpus)?;
    let s1 = stage1_train(&cm, &corpus.hierarchy, &params.solver(params.card_u1, params.seed))?;
    let s2 = stage2_train(&cm, &s1.encoder, &params.solver(params.card_u2, params.seed.wrapping_add(1)))?;
    Ok(Trained {
        model: HierModel::build(&cm, s1.encoder.clone(), s2.encoder.clone()),
        stages: vec![s1, s2],
    })
}

/// The baseline: a single clustering for the class label, classified with a
/// one-cluster first stage.
pub fn train_single_task(corpus: &Corpus, params: &TextcatParams) -> Result<Trained> {
    let cm = estimate_model(corpus)?;
    let s = single_task_train(&cm, &params.solver(params.card_u2, params.seed.wrapping_add(1)))?;
    Ok(Trained {
        model: HierModel::build(&cm, Encoder::trivial(cm.vocab_size, 1), s.encoder.clone()),
        stages: vec![s],
    })
}

/// Both forms of the objective when `Z` is a function of `Y`: the
/// conditional form `λ I(Y;U|Z) - (1-λ) I(X;U|Z)` and
/// `λ I(Y;U) - (2λ-1) I(Z;U) - (1-λ) I(X;U)`.
pub fn label_side_objective_identity(joint: &JointXYZ, enc: &Encoder, lambda: f64) -> Result<(f64, f64)> {
    let (_, ny, nz) = joint.dims();
    for y in 0..ny {
        let py = joint.p_y()[y];
        if py <= 0.0 {
            continue;
        }
        let support = (0..nz).filter(|&z| joint.p_yz(y, z) / py > 1e-12).count();
        if support > 1 {
            return Err(Error::NotDeterministicSideInfo);
        }
    }
    let lhs = solver::objective_f(joint, enc, lambda);
    let fw = FourWay::new(joint, enc);
    let rhs = lambda * fw.cmi(Vars::Y, Vars::U, Vars::NONE)
        - (2.0 * lambda - 1.0) * fw.cmi(Vars::Z, Vars::U, Vars::NONE)
        - (1.0 - lambda) * fw.cmi(Vars::X, Vars::U, Vars::NONE);
    Ok((lhs, rhs))
}

/// Shape of the synthetic hierarchical corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of classes under each topic.
    pub classes_per_topic: Vec<usize>,
    pub background_words: usize,
    pub topic_words: usize,
    pub class_words: usize,
    /// Mass of the background, topic and class blocks in a class's word
    /// distribution.
    pub mix: [f64; 3],
    /// Width, in words, of the Gaussian profile each class places on a ring
    /// over the pooled class words; 0 keeps class blocks disjoint.
    pub class_spread: f64,
    pub train_docs_per_class: usize,
    pub test_docs_per_class: usize,
    pub mean_doc_len: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes_per_topic: vec![5, 4, 4, 3, 1, 3],
            background_words: 120,
            topic_words: 60,
            class_words: 30,
            mix: [0.5, 0.3, 0.2],
            class_spread: 30.0,
            train_docs_per_class: 40,
            test_docs_per_class: 20,
            mean_doc_len: 80.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn vocab_size(&self) -> usize {
        let nt = self.classes_per_topic.len();
        let nc: usize = self.classes_per_topic.iter().sum();
        self.background_words + nt * self.topic_words + nc * self.class_words
    }
}

/// Word distribution of every class: background, topic core and class part
/// with flat-Dirichlet weights inside each block. With a positive
/// `class_spread` the class parts overlap with graded weights, so classes
/// under one topic share vocabulary as real categories do.
pub fn synthetic_word_distributions(cfg: &SynthConfig, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let nt = cfg.classes_per_topic.len();
    let nc: usize = cfg.classes_per_topic.iter().sum();
    let nx = cfg.vocab_size();
    let block = |len: usize, rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let w: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    };
    let background = block(cfg.background_words, rng);
    let topics: Vec<Vec<f64>> = (0..nt).map(|_| block(cfg.topic_words, rng)).collect();
    let mut hierarchy = Vec::new();
    let mut dists = Vec::new();
    for (t, &k) in cfg.classes_per_topic.iter().enumerate() {
        for _ in 0..k {
            let y = hierarchy.len();
            hierarchy.push(t);
            let own = if cfg.class_spread > 0.0 {
                let pool = nc * cfg.class_words;
                let centre = (y as f64 + 0.5) * cfg.class_words as f64;
                let w: Vec<f64> = (0..pool)
                    .map(|i| {
                        let d = (i as f64 + 0.5 - centre).abs();
                        let d = d.min(pool as f64 - d) / cfg.class_spread;
                        (-0.5 * d * d).exp() * rng.sample::<f64, _>(Exp1)
                    })
                    .collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect()
            } else {
                block(cfg.class_words, rng)
            };
            let mut d = vec![0.0; nx];
            for (i, &b) in background.iter().enumerate() {
                d[i] += cfg.mix[0] * b;
            }
            let t0 = cfg.background_words + t * cfg.topic_words;
            for (i, &w) in topics[t].iter().enumerate() {
                d[t0 + i] += cfg.mix[1] * w;
            }
            let c0 = cfg.background_words
                + nt * cfg.topic_words
                + if cfg.class_spread > 0.0 { 0 } else { y * cfg.class_words };
            for (i, &w) in own.iter().enumerate() {
                d[c0 + i] += cfg.mix[2] * w;
            }
            dists.push(d);
        }
    }
    (dists, hierarchy)
}

/// Seeded train and test corpora drawn from the same class distributions.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<(Corpus, Corpus)> {
    if cfg.classes_per_topic.is_empty() || cfg.classes_per_topic.contains(&0) || !(cfg.mean_doc_len > 0.0) {
        return Err(Error::InvalidConfig("every topic needs a class and documents need length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (dists, hierarchy) = synthetic_word_distributions(cfg, &mut rng);
    let samplers: Vec<WeightedIndex<f64>> = dists
        .iter()
        .map(|d| WeightedIndex::new(d).map_err(|e| Error::InvalidConfig(e.to_string())))
        .collect::<Result<_>>()?;
    let lengths = Poisson::new(cfg.mean_doc_len).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let nx = cfg.vocab_size();
    let draw = |per_class: usize, first_id: usize, rng: &mut ChaCha8Rng| -> Vec<Document> {
        let mut docs = Vec::new();
        for _ in 0..per_class {
            for (y, s) in samplers.iter().enumerate() {
                let len = (rng.sample::<f64, _>(lengths) as usize).max(1);
                let mut counts = std::collections::BTreeMap::new();
                for _ in 0..len {
                    *counts.entry(s.sample(rng)).or_insert(0u32) += 1;
                }
                docs.push(Document {
                    id: first_id + docs.len(),
                    words: counts.into_iter().collect(),
                    class: y,
                });
            }
        }
        docs
    };
    let train = draw(cfg.train_docs_per_class, 0, &mut rng);
    let test = draw(cfg.test_docs_per_class, train.len(), &mut rng);
    Ok((
        Corpus::new(nx, train, hierarchy.clone())?,
        Corpus::new(nx, test, hierarchy)?,
    ))
}

/// Accuracy of both pipelines on one synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub hierarchical: f64,
    pub single_task: f64,
}

pub fn compare_on_synthetic(synth: &SynthConfig, params: &TextcatParams) -> Result<Comparison> {
    let (train, test) = generate_corpus(synth)?;
    let h = train_hierarchical(&train, params)?;
    let s = train_single_task(&train, params)?;
    Ok(Comparison {
        seed: synth.seed,
        hierarchical: evaluate_accuracy(&h.model, &test),
        single_task: evaluate_accuracy(&s.model, &test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_encoder, random_joint};
    use approx::assert_abs_diff_eq;

    fn doc(id: usize, class: usize, words: &[(usize, u32)]) -> Document {
        Document {
            id,
            words: words.to_vec(),
            class,
        }
    }

    #[test]
    fn laplace_estimates() {
        let c = Corpus::new(2, vec![doc(0, 0, &[(1, 2)])], vec![0]).unwrap();
        let m = estimate_model(&c).unwrap();
        assert_eq!(m.class_prior, vec![1.0]);
        assert_abs_diff_eq!(m.p_word(0, 0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m.p_word(1, 0), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn unseen_words_stay_positive() {
        let c = Corpus::new(
            3,
            vec![doc(0, 0, &[(0, 4)]), doc(1, 1, &[(1, 1)]), doc(2, 1, &[(0, 1)])],
            vec![0, 0],
        )
        .unwrap();
        let m = estimate_model(&c).unwrap();
        assert_abs_diff_eq!(m.p_word(2, 0), 1.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.p_word(2, 1), 1.0 / 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.class_prior[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_class_is_rejected() {
        let c = Corpus::new(2, vec![doc(0, 0, &[(0, 1)])], vec![0, 0]).unwrap();
        assert!(matches!(estimate_model(&c), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn corpus_validation() {
        assert!(Corpus::new(2, vec![doc(0, 3, &[(0, 1)])], vec![0]).is_err());
        assert!(Corpus::new(2, vec![doc(0, 0, &[(5, 1)])], vec![0]).is_err());
    }

    #[test]
    fn single_topic_gives_constant_stage_one() {
        let c = Corpus::new(
            3,
            vec![doc(0, 0, &[(0, 3), (1, 1)]), doc(1, 1, &[(2, 2)])],
            vec![0, 0],
        )
        .unwrap();
        let m = estimate_model(&c).unwrap();
        let r = stage1_train(&m, &c.hierarchy, &SolverConfig::with_lambda(0.9)).unwrap();
        assert_abs_diff_eq!(r.rate, 0.0, epsilon = 1e-9);
        for x in 0..3 {
            for u in 0..r.encoder.nu() {
                assert_abs_diff_eq!(r.encoder.get(x, u), r.encoder.get(0, u), epsilon = 1e-5);
            }
        }
    }

    /// Two topics with disjoint vocabularies, one class each.
    fn separable() -> Corpus {
        let mut docs = Vec::new();
        for i in 0..10 {
            docs.push(doc(docs.len(), 0, &[(0, 3 + (i % 2)), (1, 2), (2, 1)]));
            docs.push(doc(docs.len(), 1, &[(3, 2), (4, 3 + (i % 3)), (5, 1)]));
        }
        Corpus::new(6, docs, vec![0, 1]).unwrap()
    }

    #[test]
    fn stage_one_separates_disjoint_vocabularies() {
        let c = separable();
        let m = estimate_model(&c).unwrap();
        let cfg = SolverConfig {
            lambda: 0.99,
            cardinality_u: Some(2),
            seed: 3,
            ..Default::default()
        };
        let r = stage1_train(&m, &c.hierarchy, &cfg).unwrap();
        let a: Vec<usize> = (0..6).map(|x| r.encoder.argmax(x)).collect();
        assert!(a[0] == a[1] && a[1] == a[2]);
        assert!(a[3] == a[4] && a[4] == a[5]);
        assert_ne!(a[0], a[3]);
    }

    #[test]
    fn constant_stage_one_reduces_to_single_task() {
        let c = separable();
        let m = estimate_model(&c).unwrap();
        let j = side_info_joint(&m, &Encoder::trivial(6, 1)).unwrap();
        let k = class_joint(&m).unwrap();
        for (a, b) in j.probs().iter().zip(k.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn separable_corpus_is_classified_perfectly() {
        let c = separable();
        let p = TextcatParams {
            card_u1: 2,
            card_u2: 2,
            ..Default::default()
        };
        let t = train_hierarchical(&c, &p).unwrap();
        assert_eq!(evaluate_accuracy(&t.model, &c), 1.0);
        assert_eq!(t.model.classify(&[(4, 10)]), 1);
    }

    #[test]
    fn classifier_edge_cases() {
        let c = Corpus::new(2, vec![doc(0, 0, &[(0, 1)]), doc(1, 1, &[(1, 1)]), doc(2, 1, &[(1, 2)])], vec![0, 0]).unwrap();
        let m = estimate_model(&c).unwrap();
        let h = HierModel::build(&m, Encoder::trivial(2, 1), Encoder::trivial(2, 1));
        // empty document: prior argmax
        assert_eq!(h.classify(&[]), 1);
        // identical likelihoods under a flat prior tie to class 0
        let c = Corpus::new(2, vec![doc(0, 0, &[(0, 1)]), doc(1, 1, &[(1, 1)])], vec![0, 0]).unwrap();
        let m = estimate_model(&c).unwrap();
        let h = HierModel::build(&m, Encoder::trivial(2, 1), Encoder::trivial(2, 1));
        assert_eq!(h.classify(&[(0, 5), (1, 5)]), 0);
        // single class
        let c = Corpus::new(2, vec![doc(0, 0, &[(0, 1)])], vec![0]).unwrap();
        let h = HierModel::build(&estimate_model(&c).unwrap(), Encoder::identity(2), Encoder::identity(2));
        assert_eq!(h.classify(&[(1, 3)]), 0);
    }

    #[test]
    fn pair_table_is_normalized() {
        let (train, _) = generate_corpus(&SynthConfig {
            train_docs_per_class: 3,
            test_docs_per_class: 1,
            ..Default::default()
        })
        .unwrap();
        let m = estimate_model(&train).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nx = train.vocab_size;
        let h = HierModel::build(&m, random_encoder(&mut rng, nx, 4), random_encoder(&mut rng, nx, 3));
        for y in 0..train.n_classes() {
            let s: f64 = h.joint_u1u2_given_y2[y * 12..(y + 1) * 12].iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        for y in 0..train.n_classes() {
            let s: f64 = m.word_given_class[y * nx..(y + 1) * nx].iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    fn function_of_y(rng: &mut ChaCha8Rng, nx: usize, ny: usize, nz: usize) -> JointXYZ {
        let g: Vec<usize> = (0..ny).map(|_| rng.gen_range(0..nz)).collect();
        let base = random_joint(rng, (nx, ny, 1));
        JointXYZ::from_fn((nx, ny, nz), |x, y, z| if g[y] == z { base.p(x, y, 0) } else { 0.0 }).unwrap()
    }

    #[test]
    fn objective_identity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let j = function_of_y(&mut rng, 4, 3, 2);
        let e = random_encoder(&mut rng, 4, 3);
        let (l, r) = label_side_objective_identity(&j, &e, 0.8).unwrap();
        assert_abs_diff_eq!(l, r, epsilon = 1e-10);
        // λ = 1
        let (l, r) = label_side_objective_identity(&j, &e, 1.0).unwrap();
        let fw = FourWay::new(&j, &e);
        let direct = fw.cmi(Vars::Y, Vars::U, Vars::NONE) - fw.cmi(Vars::Z, Vars::U, Vars::NONE);
        assert_abs_diff_eq!(l, direct, epsilon = 1e-10);
        assert_abs_diff_eq!(r, direct, epsilon = 1e-10);
        // constant g: unconditional objective
        let j = random_joint(&mut rng, (4, 3, 1));
        let (l, _) = label_side_objective_identity(&j, &e, 0.7).unwrap();
        let fw = FourWay::new(&j, &e);
        let ib = 0.7 * fw.cmi(Vars::Y, Vars::U, Vars::NONE) - 0.3 * fw.cmi(Vars::X, Vars::U, Vars::NONE);
        assert_abs_diff_eq!(l, ib, epsilon = 1e-10);
    }

    #[test]
    fn identity_rejects_random_side_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let j = random_joint(&mut rng, (3, 2, 2));
        let e = random_encoder(&mut rng, 3, 2);
        assert!(matches!(
            label_side_objective_identity(&j, &e, 0.8),
            Err(Error::NotDeterministicSideInfo)
        ));
    }

    #[test]
    fn synthetic_corpus_shape_and_determinism() {
        let cfg = SynthConfig {
            train_docs_per_class: 2,
            test_docs_per_class: 1,
            ..Default::default()
        };
        let (a, t) = generate_corpus(&cfg).unwrap();
        let (b, _) = generate_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_classes(), 20);
        assert_eq!(a.n_topics(), 6);
        assert_eq!(a.vocab_size, 120 + 6 * 60 + 20 * 30);
        assert_eq!(a.documents.len(), 40);
        assert_eq!(t.documents.len(), 20);
        assert!(t.documents.iter().all(|d| d.id >= 40));
    }
}
