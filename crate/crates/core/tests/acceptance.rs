//! Acceptance suite: every stated guarantee of the pipeline is checked here
//! end to end, with independent oracles where the guarantee is numeric.
//! Each test prints one PASS line with its runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semhier::classify::{self, train_flat, train_hierarchical, ConfigEcho, LeafScore, TrainConfig};
use semhier::conceptual;
use semhier::contextual::{contextual_similarity, pmi, PmiMode};
use semhier::corpus::{compute_context_stats, Corpus, ImageRecord};
use semhier::fusion::{fuse, SimilarityMatrix, SymMatrix, Weights};
use semhier::hierarchy::{build_hierarchy, BuildConfig, MergeRule};
use semhier::lexicon::{tokenize, Lexicon, Synset};
use semhier::pipeline::{compute_similarity, PipelineConfig};
use semhier::visual::{self, KernelParams, SigmaPolicy};

fn pass(name: &str, started: Instant) {
    println!("ACCEPTANCE {name}: PASS ({:.2}s)", started.elapsed().as_secs_f64());
}

fn random_corpus(rng: &mut ChaCha8Rng, max_images: usize, max_concepts: usize) -> Corpus {
    let n_concepts = rng.gen_range(2..=max_concepts);
    let n_images = rng.gen_range(1..=max_images);
    let names: Vec<String> = (0..n_concepts).map(|i| format!("c{i}")).collect();
    let images: Vec<ImageRecord> = (0..n_images)
        .map(|i| {
            let k = rng.gen_range(1..=3.min(n_concepts));
            let mut labels = BTreeSet::new();
            while labels.len() < k {
                labels.insert(names[rng.gen_range(0..n_concepts)].clone());
            }
            ImageRecord {
                id: format!("img{i:03}"),
                labels,
                features: vec![0.0],
            }
        })
        .collect();
    Corpus::from_parts(images, 1).unwrap()
}

/// Brute-force probability tables straight from the image list; an
/// independent path to the same quantities the contextual module derives
/// from its count structures.
struct ProbabilityOracle {
    p: BTreeMap<String, f64>,
    p_joint: BTreeMap<(String, String), f64>,
}

impl ProbabilityOracle {
    fn from_corpus(corpus: &Corpus) -> Self {
        let total = corpus.len() as f64;
        let mut p = BTreeMap::new();
        let mut p_joint = BTreeMap::new();
        for a in corpus.vocabulary() {
            let n_a = corpus
                .images()
                .iter()
                .filter(|img| img.labels.contains(a))
                .count();
            p.insert(a.clone(), n_a as f64 / total);
            for b in corpus.vocabulary() {
                let n_ab = corpus
                    .images()
                    .iter()
                    .filter(|img| img.labels.contains(a) && img.labels.contains(b))
                    .count();
                p_joint.insert((a.clone(), b.clone()), n_ab as f64 / total);
            }
        }
        ProbabilityOracle { p, p_joint }
    }

    fn rho(&self, a: &str, b: &str, mode: PmiMode) -> f64 {
        let joint = self.p_joint[&(a.to_string(), b.to_string())];
        if joint == 0.0 {
            return 0.0;
        }
        let ratio = (joint / (self.p[a] * self.p[b])).ln();
        let value = match mode {
            PmiMode::Standard => ratio,
            PmiMode::Weighted => joint * ratio,
        };
        value.max(0.0)
    }

    fn gamma(&self, a: &str, b: &str, mode: PmiMode) -> f64 {
        let rho = self.rho(a, b, mode);
        if rho == 0.0 {
            return 0.0;
        }
        let divisor = -self.p[a].max(self.p[b]).ln();
        if divisor <= 0.0 {
            return 0.0;
        }
        rho / divisor
    }
}

#[test]
fn criterion_pmi_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE01);
    for trial in 0..1000 {
        let corpus = random_corpus(&mut rng, 100, 10);
        let stats = compute_context_stats(&corpus);
        let oracle = ProbabilityOracle::from_corpus(&corpus);
        for a in corpus.vocabulary() {
            for b in corpus.vocabulary() {
                for mode in [PmiMode::Standard, PmiMode::Weighted] {
                    let rho = pmi(&stats, a, b, mode).unwrap();
                    let gamma = contextual_similarity(&stats, a, b, mode).unwrap();
                    assert!(
                        (rho - oracle.rho(a, b, mode)).abs() <= 1e-12,
                        "trial {trial}: rho({a},{b}) {rho} vs oracle {}",
                        oracle.rho(a, b, mode)
                    );
                    assert!(
                        (gamma - oracle.gamma(a, b, mode)).abs() <= 1e-12,
                        "trial {trial}: gamma({a},{b}) {gamma} vs oracle {}",
                        oracle.gamma(a, b, mode)
                    );
                    assert!(
                        (0.0..=1.0 + 1e-12).contains(&gamma),
                        "gamma out of range: {gamma}"
                    );
                }
            }
        }
    }
    assert!(started.elapsed().as_secs_f64() < 10.0, "budget exceeded");
    pass("pmi-oracle-equivalence", started);
}

#[test]
fn criterion_contextual_hand_cases() {
    let started = Instant::now();
    let build = |labelings: &[&[&str]]| {
        let images = labelings
            .iter()
            .enumerate()
            .map(|(i, labels)| ImageRecord {
                id: format!("img{i}"),
                labels: labels.iter().map(|s| s.to_string()).collect(),
                features: vec![0.0],
            })
            .collect();
        compute_context_stats(&Corpus::from_parts(images, 1).unwrap())
    };
    // perfectly co-occurring pair saturates at 1
    let stats = build(&[&["A", "B"], &["A", "B"], &["C"]]);
    let gamma = contextual_similarity(&stats, "A", "B", PmiMode::Standard).unwrap();
    assert!((gamma - 1.0).abs() <= 1e-12, "gamma {gamma}");
    // negatively associated pair clamps to 0
    let stats = build(&[&["A", "B"], &["A", "B"], &["A"], &["B"]]);
    let gamma = contextual_similarity(&stats, "A", "B", PmiMode::Standard).unwrap();
    assert_eq!(gamma, 0.0);
    pass("contextual-hand-cases", started);
}

fn decision_from_solution(
    points: &[Vec<f64>],
    labels: &[f64],
    solution: &visual::SmoSolution,
    kernel: &KernelParams,
    x: &[f64],
) -> f64 {
    let mut sum = solution.bias;
    for ((point, &label), &alpha) in points.iter().zip(labels).zip(&solution.alphas) {
        if alpha > 0.0 {
            sum += alpha * label * visual::rbf_kernel(point, x, kernel).unwrap();
        }
    }
    sum
}

#[test]
fn criterion_svm_separable_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE03);
    let c = 10.0;
    let tol = 1e-3;
    for trial in 0..20 {
        // random separating line with a guaranteed margin band
        let angle = rng.gen::<f64>() * std::f64::consts::TAU;
        let (nx, ny) = (angle.cos(), angle.sin());
        let offset = rng.gen::<f64>() * 2.0 - 1.0;
        let mut points = Vec::new();
        let mut labels = Vec::new();
        while points.len() < 20 || labels.iter().filter(|&&l| l > 0.0).count() < 3 {
            let x = rng.gen::<f64>() * 8.0 - 4.0;
            let y = rng.gen::<f64>() * 8.0 - 4.0;
            let side = nx * x + ny * y + offset;
            if side.abs() < 0.4 {
                continue;
            }
            points.push(vec![x, y]);
            labels.push(side.signum());
            if points.len() >= 40 {
                break;
            }
        }
        let kernel = SigmaPolicy::Median.resolve(&points).unwrap();
        let solution = visual::smo::solve(&points, &labels, &kernel, c, tol, 1_000_000).unwrap();

        for (point, &label) in points.iter().zip(&labels) {
            let margin = label * decision_from_solution(&points, &labels, &solution, &kernel, point);
            assert!(margin > 0.0, "trial {trial}: misclassified training point");
        }
        let violation = visual::max_kkt_violation(&points, &labels, &solution, &kernel, c);
        assert!(violation < 1e-3, "trial {trial}: KKT violation {violation}");
        let balance: f64 = solution
            .alphas
            .iter()
            .zip(&labels)
            .map(|(&a, &y)| a * y)
            .sum();
        assert!(balance.abs() < 1e-6, "trial {trial}: balance {balance}");
    }
    assert!(started.elapsed().as_secs_f64() < 30.0, "budget exceeded");
    pass("svm-separable-suite", started);
}

// --- conceptual oracle ------------------------------------------------

/// Independent gloss-vector pipeline over raw strings: its own tokenizer,
/// its own slot layout, its own cosine.
mod gloss_oracle {
    use std::collections::BTreeMap;

    pub struct RawSynset {
        pub gloss: &'static str,
        pub hypernyms: Vec<&'static str>,
        pub hyponyms: Vec<&'static str>,
        pub meronyms: Vec<&'static str>,
        pub holonyms: Vec<&'static str>,
    }

    fn words(text: &str) -> Vec<String> {
        text.to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect::<String>()
            .split_whitespace()
            .filter(|t| !semhier::lexicon::is_stop_word(t))
            .map(str::to_string)
            .collect()
    }

    fn counts(texts: &[&'static str]) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        for text in texts {
            for token in words(text) {
                *map.entry(token).or_insert(0.0) += 1.0;
            }
        }
        map
    }

    fn cosine(u: &BTreeMap<String, f64>, v: &BTreeMap<String, f64>) -> f64 {
        let dot: f64 = u
            .iter()
            .filter_map(|(w, a)| v.get(w).map(|b| a * b))
            .sum();
        let nu: f64 = u.values().map(|a| a * a).sum::<f64>().sqrt();
        let nv: f64 = v.values().map(|a| a * a).sum::<f64>().sqrt();
        if nu == 0.0 || nv == 0.0 {
            0.0
        } else {
            dot / (nu * nv)
        }
    }

    pub fn synset_score(all: &BTreeMap<&'static str, RawSynset>, a: &str, b: &str) -> f64 {
        let slots = |id: &str| -> Vec<BTreeMap<String, f64>> {
            let synset = &all[id];
            let gather = |ids: &[&'static str]| {
                counts(&ids.iter().map(|i| all[i].gloss).collect::<Vec<_>>())
            };
            vec![
                counts(&[synset.gloss]),
                gather(&synset.hypernyms),
                gather(&synset.hyponyms),
                gather(&synset.meronyms),
                gather(&synset.holonyms),
            ]
        };
        let sa = slots(a);
        let sb = slots(b);
        sa.iter().zip(&sb).map(|(u, v)| cosine(u, v)).sum::<f64>() / 5.0
    }
}

fn conceptual_fixture() -> (
    Lexicon,
    BTreeMap<&'static str, gloss_oracle::RawSynset>,
    BTreeMap<&'static str, Vec<&'static str>>,
) {
    use gloss_oracle::RawSynset;
    let raw: BTreeMap<&'static str, RawSynset> = BTreeMap::from([
        (
            "root",
            RawSynset {
                gloss: "anything that exists",
                hypernyms: vec![],
                hyponyms: vec!["feline", "device"],
                meronyms: vec![],
                holonyms: vec![],
            },
        ),
        (
            "feline",
            RawSynset {
                gloss: "a carnivorous mammal with retractable claws",
                hypernyms: vec!["root"],
                hyponyms: vec!["cat.animal"],
                meronyms: vec!["claw"],
                holonyms: vec![],
            },
        ),
        (
            "device",
            RawSynset {
                gloss: "an instrument invented for a particular purpose",
                hypernyms: vec!["root"],
                hyponyms: vec!["cat.tool", "mouse.device", "keyboard.device"],
                meronyms: vec![],
                holonyms: vec![],
            },
        ),
        (
            "claw",
            RawSynset {
                gloss: "a sharp curved nail on an animal toe",
                hypernyms: vec!["root"],
                hyponyms: vec![],
                meronyms: vec![],
                holonyms: vec!["feline"],
            },
        ),
        (
            "cat.animal",
            RawSynset {
                gloss: "a small domesticated feline mammal that purrs",
                hypernyms: vec!["feline"],
                hyponyms: vec![],
                meronyms: vec!["claw"],
                holonyms: vec![],
            },
        ),
        (
            "cat.tool",
            RawSynset {
                gloss: "a heavy tracked machine used in construction",
                hypernyms: vec!["device"],
                hyponyms: vec![],
                meronyms: vec![],
                holonyms: vec![],
            },
        ),
        (
            "mouse.animal",
            RawSynset {
                gloss: "a small gray rodent mammal with a long tail",
                hypernyms: vec!["root"],
                hyponyms: vec![],
                meronyms: vec![],
                holonyms: vec![],
            },
        ),
        (
            "mouse.device",
            RawSynset {
                gloss: "a hand operated pointing instrument for a computer",
                hypernyms: vec!["device"],
                hyponyms: vec![],
                meronyms: vec![],
                holonyms: vec![],
            },
        ),
        (
            "keyboard.device",
            RawSynset {
                gloss: "a computer instrument with typing keys",
                hypernyms: vec!["device"],
                hyponyms: vec![],
                meronyms: vec![],
                holonyms: vec![],
            },
        ),
        (
            "piano.instrument",
            RawSynset {
                gloss: "a large musical instrument with a keyboard of keys",
                hypernyms: vec!["root"],
                hyponyms: vec![],
                meronyms: vec![],
                holonyms: vec![],
            },
        ),
    ]);

    let senses: BTreeMap<&'static str, Vec<&'static str>> = BTreeMap::from([
        ("cat", vec!["cat.animal", "cat.tool"]),
        ("mouse", vec!["mouse.animal", "mouse.device"]),
        ("keyboard", vec!["keyboard.device"]),
        ("piano", vec!["piano.instrument"]),
        ("claw", vec!["claw"]),
        ("feline", vec!["feline"]),
    ]);

    let synsets: BTreeMap<String, Synset> = raw
        .iter()
        .map(|(id, entry)| {
            let mut related = BTreeMap::new();
            let as_strings =
                |ids: &Vec<&'static str>| ids.iter().map(|s| s.to_string()).collect::<Vec<_>>();
            if !entry.hyponyms.is_empty() {
                related.insert("hyponym".to_string(), as_strings(&entry.hyponyms));
            }
            if !entry.meronyms.is_empty() {
                related.insert("meronym".to_string(), as_strings(&entry.meronyms));
            }
            if !entry.holonyms.is_empty() {
                related.insert("holonym".to_string(), as_strings(&entry.holonyms));
            }
            (
                id.to_string(),
                Synset {
                    id: id.to_string(),
                    lemmas: vec![id.split('.').next().unwrap().to_string()],
                    gloss: tokenize(entry.gloss),
                    hypernyms: as_strings(&entry.hypernyms),
                    related,
                },
            )
        })
        .collect();
    let sense_map = senses
        .iter()
        .map(|(c, ids)| {
            (
                c.to_string(),
                ids.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            )
        })
        .collect();
    let lexicon = Lexicon::from_synsets(synsets, "root".into(), sense_map).unwrap();
    (lexicon, raw, senses)
}

#[test]
fn criterion_conceptual_oracle() {
    let started = Instant::now();
    let (lexicon, raw, senses) = conceptual_fixture();
    let concepts: Vec<&str> = senses.keys().copied().collect();
    assert_eq!(concepts.len(), 6);
    for a in &concepts {
        for b in &concepts {
            let (score, pair) = conceptual::conceptual_similarity(&lexicon, a, b).unwrap();
            // exhaustive max over the sense grid through the oracle path
            let mut expected = f64::NEG_INFINITY;
            for sa in &senses[a] {
                for sb in &senses[b] {
                    expected = expected.max(gloss_oracle::synset_score(&raw, sa, sb));
                }
            }
            assert!(
                (score - expected).abs() <= 1e-12,
                "pi({a},{b}) = {score}, oracle {expected}"
            );
            // symmetry with the swapped chosen pair
            let (back, back_pair) = conceptual::conceptual_similarity(&lexicon, b, a).unwrap();
            assert_eq!(score, back);
            assert_eq!(pair.sense_a, back_pair.sense_b);
            assert_eq!(pair.sense_b, back_pair.sense_a);
        }
    }
    pass("conceptual-oracle", started);
}

#[test]
fn criterion_lcs_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE05);
    // 200-synset random tree (every synset one hypernym, no diamonds)
    let ids: Vec<String> = (0..200).map(|i| format!("s{i:03}")).collect();
    let mut synsets = BTreeMap::new();
    let mut parent_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let hypernyms = if i == 0 {
            vec![]
        } else {
            let parent = rng.gen_range(0..i);
            parent_of.insert(i, parent);
            vec![ids[parent].clone()]
        };
        synsets.insert(
            id.clone(),
            Synset {
                id: id.clone(),
                lemmas: vec![id.clone()],
                gloss: tokenize("node"),
                hypernyms,
                related: BTreeMap::new(),
            },
        );
    }
    let lexicon = Lexicon::from_synsets(synsets, ids[0].clone(), BTreeMap::new()).unwrap();

    // oracle structures built straight from parent pointers
    let ancestors = |mut i: usize| -> Vec<usize> {
        let mut chain = vec![i];
        while let Some(&p) = parent_of.get(&i) {
            chain.push(p);
            i = p;
        }
        chain
    };
    for (i, id) in ids.iter().enumerate() {
        let depth_oracle = ancestors(i).len() - 1;
        assert_eq!(lexicon.path_len_to_root(id).unwrap(), depth_oracle);
    }
    for i in 0..200 {
        let chain_a: Vec<usize> = ancestors(i);
        let set_a: BTreeSet<usize> = chain_a.iter().copied().collect();
        for j in 0..200 {
            let common = ancestors(j)
                .into_iter()
                .find(|x| set_a.contains(x))
                .expect("root is shared");
            assert_eq!(
                lexicon.lcs(&ids[i], &ids[j]).unwrap(),
                ids[common],
                "lcs({}, {})",
                ids[i],
                ids[j]
            );
        }
    }
    pass("lcs-oracle", started);
}

fn random_hierarchy_input(
    rng: &mut ChaCha8Rng,
) -> (Corpus, Lexicon, SimilarityMatrix, BTreeMap<String, Vec<f64>>) {
    let n_concepts = 8;
    let concepts: Vec<String> = (0..n_concepts).map(|i| format!("c{i}")).collect();

    // random tree of internal synsets, then one leaf synset per concept
    let n_internal = rng.gen_range(3..8);
    let mut synsets = BTreeMap::new();
    let internal_ids: Vec<String> = (0..n_internal).map(|i| format!("t{i}")).collect();
    for (i, id) in internal_ids.iter().enumerate() {
        let hypernyms = if i == 0 {
            vec![]
        } else {
            vec![internal_ids[rng.gen_range(0..i)].clone()]
        };
        synsets.insert(
            id.clone(),
            Synset {
                id: id.clone(),
                lemmas: vec![id.clone()],
                gloss: tokenize("branch point"),
                hypernyms,
                related: BTreeMap::new(),
            },
        );
    }
    let mut senses = BTreeMap::new();
    for concept in &concepts {
        let leaf_id = format!("{concept}.s");
        let parent = internal_ids[rng.gen_range(0..n_internal)].clone();
        synsets.insert(
            leaf_id.clone(),
            Synset {
                id: leaf_id.clone(),
                lemmas: vec![concept.clone()],
                gloss: tokenize("leaf meaning"),
                hypernyms: vec![parent],
                related: BTreeMap::new(),
            },
        );
        senses.insert(concept.clone(), vec![leaf_id]);
    }
    let lexicon = Lexicon::from_synsets(synsets, internal_ids[0].clone(), senses).unwrap();

    let n_images = rng.gen_range(20..50);
    let images: Vec<ImageRecord> = (0..n_images)
        .map(|i| {
            let k = rng.gen_range(1..=3);
            let mut labels = BTreeSet::new();
            while labels.len() < k {
                labels.insert(concepts[rng.gen_range(0..n_concepts)].clone());
            }
            ImageRecord {
                id: format!("img{i:03}"),
                labels,
                features: (0..4).map(|_| rng.gen::<f64>()).collect(),
            }
        })
        .collect();
    // images may not cover every concept; patch with one image per concept
    let mut images = images;
    for (i, concept) in concepts.iter().enumerate() {
        images.push(ImageRecord {
            id: format!("pad{i}"),
            labels: std::iter::once(concept.clone()).collect(),
            features: (0..4).map(|_| rng.gen::<f64>()).collect(),
        });
    }
    let corpus = Corpus::from_parts(images, 4).unwrap();

    let mut raw = [
        SymMatrix::zeros(n_concepts),
        SymMatrix::zeros(n_concepts),
        SymMatrix::zeros(n_concepts),
    ];
    for channel in &mut raw {
        for i in 0..n_concepts {
            channel.set(i, i, 1.0);
            for j in (i + 1)..n_concepts {
                channel.set(i, j, rng.gen::<f64>());
            }
        }
    }
    let [visual, conceptual_m, contextual_m] = raw;
    let matrix = SimilarityMatrix::from_raw_channels(
        concepts.clone(),
        visual,
        conceptual_m,
        contextual_m,
        &Weights::default(),
    )
    .unwrap();

    let centroids = concepts
        .iter()
        .map(|c| {
            (
                c.clone(),
                (0..4).map(|_| rng.gen::<f64>() * 3.0).collect::<Vec<f64>>(),
            )
        })
        .collect();
    (corpus, lexicon, matrix, centroids)
}

#[test]
fn criterion_hierarchy_structural_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE06);
    for trial in 0..50 {
        let (corpus, lexicon, matrix, centroids) = random_hierarchy_input(&mut rng);
        let outcome = build_hierarchy(
            &corpus,
            &lexicon,
            &matrix,
            &centroids,
            &BuildConfig::default(),
        )
        .unwrap_or_else(|e| panic!("trial {trial}: build failed: {e}"));
        let h = &outcome.hierarchy;

        // tree shape
        assert_eq!(h.edge_count(), h.len() - 1, "trial {trial}: not a tree");
        h.validate().unwrap();

        // leaf set is exactly the vocabulary
        assert_eq!(h.leaf_names(), corpus.vocabulary(), "trial {trial}");

        // deterministic rebuild, byte for byte
        let again = build_hierarchy(
            &corpus,
            &lexicon,
            &matrix,
            &centroids,
            &BuildConfig::default(),
        )
        .unwrap();
        assert_eq!(
            h.to_json(&outcome.merges),
            again.hierarchy.to_json(&again.merges),
            "trial {trial}: non-deterministic build"
        );

        // every internal synset subsumes all descendant synsets
        for node in h.nodes() {
            if node.children.is_empty() {
                continue;
            }
            let mut stack = node.children.clone();
            while let Some(child) = stack.pop() {
                let child_node = h.node(child);
                assert!(
                    lexicon.is_ancestor(&node.synset, &child_node.synset).unwrap(),
                    "trial {trial}: {} does not subsume {}",
                    node.synset,
                    child_node.synset
                );
                stack.extend(child_node.children.iter().copied());
            }
        }
    }
    pass("hierarchy-structural-suite", started);
}

#[test]
fn criterion_golden_rule_trace() {
    let started = Instant::now();
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let lexicon = semhier::lexicon::load_lexicon(&fixtures.join("animals_vehicles.lexicon.json"))
        .unwrap();
    let corpus =
        semhier::corpus::load_corpus(&fixtures.join("animals_vehicles.corpus.json")).unwrap();

    // engineered fused ordering:
    //   car-bus 1.0 > dog-cat 0.9 > car-truck 0.8 > dog-wolf 0.75
    //   > bus-truck 0.7 > cat-wolf 0.65 > cross-cluster 0.0
    // hand trace: scanning hubs in name order, car collects {bus, truck}
    // (both closest to car, both in hits3(car)) under vehicle; dog collects
    // {cat, wolf} under carnivore; next iteration the two inferred nodes are
    // mutually closest and join under entity.
    let concepts: Vec<String> = corpus.vocabulary().to_vec();
    assert_eq!(concepts, ["bus", "car", "cat", "dog", "truck", "wolf"]);
    let mut raw = SymMatrix::zeros(6);
    let idx = |name: &str| concepts.iter().position(|c| c == name).unwrap();
    for i in 0..6 {
        raw.set(i, i, 1.0);
    }
    for (a, b, value) in [
        ("car", "bus", 1.0),
        ("car", "truck", 0.8),
        ("bus", "truck", 0.7),
        ("dog", "cat", 0.9),
        ("dog", "wolf", 0.75),
        ("cat", "wolf", 0.65),
    ] {
        raw.set(idx(a), idx(b), value);
    }
    let matrix = SimilarityMatrix::from_raw_channels(
        concepts,
        raw.clone(),
        raw.clone(),
        raw,
        &Weights::default(),
    )
    .unwrap();

    let centroids: BTreeMap<String, Vec<f64>> = [
        ("cat", vec![2.0, 0.0]),
        ("dog", vec![2.2, 0.1]),
        ("wolf", vec![2.1, 0.4]),
        ("car", vec![0.0, 2.0]),
        ("bus", vec![0.1, 2.2]),
        ("truck", vec![0.4, 2.1]),
    ]
    .into_iter()
    .map(|(c, v)| (c.to_string(), v))
    .collect();

    let outcome = build_hierarchy(
        &corpus,
        &lexicon,
        &matrix,
        &centroids,
        &BuildConfig::default(),
    )
    .unwrap();

    type TraceRow<'a> = (usize, MergeRule, &'a str, Vec<&'a str>, Vec<&'a str>);
    let trace: Vec<TraceRow> = outcome
        .merges
        .iter()
        .map(|m| {
            let top = m.created.last().unwrap();
            (
                m.iteration,
                m.rule,
                top.synset.as_str(),
                m.created.iter().map(|c| c.name.as_str()).collect(),
                top.children.iter().map(String::as_str).collect(),
            )
        })
        .collect();
    let expected: Vec<TraceRow> = vec![
        (
            1,
            MergeRule::Hub,
            "vehicle.n.01",
            vec!["vehicle"],
            vec!["bus", "car", "truck"],
        ),
        (
            1,
            MergeRule::Hub,
            "carnivore.n.01",
            vec!["carnivore"],
            vec!["cat", "dog", "wolf"],
        ),
        (
            2,
            MergeRule::MutualPair,
            "entity.n.01",
            vec!["entity"],
            vec!["carnivore", "vehicle"],
        ),
    ];
    assert_eq!(trace, expected, "merge trace diverged from the hand trace");
    assert_eq!(
        outcome.hierarchy.node(outcome.hierarchy.root()).name,
        "entity"
    );
    pass("golden-rule-trace", started);
}

// --- directional end-to-end reproduction -------------------------------

/// Synthetic corpus: 12 leaf concepts in 3 feature/co-annotation clusters,
/// 600 images. Concept identity is a conjunction of a fuzzy cluster factor
/// (dims 0..6, two per cluster) and a clean position factor shared across
/// clusters (dims 6..10): separating siblings is easy and separating
/// clusters takes plenty of data, so decomposed classifiers have the edge
/// over data-starved one-vs-all models. Concept popularity is skewed inside
/// each cluster, and a frequent anchor concept co-occurs with its siblings
/// and sits visually central, which holds each cluster together.
fn synthetic_clustered(seed: u64) -> (Corpus, Lexicon) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = ["alpha", "beta", "gamma"];
    let concepts: Vec<String> = clusters
        .iter()
        .flat_map(|c| (0..4).map(move |i| format!("{c}{i}")))
        .collect();
    let dim = 12;

    let normal = move |rng: &mut ChaCha8Rng| {
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };

    let mut images = Vec::new();
    for i in 0..600 {
        let cluster = i % 3;
        let roll: f64 = rng.gen();
        let first = if roll < 0.45 {
            0
        } else if roll < 0.80 {
            1
        } else if roll < 0.91 {
            2
        } else {
            3
        };
        let mut labels: BTreeSet<String> = BTreeSet::new();
        labels.insert(concepts[cluster * 4 + first].clone());
        if rng.gen_bool(0.5) {
            let second = if first != 0 && rng.gen_bool(0.9) {
                0
            } else {
                let mut pick = rng.gen_range(0..4);
                if pick == first {
                    pick = (pick + 1) % 4;
                }
                pick
            };
            labels.insert(concepts[cluster * 4 + second].clone());
        }
        let mut features = vec![0.0f64; dim];
        features[cluster * 2] += 1.4;
        features[cluster * 2 + 1] += 1.4;
        for label in &labels {
            let position: usize = label[label.len() - 1..].parse().unwrap();
            features[6 + position] += 2.6;
            if position == 0 {
                for d in 1..4 {
                    features[6 + d] += 0.3;
                }
            }
        }
        for value in &mut features {
            *value = (*value + normal(&mut rng) * 0.9).max(0.0);
        }
        images.push(ImageRecord {
            id: format!("img{i:03}"),
            labels,
            features,
        });
    }
    let corpus = Corpus::from_parts(images, dim).unwrap();

    let mut synsets = BTreeMap::new();
    synsets.insert(
        "thing".to_string(),
        Synset {
            id: "thing".into(),
            lemmas: vec!["thing".into()],
            gloss: tokenize("anything at all"),
            hypernyms: vec![],
            related: BTreeMap::new(),
        },
    );
    let mut senses = BTreeMap::new();
    for cluster in clusters {
        synsets.insert(
            cluster.to_string(),
            Synset {
                id: cluster.into(),
                lemmas: vec![cluster.into()],
                gloss: tokenize(&format!("the family of {cluster} items")),
                hypernyms: vec!["thing".into()],
                related: BTreeMap::new(),
            },
        );
        for i in 0..4 {
            let id = format!("{cluster}{i}.s");
            synsets.insert(
                id.clone(),
                Synset {
                    id: id.clone(),
                    lemmas: vec![format!("{cluster}{i}")],
                    gloss: tokenize(&format!("{cluster} item number {i} of the {cluster} family")),
                    hypernyms: vec![cluster.into()],
                    related: BTreeMap::new(),
                },
            );
            senses.insert(format!("{cluster}{i}"), vec![id]);
        }
    }
    let lexicon = Lexicon::from_synsets(synsets, "thing".into(), senses).unwrap();
    (corpus, lexicon)
}

#[test]
fn criterion_directional_end_to_end() {
    let started = Instant::now();
    let mut deltas = Vec::new();
    for seed in 1..=5u64 {
        let (corpus, lexicon) = synthetic_clustered(seed);
        let (train, test) = classify::split_corpus(&corpus, 0.5, seed).unwrap();

        let pipeline_config = PipelineConfig {
            seed,
            ..PipelineConfig::default()
        };
        let similarity = compute_similarity(&train, &lexicon, &pipeline_config).unwrap();
        let outcome = build_hierarchy(
            &train,
            &lexicon,
            &similarity.matrix,
            &similarity.centroids,
            &BuildConfig::default(),
        )
        .unwrap();

        let train_config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let flat = train_flat(&train, &train_config).unwrap();
        let hierarchical = train_hierarchical(&train, &outcome.hierarchy, &train_config).unwrap();
        let echo = ConfigEcho {
            weights: Weights::default(),
            seed,
            folds: train_config.folds,
        };
        let (flat_report, hier_report) =
            classify::evaluate(&flat, &hierarchical, &test, LeafScore::Min, echo).unwrap();
        let delta = hier_report.mean_ap - flat_report.mean_ap;
        println!(
            "  seed {seed}: flat {:.4}, hierarchical {:.4}, delta {delta:+.4}",
            flat_report.mean_ap, hier_report.mean_ap
        );
        deltas.push(delta);
    }
    let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    println!("  mean delta over {} seeds: {mean_delta:+.4}", deltas.len());
    assert!(
        mean_delta > 0.0,
        "hierarchical classification did not beat flat on average: {mean_delta}"
    );
    assert!(started.elapsed().as_secs_f64() < 300.0, "budget exceeded");
    pass("directional-end-to-end", started);
}

#[test]
fn criterion_fusion_projection() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE09);
    // pure visual weights reproduce the normalized visual channel bitwise
    for _ in 0..20 {
        let n = rng.gen_range(2..7);
        let mut channels = Vec::new();
        for _ in 0..3 {
            let mut m = SymMatrix::zeros(n);
            for i in 0..n {
                m.set(i, i, 1.0);
                for j in (i + 1)..n {
                    m.set(i, j, rng.gen::<f64>() * 5.0);
                }
            }
            channels.push(m);
        }
        let matrix = SimilarityMatrix::from_raw_channels(
            (0..n).map(|i| format!("c{i}")).collect(),
            channels[0].clone(),
            channels[1].clone(),
            channels[2].clone(),
            &Weights::new(1.0, 0.0, 0.0).unwrap(),
        )
        .unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    matrix.fused.get(i, j).to_bits(),
                    matrix.norm_visual.get(i, j).to_bits(),
                    "fused differs from normalized visual at ({i},{j})"
                );
            }
        }
    }

    // hand-computed fusion of (0.5, 1.0, 0.0) under default weights
    let mut vis = SymMatrix::zeros(2);
    let mut con = SymMatrix::zeros(2);
    let mut ctx = SymMatrix::zeros(2);
    for m in [&mut vis, &mut con, &mut ctx] {
        m.set(0, 0, 1.0);
        m.set(1, 1, 1.0);
    }
    vis.set(0, 1, 0.5);
    con.set(0, 1, 1.0);
    ctx.set(0, 1, 0.0);
    let fused = fuse(&vis, &con, &ctx, &Weights::default()).unwrap();
    assert!(
        (fused.get(0, 1) - 0.5).abs() <= 1e-12,
        "hand fusion got {}",
        fused.get(0, 1)
    );
    pass("fusion-projection", started);
}
