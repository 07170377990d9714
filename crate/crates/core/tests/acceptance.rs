//! Acceptance criteria 1-8. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use grag::amr::{sssp_from_question, AmrEdge, AmrGraph, AmrNode, QUESTION_CONCEPT};
use grag::docgraph::{build_document_graph, GraphOptions, NormMode};
use grag::gnn::{
    backward, ce_loss, forward, ranking_loss, ranking_pairs, score, GcnModel, LossKind, Mode,
    Strategy, Topology,
};
use grag::metrics::{mhits10, mrr, mtrr, read_scores, tmhits10, RankedQuestion};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
    /// Bytes that must not change between repeated runs.
    fingerprint: Vec<u8>,
}

fn push_f64(fp: &mut Vec<u8>, v: f64) {
    fp.extend_from_slice(&v.to_bits().to_le_bytes());
}

// ---------------------------------------------------------------- random AMR

fn random_amr(
    rng: &mut ChaCha8Rng,
    qid: &str,
    doc: &str,
    max_nodes: usize,
    vocab: usize,
) -> AmrGraph {
    let n = rng.gen_range(1..=max_nodes);
    let nodes: Vec<AmrNode> = (0..n)
        .map(|k| AmrNode {
            id: format!("v{k}"),
            concept: if rng.gen_bool(0.15) {
                QUESTION_CONCEPT.to_string()
            } else {
                format!("c{}", rng.gen_range(0..vocab))
            },
        })
        .collect();
    let mut edges = Vec::new();
    if n > 1 {
        for _ in 0..rng.gen_range(0..2 * n) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                edges.push(AmrEdge {
                    src: format!("v{a}"),
                    rel: format!(":r{}", rng.gen_range(0..3)),
                    dst: format!("v{b}"),
                });
            }
        }
    }
    AmrGraph {
        question_id: qid.into(),
        doc_id: doc.into(),
        nodes,
        edges,
    }
}

// ---------------------------------------------------------------- 1

fn loss_and_grad(
    model: &GcnModel,
    topo: &Topology,
    x: &Array2<f64>,
    y: &Array1<f64>,
    labels: &[bool],
    kind: LossKind,
) -> (f64, grag::gnn::Gradients) {
    let mode = Mode::Train { step: 5, salt: 2 };
    let (state, cache) = forward(model, topo, x, mode).unwrap();
    let s = score(y, &state).unwrap();
    let (loss, g) = match kind {
        LossKind::CrossEntropy => ce_loss(&s, labels),
        LossKind::PairwiseRanking => {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            ranking_loss(&s, &ranking_pairs(labels, 10_000, &mut rng))
        }
    };
    let grads = backward(model, topo, y, &g, &cache).unwrap();
    (loss, grads)
}

/// Denominator floor for the relative error. Central differences with a
/// 1e-5 step carry rounding noise near 1e-10 for O(1) losses, so gradients
/// that are exactly zero (the output bias shifts every score equally) are
/// held to an absolute 1e-9 instead.
const FD_FLOOR: f64 = 1e-5;

fn criterion_1() -> Outcome {
    let (n, d, h) = (12, 16, 8);
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut fp = Vec::new();
    let mut checked = 0usize;
    let mut floored = 0usize;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let kind = if inst % 2 == 0 {
            LossKind::CrossEntropy
        } else {
            LossKind::PairwiseRanking
        };
        let norm_mode = if (inst / 2) % 2 == 0 {
            NormMode::PerChannelDims
        } else {
            NormMode::PerRowBoth
        };
        let amrs: Vec<AmrGraph> = (0..n)
            .map(|k| random_amr(&mut rng, "q", &format!("d{k}"), 8, 30))
            .collect();
        let graph = build_document_graph(
            &amrs,
            "q",
            GraphOptions {
                norm_mode,
                exclude_question_concept: false,
            },
        )
        .unwrap();
        let topo = Topology::from_graph(&graph);
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0));
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.25)).collect();
        labels[rng.gen_range(0..n)] = true;
        let mut model = GcnModel::new(&[d, h, d], 0.1, Strategy::GRagRl, inst).unwrap();
        for layer in model.layers_mut() {
            layer.b.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
            layer.b_e.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        }

        let (loss, grads) = loss_and_grad(&model, &topo, &x, &y, &labels, kind);
        push_f64(&mut fp, loss);
        for l in 0..model.layers().len() {
            for b in 0..6 {
                for k in 0..model.layers()[l].blocks()[b].len() {
                    let mut up = model.clone();
                    up.layers_mut()[l].blocks_mut()[b][k] += eps;
                    let mut down = model.clone();
                    down.layers_mut()[l].blocks_mut()[b][k] -= eps;
                    let lu = loss_and_grad(&up, &topo, &x, &y, &labels, kind).0;
                    let ld = loss_and_grad(&down, &topo, &x, &y, &labels, kind).0;
                    let numeric = (lu - ld) / (2.0 * eps);
                    let analytic = grads.layers[l].blocks()[b][k];
                    let scale = numeric.abs().max(analytic.abs());
                    if scale < FD_FLOOR {
                        floored += 1;
                    }
                    let rel = (numeric - analytic).abs() / scale.max(FD_FLOOR);
                    worst = worst.max(rel);
                    push_f64(&mut fp, analytic);
                    checked += 1;
                }
            }
        }
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!(
            "{checked} gradient entries ({floored} below {FD_FLOOR:e}), worst relative error {worst:.2e} (limit 1e-4)"
        ),
        fingerprint: fp,
    }
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut questions = Vec::new();
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let scores: Vec<f64> = loop {
            let s: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            let distinct: HashSet<u64> = s.iter().map(|v| v.to_bits()).collect();
            if distinct.len() == s.len() {
                break s;
            }
        };
        let mut idx: Vec<usize> = (0..100).collect();
        idx.shuffle(&mut rng);
        let mut positives = idx[..rng.gen_range(1..=5)].to_vec();
        positives.sort_unstable();
        let q = RankedQuestion::from_scores(format!("q{inst}"), &scores, positives).unwrap();
        let one = std::slice::from_ref(&q);
        worst = worst
            .max((mtrr(one) - mrr(one)).abs())
            .max((tmhits10(one) - mhits10(one)).abs());
        questions.push(q);
    }
    worst = worst
        .max((mtrr(&questions) - mrr(&questions)).abs())
        .max((tmhits10(&questions) - mhits10(&questions)).abs());
    let mut fp = Vec::new();
    for v in [
        mrr(&questions),
        mtrr(&questions),
        mhits10(&questions),
        tmhits10(&questions),
    ] {
        push_f64(&mut fp, v);
    }
    Outcome {
        pass: worst <= f64::EPSILON,
        detail: format!("100 instances, largest |MTRR-MRR| or |TMHits-MHits| = {worst:.1e}"),
        fingerprint: fp,
    }
}

// ---------------------------------------------------------------- 3

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Over every ordering that sorts the scores non-increasingly: for each doc,
/// how often it lands at each 0-based position, and the ordering count.
fn enumerate_positions(scores: &[f64]) -> (Vec<Vec<u64>>, u64) {
    let n = scores.len();
    let mut at = vec![vec![0u64; n]; n];
    let mut total = 0u64;
    for perm in permutations(n) {
        if perm.windows(2).all(|w| scores[w[0]] >= scores[w[1]]) {
            total += 1;
            for (pos, &doc) in perm.iter().enumerate() {
                at[doc][pos] += 1;
            }
        }
    }
    (at, total)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    let mut fp = Vec::new();

    for inst in 0..50 {
        let n = rng.gen_range(1..=8);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..3) as f64).collect();
        let mut positives: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        if positives.is_empty() {
            positives.push(rng.gen_range(0..n));
        }
        let q =
            RankedQuestion::from_scores(format!("t{inst}"), &scores, positives.clone()).unwrap();
        let (at, total) = enumerate_positions(&scores);
        for k in 1..=10 {
            let oracle: Vec<f64> = positives
                .iter()
                .map(|&p| at[p][..k.min(n)].iter().sum::<u64>() as f64 / total as f64)
                .collect();
            for (&p, &o) in positives.iter().zip(&oracle) {
                if q.ranking.tied_hit(p, k) != o {
                    failures.push(format!("inst {inst} doc {p} hits@{k}"));
                }
            }
            if k == 10 {
                let mean = oracle.iter().sum::<f64>() / oracle.len() as f64;
                if tmhits10(std::slice::from_ref(&q)) != mean {
                    failures.push(format!("inst {inst} TMHits@10"));
                }
            }
        }
        for &p in &positives {
            let rank_sum: u64 = at[p]
                .iter()
                .enumerate()
                .map(|(pos, c)| (pos as u64 + 1) * c)
                .sum();
            let mean_rank = rank_sum as f64 / total as f64;
            let term = q.ranking.tied_reciprocal_rank(p);
            if term != 1.0 / mean_rank {
                failures.push(format!("inst {inst} doc {p} MTRR term"));
            }
            push_f64(&mut fp, term);
        }
    }

    let mut worst_mc = 0.0f64;
    for inst in 0..20 {
        let n = 100;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..20) as f64).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let positives = idx[..rng.gen_range(1..=5)].to_vec();
        let q =
            RankedQuestion::from_scores(format!("m{inst}"), &scores, positives.clone()).unwrap();
        let exact = tmhits10(std::slice::from_ref(&q));
        let samples = 10_000;
        let mut hits = 0.0;
        for _ in 0..samples {
            let keys: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .total_cmp(&scores[a])
                    .then(keys[a].total_cmp(&keys[b]))
            });
            let top: HashSet<usize> = order[..10].iter().copied().collect();
            hits += positives.iter().filter(|p| top.contains(p)).count() as f64
                / positives.len() as f64;
        }
        let estimate = hits / samples as f64;
        worst_mc = worst_mc.max((estimate - exact).abs());
        push_f64(&mut fp, exact);
        push_f64(&mut fp, estimate);
    }

    let pass = failures.is_empty() && worst_mc <= 0.01;
    Outcome {
        pass,
        detail: format!(
            "enumeration mismatches {}{}; Monte-Carlo worst deviation {worst_mc:.4} (limit 0.01)",
            failures.len(),
            failures
                .first()
                .map(|f| format!(" (first: {f})"))
                .unwrap_or_default()
        ),
        fingerprint: fp,
    }
}

// ---------------------------------------------------------------- 4

fn oracle_counts(a: &AmrGraph, b: &AmrGraph, exclude: bool) -> (u32, u32) {
    let keep = |c: &str| !(exclude && c == QUESTION_CONCEPT);
    let concepts = |g: &AmrGraph| -> Vec<String> {
        let mut v: Vec<String> = g
            .nodes
            .iter()
            .map(|n| n.concept.clone())
            .filter(|c| keep(c))
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let triples = |g: &AmrGraph| -> Vec<(String, String, String)> {
        let concept = |id: &str| g.nodes.iter().find(|n| n.id == id).unwrap().concept.clone();
        let mut v: Vec<_> = g
            .edges
            .iter()
            .map(|e| (concept(&e.src), e.rel.clone(), concept(&e.dst)))
            .filter(|(s, _, d)| keep(s) && keep(d))
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let (ca, cb) = (concepts(a), concepts(b));
    let (ta, tb) = (triples(a), triples(b));
    let nodes = ca.iter().filter(|c| cb.contains(c)).count() as u32;
    let edges = ta.iter().filter(|t| tb.contains(t)).count() as u32;
    (nodes, edges)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0usize;
    let mut edges_seen = 0usize;
    let mut fp = Vec::new();
    for inst in 0..30 {
        let qid = format!("q{inst}");
        let n = rng.gen_range(1..=50);
        let amrs: Vec<AmrGraph> = (0..n)
            .map(|k| random_amr(&mut rng, &qid, &format!("d{k}"), 30, 120))
            .collect();
        let exclude = inst % 3 == 2;
        let opts = GraphOptions {
            norm_mode: NormMode::PerChannelDims,
            exclude_question_concept: exclude,
        };
        let graph = build_document_graph(&amrs, &qid, opts).unwrap();
        let got: BTreeSet<(usize, usize)> = graph.adjacency().collect();
        let mut want = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                let (cn, ce) = oracle_counts(&amrs[i], &amrs[j], exclude);
                if cn > 0 {
                    want.insert((i, j));
                    let raw = graph.raw_features(i, j);
                    if raw.map(|r| (r.common_nodes, r.common_edges)) != Some((cn, ce)) {
                        mismatches += 1;
                    }
                }
                fp.extend_from_slice(&cn.to_le_bytes());
                fp.extend_from_slice(&ce.to_le_bytes());
            }
        }
        if got != want {
            mismatches += 1;
        }
        edges_seen += want.len();
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("30 questions, {edges_seen} edges, {mismatches} mismatches"),
        fingerprint: fp,
    }
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problems = Vec::new();
    let mut total_paths = 0usize;
    let mut fp = Vec::new();
    for inst in 0..100 {
        let n = rng.gen_range(1..=50);
        let q = rng.gen_range(0..n);
        let nodes: Vec<AmrNode> = (0..n)
            .map(|k| AmrNode {
                id: format!("n{k:02}"),
                concept: if k == q {
                    QUESTION_CONCEPT.into()
                } else {
                    format!("c{}", rng.gen_range(0..10))
                },
            })
            .collect();
        let mut pairs = HashSet::new();
        let mut edges = Vec::new();
        let mut add = |a: usize, b: usize, edges: &mut Vec<AmrEdge>, rng: &mut ChaCha8Rng| {
            if a != b && pairs.insert((a.min(b), a.max(b))) {
                let (s, d) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                edges.push(AmrEdge {
                    src: format!("n{s:02}"),
                    rel: ":ARG0".into(),
                    dst: format!("n{d:02}"),
                });
            }
        };
        for k in 1..n {
            let parent = rng.gen_range(0..k);
            add(k, parent, &mut edges, &mut rng);
        }
        for _ in 0..rng.gen_range(0..=n) {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            add(a, b, &mut edges, &mut rng);
        }
        let g = AmrGraph {
            question_id: "q".into(),
            doc_id: format!("g{inst}"),
            nodes,
            edges,
        };

        let mut adj = vec![Vec::new(); n];
        for e in &g.edges {
            let a: usize = e.src[1..].parse().unwrap();
            let b: usize = e.dst[1..].parse().unwrap();
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = vec![usize::MAX; n];
        dist[q] = 0;
        let mut queue = VecDeque::from([q]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }

        let paths = sssp_from_question(&g);
        total_paths += paths.len();
        fp.extend_from_slice(&(paths.len() as u64).to_le_bytes());
        let as_idx: Vec<Vec<usize>> = paths
            .node_paths
            .iter()
            .map(|p| p.iter().map(|id| id[1..].parse().unwrap()).collect())
            .collect();
        for p in &as_idx {
            let last = *p.last().unwrap();
            if p[0] != q || p.len() != dist[last] + 1 {
                problems.push(format!(
                    "graph {inst}: path length {} vs distance {}",
                    p.len(),
                    dist[last]
                ));
            }
            if p.windows(2).any(|w| !adj[w[0]].contains(&w[1])) {
                problems.push(format!("graph {inst}: path uses a non-edge"));
            }
            fp.extend(p.iter().map(|&v| v as u8));
        }
        let sets: Vec<HashSet<usize>> =
            as_idx.iter().map(|p| p.iter().copied().collect()).collect();
        for i in 0..sets.len() {
            for j in 0..sets.len() {
                if i != j && sets[i].is_subset(&sets[j]) {
                    problems.push(format!("graph {inst}: path {i} contained in path {j}"));
                }
            }
        }
        if n > 1 && paths.is_empty() {
            problems.push(format!("graph {inst}: no paths"));
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: format!(
            "100 graphs, {total_paths} paths, {} problems{}",
            problems.len(),
            problems
                .first()
                .map(|p| format!(" (first: {p})"))
                .unwrap_or_default()
        ),
        fingerprint: fp,
    }
}

// ---------------------------------------------------------------- 6

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["grag"];
    full.extend_from_slice(args);
    grag::cli::run(full)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn train_run(dir: &Path, corpus: &Path, strategy: &str) -> Result<(f64, f64, Vec<u8>), String> {
    let out = dir.join(strategy);
    let code = cli(&[
        "train",
        "--seed",
        "7",
        "--strategy",
        strategy,
        "--dataset",
        p(&corpus.join("train.jsonl")),
        "--dev-dataset",
        p(&corpus.join("dev.jsonl")),
        "--amr",
        p(&dir.join("amr.jsonl")),
        "--encoder-dim",
        "64",
        "--hidden-dim",
        "128",
        "--learning-rate",
        "1e-4",
        "--total-steps",
        "500",
        "--warmup-steps",
        "10",
        "--eval-every",
        "100",
        "--out-dir",
        p(&out),
    ]);
    if code != 0 {
        return Err(format!("train {strategy} exited {code}"));
    }
    let scores = dir.join(format!("{strategy}.dev.tsv"));
    let report = dir.join(format!("{strategy}.eval.json"));
    let ckpt = out.join("model.ckpt");
    for args in [
        vec![
            "rerank",
            "--checkpoint",
            p(&ckpt),
            "--dataset",
            p(&corpus.join("dev.jsonl")),
            "--amr",
            p(&dir.join("amr.jsonl")),
            "--out",
            p(&scores),
        ],
        vec![
            "eval",
            "--scores",
            p(&scores),
            "--qrels",
            p(&corpus.join("dev.qrels.tsv")),
            "--out",
            p(&report),
        ],
    ] {
        let code = cli(&args);
        if code != 0 {
            return Err(format!("{} exited {code}", args[0]));
        }
    }
    let log = fs::read_to_string(out.join("train_log.jsonl")).map_err(|e| e.to_string())?;
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    let untrained = first["dev_mrr"].as_f64().unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let trained = report["mrr"].as_f64().unwrap();
    let mut fp = fs::read(&ckpt).unwrap();
    fp.extend(log.bytes());
    fp.extend(fs::read(&scores).unwrap());
    Ok((trained, untrained, fp))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let run = || -> Result<Outcome, String> {
        let code = cli(&[
            "gen-synthetic",
            "--seed",
            "7",
            "--train-questions",
            "200",
            "--dev-questions",
            "50",
            "--docs-per-question",
            "20",
            "--positives-per-question",
            "2",
            "--out-dir",
            p(&corpus),
        ]);
        if code != 0 {
            return Err(format!("gen-synthetic exited {code}"));
        }
        let code = cli(&[
            "parse-amr",
            "--input-dir",
            p(&corpus.join("penman")),
            "--out",
            p(&dir.path().join("amr.jsonl")),
        ]);
        if code != 0 {
            return Err(format!("parse-amr exited {code}"));
        }
        let (rl, untrained, mut fp) = train_run(dir.path(), &corpus, "g-rag-rl")?;
        let (ce, _, fp_ce) = train_run(dir.path(), &corpus, "g-rag")?;
        fp.extend(fp_ce);
        fp.extend(fs::read(corpus.join("train.jsonl")).unwrap());
        let pass = rl >= 0.60 && rl >= untrained + 0.20 && rl >= ce - 0.02;
        Ok(Outcome {
            pass,
            detail: format!(
                "g-rag-rl dev MRR {rl:.4} (need >= 0.60), untrained {untrained:.4} (need gain >= 0.20), g-rag {ce:.4} (need rl >= ce - 0.02)"
            ),
            fingerprint: fp,
        })
    };
    run().unwrap_or_else(|e| Outcome {
        pass: false,
        detail: e,
        fingerprint: Vec::new(),
    })
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().unwrap();
    let scores_path = dir.path().join("tied.tsv");
    let qrels_path = dir.path().join("tied.qrels.tsv");
    let report_path = dir.path().join("report.json");
    let mut scores = String::new();
    let mut qrels = String::new();
    for q in 0..10 {
        let constant = rng.gen_range(-5.0..5.0);
        let npos = rng.gen_range(1..=5);
        for d in 0..100 {
            scores.push_str(&format!("q{q}\td{d}\t{constant}\n"));
            qrels.push_str(&format!("q{q}\td{d}\t{}\n", u8::from(d < npos)));
        }
    }
    fs::write(&scores_path, &scores).unwrap();
    fs::write(&qrels_path, &qrels).unwrap();
    let code = cli(&[
        "eval",
        "--scores",
        p(&scores_path),
        "--qrels",
        p(&qrels_path),
        "--out",
        p(&report_path),
    ]);
    if code != 0 {
        return Outcome {
            pass: false,
            detail: format!("eval exited {code}"),
            fingerprint: Vec::new(),
        };
    }

    let table = read_scores(scores.as_bytes(), "tied").unwrap();
    let mut bad_terms = 0;
    let mut terms = 0;
    for (qid, rows) in &table {
        let values: Vec<f64> = rows.iter().map(|(_, s)| *s).collect();
        let positives: Vec<usize> = qrels
            .lines()
            .filter(|l| l.starts_with(&format!("{qid}\t")) && l.ends_with("\t1"))
            .map(|l| l.split('\t').nth(1).unwrap()[1..].parse().unwrap())
            .collect();
        let q = RankedQuestion::from_scores(qid.clone(), &values, positives.clone()).unwrap();
        for &pos in &positives {
            terms += 1;
            if q.ranking.tied_hit(pos, 10) != 0.1
                || q.ranking.tied_reciprocal_rank(pos) != 2.0 / (2.0 + 99.0)
            {
                bad_terms += 1;
            }
        }
    }
    let report_bytes = fs::read(&report_path).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&report_bytes).unwrap();
    let tm = report["tmhits10"].as_f64().unwrap();
    let mt = report["mtrr"].as_f64().unwrap();
    let close = (tm - 0.1).abs() < 1e-15 && (mt - 2.0 / 101.0).abs() < 1e-15;
    Outcome {
        pass: bad_terms == 0 && close,
        detail: format!(
            "{terms} positive terms, {bad_terms} off; report TMHits@10 {tm} MTRR {mt} (2/101 = {})",
            2.0 / 101.0
        ),
        fingerprint: report_bytes,
    }
}

// ---------------------------------------------------------------- driver

type Criterion = (u32, fn() -> Outcome, Duration);

fn run_all(criteria: &[Criterion]) -> Vec<(Outcome, Duration)> {
    criteria
        .iter()
        .map(|(_, f, _)| {
            let start = Instant::now();
            let o = f();
            (o, start.elapsed())
        })
        .collect()
}

fn main() {
    let criteria: [Criterion; 7] = [
        (1, criterion_1, Duration::from_secs(30)),
        (2, criterion_2, Duration::from_secs(1)),
        (3, criterion_3, Duration::from_secs(60)),
        (4, criterion_4, Duration::from_secs(10)),
        (5, criterion_5, Duration::from_secs(5)),
        (6, criterion_6, Duration::from_secs(300)),
        (7, criterion_7, Duration::from_secs(1)),
    ];
    std::env::set_var(grag::cli::THREADS_ENV, "1");
    let first = run_all(&criteria);
    let mut all_pass = true;
    for ((id, _, limit), (o, took)) in criteria.iter().zip(&first) {
        let in_time = took <= limit;
        let pass = o.pass && in_time;
        all_pass &= pass;
        println!(
            "criterion {id}: {} | {} | {:.2}s (limit {}s){}",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { " over time" }
        );
    }

    let mut differing = Vec::new();
    for threads in ["4", "2"] {
        std::env::set_var(grag::cli::THREADS_ENV, threads);
        let again = run_all(&criteria);
        for ((id, _, _), ((a, _), (b, _))) in criteria.iter().zip(first.iter().zip(&again)) {
            if a.fingerprint != b.fingerprint || a.fingerprint.is_empty() {
                differing.push(format!("{id} (GRAG_THREADS={threads})"));
            }
        }
    }
    let pass = differing.is_empty();
    all_pass &= pass;
    println!(
        "criterion 8: {} | criteria 1-7 rerun with GRAG_THREADS=1,4,2: {}",
        if pass { "PASS" } else { "FAIL" },
        if pass {
            "all outputs bit-identical".to_string()
        } else {
            format!("outputs differ for {}", differing.join(", "))
        }
    );
    if !all_pass {
        std::process::exit(1);
    }
}
