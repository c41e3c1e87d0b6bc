//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use elsa::docsent::{doc_attention, Variant};
use elsa::encoder::{
    bilstm_layer, evaluate_emoji, lstm_cell_step, train_encoder, word_attention, EncoderConfig, EncoderDims,
    EncoderParams, LstmDirection, LstmLayerParams,
};
use elsa::embed::EmbeddingTable;
use elsa::numcore::{grad_check, softmax, Coverage, DenseMatrix, ParamSet, Prng};
use elsa::pipeline::{
    load_embeddings, load_encoder, mcnemar_counts, mean_intra_group_cosine, run_all, run_stage, write_fixture,
    Artifact, Checkpoint, EvalReport, FixtureSpec, Layout, PipelineConfig, RunOptions, Stage,
};
use elsa::textprep::{
    compress_elongation, extract_emoji_examples, filter_tweet, partition_sizes, prepare_text, split_dataset,
    DefaultSegmenter, EmojiExample, EmojiVocabulary, Language, RawText, TokenSequence, Vocabulary,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn rand_vec(rng: &mut Prng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.next_f64() * 2.0 - 1.0) * scale).collect()
}

fn randomize(p: &mut LstmDirection<f64>, rng: &mut Prng) {
    for t in [&mut p.input_weights, &mut p.recurrent_weights, &mut p.bias] {
        for v in t.value.as_mut_slice() {
            *v = (rng.next_f64() * 2.0 - 1.0) * 0.8;
        }
    }
}

// Brute-force references, written from the textbook formulas.

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ref_cell(x: &[f64], h: &[f64], c: &[f64], p: &LstmDirection<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let pre = |row: usize| -> f64 {
        let mut s = p.bias.value.get(row, 0);
        for (j, xj) in x.iter().enumerate() {
            s += p.input_weights.value.get(row, j) * xj;
        }
        for (j, hj) in h.iter().enumerate() {
            s += p.recurrent_weights.value.get(row, j) * hj;
        }
        s
    };
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..n {
        let i = sig(pre(k));
        let f = sig(pre(n + k));
        let o = sig(pre(2 * n + k));
        let g = pre(3 * n + k).tanh();
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

fn ref_scan(xs: &[Vec<f64>], p: &LstmDirection<f64>) -> Vec<Vec<f64>> {
    let n = p.recurrent_weights.value.cols();
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    xs.iter()
        .map(|x| {
            let (h2, c2) = ref_cell(x, &h, &c, p);
            h = h2;
            c = c2;
            h.clone()
        })
        .collect()
}

fn ref_bilstm(xs: &[Vec<f64>], p: &LstmLayerParams<f64>) -> Vec<Vec<f64>> {
    let fwd = ref_scan(xs, &p.forward);
    let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let mut bwd = ref_scan(&rev, &p.backward);
    bwd.reverse();
    fwd.into_iter().zip(bwd).map(|(a, b)| a.into_iter().chain(b).collect()).collect()
}

fn ref_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = ex.iter().sum();
    ex.into_iter().map(|v| v / s).collect()
}

fn ref_attention(u: &[Vec<f64>], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = u.iter().map(|x| x.iter().zip(w).map(|(a, b)| a * b).sum()).collect();
    let a = ref_softmax(&scores);
    let mut v = vec![0.0; w.len()];
    for (ai, x) in a.iter().zip(u) {
        for (o, xi) in v.iter_mut().zip(x) {
            *o += ai * xi;
        }
    }
    (a, v)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let dims = EncoderDims {
        vocab_size: 12,
        embed_dim: 8,
        hidden1: 4,
        hidden2: 4,
        classes: 4,
    };
    let mut p = EncoderParams::<f64>::random(dims, &mut Prng::new(11));
    let mut rng = Prng::new(12);
    let batch: Vec<(Vec<usize>, usize)> = (0..4)
        .map(|k| ((0..5).map(|_| 4 + rng.below(8)).collect(), k))
        .collect();
    p.batch_gradient(&batch, None).map_err(e)?;
    let r = grad_check(&mut p, |m: &EncoderParams<f64>| m.batch_loss(&batch, None), 1e-5, Coverage::All).map_err(e)?;
    check(r.per_param.len() == p.params().len(), "not every parameter group was checked")?;
    check(r.max_rel_error < 1e-4, format!("max rel error {:.2e} in {}", r.max_rel_error, r.worst_param))?;
    within(t0.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "max rel error {:.2e} over {} coordinates in {} groups",
        r.max_rel_error,
        r.coords_checked,
        r.per_param.len()
    ))
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut rng = Prng::new(21);
    let mut worst = [0.0f64; 5];
    let n = 200;
    for _ in 0..n {
        let d = 1 + rng.below(6);
        let h = 1 + rng.below(5);
        let len = 1 + rng.below(7);
        let mut dir = LstmDirection::<f64>::zeros("x", d, h);
        randomize(&mut dir, &mut rng);
        let x = rand_vec(&mut rng, d, 1.5);
        let hp = rand_vec(&mut rng, h, 1.0);
        let cp = rand_vec(&mut rng, h, 1.0);
        let (h1, c1) = lstm_cell_step(&x, &hp, &cp, &dir).map_err(e)?;
        let (h2, c2) = ref_cell(&x, &hp, &cp, &dir);
        worst[0] = worst[0].max(max_diff(&h1, &h2)).max(max_diff(&c1, &c2));

        let mut layer = LstmLayerParams::<f64>::zeros("l", d, h);
        randomize(&mut layer.forward, &mut rng);
        randomize(&mut layer.backward, &mut rng);
        let xs: Vec<Vec<f64>> = (0..len).map(|_| rand_vec(&mut rng, d, 1.5)).collect();
        let got = bilstm_layer(&xs, &layer).map_err(e)?;
        let want = ref_bilstm(&xs, &layer);
        for (a, b) in got.iter().zip(&want) {
            worst[1] = worst[1].max(max_diff(a, b));
        }

        let w = rand_vec(&mut rng, d, 2.0);
        let att = word_attention(&xs, &w, &vec![true; len]).map_err(e)?;
        let (ra, rv) = ref_attention(&xs, &w);
        worst[2] = worst[2].max(max_diff(&att.scores, &ra)).max(max_diff(&att.pooled, &rv));

        let zn = 1 + rng.below(10);
        let z = rand_vec(&mut rng, zn, 30.0);
        worst[3] = worst[3].max(max_diff(&softmax(&z).map_err(e)?, &ref_softmax(&z)));

        let doc = doc_attention(&xs, &w).map_err(e)?;
        worst[4] = worst[4]
            .max(max_diff(&doc.sentence_attention, &ra))
            .max(max_diff(&doc.vector, &rv));
    }
    let names = ["lstm_cell_step", "bilstm_layer", "word_attention", "softmax", "doc_attention"];
    for (name, w) in names.iter().zip(worst) {
        check(w < 1e-12, format!("{name} off by {w:.2e}"))?;
    }
    within(t0.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{n} instances per op, worst abs diff {:.1e}", worst.iter().cloned().fold(0.0, f64::max)))
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let mut rng = Prng::new(31);
    let emojis = ["😀", "😢", "😡", "😍"];
    let signal = ["sunny", "rainy", "angry", "lovely"];
    let fillers = ["the", "a", "day", "is", "so", "today", "we", "it"];
    let mut examples = Vec::new();
    for i in 0..200 {
        let k = i % 4;
        let len = 3 + rng.below(5);
        let at = rng.below(len);
        let toks: TokenSequence = (0..len)
            .map(|j| if j == at { signal[k] } else { fillers[rng.below(fillers.len())] })
            .collect();
        examples.push(EmojiExample {
            tokens: toks,
            emoji_class: k,
        });
    }
    let words: Vec<String> = signal.iter().chain(&fillers).map(|s| s.to_string()).collect();
    let vocab = Vocabulary::from_tokens(words, 1);
    let config = EncoderConfig::default();
    let dim = 16;
    let vectors = DenseMatrix::from_fn(vocab.len(), dim, |_, _| rng.next_f64() - 0.5);
    let table = EmbeddingTable::new(vocab, vectors).map_err(e)?;
    let ev = EmojiVocabulary::from_entries(Language::new("en"), emojis.iter().map(|s| s.to_string()).collect())
        .map_err(e)?;
    let config = EncoderConfig {
        patience: config.epochs,
        ..config
    };
    let (params, report) = train_encoder(&examples, &examples, &config, &table, &ev).map_err(e)?;
    let ids: Vec<(Vec<usize>, usize)> = examples
        .iter()
        .map(|x| Ok((params.token_ids(&x.tokens)?, x.emoji_class)))
        .collect::<elsa::Result<_>>()
        .map_err(e)?;
    let (_, acc) = evaluate_emoji(&params, &ids).map_err(e)?;
    check(report.train_loss.len() <= 50, "more than 50 epochs")?;
    check(acc >= 0.95, format!("training accuracy {acc:.3}"))?;
    within(t0.elapsed(), Duration::from_secs(120))?;
    Ok(format!("training accuracy {acc:.3} after {} epochs", report.train_loss.len()))
}

fn snapshot_bytes(paths: &[std::path::PathBuf]) -> Result<Vec<Vec<u8>>, String> {
    paths.iter().map(|p| std::fs::read(p).map_err(e)).collect()
}

fn accuracy(layout: &Layout, v: Variant) -> Result<f64, String> {
    let r: Artifact<EvalReport> = Artifact::load(&layout.eval(v)).map_err(e)?;
    Ok(r.data.accuracy)
}

struct Run {
    config: PipelineConfig,
    layout: Layout,
    spec: FixtureSpec,
    encoders_before: Vec<Vec<u8>>,
    elapsed: Duration,
}

fn full_run(dir: &Path) -> Result<Run, String> {
    let t0 = Instant::now();
    let spec = FixtureSpec::default();
    let (path, _) = write_fixture(dir, &spec).map_err(e)?;
    let config = PipelineConfig::load(&path).map_err(e)?;
    let layout = Layout::new(config.out_dir());
    let opts = RunOptions::default();
    run_all(&config, &opts).map_err(e)?;
    let enc = [layout.encoder(elsa::docsent::Side::Source), layout.encoder(elsa::docsent::Side::Target)];
    let encoders_before = snapshot_bytes(&enc)?;
    run_stage(Stage::Ablate, &config, &opts).map_err(e)?;
    Ok(Run {
        config,
        layout,
        spec,
        encoders_before,
        elapsed: t0.elapsed(),
    })
}

fn criterion_4(run: &Run) -> Outcome {
    let full = accuracy(&run.layout, Variant::Full)?;
    let s = accuracy(&run.layout, Variant::S)?;
    let n = accuracy(&run.layout, Variant::N)?;
    let t = accuracy(&run.layout, Variant::T)?;
    let line = format!("FULL {full:.3}  T {t:.3}  S {s:.3}  N {n:.3}  ({:.1?})", run.elapsed);
    check(full >= 0.90, format!("FULL below 0.90: {line}"))?;
    check(full >= s && s >= n, format!("ordering FULL >= S >= N broken: {line}"))?;
    check(full - n >= 0.10, format!("FULL - N below 0.10: {line}"))?;
    within(run.elapsed, Duration::from_secs(600))?;
    Ok(line)
}

fn criterion_5(run: &Run) -> Outcome {
    use elsa::docsent::Side;
    let enc = [run.layout.encoder(Side::Source), run.layout.encoder(Side::Target)];
    let after = snapshot_bytes(&enc)?;
    check(after == run.encoders_before, "encoder checkpoints changed during classifier training")?;

    // Retrain FULL once more and compare raw parameter bytes.
    let src = load_encoder::<f64>(&enc[0]).map_err(e)?;
    let tgt = load_encoder::<f64>(&enc[1]).map_err(e)?;
    let bytes = |p: &EncoderParams<f64>| -> Vec<u8> {
        p.params().iter().flat_map(|t| t.value.as_slice().iter().flat_map(|v| v.to_le_bytes())).collect()
    };
    let before = (bytes(&src), bytes(&tgt));
    run_stage(Stage::TrainClassifier, &run.config, &RunOptions::default()).map_err(e)?;
    let reloaded = (bytes(&load_encoder::<f64>(&enc[0]).map_err(e)?), bytes(&load_encoder::<f64>(&enc[1]).map_err(e)?));
    check(before == reloaded, "encoder bytes on disk changed")?;
    Ok(format!("{} + {} encoder bytes identical", before.0.len(), before.1.len()))
}

fn criterion_6() -> Outcome {
    check(compress_elongation("cooooool") == "cool", "elongation")?;
    let seg = DefaultSegmenter;
    check(prepare_text("cooooool", &seg).tokens == vec!["cool"], "prepared elongation")?;
    let raw = |t: &str| RawText {
        text: t.into(),
        language: Language::new("en"),
    };
    check(!filter_tweet(&raw("RT @a: so good")), "retweet kept")?;
    check(!filter_tweet(&raw("look https://t.co/x")), "URL tweet kept")?;
    check(!filter_tweet(&raw("see www.example.com now")), "www tweet kept")?;
    check(filter_tweet(&raw("art is fun 😀")), "plain tweet dropped")?;

    let ev = EmojiVocabulary::from_entries(Language::new("en"), vec!["😀".into(), "😢".into(), "😍".into()]).map_err(e)?;
    let tweet = prepare_text("great 😀 day 😀 😍 🐱", &seg);
    let ex = extract_emoji_examples(&tweet, &ev);
    check(ex.len() == 2, format!("expected 2 examples, got {}", ex.len()))?;
    check(ex[0].emoji_class == 0 && ex[1].emoji_class == 2, "wrong classes")?;
    let words = vec!["great".to_string(), "day".to_string()];
    check(ex.iter().all(|x| x.tokens.tokens == words), "emojis not stripped")?;

    for (n, want) in [(100, vec![70, 20, 10]), (10, vec![7, 2, 1]), (1000, vec![700, 200, 100])] {
        let got = partition_sizes(n, &[7, 2, 1]).map_err(e)?;
        check(got == want, format!("split of {n}: {got:?}"))?;
        let items: Vec<usize> = (0..n).collect();
        let parts = split_dataset(&items, &[7, 2, 1], 5).map_err(e)?;
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        check(sizes == want, format!("split_dataset of {n}: {sizes:?}"))?;
    }
    Ok("elongation, filtering, emoji expansion and 7:2:1 sizes exact".into())
}

fn criterion_7(run: &Run) -> Outcome {
    use elsa::docsent::Side;
    let lexicon = elsa::pipeline::Lexicon::new(&run.spec);
    let seen = lexicon.seen;
    let groups = vec![lexicon.source_positive[..seen].to_vec(), lexicon.source_negative[..seen].to_vec()];
    let raw = load_embeddings::<f64>(&run.layout.embeddings(Side::Source)).map_err(e)?;
    let tuned = load_encoder::<f64>(&run.layout.encoder(Side::Source)).map_err(e)?.embedding_table();
    let before = mean_intra_group_cosine(&groups, &raw).map_err(e)?;
    let after = mean_intra_group_cosine(&groups, &tuned).map_err(e)?;
    check(after > before, format!("fine-tuned {after:.4} <= raw {before:.4}"))?;
    Ok(format!("mean intra-polarity cosine raw {before:.4} -> fine-tuned {after:.4}"))
}

fn small_spec() -> FixtureSpec {
    FixtureSpec {
        tweets_per_language: 1200,
        labeled_source: 120,
        test_target: 60,
        ..FixtureSpec::default()
    }
}

fn criterion_8(root: &Path) -> Outcome {
    let mut ckpts = Vec::new();
    let mut reports = Vec::new();
    for k in 0..2 {
        let (path, _) = write_fixture(&root.join(format!("run{k}")), &small_spec()).map_err(e)?;
        let config = PipelineConfig::load(&path).map_err(e)?;
        run_all(&config, &RunOptions::default()).map_err(e)?;
        let layout = Layout::new(config.out_dir());
        let mut files: Vec<_> = walk(&layout.root)
            .into_iter()
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .collect();
        files.sort();
        let names: Vec<_> = files.iter().map(|p| p.strip_prefix(&layout.root).unwrap().to_path_buf()).collect();
        ckpts.push((names, snapshot_bytes(&files)?));
        let r: Artifact<EvalReport> = Artifact::load(&layout.eval(Variant::Full)).map_err(e)?;
        reports.push(r.data);
    }
    check(!ckpts[0].0.is_empty(), "no checkpoints written")?;
    check(ckpts[0] == ckpts[1], "checkpoints differ between runs")?;
    check(reports[0] == reports[1], "EvalReports differ between runs")?;
    Ok(format!("{} checkpoints bitwise identical, accuracy {:.3} both runs", ckpts[0].0.len(), reports[0].accuracy))
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    if let Ok(rd) = std::fs::read_dir(dir) {
        for entry in rd.flatten() {
            let p = entry.path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let a = mcnemar_counts(5, 5);
    let b = mcnemar_counts(10, 0);
    check(a.statistic == 0.1 && !a.significant, format!("b=c=5 gave {a:?}"))?;
    check(b.statistic == 8.1 && b.significant, format!("b=10,c=0 gave {b:?}"))?;
    Ok("0.1 not significant, 8.1 significant".into())
}

fn criterion_10(run: &Run, scratch: &Path) -> Outcome {
    let files: Vec<_> = walk(&run.layout.root)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    check(!files.is_empty(), "no checkpoints")?;
    for (i, f) in files.iter().enumerate() {
        let original = std::fs::read(f).map_err(e)?;
        let copy = scratch.join(format!("copy{i}.ckpt"));
        Checkpoint::<f64>::load(f).map_err(e)?.save(&copy).map_err(e)?;
        check(std::fs::read(&copy).map_err(e)? == original, format!("{} changed on round trip", f.display()))?;
    }
    let mut p = EncoderParams::<f32>::random(
        EncoderDims {
            vocab_size: 9,
            embed_dim: 3,
            hidden1: 2,
            hidden2: 2,
            classes: 3,
        },
        &mut Prng::new(4),
    );
    p.freeze();
    let mut ck = Checkpoint::<f32>::new("encoder", "h", 4, serde_json::json!({}), serde_json::json!({}));
    ck.push_params(&p);
    let a = scratch.join("f32_a.ckpt");
    let b = scratch.join("f32_b.ckpt");
    ck.save(&a).map_err(e)?;
    Checkpoint::<f32>::load(&a).map_err(e)?.save(&b).map_err(e)?;
    check(std::fs::read(&a).map_err(e)? == std::fs::read(&b).map_err(e)?, "f32 round trip changed bytes")?;
    Ok(format!("{} pipeline checkpoints and an f32 checkpoint byte-identical", files.len()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("tempdir");
    let run = full_run(&tmp.path().join("full"));
    let scratch = tmp.path().join("scratch");
    std::fs::create_dir_all(&scratch).expect("scratch dir");
    let from_run = |f: &dyn Fn(&Run) -> Outcome| -> Outcome {
        match &run {
            Ok(r) => f(r),
            Err(err) => Err(format!("pipeline run failed: {err}")),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("gradient oracle", criterion_1()),
        ("reference oracles", criterion_2()),
        ("emoji-prediction overfit", criterion_3()),
        ("synthetic cross-lingual task", from_run(&criterion_4)),
        ("encoder locking", from_run(&criterion_5)),
        ("preprocessing conformance", criterion_6()),
        ("representation property", from_run(&criterion_7)),
        ("determinism", criterion_8(&tmp.path().join("det"))),
        ("McNemar", criterion_9()),
        ("checkpoint round trip", from_run(&|r| criterion_10(r, &scratch))),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
