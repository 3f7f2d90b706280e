//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio_tungstenite::tungstenite::Message;

use affectloop::bench::{column_mean, run_bench, BenchConfig};
use affectloop::decoder::{evaluate_trials, Decoder, DecoderConfig};
use affectloop::metrics::{emo_mse, stats};
use affectloop::planner::{tokenize, Bm25, KnowledgeBase};
use affectloop::session::{
    run_session, ClipAffectSource, LoopConfig, MemorySink, Observation, SessionReport, SubjectMode, SubjectParams,
};
use affectloop::signal::synth::{affect_recording, labelled_trials};
use affectloop::signal::{window_count, window_stream, EegRecording};
use affectloop::AffectState;

use common::{http, json, wait_for, Server, BIN};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn flat(duration_s: f64, fs: f64) -> EegRecording {
    let n = (duration_s * fs).round() as usize;
    EegRecording::new(vec!["Cz".into()], fs, vec![vec![0.0; n]]).unwrap()
}

fn windowing() -> Outcome {
    let starts: Vec<f64> = window_stream(&flat(60.0, 128.0), 4.0, 2.0).unwrap().map(|w| w.start_s).collect();
    check(starts.len() == 29, || format!("{} windows", starts.len()))?;
    check(starts.iter().enumerate().all(|(k, s)| *s == 2.0 * k as f64), || format!("starts {starts:?}"))?;

    let mut runner = TestRunner::new(RunnerConfig { cases: 256, failure_persistence: None, ..RunnerConfig::default() });
    let strategy = (1usize..=40, 1usize..=20, 1usize..=20)
        .prop_flat_map(|(dur, win, hop)| (Just(dur.max(win)), Just(win), Just(hop.min(win))));
    runner
        .run(&strategy, |(dur, win, hop)| {
            let fs = 16.0;
            let rec = flat(dur as f64, fs);
            let got: Vec<usize> = window_stream(&rec, win as f64, hop as f64)
                .unwrap()
                .map(|w| (w.start_s * fs).round() as usize)
                .collect();
            let (n, wn, hn) = (dur * 16, win * 16, hop * 16);
            let mut expected = Vec::new();
            let mut s = 0;
            while s + wn <= n {
                expected.push(s);
                s += hn;
            }
            prop_assert_eq!(&got, &expected);
            prop_assert_eq!(window_count(n, wn, hn), expected.len());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("60 s at 128 Hz gives 29 windows; 256 random triples match enumeration".into())
}

fn decoder_sanity() -> Outcome {
    let trials = labelled_trials(200, 20.0, 128.0, 3.0, 11).map_err(|e| e.to_string())?;
    let mut d = Decoder::new(DecoderConfig::default());
    let (_, r) = evaluate_trials(&mut d, &trials, 4.0, 2.0, 5.0).map_err(|e| e.to_string())?;
    let detail = format!(
        "acc v {:.3} a {:.3}, CCC v {:.3} a {:.3} over {}",
        r.valence_acc, r.arousal_acc, r.valence_ccc, r.arousal_ccc, r.n
    );
    check(
        r.valence_acc >= 0.95 && r.arousal_acc >= 0.95 && r.valence_ccc >= 0.9 && r.arousal_ccc >= 0.9,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn ideal_config(alpha: f64, max_rounds: usize, eps: f64) -> LoopConfig {
    LoopConfig {
        alpha,
        max_rounds,
        convergence_eps: eps,
        clip_affect: ClipAffectSource::Ideal,
        subject: SubjectMode::Simulated {
            params: SubjectParams { beta: 1.0, noise_std: 0.0, initial: AffectState::new(-0.5, 0.6), seed: 0 },
            observation: Observation::Direct,
        },
        sample_rate_hz: 8000,
        ..LoopConfig::default()
    }
}

fn session(cfg: &LoopConfig, seed: u64) -> Result<SessionReport, String> {
    run_session(cfg, KnowledgeBase::starter(), None, seed, &mut MemorySink::default()).map_err(|e| e.to_string())
}

fn contraction() -> Outcome {
    let cfg = ideal_config(0.5, 8, 1e-3);
    let r = session(&cfg, 1)?;
    let mut dist = vec![r.initial_state.distance(r.target)];
    dist.extend(r.rounds.iter().map(|x| x.post_state.distance(r.target)));
    let ratios: Vec<f64> = dist.windows(2).map(|w| w[1] / w[0]).collect();
    check(ratios.len() >= 4, || format!("only {} rounds", ratios.len()))?;
    check(ratios.iter().all(|q| (q - 0.5).abs() <= 1e-6), || format!("ratios {ratios:?}"))?;

    let full = session(&ideal_config(1.0, 4, 0.1), 1)?;
    let conv = full.convergence_round;
    check(conv.is_some_and(|c| c <= 2), || format!("alpha 1 converged at {conv:?}"))?;
    Ok(format!("{} ratios within 1e-6 of 0.5; alpha 1 converged at round {}", ratios.len(), conv.unwrap()))
}

fn control_adherence() -> Outcome {
    let cfg = BenchConfig { plans: 100, seed: 2024, ..BenchConfig::default() };
    let rows = run_bench(KnowledgeBase::starter(), &cfg).map_err(|e| e.to_string())?;
    let dc = column_mean(&rows, "full", |r| r.dyn_corr).unwrap_or(f64::NAN);
    let pc = column_mean(&rows, "full", |r| Some(r.plan_cons)).unwrap_or(f64::NAN);
    let sh = column_mean(&rows, "shuffled", |r| r.dyn_corr).unwrap_or(f64::NAN);
    let degenerate = rows.iter().filter(|r| r.method == "full" && r.dyn_corr.is_none()).count();
    let detail = format!("Dyn-Corr {dc:.3}, Plan-Cons {pc:.3}, shuffled Dyn-Corr {sh:+.3}, {degenerate} degenerate");
    check(dc >= 0.9 && pc >= 0.95 && sh.abs() <= 0.2 && degenerate == 0, || detail.clone())?;
    Ok(detail)
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn brute_ccc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n).sqrt();
    2.0 * brute_pearson(x, y) * sx * sy / (sx * sx + sy * sy + (mx - my).powi(2))
}

/// Two-way ANOVA with the residual sum of squares taken term by term.
fn brute_icc2k(m: &[Vec<f64>]) -> f64 {
    let (n, k) = (m.len(), m[0].len());
    let g = m.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col: Vec<f64> = (0..k).map(|j| (0..n).map(|i| m[i][j]).sum::<f64>() / n as f64).collect();
    let mut ssr = 0.0;
    let mut ssc = 0.0;
    let mut sse = 0.0;
    for i in 0..n {
        for j in 0..k {
            ssr += (row[i] - g).powi(2);
            ssc += (col[j] - g).powi(2);
            sse += (m[i][j] - row[i] - col[j] + g).powi(2);
        }
    }
    let msr = ssr / (n - 1) as f64;
    let msc = ssc / (k - 1) as f64;
    let mse = sse / ((n - 1) * (k - 1)) as f64;
    (msr - mse) / (msr + (msc - mse) / n as f64)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, got: f64, want: f64| {
        let e = worst.entry(name).or_insert(0.0);
        *e = e.max((got - want).abs());
    };
    for _ in 0..1000 {
        let n = rng.random_range(3..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        note("pearson", stats::pearson(&x, &y).unwrap(), brute_pearson(&x, &y));
        note("ccc", stats::ccc(&x, &y).unwrap(), brute_ccc(&x, &y));

        let k = rng.random_range(2..=5);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(1.0..=5.0)).collect()).collect();
        note("icc2k", stats::icc2k(&m).unwrap(), brute_icc2k(&m));

        let (e, t) = (
            AffectState::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)),
            AffectState::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)),
        );
        let want = ((e.valence - t.valence).powi(2) + (e.arousal - t.arousal).powi(2)) / 2.0;
        note("emo_mse", emo_mse(e, t), want);
    }
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    check(worst.values().all(|v| *v <= 1e-9), || detail.clone())?;
    Ok(format!("1000 instances, max abs error: {detail}"))
}

fn emo_mse_improvement() -> Outcome {
    let mut lines = Vec::new();
    for (label, source) in [("ideal", ClipAffectSource::Ideal), ("heuristic", ClipAffectSource::Heuristic)] {
        let cfg = LoopConfig { clip_affect: source, ..ideal_config(0.5, 4, 1e-6) };
        let r = session(&cfg, 3)?;
        let mse: Vec<f64> = r.rounds.iter().map(|x| x.metrics.emo_mse).collect();
        let monotone = mse.windows(2).all(|w| w[1] <= w[0]);
        let series = mse.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" ");
        if source == ClipAffectSource::Ideal {
            check(mse.len() == 4 && monotone, || format!("{label}: {series}"))?;
        }
        lines.push(format!("{label} [{series}]{}", if monotone { "" } else { " not monotone" }));
    }
    Ok(lines.join("; "))
}

fn simulate(out: &Path, seed: &str) -> Result<(), String> {
    let rec = out.with_extension("csv");
    let status = Command::new(BIN)
        .args(["synth-eeg", "--valence", "-0.4", "--arousal", "0.5", "--duration", "12", "--seed", seed, "--out"])
        .arg(&rec)
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success(), || "synth-eeg failed".into())?;
    let status = Command::new(BIN)
        .args(["simulate", "--rounds", "3", "--noise", "0.05", "--seed", seed, "--recording"])
        .arg(&rec)
        .arg("--out")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success(), || "simulate failed".into())
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walk(dir, dir)
}

fn walk(root: &Path, dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(root, &p));
        } else {
            out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
        }
    }
    out
}

fn frame_messages(n: usize) -> Vec<String> {
    let rec = affect_recording(0.3, -0.2, 4.0 * n as f64, 128.0, 1.0, 9).unwrap();
    window_stream(&rec, 4.0, 4.0)
        .unwrap()
        .enumerate()
        .map(|(i, w)| {
            serde_json::json!({"v": 1, "kind": "eeg_frame", "seq": i + 1, "payload": w}).to_string()
        })
        .collect()
}

/// Sends `msgs` over the stream and returns `(client seq, service seq)`
/// for every acknowledged one.
async fn send_frames(addr: &str, id: &str, msgs: &[String]) -> Result<Vec<(u64, u64)>, String> {
    let url = format!("ws://{addr}/sessions/{id}/stream");
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.map_err(|e| e.to_string())?;
    let mut acks = Vec::new();
    for m in msgs {
        ws.send(Message::text(m.clone())).await.map_err(|e| e.to_string())?;
        let deadline = tokio::time::Instant::now() + Duration::from_secs(20);
        loop {
            let msg = tokio::time::timeout_at(deadline, ws.next()).await.map_err(|_| "no reply".to_string())?;
            let text = msg.ok_or("stream closed")?.map_err(|e| e.to_string())?;
            let v = json(text.to_text().map_err(|e| e.to_string())?);
            if v.get("reply_to").is_none() {
                continue;
            }
            if v["ok"] == true {
                acks.push((v["reply_to"].as_u64().unwrap(), v["seq"].as_u64().unwrap()));
            }
            break;
        }
    }
    Ok(acks)
}

async fn backlog(addr: &str, id: &str) -> Result<Vec<serde_json::Value>, String> {
    let url = format!("ws://{addr}/sessions/{id}/stream");
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    while let Ok(Some(Ok(msg))) = tokio::time::timeout(Duration::from_millis(500), ws.next()).await {
        if let Ok(t) = msg.to_text() {
            out.push(json(t));
        }
    }
    Ok(out)
}

fn persistence() -> Result<String, String> {
    let data = tempfile::tempdir().map_err(|e| e.to_string())?;
    let server = Server::start(data.path());
    let body = r#"{"config":{"subject":{"kind":"live","frames_per_round":2,"timeout_ms":60000},"max_rounds":3,"sample_rate_hz":8000},"seed":4}"#;
    let (code, created) = http(&server.addr, "POST", "/sessions", Some(body));
    check(code == 201, || format!("create {code}: {created}"))?;
    let id = json(&created)["session_id"].as_str().unwrap().to_string();
    let (code, started) = http(&server.addr, "POST", &format!("/sessions/{id}/start"), None);
    check(code == 202, || format!("start {code}: {started}"))?;

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let acks = rt.block_on(send_frames(&server.addr, &id, &frame_messages(3)))?;
    check(acks.len() == 3, || format!("{} of 3 frames acked", acks.len()))?;
    let addr = server.addr.clone();
    let planned = wait_for(Duration::from_secs(30), || {
        let events = rt.block_on(backlog(&addr, &id)).ok()?;
        events.iter().any(|e| e["kind"] == "clip_ready").then_some(events.len())
    })
    .ok_or("no clip before kill")?;
    server.kill();

    let server = Server::start(data.path());
    let (_, info) = http(&server.addr, "GET", &format!("/sessions/{id}"), None);
    let status = json(&info)["status"].as_str().unwrap_or("").to_string();
    check(status == "interrupted", || format!("status after restart: {status}"))?;
    let events = rt.block_on(backlog(&server.addr, &id))?;
    let by_seq: HashMap<u64, &serde_json::Value> = events.iter().map(|e| (e["seq"].as_u64().unwrap(), e)).collect();
    for (client, seq) in &acks {
        let e = by_seq.get(seq).ok_or(format!("acked seq {seq} lost"))?;
        check(e["kind"] == "eeg_frame" && e["client_seq"] == *client, || format!("seq {seq} is {e}"))?;
    }
    let seqs: Vec<u64> = events.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    check(seqs == (1..=seqs.len() as u64).collect::<Vec<_>>(), || format!("seqs {seqs:?}"))?;
    check(events.len() >= planned, || format!("{} envelopes after restart, {planned} before", events.len()))?;
    Ok(format!("{} acked frames and {} envelopes survive SIGKILL", acks.len(), events.len()))
}

fn determinism_and_persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate(&a, "21")?;
    simulate(&b, "21")?;
    let (ta, tb) = (tree(&a), tree(&b));
    let wavs = ta.keys().filter(|k| k.ends_with(".wav")).count();
    check(wavs >= 1 && ta.contains_key("report.json"), || format!("outputs {:?}", ta.keys()))?;
    check(ta == tb, || "outputs differ between identical runs".into())?;
    let persisted = persistence()?;
    Ok(format!("{} files byte-identical ({wavs} WAV); {persisted}", ta.len()))
}

fn oracle_bm25(docs: &[&str], query: &str) -> Vec<f64> {
    let split = |s: &str| -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in s.chars() {
            if c.is_alphanumeric() {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    };
    let toks: Vec<Vec<String>> = docs.iter().map(|d| split(d)).collect();
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / docs.len() as f64;
    let mut terms = split(query);
    terms.sort();
    terms.dedup();
    toks.iter()
        .map(|d| {
            let mut s = 0.0;
            for t in &terms {
                let tf = d.iter().filter(|w| *w == t).count() as f64;
                let df = toks.iter().filter(|x| x.contains(t)).count() as f64;
                let idf = (1.0 + (docs.len() as f64 - df + 0.5) / (df + 0.5)).ln();
                s += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * d.len() as f64 / avg));
            }
            s
        })
        .collect()
}

fn rank(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn bm25_rank() -> Outcome {
    let docs = [
        "Slow ambient pads lower arousal and ease anxiety.",
        "Upbeat major-key pop raises valence and energy.",
        "Minor mode, slow tempo: sad, low valence, low arousal.",
        "Fast percussion drives arousal; high energy workouts.",
        "Calming piano at 60 BPM for relaxation before sleep.",
        "Gradual tempo decrease guides listeners from stress to calm.",
        "Bright major harmony with moderate tempo lifts mood.",
        "Dissonant clusters and loud dynamics increase tension.",
        "Soft strings, legato phrasing, calming and warm.",
        "Iso principle: match the current mood, then move toward the target mood.",
    ];
    let index = Bm25::new(&docs);
    let queries = [
        "calming relaxation low arousal",
        "high valence uplifting major",
        "tempo mood target",
        "energy arousal fast",
        "sad minor",
    ];
    for q in queries {
        let mut terms = tokenize(q);
        terms.sort();
        terms.dedup();
        let got: Vec<f64> = (0..docs.len()).map(|d| index.score(&terms, d)).collect();
        let want = oracle_bm25(&docs, q);
        check(rank(&got) == rank(&want), || format!("{q:?}: {:?} vs {:?}", rank(&got), rank(&want)))?;
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(err <= 1e-12, || format!("{q:?}: score error {err:e}"))?;
    }
    Ok(format!("{} queries over {} documents rank identically", queries.len(), docs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("windowing protocol", windowing, Duration::from_secs(1)),
        ("decoder sanity on synthetic EEG", decoder_sanity, Duration::from_secs(10)),
        ("closed-loop contraction", contraction, Duration::from_secs(5)),
        ("control adherence", control_adherence, Duration::from_secs(120)),
        ("metric oracles", metric_oracles, Duration::from_secs(10)),
        ("Emo-MSE improvement across rounds", emo_mse_improvement, Duration::from_secs(30)),
        ("determinism and persistence", determinism_and_persistence, Duration::from_secs(180)),
        ("BM25 exact rank", bm25_rank, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = t.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > *limit => Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} ({elapsed:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why} ({elapsed:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
