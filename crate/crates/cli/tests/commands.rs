//! End-to-end runs of the `mp3gan` binary on the synthetic fixture corpus,
//! with `mp3gan-lame` standing in for the `lame` executable.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use mp3gan::audio::{load_wav, save_wav, write_wav_samples, WavFormat};
use mp3gan::dataset::codec::{encode_decode_mp3, Bitrate, CodecConfig, DECODER_ENV, ENCODER_ENV};
use mp3gan::dataset::fixture::{synth_song, write_fixture_corpus, FIXTURE_SECONDS, FIXTURE_SEED, FIXTURE_SONGS};
use mp3gan::dataset::manifest::{Manifest, MANIFEST_FILE};
use mp3gan::evaluation::{profile_distance, signal_profile, MetricReport, System, REPORT_FILE, SUMMARY_FILE};
use mp3gan::spectral::HOP;
use mp3gan::training::{read_loss_log, CHECKPOINT_DIR, LOSS_LOG};
use tempfile::TempDir;

const LAME: &str = env!("CARGO_BIN_EXE_mp3gan-lame");

fn mp3gan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mp3gan"))
        .args(args)
        .env(ENCODER_ENV, LAME)
        .env(DECODER_ENV, LAME)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mp3gan(args);
    assert!(
        out.status.success(),
        "mp3gan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scratch() -> TempDir {
    tempfile::tempdir_in(env!("CARGO_TARGET_TMPDIR")).unwrap()
}

struct Prepared {
    _dir: TempDir,
    corpus: PathBuf,
    out: PathBuf,
}

impl Prepared {
    fn manifest(&self) -> PathBuf {
        self.out.join(MANIFEST_FILE)
    }
}

fn prepared() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| {
        let dir = scratch();
        let corpus = dir.path().join("corpus");
        write_fixture_corpus(&corpus, FIXTURE_SONGS, FIXTURE_SECONDS, FIXTURE_SEED).unwrap();
        let out = dir.path().join("prep");
        ok(&["prepare", "--corpus", s(&corpus), "--bitrates", "16k", "--seed", "5", "--out-dir", s(&out)]);
        Prepared { _dir: dir, corpus, out }
    })
}

fn last_checkpoint(out: &Path) -> PathBuf {
    let mut ckpts: Vec<PathBuf> = std::fs::read_dir(out.join(CHECKPOINT_DIR))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    ckpts.sort();
    ckpts.pop().unwrap()
}

struct Trained {
    _dir: TempDir,
    out: PathBuf,
    checkpoint: PathBuf,
}

fn train_fixture(mode: &str, iterations: &str) -> Trained {
    let p = prepared();
    let dir = scratch();
    let out = dir.path().join("train");
    ok(&[
        "train", "--manifest", s(&p.manifest()), mode, "--iterations", iterations, "--arch", "small",
        "--batch-size", "1", "--segment-frames", "24", "--checkpoint-every", "25", "--seed", "3",
        "--out-dir", s(&out),
    ]);
    let checkpoint = last_checkpoint(&out);
    Trained { _dir: dir, out, checkpoint }
}

fn deterministic() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| train_fixture("--deterministic", "50"))
}

fn stochastic() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| train_fixture("--stochastic", "4"))
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn prepare_splits_fixture_and_is_repeatable() {
    let p = prepared();
    let before = file_bytes(&p.corpus);
    let m = Manifest::load(&p.manifest()).unwrap();
    assert_eq!(m.splits.sizes(), (4, 1, 1));
    assert!(p.out.join("effective_config.toml").is_file());

    let again = scratch();
    let stdout = ok(&[
        "prepare", "--corpus", s(&p.corpus), "--bitrates", "16k", "--seed", "5", "--out-dir", s(again.path()),
    ]);
    assert!(stdout.contains("train: 4 songs"), "{stdout}");
    assert_eq!(
        std::fs::read(p.manifest()).unwrap(),
        std::fs::read(again.path().join(MANIFEST_FILE)).unwrap()
    );
    assert_eq!(file_bytes(&p.corpus), before);
}

#[test]
fn prepare_failures_exit_nonzero() {
    let dir = scratch();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = mp3gan(&["prepare", "--corpus", s(&empty), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!out.stderr.is_empty());

    let p = prepared();
    let out = mp3gan(&[
        "prepare", "--corpus", s(&p.corpus), "--encoder", "/nonexistent/lame", "--out-dir",
        s(&dir.path().join("o2")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));

    let out = mp3gan(&["prepare", "--corpus", s(&p.corpus), "--ratios", "0.5,0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = mp3gan(&["prepare", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_logs_fifty_rows_and_resume_continues() {
    let t = deterministic();
    let rows = read_loss_log(&t.out.join(LOSS_LOG)).unwrap();
    assert_eq!(rows.len(), 50);
    assert!(t.out.join("effective_config.toml").is_file());

    let p = prepared();
    let copy = scratch();
    std::fs::copy(t.out.join(LOSS_LOG), copy.path().join(LOSS_LOG)).unwrap();
    ok(&[
        "train", "--manifest", s(&p.manifest()), "--deterministic", "--iterations", "55", "--arch", "small",
        "--batch-size", "1", "--segment-frames", "24", "--checkpoint-every", "25", "--seed", "3",
        "--resume", s(&t.checkpoint), "--out-dir", s(copy.path()),
    ]);
    let resumed = read_loss_log(&copy.path().join(LOSS_LOG)).unwrap();
    assert_eq!(resumed.len(), 55);
    for (a, b) in resumed.iter().zip(&rows) {
        assert_eq!(a.step, b.step);
    }
    for w in resumed.windows(2) {
        assert_eq!(w[1].step, w[0].step + 1);
    }

    let out = mp3gan(&[
        "train", "--manifest", s(&p.manifest()), "--deterministic", "--iterations", "55", "--arch", "small",
        "--batch-size", "2", "--segment-frames", "24", "--seed", "3", "--resume", s(&t.checkpoint),
        "--out-dir", s(&copy.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn deterministic_model_cannot_be_evaluated_best_of_n() {
    let p = prepared();
    let t = deterministic();
    let dir = scratch();
    let out = mp3gan(&[
        "evaluate", "--manifest", s(&p.manifest()), "--systems", "sto", "--sto-checkpoint", s(&t.checkpoint),
        "--excerpt-frames", "32", "--n-samples", "2", "--out-dir", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stochastic"));
}

fn decoded_song(dir: &Path, seconds: f64) -> PathBuf {
    let hq = synth_song(3, seconds, 99);
    let coded = encode_decode_mp3(&CodecConfig::new(LAME, LAME), &hq, Bitrate::K16).unwrap();
    let path = dir.join("decoded.wav");
    save_wav(&path, &coded.decoded, WavFormat::Float32).unwrap();
    path
}

#[test]
fn restore_keeps_length_and_is_reproducible() {
    let t = stochastic();
    let dir = scratch();
    let input = decoded_song(dir.path(), 8.0);
    let len = load_wav(&input, false).unwrap().len();

    let z = dir.path().join("z.txt");
    let noise = mp3gan::model::sample_noise(8, 42, 0);
    std::fs::write(&z, noise.iter().map(|v| format!("{v:?}\n")).collect::<String>()).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "restore", "--checkpoint", s(&t.checkpoint), "--input", s(&input), "--z-file", s(&z),
            "--out-dir", s(&out),
        ]);
        out.join("restored.wav")
    };
    let a = run("a");
    let b = run("b");
    let restored = load_wav(&a, false).unwrap();
    assert!(restored.len().abs_diff(len) <= HOP, "{} vs {len}", restored.len());
    assert!((restored.duration_secs() - 8.0).abs() < HOP as f64 / 44_100.0 + 1e-9);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn restore_n_samples_gives_distinct_profiles() {
    let t = stochastic();
    let dir = scratch();
    let input = decoded_song(dir.path(), 3.0);
    let out = dir.path().join("out");
    ok(&[
        "restore", "--checkpoint", s(&t.checkpoint), "--input", s(&input), "--n-samples", "3", "--seed", "1",
        "--out-dir", s(&out),
    ]);
    let profiles: Vec<_> = (0..3)
        .map(|k| {
            let path = out.join(format!("restored_{k:02}.wav"));
            assert!(out.join(format!("restored_{k:02}.wav.z.txt")).is_file());
            signal_profile(&load_wav(&path, false).unwrap()).unwrap()
        })
        .collect();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(profile_distance(&profiles[i], &profiles[j]) > 0.0, "samples {i} and {j} coincide");
        }
    }
}

#[test]
fn restore_rejects_bad_inputs() {
    let dir = scratch();
    let slow = dir.path().join("slow.wav");
    write_wav_samples(&slow, &vec![0.0; 22_050], 22_050, WavFormat::Int16).unwrap();
    let det = deterministic();
    let out = mp3gan(&["restore", "--checkpoint", s(&det.checkpoint), "--input", s(&slow), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--resample"));
    ok(&["restore", "--checkpoint", s(&det.checkpoint), "--input", s(&slow), "--resample", "--out-dir", s(dir.path())]);

    let out = mp3gan(&[
        "restore", "--checkpoint", s(&det.checkpoint), "--input", s(&slow), "--resample", "--n-samples", "2",
        "--out-dir", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_mp3_only() {
    let p = prepared();
    let dir = scratch();
    let stdout = ok(&[
        "evaluate", "--manifest", s(&p.manifest()), "--systems", "mp3", "--excerpt-frames", "64",
        "--out-dir", s(dir.path()),
    ]);
    let report = MetricReport::load(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(report.protocol.n_samples, 20);
    assert!(std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap().contains("n_samples=20"));
    assert!(report.checkpoints.is_empty());
    assert!(!report.records.is_empty());
    assert!(report.records.iter().all(|r| r.system == System::Mp3));

    let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary, stdout);
    assert!(summary.contains("mp3_16k"));
    assert!(!summary.contains("det_") && !summary.contains("sto_"));
    let lsd: Vec<f64> = report.records.iter().map(|r| r.lsd).collect();
    let mean = lsd.iter().sum::<f64>() / lsd.len() as f64;
    assert!(summary.contains(&format!("{mean:.2} (")), "{summary}");
}

#[test]
fn profile_single_curve() {
    let p = prepared();
    let t = stochastic();
    let dir = scratch();
    ok(&[
        "profile", "--checkpoint", s(&t.checkpoint), "--manifest", s(&p.manifest()), "--z-count", "1",
        "--excerpt-count", "1", "--excerpt-frames", "48", "--out-dir", s(dir.path()),
    ]);
    let data = std::fs::read_to_string(dir.path().join("profiles.tsv")).unwrap();
    let rows: Vec<&str> = data.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("excerpt\t0\t"));
    assert!(rows[1].starts_with("mean\t0\tmean\t"));
    assert!(rows[2].starts_with("reference\t-\toriginal\t"));
    assert_eq!(rows[0].split('\t').skip(3).collect::<Vec<_>>(), rows[1].split('\t').skip(3).collect::<Vec<_>>());
    assert_eq!(rows[0].split('\t').count(), 3 + 1024);
    let svg = std::fs::read_to_string(dir.path().join("profiles.svg")).unwrap();
    assert!(svg.contains("z 0") && !svg.contains("z 1"));
}

#[test]
fn profile_panels_and_repeatability() {
    let p = prepared();
    let t = stochastic();
    let dir = scratch();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let stdout = ok(&[
            "profile", "--checkpoint", s(&t.checkpoint), "--manifest", s(&p.manifest()), "--z-count", "3",
            "--excerpt-count", "2", "--excerpt-frames", "48", "--split", "train", "--seed", "4",
            "--out-dir", s(&out),
        ]);
        (out, stdout)
    };
    let (a, stdout) = run("a");
    let (b, _) = run("b");
    assert!(stdout.contains("across z"));
    let svg = std::fs::read_to_string(a.join("profiles.svg")).unwrap();
    for k in 0..3 {
        assert!(svg.contains(&format!("z {k}")));
    }
    for name in ["profiles.tsv", "profiles.svg", "profile_consistency.txt", "z_00.txt"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let out = mp3gan(&[
        "profile", "--checkpoint", s(&deterministic().checkpoint), "--manifest", s(&p.manifest()),
        "--z-count", "2", "--out-dir", s(&dir.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
