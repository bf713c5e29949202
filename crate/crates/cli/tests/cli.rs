use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asd_core::datasets::{decision_file_name, read_value_csv, score_file_name};
use asd_core::features::read_feature_dump;
use tempfile::TempDir;

const SMALL: &str = "\
# small corpus for command tests; 10 normals per section keep ⌊0.1·N⌋ ≥ 1
synth.train_source = 6
synth.train_target = 2
synth.test_normal_per_domain = 5
synth.test_anomaly_per_domain = 5
";

fn asd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asd"))
        .args(args)
        .output()
        .expect("run asd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = asd(args);
    assert!(o.status.success(), "asd {args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
        let f = Self { dir };
        ok(&["synth", "--config", p(&f.cfg()), "--seed", "7", "--out", p(&f.corpus())]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cfg(&self) -> PathBuf {
        self.path("small.cfg")
    }

    fn corpus(&self) -> PathBuf {
        self.path("corpus")
    }

    fn run(&self, cmd: &str, out: &Path, extra: &[&str]) -> Output {
        let corpus = self.corpus();
        let mut args = vec![
            cmd,
            "--corpus",
            p(&corpus),
            "--out",
            p(out),
            "--seeds",
            "1",
            "--epochs",
            "2",
        ];
        args.extend_from_slice(extra);
        asd(&args)
    }

    fn run_ok(&self, cmd: &str, out: &Path, extra: &[&str]) -> String {
        let o = self.run(cmd, out, extra);
        assert!(o.status.success(), "{cmd} failed: {}", stderr(&o));
        stdout(&o)
    }
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_prints_counts_and_is_deterministic() {
    let f = Fixture::new();
    let again = f.path("again");
    let text = ok(&["synth", "--config", p(&f.cfg()), "--seed", "7", "--out", p(&again)]);
    assert!(text.contains("fan section 00: train source=6 target=2"), "{text}");
    assert!(text.contains("wrote 56 clips"), "{text}");
    assert_eq!(tree(&f.corpus()), tree(&again));
}

#[test]
fn usage_errors_exit_2() {
    let o = asd(&["synth", "--preset", "mini", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("--out"));
    assert_eq!(asd(&["synth", "--preset", "huge", "--out", "x"]).status.code(), Some(2));
    assert_eq!(asd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(asd(&["train", "--out", "x"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "mode = loud\n").unwrap();
    let o = asd(&["train", "--config", p(&bad), "--corpus", "c", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.cfg:1"), "{}", stderr(&o));
    assert_eq!(asd(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_score_evaluate_report() {
    let f = Fixture::new();
    let run = f.path("run");
    let text = f.run_ok("train", &run, &[]);
    assert_eq!(text.lines().count(), 2, "{text}");
    let seed = run.join("seed_1");
    for m in ["fan", "valve"] {
        assert!(seed.join(format!("model_{m}_section_00.bin")).is_file());
        assert!(seed.join(format!("threshold_{m}_section_00.txt")).is_file());
        assert!(!seed.join(format!("cov_{m}_section_00.bin")).exists());
        let loss = fs::read_to_string(seed.join(format!("loss_{m}_section_00.csv"))).unwrap();
        assert_eq!(loss.lines().count(), 3);
    }

    f.run_ok("score", &run, &[]);
    let first: Vec<_> = ["fan", "valve"]
        .iter()
        .flat_map(|m| [score_file_name(m, 0), decision_file_name(m, 0)])
        .map(|name| {
            let bytes = fs::read(seed.join(&name)).unwrap();
            assert_eq!(read_value_csv(&seed.join(&name)).unwrap().len(), 20, "{name}");
            bytes
        })
        .collect();
    f.run_ok("score", &run, &[]);
    let second: Vec<_> = ["fan", "valve"]
        .iter()
        .flat_map(|m| [score_file_name(m, 0), decision_file_name(m, 0)])
        .map(|name| fs::read(seed.join(name)).unwrap())
        .collect();
    assert_eq!(first, second);

    let eval = f.run_ok("evaluate", &run, &[]);
    let last = eval.lines().last().unwrap();
    assert!(last.starts_with("official_score,"), "{eval}");
    assert!(run.join("aggregate.csv").is_file());
    assert!(seed.join("report.json").is_file());
    let report = f.run_ok("report", &run, &[]);
    assert_eq!(report.lines().last().unwrap(), last);
}

#[test]
fn mahalanobis_writes_sidecars_and_guards_mode() {
    let f = Fixture::new();
    let run = f.path("run");
    f.run_ok("train", &run, &["--mode", "mahalanobis"]);
    for m in ["fan", "valve"] {
        assert!(run.join("seed_1").join(format!("cov_{m}_section_00.bin")).is_file());
    }
    f.run_ok("score", &run, &["--mode", "mahalanobis"]);
    let o = f.run("score", &run, &["--mode", "simple"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("trained for mahalanobis"), "{}", stderr(&o));
}

#[test]
fn scoring_without_models_is_an_error() {
    let f = Fixture::new();
    let o = f.run("score", &f.path("empty"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("asd train"), "{}", stderr(&o));
    let o = f.run("evaluate", &f.path("empty"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("asd score"), "{}", stderr(&o));
}

#[test]
fn corrupted_training_clip_is_named() {
    let f = Fixture::new();
    let train = f.corpus().join("valve").join("train");
    let victim = fs::read_dir(&train).unwrap().next().unwrap().unwrap().path();
    fs::write(&victim, b"RIFF but not really").unwrap();
    let o = f.run("train", &f.path("run"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let name = victim.file_name().unwrap().to_str().unwrap();
    assert!(stderr(&o).contains(name), "{}", stderr(&o));
}

#[test]
fn unlabeled_corpus_has_its_own_exit_code() {
    let f = Fixture::new();
    let eval = f.path("eval_corpus");
    for m in ["fan", "valve"] {
        let src = f.corpus().join(m);
        fs::create_dir_all(eval.join(m).join("test")).unwrap();
        fs::create_dir_all(eval.join(m).join("train")).unwrap();
        for e in fs::read_dir(src.join("train")).unwrap() {
            let path = e.unwrap().path();
            fs::copy(&path, eval.join(m).join("train").join(path.file_name().unwrap())).unwrap();
        }
        let mut tests: Vec<_> = fs::read_dir(src.join("test")).unwrap().map(|e| e.unwrap().path()).collect();
        tests.sort();
        for (i, path) in tests.iter().enumerate() {
            fs::copy(path, eval.join(m).join("test").join(format!("section_00_{i:04}.wav"))).unwrap();
        }
    }
    let o = asd(&["evaluate", "--corpus", p(&eval), "--out", p(&f.path("run")), "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("score and decision export"), "{}", stderr(&o));
}

#[test]
fn all_tied_scores_give_zero_official_score() {
    let f = Fixture::new();
    let seed = f.path("run").join("seed_1");
    fs::create_dir_all(&seed).unwrap();
    for m in ["fan", "valve"] {
        let mut csv = String::new();
        let mut names: Vec<_> = fs::read_dir(f.corpus().join(m).join("test"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        for n in names {
            csv.push_str(&format!("{n},0.5\n"));
        }
        fs::write(seed.join(score_file_name(m, 0)), csv).unwrap();
    }
    let text = f.run_ok("evaluate", &f.path("run"), &[]);
    assert_eq!(text.lines().last().unwrap(), "official_score,0");
}

#[test]
fn feature_dumps_match_the_config() {
    let f = Fixture::new();
    let run = f.path("run");
    f.run_ok("train", &run, &["--dump-features"]);
    let dir = run.join("features").join("fan").join("train");
    let dumps: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dumps.len(), 8);
    let m = read_feature_dump(&dumps[0]).unwrap();
    // mini preset: 32 mel bands × 5 frames; 6 s clips give 186 frames.
    assert_eq!(m.dim(), (182, 160));
}
