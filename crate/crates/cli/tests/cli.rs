use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn unitab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unitab")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixture(dir: &Path) -> PathBuf {
    let corpus = dir.join("tables.ndjson");
    let mut lines = String::new();
    for i in 0..60 {
        let context = if i % 4 == 0 {
            String::new()
        } else {
            format!(r#","context":{{"kind":"nl","text":"player {i} scored in season {i} for the club"}}"#)
        };
        lines.push_str(&format!(
            r#"{{"headers":["player","season","goals"],"rows":[["p{i}","{i}","3"],["q{i}","2001","7"],["r","2002","1"]]{context}}}"#
        ));
        lines.push('\n');
    }
    fs::write(&corpus, lines).unwrap();
    let sup = dir.join("qa.ndjson");
    let mut lines = String::new();
    for i in 0..20 {
        lines.push_str(&format!(
            r#"{{"id":"qa-{i}","input_text":"how many goals for p{i}","output_text":"3","table":{{"headers":["player","goals"],"rows":[["p{i}","3"]]}}}}"#
        ));
        lines.push('\n');
    }
    fs::write(&sup, lines).unwrap();
    let manifest = dir.join("m.toml");
    fs::write(
        &manifest,
        r#"output_dir = "out"
shard_size = 25
seed = 3

[[sources]]
name = "tables"
path = "tables.ndjson"
format = "canonical"
category = "table_text"

[mixture]
[[mixture.entries]]
name = "qa"
records = "qa.ndjson"
proportion = 150.0
io_kind = "text_table_to_answer"
"#,
    )
    .unwrap();
    manifest
}

fn digests(dir: &Path) -> Vec<String> {
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run_manifest.json")).unwrap()).unwrap();
    manifest["shards"].as_array().unwrap().iter().map(|s| s["digest"].as_str().unwrap().to_string()).collect()
}

#[test]
fn validate_reports_ok_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let out = unitab(&["validate", m.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("tables: 60/60 sampled records usable"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "output_dir = \"o\"\nshard_size = 0\n[[sources]]\nname=\"a\"\npath=\"a\"\nformat=\"canonical\"\ncategory=\"table_only\"\n").unwrap();
    let out = unitab(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("shard_size"));

    let missing = dir.path().join("missing.toml");
    fs::write(&missing, "output_dir = \"o\"\n[[sources]]\nname=\"a\"\npath=\"nope.ndjson\"\nformat=\"canonical\"\ncategory=\"table_only\"\n").unwrap();
    assert_eq!(code(&unitab(&["validate", missing.to_str().unwrap()])), 1);
}

#[test]
fn build_pretrain_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let m = m.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = unitab(&["build-pretrain", m, "--seed", "7", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("wrote 60 records in 3 shards"));
    assert_eq!(code(&unitab(&["build-pretrain", m, "--seed", "7", "--workers", "4", "--out", b.to_str().unwrap()])), 0);
    assert_eq!(digests(&a), digests(&b));
    assert!(a.join("shard-00002.ndrec").exists());
    assert!(a.join("stats.json").exists());

    let c = dir.path().join("c");
    assert_eq!(code(&unitab(&["build-pretrain", m, "--seed", "8", "--out", c.to_str().unwrap()])), 0);
    assert_ne!(digests(&a), digests(&c));

    let default_out = unitab(&["build-pretrain", m]);
    assert_eq!(code(&default_out), 0);
    assert!(dir.path().join("out/run_manifest.json").exists());
}

#[test]
fn rf_mode_has_no_registry_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let out_dir = dir.path().join("rf");
    let vocab = dir.path().join("vocab.txt");
    assert_eq!(code(&unitab(&["vocab", "--out", vocab.to_str().unwrap()])), 0);
    let registry: Vec<String> = fs::read_to_string(&vocab).unwrap().lines().map(str::to_string).collect();
    assert_eq!(registry.len(), 114);
    let out = unitab(&["build-pretrain", m.to_str().unwrap(), "--mode", "rf", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for entry in fs::read_dir(&out_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "ndrec") {
            for line in fs::read_to_string(&path).unwrap().lines() {
                let rec: serde_json::Value = serde_json::from_str(line).unwrap();
                for field in ["encoder_input", "decoder_input", "decoder_target"] {
                    let real = rec["meta"]["encoder_len"].as_u64().unwrap() as usize;
                    let tokens = rec[field].as_array().unwrap();
                    let tokens = if field == "encoder_input" { &tokens[..real] } else { &tokens[..] };
                    assert!(
                        tokens.iter().all(|t| !registry.contains(&t.as_str().unwrap().to_string())),
                        "{field}: {line}"
                    );
                }
            }
        }
    }
}

#[test]
fn build_pft_stats_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let pft = dir.path().join("pft");
    let out = unitab(&["build-pft", m.to_str().unwrap(), "--seed", "1", "--out", pft.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("wrote 30 records"));

    let stats_file = dir.path().join("s.json");
    let out = unitab(&["stats", pft.to_str().unwrap(), "--out", stats_file.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let stats: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(stats["per_objective"]["SUPERVISED"], 30);
    assert!(stats_file.exists());

    let shard = pft.join("shard-00000.ndrec");
    let out = unitab(&["inspect", shard.to_str().unwrap(), "--n", "2", "--color", "never"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.matches("== qa:").count(), 2);
    assert!(text.contains("<header> player:text | goals:number"));
    assert!(!text.contains('\x1b'));
    let colored = stdout(&unitab(&["inspect", shard.to_str().unwrap(), "--n", "1", "--color", "always"]));
    assert!(colored.contains('\x1b'));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&unitab(&[])), 64);
    assert_eq!(code(&unitab(&["build-pretrain"])), 64);
    assert_eq!(code(&unitab(&["--help"])), 0);
    assert_eq!(code(&unitab(&["stats", "/nonexistent/dir"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    assert_eq!(code(&unitab(&["build-pretrain", m.to_str().unwrap(), "--workers", "0"])), 1);

    let no_mix = dir.path().join("nomix.toml");
    let text = fs::read_to_string(&m).unwrap();
    fs::write(&no_mix, &text[..text.find("[mixture]").unwrap()]).unwrap();
    assert_eq!(code(&unitab(&["build-pft", no_mix.to_str().unwrap()])), 1);
}
