use std::path::Path;
use std::process::{Command, Output};

fn nl2dsl(home: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nl2dsl"))
        .args(args)
        .env("NL2DSL_HOME", home)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let home = tempfile::tempdir().unwrap();
    let o = nl2dsl(home.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let home = tempfile::tempdir().unwrap();
    assert_eq!(nl2dsl(home.path(), &["synth", "text-editing"]).status.code(), Some(1));
    assert_eq!(nl2dsl(home.path(), &["eval", "text-editing", "--ablate", "foo"]).status.code(), Some(1));
    assert_eq!(nl2dsl(home.path(), &["--gamma", "0", "eval", "text-editing"]).status.code(), Some(1));
    assert_eq!(nl2dsl(home.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_domain_is_a_runtime_error() {
    let home = tempfile::tempdir().unwrap();
    let o = nl2dsl(home.path(), &["train", "chess"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("chess"));
}

#[test]
fn train_then_synth_url_sentence() {
    let home = tempfile::tempdir().unwrap();
    let o = nl2dsl(home.path(), &["train", "text-editing"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(home.path().join("models/text-editing.json").is_file());
    assert!(stdout(&o).lines().any(|l| l.starts_with("weights\t")));

    let sentence = r#"Print data between "<url>" and "</url>""#;
    let o = nl2dsl(home.path(), &["synth", "text-editing", sentence, "--top", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split('\t').collect()).collect();
    assert!(!rows.is_empty() && rows.len() <= 3);
    for r in &rows {
        assert_eq!(r.len(), 3);
        r[0].parse::<usize>().unwrap();
        r[1].parse::<f64>().unwrap();
    }
    assert_eq!(rows[0][0], "1");
    assert!(rows[0][2].starts_with("PRINT("), "{out}");
    assert!(rows[0][2].contains("BETWEEN(STRING(<url>),TO(STRING(</url>)))"), "{out}");

    let o = nl2dsl(home.path(), &["synth", "text-editing", sentence, "--json", "--top", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let first = &v.as_array().unwrap()[0];
    for key in ["rank", "combined", "cov", "map", "str", "program_text", "word_mappings"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(first["program_text"], rows[0][2]);
}

#[test]
fn eval_is_byte_identical_across_runs() {
    let home = tempfile::tempdir().unwrap();
    let a = nl2dsl(home.path(), &["eval", "text-editing", "--k", "5", "--seed", "7"]);
    let b = nl2dsl(home.path(), &["eval", "text-editing", "--k", "5", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("5-fold cross-validation, seed 7"));
}

#[test]
fn eval_writes_report_table_and_ablates() {
    let home = tempfile::tempdir().unwrap();
    let table = home.path().join("out.tsv");
    let o = nl2dsl(
        home.path(),
        &["eval", "automata", "--k", "1", "--ablate", "map", "--report", table.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("dropped: map"));
    let tsv = std::fs::read_to_string(&table).unwrap();
    assert_eq!(tsv.lines().count(), 16);
    assert!(tsv.starts_with("pair\tfold\trank"));
}

#[test]
fn eval_with_transferred_weights() {
    let home = tempfile::tempdir().unwrap();
    let o = nl2dsl(home.path(), &["eval", "atis", "--k", "1", "--transfer-from", "automata"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("domain: atis"));
}

#[test]
fn audit_of_shipped_domain_is_clean() {
    let home = tempfile::tempdir().unwrap();
    let o = nl2dsl(home.path(), &["audit", "text-editing"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
}

#[test]
fn interactive_audit_extends_dictionary() {
    use std::io::Write;
    let home = tempfile::tempdir().unwrap();
    let dir = home.path().join("domains/automata");
    std::fs::create_dir_all(&dir).unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../domains/automata");
    for f in ["grammar.dsl", "corpus.pairs", "synonyms.txt"] {
        std::fs::copy(root.join(f), dir.join(f)).unwrap();
    }
    let dict = std::fs::read_to_string(root.join("dict.dict")).unwrap();
    let trimmed: Vec<&str> = dict.lines().filter(|l| !l.trim_end().ends_with("ISEVEN")).collect();
    assert!(trimmed.len() < dict.lines().count());
    std::fs::write(dir.join("dict.dict"), trimmed.join("\n") + "\n").unwrap();

    let o = nl2dsl(home.path(), &["audit", "automata"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ISEVEN"));

    let mut child = Command::new(env!("CARGO_BIN_EXE_nl2dsl"))
        .args(["audit", "automata", "--interactive"])
        .env("NL2DSL_HOME", home.path())
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let gaps = stdout(&o).lines().count();
    let mut input = String::from("even ISEVEN\n");
    input.push_str(&"\n".repeat(gaps));
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let done = child.wait_with_output().unwrap();
    assert_eq!(done.status.code(), Some(0), "{}", String::from_utf8_lossy(&done.stderr));
    assert!(stdout(&done).contains("added\t"));

    let o = nl2dsl(home.path(), &["audit", "automata"]);
    assert!(!stdout(&o).contains("ISEVEN"), "{}", stdout(&o));
}
