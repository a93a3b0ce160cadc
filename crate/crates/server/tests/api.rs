use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use nl2dsl::domains::{builtin_domains, apply_text_edit, EditDocument};
use nl2dsl::dsl::parse_program;
use nl2dsl::nlp::BuiltinAnalyzer;
use nl2dsl::training::{train_all, TrainConfig};
use nl2dsl_server::{router, AppState, DomainInfo};

const P1: &str = "INSERT(STRING(*),START,IterScope(LINESCOPE,CONTAINS(STRING(P.O. BOX)),ALL))";
const PO_BOX_SENTENCE: &str = "Add a \"*\" at the beginning of the line in which the string \"P.O. BOX\" occurs";

fn text_editing_bundle() -> &'static str {
    static B: OnceLock<String> = OnceLock::new();
    B.get_or_init(|| {
        let all = builtin_domains(&BuiltinAnalyzer::new());
        let te = &all["text-editing"];
        let (b, _) = train_all("text-editing", &te.grammar, &te.dictionary, &te.corpus, &TrainConfig::default()).unwrap();
        b.save()
    })
}

fn trained_state() -> Arc<AppState> {
    let mut bundles = BTreeMap::new();
    bundles.insert("text-editing".to_string(), text_editing_bundle().to_string());
    Arc::new(AppState::new(builtin_domains(&BuiltinAnalyzer::new()), &bundles))
}

fn fresh_state() -> Arc<AppState> {
    Arc::new(AppState::new(builtin_domains(&BuiltinAnalyzer::new()), &BTreeMap::new()))
}

async fn call(state: Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Option<String>, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(b) => Body::from(b.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let res = router(state).oneshot(req).await.unwrap();
    let status = res.status();
    let version = res
        .headers()
        .get("x-api-version")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, version, value)
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn po_box_sentence_ranks_insert_first() {
    let (status, version, body) = call(
        trained_state(),
        "POST",
        "/api/synthesize",
        Some(json!({"domain": "text-editing", "sentence": PO_BOX_SENTENCE})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(version.as_deref(), Some("1"));
    let cands = body["candidates"].as_array().unwrap();
    assert!(cands.len() >= 5);
    assert_eq!(cands[0]["program_text"], P1);
    assert_eq!(cands[0]["rank"], 1);
    let ranks: Vec<u64> = cands.iter().map(|c| c["rank"].as_u64().unwrap()).collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    let words: Vec<&str> = cands[0]["word_mappings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["word"].as_str().unwrap())
        .collect();
    assert!(words.contains(&"P.O. BOX"));
    assert!(body["elapsed_ms"].as_f64().is_some());
}

#[tokio::test]
async fn max_results_limits_candidates() {
    let (status, _, body) = call(
        trained_state(),
        "POST",
        "/api/synthesize",
        Some(json!({"domain": "text-editing", "sentence": PO_BOX_SENTENCE, "max_results": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["candidates"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn synthesis_is_repeatable() {
    let req = json!({"domain": "text-editing", "sentence": PO_BOX_SENTENCE});
    let (_, _, a) = call(trained_state(), "POST", "/api/synthesize", Some(req.clone())).await;
    let (_, _, b) = call(trained_state(), "POST", "/api/synthesize", Some(req)).await;
    assert_eq!(a["candidates"], b["candidates"]);
}

#[tokio::test]
async fn synthesis_errors() {
    let state = trained_state();
    let (s, v, b) = call(state.clone(), "POST", "/api/synthesize", Some(json!({"domain": "chess", "sentence": "x"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v.as_deref(), Some("1"));
    assert_error(&b, "unknown_domain");

    let (s, _, b) = call(state.clone(), "POST", "/api/synthesize", Some(json!({"domain": "text-editing", "sentence": "  "}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&b, "empty_sentence");

    let (s, _, b) = call(state.clone(), "POST", "/api/synthesize", Some(json!({"domain": "automata", "sentence": "even"}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_error(&b, "untrained_domain");

    let (s, _, b) = call(state, "POST", "/api/synthesize", Some(json!({"sentence": 3}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&b, "bad_request");
}

#[tokio::test]
async fn long_sentence_is_rejected_with_413() {
    let sentence = vec!["line"; 200].join(" ");
    let (s, _, b) = call(
        trained_state(),
        "POST",
        "/api/synthesize",
        Some(json!({"domain": "text-editing", "sentence": sentence})),
    )
    .await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error(&b, "sentence_too_long");
}

#[tokio::test]
async fn capacity_overflow_is_413_with_cap() {
    let mut bundles = BTreeMap::new();
    bundles.insert("text-editing".to_string(), text_editing_bundle().to_string());
    let state = Arc::new(AppState::new(builtin_domains(&BuiltinAnalyzer::new()), &bundles).with_capacity(5));
    let (s, _, b) = call(state, "POST", "/api/synthesize", Some(json!({"domain": "text-editing", "sentence": PO_BOX_SENTENCE}))).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error(&b, "capacity_exceeded");
    assert_eq!(b["cap"], 5);
    assert!(b.get("candidates").is_none());
}

#[tokio::test]
async fn preview_runs_text_edits() {
    let doc = "John Smith\nP.O. BOX 7\n";
    let (s, _, b) = call(
        fresh_state(),
        "POST",
        "/api/preview",
        Some(json!({"domain": "text-editing", "program_text": P1, "document": doc})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let g = &builtin_domains(&BuiltinAnalyzer::new())["text-editing"].grammar;
    let want = apply_text_edit(&parse_program(g, P1).unwrap(), &EditDocument::new(doc)).unwrap();
    assert_eq!(b["result_document"], want.text.as_str());
    assert_eq!(b["result_document"], "John Smith\n*P.O. BOX 7\n");
}

#[tokio::test]
async fn preview_identity_and_description() {
    let doc = "banana";
    let (s, _, b) = call(
        fresh_state(),
        "POST",
        "/api/preview",
        Some(json!({"domain": "text-editing", "program_text": "REPLACE(SelectStr(STRING(a), ALWAYS, ALL), BY(STRING(a)), DOCUMENT)", "document": doc})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["result_document"], doc);

    let (s, _, b) = call(
        fresh_state(),
        "POST",
        "/api/preview",
        Some(json!({"domain": "automata", "program_text": "ISEVEN(DIFF(COUNT(STRING(0)), COUNT(STRING(1))))"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert!(b["rendered_description"].as_str().unwrap().starts_with("iseven\n"));
    assert!(b.get("result_document").is_none());
}

#[tokio::test]
async fn preview_errors() {
    let (s, _, b) = call(
        fresh_state(),
        "POST",
        "/api/preview",
        Some(json!({"domain": "text-editing", "program_text": "INSERT((", "document": ""})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&b, "parse_error");

    let (s, _, b) = call(
        fresh_state(),
        "POST",
        "/api/preview",
        Some(json!({"domain": "text-editing", "program_text": "PRINT(SelectStr(WORDTOK, ALWAYS, ALL), IterScope(WORDSCOPE, ALWAYS, ALL))", "document": "a"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{b}");

    let (s, _, b) = call(
        fresh_state(),
        "POST",
        "/api/preview",
        Some(json!({"domain": "text-editing", "program_text": "INSERT(STRING(x), START, IterScope(WORDSCOPE, ALWAYS, INTEGER(0)))", "document": "a"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{b}");
    assert_eq!(b["result_document"], "a");
}

#[tokio::test]
async fn domain_listing_and_training() {
    let state = fresh_state();
    let (s, v, b) = call(state.clone(), "GET", "/api/domains", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_deref(), Some("1"));
    let list: Vec<DomainInfo> = serde_json::from_value(b).unwrap();
    assert_eq!(list.len(), 3);
    assert!(list.iter().all(|d| !d.trained && d.corpus_size >= 10));

    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(
        AppState::new(builtin_domains(&BuiltinAnalyzer::new()), &BTreeMap::new()).with_models_dir(dir.path().to_path_buf()),
    );
    let (s, _, b) = call(state.clone(), "POST", "/api/train", Some(json!({"domain": "text-editing"}))).await;
    assert_eq!(s, StatusCode::OK, "{b}");
    assert!(dir.path().join("text-editing.json").is_file());
    let (_, _, b) = call(state.clone(), "GET", "/api/domains", None).await;
    let list: Vec<DomainInfo> = serde_json::from_value(b).unwrap();
    let te = list.iter().find(|d| d.name == "text-editing").unwrap();
    assert!(te.trained);
    let (s, _, _) = call(state, "POST", "/api/synthesize", Some(json!({"domain": "text-editing", "sentence": PO_BOX_SENTENCE}))).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn no_domains_gives_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let none = nl2dsl::domains::load_domains(&dir.path().join("missing"), &BuiltinAnalyzer::new()).unwrap();
    let state = Arc::new(AppState::new(none, &BTreeMap::new()));
    let (s, _, b) = call(state, "GET", "/api/domains", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, json!([]));
}

#[tokio::test]
async fn unknown_route_has_error_body() {
    let (s, v, b) = call(fresh_state(), "GET", "/api/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v.as_deref(), Some("1"));
    assert_error(&b, "not_found");
}
