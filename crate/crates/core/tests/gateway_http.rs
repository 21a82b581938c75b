mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{StubResponse, StubServer};
use edutag::gateway::{request_body, CompletionParams, FinishReason, Gateway, GatewayError, HttpBackend, RetryPolicy};

fn gateway(url: &str) -> Gateway {
    let backend = HttpBackend::new(url, Some("test-key".into()), Duration::from_secs(5));
    Gateway::new(Arc::new(backend)).with_retry(RetryPolicy {
        max_attempts: 3,
        initial_backoff: Duration::from_millis(10),
        multiplier: 2.0,
        max_backoff: Duration::from_millis(40),
        max_total_wait: Duration::from_secs(2),
    })
}

#[test]
fn default_request_carries_golden_parameters() {
    let server = StubServer::start(vec![], StubResponse::ok("## Overall Performance\nfine"));
    let res = gateway(&server.url).complete("Analyse this student.", &CompletionParams::default()).unwrap();
    assert_eq!(res.text, "## Overall Performance\nfine");
    assert_eq!(res.retries, 0);
    assert_eq!(res.usage.total_tokens, 15);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    let req = &reqs[0];
    assert_eq!(req.method, "POST");
    assert_eq!(req.path, "/v1/chat/completions");
    assert_eq!(req.header("authorization"), Some("Bearer test-key"));
    assert!(req.header("content-type").unwrap().starts_with("application/json"));

    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["model"], "gpt-4");
    assert_eq!(body["temperature"].as_f64(), Some(0.4));
    assert_eq!(body["max_tokens"].as_u64(), Some(1000));
    assert_eq!(body["top_p"].as_f64(), Some(1.0));
    assert_eq!(body["frequency_penalty"].as_f64(), Some(0.0));
    assert_eq!(body["presence_penalty"].as_f64(), Some(0.0));
    assert_eq!(body["messages"], serde_json::json!([{"role": "user", "content": "Analyse this student."}]));
    assert_eq!(req.body, request_body("Analyse this student.", &CompletionParams::default()));
}

#[test]
fn rate_limit_then_success_counts_one_retry() {
    let server = StubServer::start(
        vec![StubResponse::status(429, r#"{"error":"slow down"}"#).with_header("Retry-After", "0")],
        StubResponse::ok("done"),
    );
    let res = gateway(&server.url).complete("p", &CompletionParams::default()).unwrap();
    assert_eq!(res.retries, 1);
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn auth_failure_is_not_retried() {
    let server = StubServer::start(vec![], StubResponse::status(401, r#"{"error":"bad key"}"#));
    let err = gateway(&server.url).complete("p", &CompletionParams::default()).unwrap_err();
    assert!(matches!(err, GatewayError::Auth(_)), "{err:?}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let server = StubServer::start(vec![], StubResponse::status(503, "unavailable"));
    let err = gateway(&server.url).complete("p", &CompletionParams::default()).unwrap_err();
    match err {
        GatewayError::RetriesExhausted { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn length_finish_is_reported_as_truncation() {
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "partial"}, "finish_reason": "length"}]
    });
    let server = StubServer::start(vec![], StubResponse::status(200, &body.to_string()));
    match gateway(&server.url).complete("p", &CompletionParams::default()) {
        Err(GatewayError::Truncated(res)) => {
            assert_eq!(res.text, "partial");
            assert_eq!(res.finish_reason, FinishReason::Length);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_a_network_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gw = gateway(&format!("http://127.0.0.1:{port}/v1/chat/completions"));
    let err = gw.complete("p", &CompletionParams::default()).unwrap_err();
    assert!(matches!(err, GatewayError::RetriesExhausted { .. }), "{err:?}");
}

#[test]
fn batch_keeps_input_order() {
    let server = StubServer::start(vec![], StubResponse::ok("ok"));
    let jobs: Vec<(usize, String)> = (0..6).map(|i| (i, format!("prompt {i}"))).collect();
    let out = gateway(&server.url).with_max_concurrency(3).complete_batch(&jobs, &CompletionParams::default());
    let keys: Vec<usize> = out.iter().map(|(k, _)| *k).collect();
    assert_eq!(keys, (0..6).collect::<Vec<_>>());
    assert!(out.iter().all(|(_, r)| r.is_ok()));
    let mut prompts: Vec<String> = server
        .requests()
        .iter()
        .map(|r| serde_json::from_str::<serde_json::Value>(&r.body).unwrap()["messages"][0]["content"].to_string())
        .collect();
    prompts.sort();
    assert_eq!(prompts.len(), 6);
    assert_eq!(prompts[0], "\"prompt 0\"");
}
