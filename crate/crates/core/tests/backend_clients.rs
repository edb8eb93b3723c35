mod common;

use std::sync::Arc;
use std::time::Duration;

use common::fast_endpoint;
use polyprompt_core::backend::{
    BackendClient, BackendEndpoint, BackendError, ImageParams, InjectedFailure, MockBackend, ProtocolServer,
    ResponseCache, Route, Transport, Verdict,
};
use polyprompt_core::prompt::LanguageCode;

fn lang(code: &str) -> LanguageCode {
    LanguageCode::from_code(code).unwrap()
}

fn client_with(endpoint: BackendEndpoint, mock: &Arc<MockBackend>, cache: Arc<ResponseCache>) -> BackendClient {
    let transport: Arc<dyn Transport> = mock.clone();
    BackendClient::new(endpoint, transport, cache).unwrap()
}

fn client(mock: &Arc<MockBackend>) -> BackendClient {
    client_with(fast_endpoint("mock://t"), mock, Arc::new(ResponseCache::in_memory()))
}

fn small() -> ImageParams {
    ImageParams { width: 16, height: 16 }
}

#[test]
fn repeated_requests_reach_upstream_once() {
    let mock = Arc::new(MockBackend::new());
    let c = client(&mock);
    let png = c.generate_image("English: A cat.", 1, small()).unwrap().png_bytes;
    for _ in 0..3 {
        assert_eq!(c.translate("A cat.", &lang("en"), &lang("de")).unwrap(), "«de» A cat.");
        c.embed_text("A cat.").unwrap();
        c.embed_png(&png).unwrap();
        c.judge("A cat.", &png).unwrap();
        c.reward("A cat.", &png).unwrap();
        c.vqa("a cat?", &png).unwrap();
        c.paraphrase("A cat.", 2).unwrap();
    }
    for route in [
        Route::Translate,
        Route::EmbedText,
        Route::EmbedImage,
        Route::Judge,
        Route::Reward,
        Route::Vqa,
        Route::Paraphrase,
    ] {
        assert_eq!(mock.calls(route), 1, "{route}");
    }
    assert_eq!(c.stats().cache_hits, 14);
}

#[test]
fn generation_bypasses_cache_unless_enabled() {
    let mock = Arc::new(MockBackend::new());
    let c = client(&mock);
    let a = c.generate_image("English: A cat.", 1, small()).unwrap();
    let b = c.generate_image("English: A cat.", 1, small()).unwrap();
    assert_eq!(a, b);
    assert_eq!(mock.calls(Route::Generate), 2);

    let mut e = fast_endpoint("mock://t");
    e.cache_generation = true;
    let c = client_with(e, &mock, Arc::new(ResponseCache::in_memory()));
    mock.reset_counters();
    c.generate_image("English: A cat.", 1, small()).unwrap();
    c.generate_image("English: A cat.", 1, small()).unwrap();
    assert_eq!(mock.calls(Route::Generate), 1);
}

#[test]
fn disk_cache_persists_and_is_keyed_by_model() {
    let dir = tempfile::tempdir().unwrap();
    let cache = || Arc::new(ResponseCache::on_disk(dir.path()).unwrap());
    let first = Arc::new(MockBackend::new());
    client_with(fast_endpoint("mock://t"), &first, cache())
        .translate("A cat.", &lang("en"), &lang("fr"))
        .unwrap();
    assert_eq!(first.calls(Route::Translate), 1);

    let second = Arc::new(MockBackend::new());
    let c = client_with(fast_endpoint("mock://t"), &second, cache());
    assert_eq!(c.translate("A cat.", &lang("en"), &lang("fr")).unwrap(), "«fr» A cat.");
    assert_eq!(second.calls(Route::Translate), 0);

    let mut other = fast_endpoint("mock://t");
    other.model_id = Some("another-model".into());
    client_with(other, &second, cache())
        .translate("A cat.", &lang("en"), &lang("fr"))
        .unwrap();
    assert_eq!(second.calls(Route::Translate), 1);

    let stats = cache().stats().unwrap();
    assert_eq!(stats.entries, 2);
    let shard = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    let names: Vec<String> = std::fs::read_dir(&shard)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.ends_with(".meta.json")), "{names:?}");
    assert!(names.iter().all(|n| n.starts_with(&*shard.file_name().unwrap().to_string_lossy())));

    assert_eq!(cache().clear().unwrap(), 2);
    assert_eq!(cache().stats().unwrap().entries, 0);
}

#[test]
fn transient_failures_are_retried() {
    let mock = Arc::new(MockBackend::new());
    let c = client(&mock);
    for failure in [
        InjectedFailure::Network,
        InjectedFailure::Timeout,
        InjectedFailure::Status(429),
        InjectedFailure::Status(503),
    ] {
        mock.reset_counters();
        mock.fail_next(Route::EmbedText, 2, failure);
        let text = format!("retry {failure:?}");
        assert!(c.embed_text(&text).is_ok(), "{failure:?}");
        assert_eq!(mock.calls(Route::EmbedText), 3, "{failure:?}");
    }
}

#[test]
fn exhausted_and_permanent_failures_surface_typed_errors() {
    let mock = Arc::new(MockBackend::new());
    let c = client(&mock);
    mock.fail_next(Route::Translate, 3, InjectedFailure::Network);
    match c.translate("A dog.", &lang("en"), &lang("de")) {
        Err(BackendError::Network { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    mock.fail_next(Route::Translate, 3, InjectedFailure::Timeout);
    assert!(matches!(
        c.translate("A dog.", &lang("en"), &lang("de")),
        Err(BackendError::Timeout { attempts: 3, .. })
    ));

    mock.reset_counters();
    mock.fail_next(Route::Translate, 1, InjectedFailure::Status(400));
    assert!(matches!(
        c.translate("A dog.", &lang("en"), &lang("de")),
        Err(BackendError::Upstream { status: 400, .. })
    ));
    assert_eq!(mock.calls(Route::Translate), 1);

    mock.reset_counters();
    assert!(matches!(
        c.generate_image("English: XREFUSE", 0, small()),
        Err(BackendError::ContentRefused(_))
    ));
    assert_eq!(mock.calls(Route::Generate), 1);
}

#[test]
fn invalid_responses_are_rejected_and_not_cached() {
    let mock = Arc::new(MockBackend::new().with_vqa_probability("how many?", 1.5));
    let mut e = fast_endpoint("mock://t");
    e.embed_dim = Some(8);
    let c = client_with(e, &mock, Arc::new(ResponseCache::in_memory()));
    for _ in 0..2 {
        assert!(matches!(
            c.embed_text("A cat."),
            Err(BackendError::DimensionMismatch { expected: 8, got: 32 })
        ));
    }
    assert_eq!(mock.calls(Route::EmbedText), 2);

    let png = c.generate_image("English: A cat.", 1, small()).unwrap().png_bytes;
    assert!(matches!(c.vqa("how many?", &png), Err(BackendError::ProbabilityOutOfRange(p)) if p == 1.5));
    assert!(matches!(c.embed_png(b"not a png"), Err(BackendError::InvalidImage(_))));
    assert_eq!(mock.calls(Route::EmbedImage), 0);
    assert!(matches!(
        c.translate("A cat.", &lang("de"), &lang("de")),
        Err(BackendError::InvalidLanguagePair(_))
    ));
    let short = Arc::new(MockBackend::new().with_paraphrase_limit(1));
    assert!(matches!(
        client(&short).paraphrase("A cat.", 3),
        Err(BackendError::TooFewParaphrases { expected: 3, got: 1 })
    ));
}

#[test]
fn burst_never_exceeds_in_flight_limit() {
    let limit = 3;
    let mock = Arc::new(MockBackend::new().with_latency(Duration::from_millis(15)));
    let mut e = fast_endpoint("mock://t");
    e.max_in_flight = limit;
    let c = client_with(e, &mock, Arc::new(ResponseCache::in_memory()));
    std::thread::scope(|s| {
        for i in 0..limit * 10 {
            let c = &c;
            s.spawn(move || c.embed_text(&format!("caption {i}")).unwrap());
        }
    });
    assert_eq!(mock.calls(Route::EmbedText), limit * 10);
    assert!(mock.peak_concurrency() <= limit, "peak {}", mock.peak_concurrency());
    assert_eq!(mock.peak_concurrency(), limit);
}

#[test]
fn http_round_trip_matches_in_process_mock() {
    let mock = Arc::new(MockBackend::new());
    let server = ProtocolServer::start("127.0.0.1:0", mock.clone(), "mock-v1".into()).unwrap();
    let endpoint = fast_endpoint(&server.url());
    let http = BackendClient::new(
        endpoint.clone(),
        polyprompt_core::backend::transport_for(&endpoint, &Default::default()),
        Arc::new(ResponseCache::in_memory()),
    )
    .unwrap();
    let local = client(&Arc::new(MockBackend::new()));

    assert_eq!(http.translate("A red car.", &lang("en"), &lang("de")).unwrap(), "«de» A red car.");
    let a = http.generate_image("English: A red car.", 4, small()).unwrap();
    let b = local.generate_image("English: A red car.", 4, small()).unwrap();
    assert_eq!(a.png_bytes, b.png_bytes);
    assert_eq!(http.embed_png(&a.png_bytes).unwrap().values, local.embed_png(&b.png_bytes).unwrap().values);
    assert_eq!(http.judge("XFAIL", &a.png_bytes).unwrap(), Verdict::Incorrect);
    assert_eq!(http.paraphrase("A red car.", 2).unwrap(), ["A red car. ¶1", "A red car. ¶2"]);
    assert!(matches!(
        http.generate_image("English: XREFUSE", 0, small()),
        Err(BackendError::ContentRefused(_))
    ));
    assert_eq!(mock.calls(Route::Generate), 2);

    mock.fail_next(Route::EmbedText, 1, InjectedFailure::Status(503));
    assert!(http.embed_text("over the wire").is_ok());
    assert_eq!(mock.calls(Route::EmbedText), 2);
}

#[test]
fn http_server_error_bodies() {
    let mock = Arc::new(MockBackend::new());
    let server = ProtocolServer::start("127.0.0.1:0", mock, "mock-v1".into()).unwrap();
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();

    let mut health = agent.get(format!("{}/healthz", server.url())).call().unwrap();
    assert_eq!(health.status(), 200);
    let body: serde_json::Value = health.body_mut().read_json().unwrap();
    assert_eq!(body["model_ids"]["embed_text"], "mock-v1");

    let mut bad = agent
        .post(format!("{}/v1/translate", server.url()))
        .content_type("application/json")
        .send("{not json")
        .unwrap();
    assert_eq!(bad.status(), 400);
    let body: serde_json::Value = bad.body_mut().read_json().unwrap();
    assert_eq!(body["error"]["code"], "bad_request");

    let missing = agent.post(format!("{}/v1/nope", server.url())).send("{}").unwrap();
    assert_eq!(missing.status(), 404);
}

#[test]
fn unreachable_server_is_a_network_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let endpoint = fast_endpoint(&url);
    let c = BackendClient::new(
        endpoint.clone(),
        polyprompt_core::backend::transport_for(&endpoint, &Default::default()),
        Arc::new(ResponseCache::in_memory()),
    )
    .unwrap();
    assert!(matches!(c.embed_text("x"), Err(BackendError::Network { attempts: 3, .. })));
    assert_eq!(c.stats().upstream_requests, 3);
}
