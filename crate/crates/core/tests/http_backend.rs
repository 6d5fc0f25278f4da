//! The http backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use distpara::cluster::ExamplePair;
use distpara::llmclient::{complete_chat, BackendConfig, BackendError, BackendKind};
use distpara::prompt::assemble_prompt;
use serde_json::Value;

struct Captured {
    headers: Vec<(String, String)>,
    body: Value,
}

struct Server {
    url: String,
    requests: Arc<Mutex<Vec<Captured>>>,
    handle: JoinHandle<()>,
}

/// Serves one scripted `(status, body)` per connection, then stops.
fn serve(script: Vec<(u16, String)>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&requests);
    let handle = std::thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let trimmed = line.trim_end();
                if trimmed.is_empty() {
                    break;
                }
                let (k, v) = trimmed.split_once(':').unwrap();
                headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k == "content-length")
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Captured {
                headers,
                body: serde_json::from_slice(&raw).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    Server { url, requests, handle }
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(url: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Http,
        endpoint_url: Some(url.to_string()),
        model_name: "test-model".into(),
        temperature: 0.7,
        timeout: Duration::from_secs(5),
        max_retries: 2,
        backoff_base: Duration::from_millis(5),
        api_key: Some("sk-test".into()),
        ..BackendConfig::mock()
    }
}

fn bundle() -> distpara::prompt::PromptBundle {
    let pairs = vec![ExamplePair {
        source: "A dog barks.".into(),
        target: "A hound yaps.".into(),
        measured_distance: 1.0,
        media_id: "m1".into(),
    }];
    assemble_prompt(&pairs, "A cat meows.", 0.5, "default-v1").unwrap()
}

#[test]
fn retries_after_rate_limit() {
    let server = serve(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (200, ok_body("  A kitten mews. ")),
    ]);
    let done = complete_chat(&bundle(), &config(&server.url), 0).unwrap();
    server.handle.join().unwrap();
    assert_eq!(done.text, "A kitten mews.");
    assert_eq!(done.requests, 2);

    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 2);
    let first = &requests[0];
    assert!(first
        .headers
        .iter()
        .any(|(k, v)| k == "authorization" && v == "Bearer sk-test"));
    assert_eq!(first.body["model"], "test-model");
    assert_eq!(first.body["temperature"], 0.7);
    let messages = first.body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 4);
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["content"], "A dog barks.");
    assert_eq!(messages[2]["role"], "assistant");
    assert_eq!(messages[3]["content"], "A cat meows.");
}

#[test]
fn auth_failure_is_not_retried() {
    let server = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let err = complete_chat(&bundle(), &config(&server.url), 0).unwrap_err();
    server.handle.join().unwrap();
    assert!(matches!(err, BackendError::Auth { status: 401 }), "{err}");
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let server = serve(vec![(503, "{}".into()), (500, "{}".into()), (502, "{}".into())]);
    let err = complete_chat(&bundle(), &config(&server.url), 0).unwrap_err();
    server.handle.join().unwrap();
    assert!(matches!(err, BackendError::Status { status: 502, .. }), "{err}");
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn empty_completion_is_retried() {
    let server = serve(vec![(200, ok_body("   ")), (200, ok_body("A kitten mews."))]);
    let done = complete_chat(&bundle(), &config(&server.url), 0).unwrap();
    server.handle.join().unwrap();
    assert_eq!(done.requests, 2);
}

#[test]
fn timeout_is_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    // accept connections but never answer
    let hold = std::thread::spawn(move || {
        let mut held = Vec::new();
        for _ in 0..2 {
            held.push(listener.accept().unwrap().0);
        }
        std::thread::sleep(Duration::from_millis(500));
    });
    let cfg = BackendConfig {
        timeout: Duration::from_millis(100),
        max_retries: 1,
        ..config(&url)
    };
    let err = complete_chat(&bundle(), &cfg, 0).unwrap_err();
    assert!(matches!(err, BackendError::Timeout), "{err}");
    hold.join().unwrap();
}

#[test]
fn missing_key_is_a_config_error() {
    let cfg = BackendConfig {
        api_key: None,
        ..config("http://127.0.0.1:9/v1")
    };
    assert!(matches!(
        complete_chat(&bundle(), &cfg, 0),
        Err(BackendError::Config(_))
    ));
}

#[test]
fn generation_respects_in_flight_limit_and_keeps_order() {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use distpara::cluster::ClusterIndex;
    use distpara::corpus::{build_groups, Corpus, GroundTruthRule};
    use distpara::distance::Metric;
    use distpara::llmclient::{generate_paraphrases, GenerationConfig};
    use distpara::prompt::TemplateRegistry;
    use distpara::textnorm::TaggerConfig;

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let active = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let captions = 6;
    {
        let (active, peak) = (Arc::clone(&active), Arc::clone(&peak));
        std::thread::spawn(move || {
            for _ in 0..captions {
                let (stream, _) = listener.accept().unwrap();
                let (active, peak) = (Arc::clone(&active), Arc::clone(&peak));
                std::thread::spawn(move || {
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut len = 0;
                    let mut line = String::new();
                    loop {
                        line.clear();
                        reader.read_line(&mut line).unwrap();
                        if line.trim_end().is_empty() {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                    let mut raw = vec![0; len];
                    reader.read_exact(&mut raw).unwrap();
                    let body: Value = serde_json::from_slice(&raw).unwrap();
                    let input = body["messages"].as_array().unwrap().last().unwrap()["content"]
                        .as_str()
                        .unwrap()
                        .to_string();
                    std::thread::sleep(Duration::from_millis(60));
                    let reply = ok_body(&format!("{input} again"));
                    active.fetch_sub(1, Ordering::SeqCst);
                    let mut stream = stream;
                    write!(
                        stream,
                        "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                        reply.len()
                    )
                    .unwrap();
                });
            }
        });
    }

    let texts = [
        "A dog barks.",
        "A cat meows.",
        "A bird chirps.",
        "A cow moos.",
        "A duck quacks.",
        "A horse neighs.",
    ];
    let (corpus, _) = Corpus::from_pairs(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("m{}", i / 2), t.to_string())),
    );
    assert_eq!(corpus.len(), captions);
    let tagger = TaggerConfig::default();
    let groups = build_groups(&corpus, GroundTruthRule::First).groups;
    let index = ClusterIndex::build(&groups, Metric::Jaccard, &tagger, 0.05).unwrap();
    let gen = GenerationConfig {
        distance_tolerance: 1.0,
        ..GenerationConfig::new(1.0, 1, 3)
    };
    let backend = BackendConfig {
        max_in_flight: 2,
        ..config(&url)
    };
    let out = generate_paraphrases(&corpus, &index, &gen, &backend, &tagger, &TemplateRegistry::default()).unwrap();
    assert!(out.failures.is_empty());
    let outputs: Vec<&str> = out.records.iter().map(|r| r.output_sentence.as_str()).collect();
    let expected: Vec<String> = texts.iter().map(|t| format!("{t} again")).collect();
    assert_eq!(outputs, expected);
    assert!(peak.load(Ordering::SeqCst) <= 2);
    assert!(peak.load(Ordering::SeqCst) >= 1);
}
