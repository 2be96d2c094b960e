//! Chat client and model-backed agents against a local scripted server.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use proptest::prelude::*;
use serde_json::{json, Value};

use focusnav_core::agents::{AgentRole, EventLog};
use focusnav_core::harness::{run_episode, RunConfig};
use focusnav_core::llm::{
    http_backends, parse_structured, ChatClient, ChatMessage, EndpointConfig, LlmError, Schema,
};
use focusnav_core::sim::{generate_world, OracleScanner, Profile};

#[derive(Debug, Clone)]
struct Seen {
    auth: Option<String>,
    body: Value,
}

type Responder = Box<dyn FnMut(&Value) -> (u16, String) + Send>;

struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

fn chat_reply(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn serve(mut respond: Responder) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            if handle(stream, &mut respond, &log).is_err() {
                continue;
            }
        }
    });
    Stub { url, seen }
}

/// Serves requests on one connection until the peer closes it.
fn handle(
    stream: TcpStream,
    respond: &mut Responder,
    log: &Mutex<Vec<Seen>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut out = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let mut len = 0;
        let mut auth = None;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h)?;
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            let (k, v) = h.split_once(':').unwrap_or((h, ""));
            match k.to_ascii_lowercase().as_str() {
                "content-length" => len = v.trim().parse().unwrap_or(0),
                "authorization" => auth = Some(v.trim().to_string()),
                _ => {}
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body)?;
        let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        let (status, text) = respond(&body);
        log.lock().unwrap().push(Seen { auth, body });
        write!(
            out,
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
            text.len()
        )?;
        out.flush()?;
    }
}

fn scripted(replies: Vec<(u16, String)>) -> Stub {
    let mut q: VecDeque<_> = replies.into();
    serve(Box::new(move |_| {
        q.pop_front().unwrap_or((500, "exhausted".into()))
    }))
}

fn config(url: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: url.to_string(),
        backoff_ms: 1,
        timeout_secs: 10.0,
        ..EndpointConfig::default()
    }
}

#[test]
fn retries_through_server_errors() {
    let stub = scripted(vec![
        (500, "boom".into()),
        (500, "boom".into()),
        (200, chat_reply("hello")),
    ]);
    let events = Arc::new(EventLog::default());
    let client = ChatClient::new(config(&stub.url), Some(events.clone())).unwrap();
    let text = client
        .chat(AgentRole::Perception, &[ChatMessage::user("hi")])
        .unwrap();
    assert_eq!(text, "hello");
    assert_eq!(stub.seen.lock().unwrap().len(), 3);
    let kinds: Vec<String> = events.drain().into_iter().map(|e| e.kind).collect();
    assert_eq!(kinds, ["llm_error", "llm_error", "llm_call"]);
}

#[test]
fn exhaustion_and_client_errors() {
    let stub = scripted(vec![
        (503, "a".into()),
        (429, "b".into()),
        (500, "c".into()),
    ]);
    let client = ChatClient::new(config(&stub.url), None).unwrap();
    match client.chat(AgentRole::Decision, &[ChatMessage::user("x")]) {
        Err(LlmError::Exhausted { attempts: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    let stub = scripted(vec![(400, "bad".into())]);
    let client = ChatClient::new(config(&stub.url), None).unwrap();
    assert!(matches!(
        client.chat(AgentRole::Decision, &[ChatMessage::user("x")]),
        Err(LlmError::Status { status: 400, .. })
    ));
    assert_eq!(stub.seen.lock().unwrap().len(), 1);
    let stub = scripted(vec![(200, "{\"nope\": 1}".into())]);
    let client = ChatClient::new(config(&stub.url), None).unwrap();
    assert!(matches!(
        client.chat(AgentRole::Decision, &[ChatMessage::user("x")]),
        Err(LlmError::Decode(_))
    ));
}

#[test]
fn request_shape_and_auth() {
    std::env::set_var("FOCUSNAV_STUB_KEY_A", "sk-shape-0001");
    let stub = scripted(vec![(200, chat_reply("ok"))]);
    let mut cfg = config(&stub.url);
    cfg.api_key_env = Some("FOCUSNAV_STUB_KEY_A".into());
    cfg.models.perception = "vision-model".into();
    let client = ChatClient::new(cfg, None).unwrap();
    client
        .chat(
            AgentRole::Perception,
            &[ChatMessage::system("s"), ChatMessage::user("u")],
        )
        .unwrap();
    let seen = stub.seen.lock().unwrap()[0].clone();
    assert_eq!(seen.auth.as_deref(), Some("Bearer sk-shape-0001"));
    assert_eq!(seen.body["model"], "vision-model");
    assert_eq!(seen.body["temperature"], 0.0);
    assert_eq!(
        seen.body["messages"][0],
        json!({"role": "system", "content": "s"})
    );
    assert_eq!(seen.body["messages"][1]["role"], "user");
}

const SECRET: &str = "sk-live-7c1f0a9d2b4e";

/// Every reply is prose with no JSON: every agent must fall back, the
/// episode must still finish, and the key must not leak into the trace.
#[test]
fn garbage_replies_fall_back_and_never_leak_secrets() {
    std::env::set_var("FOCUSNAV_STUB_KEY_B", SECRET);
    let stub = serve(Box::new(|_| {
        (200, chat_reply("I am not sure what you mean."))
    }));
    let mut cfg = config(&stub.url);
    cfg.api_key_env = Some("FOCUSNAV_STUB_KEY_B".into());
    let world = Arc::new(generate_world(3, Profile::Corridor));
    let backends = http_backends(cfg, Arc::new(OracleScanner::new(world.clone()))).unwrap();
    let run = RunConfig {
        max_steps: Some(3),
        workers: 1,
        ..RunConfig::default()
    };
    let trace = run_episode(&world.episode, &backends, &run).unwrap();
    assert!(!trace.steps.is_empty());
    let text = trace.to_jsonl();
    assert!(text.contains("parse_fallback"));
    assert!(text.contains("llm_call"));
    // neutral defaults everywhere
    for step in &trace.steps {
        assert!(step.semantic_values.iter().all(|(_, v)| v == 0.5));
        if let focusnav_core::Decision::Move { target } = &step.decision {
            assert_eq!(target, &step.candidates[0].waypoint_id);
        }
    }
    let seen = stub.seen.lock().unwrap();
    assert!(seen
        .iter()
        .all(|s| s.auth.as_deref() == Some(&format!("Bearer {SECRET}")[..])));
    // secrets audit over the emitted file
    assert!(!text.contains(SECRET));
    assert!(!text.contains("Bearer"));
    let key_like = text
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_'))
        .filter(|w| w.starts_with("sk-"))
        .count();
    assert_eq!(key_like, 0);
}

/// A well-behaved model answering each prompt with the expected JSON.
#[test]
fn structured_replies_drive_the_episode() {
    let stub = serve(Box::new(|body| {
        let prompt = body["messages"]
            .as_array()
            .and_then(|m| m.last())
            .map(|m| m["content"].to_string())
            .unwrap_or_default();
        let content = if prompt.contains("\\\"question\\\"") {
            r#"{"question": "What is on the wall?", "region": [0, 0, 512, 256]}"#.to_string()
        } else if prompt.contains("\\\"sufficient\\\"") {
            r#"{"sufficient": true}"#.to_string()
        } else if prompt.contains("\\\"action\\\"") {
            r#"{"action": "stop"}"#.to_string()
        } else if prompt.contains("\\\"values\\\"") {
            r#"```json
{"values": {}}
```"#
                .to_string()
        } else {
            "a white wall".to_string()
        };
        (200, chat_reply(&content))
    }));
    let world = Arc::new(generate_world(4, Profile::Corridor));
    let backends = http_backends(
        config(&stub.url),
        Arc::new(OracleScanner::new(world.clone())),
    )
    .unwrap();
    let trace = run_episode(&world.episode, &backends, &RunConfig::default()).unwrap();
    assert_eq!(trace.steps.len(), 1);
    let step = &trace.steps[0];
    assert_eq!(step.queries.len(), 1);
    assert_eq!(step.queries[0].answer, "a white wall");
    assert_eq!(step.decision, focusnav_core::Decision::Stop);
    assert!(
        !trace.to_jsonl().contains("parse_fallback"),
        "{}",
        trace.to_jsonl()
    );
}

proptest! {
    #[test]
    fn parser_never_panics(text in ".{0,200}") {
        for schema in [Schema::QueryRegion, Schema::Verdict, Schema::ValueMap, Schema::Decision] {
            let _ = parse_structured(&text, schema);
        }
    }

    #[test]
    fn parsed_values_are_in_range(vals in prop::collection::btree_map("[a-z]{1,4}", -5.0f64..5.0, 0..6)) {
        let text = format!("noise ```json\n{}\n``` trailing", serde_json::to_string(&vals).unwrap());
        match parse_structured(&text, Schema::ValueMap) {
            Ok(focusnav_core::llm::Structured::Values(v)) => {
                prop_assert_eq!(v.len(), vals.len());
                prop_assert!(v.values().all(|x| (0.0..=1.0).contains(x)));
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
