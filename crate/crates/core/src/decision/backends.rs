use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, BackendKind, DecisionBackend};
use crate::codec::{parse_graph, render_route_reply};
use crate::energy::{Allocation, EnergyModelConfig};
use crate::trajectory::heuristic_route;

/// Replay key of a prompt: the first 16 hex digits of SHA-256 over the
/// template version line and the graph lines. Retry suffixes do not change
/// the key; a new template version does.
pub fn prompt_key(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    let mut lines = prompt.lines();
    if let Some(first) = lines.next() {
        hasher.update(first.trim().as_bytes());
        hasher.update(b"\n");
    }
    for line in lines.map(str::trim) {
        if line.starts_with("graph area ") || line.starts_with("node ") || line.starts_with("edge ") {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
    }
    hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Solves the instance in the prompt with nearest-neighbor + 2-opt and
/// answers in the reply format the prompt requests.
#[derive(Debug, Clone)]
pub struct HeuristicBackend {
    energy: EnergyModelConfig,
}

impl HeuristicBackend {
    pub fn new(energy: EnergyModelConfig) -> Self {
        Self { energy }
    }
}

impl DecisionBackend for HeuristicBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Heuristic
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let graph = parse_graph(prompt)
            .map_err(|e| BackendError::Config(format!("heuristic backend could not read the prompt: {e}")))?
            .graph;
        let alloc = Allocation::uniform(graph.monitor_count(), &self.energy);
        let best = heuristic_route(&graph, &self.energy, &alloc).map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(render_route_reply(&best.route))
    }
}

const REPLY_HEADER: &str = "=== reply ";
const REPLY_TRAILER: &str = " ===";

#[derive(Debug, Clone, PartialEq, Eq)]
struct ReplayEntry {
    /// Prompt key, or `*` for any prompt.
    key: String,
    reply: String,
}

/// Canned replies read from a fixture file.
///
/// Each reply starts with a header line `=== reply <key> ===` where `<key>`
/// is a [`prompt_key`] or `*`; the reply is every line up to the next
/// header. Text before the first header is ignored. Each entry is served
/// once, in file order.
#[derive(Debug)]
pub struct ReplayBackend {
    entries: Vec<ReplayEntry>,
    used: Mutex<Vec<bool>>,
}

impl ReplayBackend {
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read replay fixture {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let mut entries: Vec<ReplayEntry> = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix(REPLY_HEADER) {
                let key = rest.strip_suffix(REPLY_TRAILER).unwrap_or(rest).trim();
                if key.is_empty() {
                    return Err(BackendError::Config(format!("replay header without key: {line:?}")));
                }
                entries.push(ReplayEntry { key: key.to_string(), reply: String::new() });
            } else if let Some(e) = entries.last_mut() {
                if !e.reply.is_empty() {
                    e.reply.push('\n');
                }
                e.reply.push_str(line);
            }
        }
        if entries.is_empty() {
            return Err(BackendError::Config("replay fixture has no replies".into()));
        }
        let used = Mutex::new(vec![false; entries.len()]);
        Ok(Self { entries, used })
    }

    /// Renders replies in fixture format.
    pub fn render<'a>(replies: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
        replies.into_iter().map(|(key, reply)| format!("{REPLY_HEADER}{key}{REPLY_TRAILER}\n{reply}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl DecisionBackend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let key = prompt_key(prompt);
        let mut used = self.used.lock().expect("replay state poisoned");
        let matches = |e: &ReplayEntry| e.key == "*" || e.key == key;
        if let Some(i) = (0..self.entries.len()).find(|&i| !used[i] && matches(&self.entries[i])) {
            used[i] = true;
            return Ok(self.entries[i].reply.clone());
        }
        if self.entries.iter().any(matches) {
            Err(BackendError::Exhausted(format!("fixture exhausted for prompt key {key}")))
        } else {
            Err(BackendError::Config(format!("no replay fixture entry for prompt key {key}")))
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut count = self.count.lock().expect("semaphore poisoned");
        while *count >= self.max {
            count = self.freed.wait(count).expect("semaphore poisoned");
        }
        *count += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("semaphore poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Serialize)]
pub struct ChatMessage<'a> {
    pub role: &'a str,
    pub content: &'a str,
}

/// Body of a chat-completion request.
#[derive(Debug, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: Vec<ChatMessage<'a>>,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ChatReplyMessage {
    content: String,
}

/// Chat-completion client for an HTTP endpoint. The API key, when the
/// configured environment variable is set, is sent as a bearer token.
#[derive(Debug)]
pub struct HttpLlmBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
    in_flight: InFlight,
}

impl HttpLlmBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        temperature: f64,
        api_key_env: &str,
        timeout: Duration,
        max_in_flight: usize,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("cannot build HTTP client: {e}")))?;
        let api_key = (!api_key_env.is_empty()).then(|| std::env::var(api_key_env).ok()).flatten();
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            temperature,
            api_key,
            in_flight: InFlight { count: Mutex::new(0), freed: Condvar::new(), max: max_in_flight.max(1) },
        })
    }
}

impl DecisionBackend for HttpLlmBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::HttpLlm
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage { role: "user", content: prompt }],
            temperature: self.temperature,
        };
        let _permit = self.in_flight.acquire();
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp =
            req.send().map_err(|e| BackendError::Retriable(format!("request to {} failed: {e}", self.endpoint)))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Retriable(format!("{} answered {status}", self.endpoint)));
        }
        let parsed: ChatResponse =
            resp.json().map_err(|e| BackendError::Retriable(format!("unreadable completion response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Retriable("completion response has no choices".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{parse_route_reply, serialize_graph};
    use crate::graph::{build_scenario, ScenarioConfig};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn prompt() -> String {
        serialize_graph(&build_scenario(&ScenarioConfig::default()).unwrap()).render_prompt()
    }

    #[test]
    fn heuristic_reply_covers_every_monitor() {
        let g = build_scenario(&ScenarioConfig::default()).unwrap();
        let reply = HeuristicBackend::new(EnergyModelConfig::default()).complete(&prompt()).unwrap();
        let parsed = parse_route_reply(&reply, &g);
        assert!(parsed.diagnostics.is_empty(), "{reply}");
        let mut visits = parsed.parsed_route.unwrap().visits;
        visits.sort();
        assert_eq!(visits, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn heuristic_rejects_prompt_without_graph() {
        let err = HeuristicBackend::new(EnergyModelConfig::default()).complete("hello").unwrap_err();
        assert!(matches!(err, BackendError::Config(_)));
    }

    #[test]
    fn replay_serves_each_entry_once() {
        let r = ReplayBackend::parse(&ReplayBackend::render([("*", "Route: A -> 1 -> A")])).unwrap();
        assert_eq!(r.complete(&prompt()).unwrap(), "Route: A -> 1 -> A");
        let err = r.complete(&prompt()).unwrap_err();
        assert!(err.to_string().contains("fixture exhausted"));
    }

    #[test]
    fn replay_keys_on_graph_not_suffix() {
        let p = prompt();
        let key = prompt_key(&p);
        assert_eq!(key.len(), 16);
        assert_eq!(prompt_key(&format!("{p}\nPlease try again.")), key);
        let other = serialize_graph(&build_scenario(&ScenarioConfig { seed: 7, ..Default::default() }).unwrap())
            .render_prompt();
        assert_ne!(prompt_key(&other), key);
        assert_ne!(prompt_key(&p.replace("[route-prompt v1]", "[route-prompt v2]")), key);

        let fixture = ReplayBackend::render([(key.as_str(), "first"), (key.as_str(), "second")]);
        let r = ReplayBackend::parse(&fixture).unwrap();
        assert_eq!(r.complete(&p).unwrap(), "first");
        assert_eq!(r.complete(&format!("{p}\nretry")).unwrap(), "second");
        assert!(matches!(r.complete(&other), Err(BackendError::Config(_))));
    }

    #[test]
    fn replay_multiline_replies() {
        let text = "# comment\n=== reply * ===\nline one\nline two\n=== reply * ===\nthird\n";
        let r = ReplayBackend::parse(text).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.complete("x").unwrap(), "line one\nline two");
        assert_eq!(r.complete("x").unwrap(), "third");
        assert!(ReplayBackend::parse("no headers").is_err());
    }

    #[test]
    fn unreachable_endpoint_is_retriable() {
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let b = HttpLlmBackend::new(
            &format!("http://127.0.0.1:{port}/v1/chat/completions"),
            "m",
            0.0,
            "",
            Duration::from_millis(500),
            2,
        )
        .unwrap();
        assert!(matches!(b.complete("hi"), Err(BackendError::Retriable(_))));
    }

    fn serve_once(status: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // read headers, then the declared body length
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(end) = text.find("\r\n\r\n") {
                    let len = text
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if buf.len() >= end + 4 + len {
                        break;
                    }
                }
            }
            let resp = format!("HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len());
            stream.write_all(resp.as_bytes()).unwrap();
            String::from_utf8_lossy(&buf).to_string()
        });
        (url, handle)
    }

    #[test]
    fn chat_completion_wire_format() {
        let (url, server) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"Route: A -> 1 -> C -> A"}}]}"#,
        );
        let b = HttpLlmBackend::new(&url, "test-model", 0.2, "", Duration::from_secs(5), 1).unwrap();
        assert_eq!(b.complete("plan it").unwrap(), "Route: A -> 1 -> C -> A");
        let request = server.join().unwrap();
        let body = &request[request.find("\r\n\r\n").unwrap() + 4..];
        let json: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(json["model"], "test-model");
        assert_eq!(json["temperature"], 0.2);
        assert_eq!(json["messages"][0]["role"], "user");
        assert_eq!(json["messages"][0]["content"], "plan it");
    }

    #[test]
    fn non_success_status_is_retriable() {
        let (url, server) = serve_once("503 Service Unavailable", "{}");
        let b = HttpLlmBackend::new(&url, "m", 0.0, "", Duration::from_secs(5), 1).unwrap();
        assert!(matches!(b.complete("x"), Err(BackendError::Retriable(_))));
        server.join().unwrap();
    }
}
