//! HTTP teacher backend speaking the chat-completions dialect.
//!
//! Wire format, POST `<base_url>/v1/chat/completions`:
//! `{"model": <string>, "temperature": 0, "messages": [{"role", "content"}, ...]}`,
//! answer read from the first choice's `message.content`. Transport failures
//! and unparseable verdicts share one attempt budget (default 3); parse
//! failures re-prompt with an error note.

use std::time::Duration;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::corpus::{Document, Query};
use crate::error::{Error, Result};

use super::prompts;
use super::{
    extract_first_json, Exemplar, InfoDelta, NewQuery, PurityDocs, ScoresVerdict, SynthDoc,
    Teacher, TeacherMessage, TeacherRequest,
};

pub const DEFAULT_API_KEY_ENV: &str = "FIGRET_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpTeacherConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

fn default_max_retries() -> u32 {
    3
}

fn default_timeout_secs() -> u64 {
    60
}

/// Emit whole temperatures as JSON integers (`0`, not `0.0`).
fn serialize_temperature<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if t.fract() == 0.0 && t.abs() < i64::MAX as f64 {
        s.serialize_i64(*t as i64)
    } else {
        s.serialize_f64(*t)
    }
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    #[serde(serialize_with = "serialize_temperature")]
    temperature: f64,
    messages: &'a [TeacherMessage],
}

#[derive(Deserialize)]
struct ChatResponseBody {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

pub struct HttpTeacher {
    config: HttpTeacherConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpTeacher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print the credential
        f.debug_struct("HttpTeacher")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl HttpTeacher {
    /// Reads the credential from the configured environment variable.
    pub fn new(config: HttpTeacherConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Config(format!(
                "teacher credential missing: set the {} environment variable",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(format!("building http client: {e}")))?;
        Ok(HttpTeacher {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    /// Single POST; returns the assistant message content.
    fn chat_once(&self, messages: &[TeacherMessage], temperature: f64) -> Result<String> {
        let body = ChatRequestBody {
            model: &self.config.model,
            temperature,
            messages,
        };
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!(
                "teacher endpoint returned {status}: {}",
                text.chars().take(200).collect::<String>()
            )));
        }
        let parsed: ChatResponseBody = serde_json::from_str(&text).map_err(|e| {
            Error::TeacherProtocol(format!("malformed chat-completion envelope: {e}"))
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::TeacherProtocol("reply has no message content".into()))
    }

    /// Run a conversation until the reply parses, retrying transport failures
    /// as-is and parse failures with an appended error note. The attempt
    /// budget covers both failure kinds.
    fn request_verdict<T>(
        &self,
        mut conversation: Vec<TeacherMessage>,
        parse: impl Fn(&Value) -> Result<T>,
    ) -> Result<T> {
        let mut last_err = Error::TeacherProtocol("no attempts made".into());
        for _ in 0..self.config.max_retries.max(1) {
            match self.chat_once(&conversation, 0.0) {
                Err(e @ Error::Transport(_)) => last_err = e,
                Err(e) => last_err = e,
                Ok(reply) => match extract_first_json(&reply).and_then(|v| parse(&v)) {
                    Ok(value) => return Ok(value),
                    Err(e) => {
                        conversation.push(TeacherMessage::assistant(reply));
                        conversation.push(TeacherMessage::user(format!(
                            "Your previous reply could not be used: {e}. \
                             Respond again with only the required JSON."
                        )));
                        last_err = e;
                    }
                },
            }
        }
        Err(last_err)
    }
}

/// Send a raw chat request, retrying transport failures up to the request's
/// budget, and return the assistant text.
pub fn chat(client: &HttpTeacher, request: &TeacherRequest) -> Result<String> {
    request.validate()?;
    let mut last_err = Error::Transport("no attempts made".into());
    for _ in 0..request.max_retries {
        match client.chat_once(&request.conversation, request.temperature) {
            Ok(text) => return Ok(text),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

fn parse_scores(value: &Value, submitted: &[Document]) -> Result<ScoresVerdict> {
    let map = value
        .get("scores")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::TeacherProtocol("reply lacks a \"scores\" object".into()))?;
    let mut scores = std::collections::BTreeMap::new();
    for (k, v) in map {
        let s = v
            .as_u64()
            .filter(|&s| s <= 10)
            .ok_or_else(|| Error::TeacherProtocol(format!("score for '{k}' is not 0..=10")))?;
        scores.insert(k.clone(), s as u8);
    }
    let verdict = ScoresVerdict { scores };
    verdict.validate_against(&submitted.iter().map(|d| d.id.clone()).collect::<Vec<_>>())?;
    Ok(verdict)
}

impl Teacher for HttpTeacher {
    fn score_documents(
        &self,
        query: &Query,
        docs: &[Document],
        exemplars: &[Exemplar],
    ) -> Result<ScoresVerdict> {
        let mut conversation = prompts::exemplar_preamble(exemplars);
        conversation.push(TeacherMessage::user(prompts::render_scoring(
            &query.text,
            docs,
        )));
        self.request_verdict(conversation, |v| parse_scores(v, docs))
    }

    fn extract_info_deltas(
        &self,
        query: &Query,
        positives: &[Document],
        negatives: &[Document],
        exemplars: &[Exemplar],
    ) -> Result<Vec<InfoDelta>> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::Precondition(
                "info deltas need non-empty positives and negatives".into(),
            ));
        }
        let neg_ids: std::collections::HashSet<&str> =
            negatives.iter().map(|d| d.id.as_str()).collect();
        let mut conversation = prompts::exemplar_preamble(exemplars);
        conversation.push(TeacherMessage::user(prompts::render_relevance_part1(
            &query.text,
            positives,
            negatives,
        )));
        self.request_verdict(conversation, |v| {
            let raw = v
                .get("differences")
                .and_then(Value::as_array)
                .ok_or_else(|| {
                    Error::TeacherProtocol("reply lacks a \"differences\" array".into())
                })?;
            let mut deltas = Vec::with_capacity(raw.len());
            for item in raw {
                let summary = item
                    .get("summary")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::TeacherProtocol("difference lacks a summary".into()))?;
                let ids = item
                    .get("doc_ids")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::TeacherProtocol("difference lacks doc_ids".into()))?;
                let mut doc_ids = Vec::with_capacity(ids.len());
                for id in ids {
                    let id = id
                        .as_str()
                        .ok_or_else(|| Error::TeacherProtocol("doc id is not a string".into()))?;
                    if !neg_ids.contains(id) {
                        return Err(Error::TeacherProtocol(format!(
                            "difference names '{id}', not a submitted negative"
                        )));
                    }
                    doc_ids.push(id.to_string());
                }
                if doc_ids.is_empty() {
                    return Err(Error::TeacherProtocol("difference covers no documents".into()));
                }
                deltas.push(InfoDelta {
                    summary: summary.to_string(),
                    doc_ids,
                    unit_ids: Vec::new(),
                });
            }
            Ok(deltas)
        })
    }

    fn make_new_queries(
        &self,
        query: &Query,
        submitted: &[Document],
        deltas: &[InfoDelta],
        exemplars: &[Exemplar],
    ) -> Result<Vec<NewQuery>> {
        let submitted_ids: Vec<String> = submitted.iter().map(|d| d.id.clone()).collect();
        let mut conversation = prompts::exemplar_preamble(exemplars);
        conversation.push(TeacherMessage::user(prompts::render_relevance_part2(
            &query.text,
            deltas,
            submitted,
        )));
        self.request_verdict(conversation, |v| {
            let raw = v
                .get("queries")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::TeacherProtocol("reply lacks a \"queries\" array".into()))?;
            let mut out = Vec::with_capacity(raw.len());
            for item in raw {
                let nq: NewQuery = serde_json::from_value(item.clone())
                    .map_err(|e| Error::TeacherProtocol(format!("bad new-query entry: {e}")))?;
                nq.validate_partition(&submitted_ids)?;
                if nq.query.trim().is_empty() || nq.query == query.text {
                    return Err(Error::TeacherProtocol(
                        "rewritten query is empty or identical to the original".into(),
                    ));
                }
                out.push(nq);
            }
            Ok(out)
        })
    }

    fn make_comprehensive_doc(
        &self,
        query: &Query,
        positives: &[Document],
        exemplars: &[Exemplar],
    ) -> Result<Option<SynthDoc>> {
        if positives.is_empty() {
            return Err(Error::Precondition(
                "comprehensive doc needs at least one positive".into(),
            ));
        }
        let mut conversation = prompts::exemplar_preamble(exemplars);
        conversation.push(TeacherMessage::user(prompts::render_comprehensiveness(
            &query.text,
            positives,
        )));
        let doc = self.request_verdict(conversation, |v| {
            let text = v
                .get("document")
                .and_then(Value::as_str)
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| {
                    Error::TeacherProtocol("reply lacks a non-empty \"document\"".into())
                })?;
            Ok(SynthDoc {
                text: text.to_string(),
                unit_ids: None,
            })
        })?;
        Ok(Some(doc))
    }

    fn make_purity_docs(
        &self,
        query: &Query,
        positive: &Document,
        exemplars: &[Exemplar],
    ) -> Result<PurityDocs> {
        let mut conversation = prompts::exemplar_preamble(exemplars);
        conversation.push(TeacherMessage::user(prompts::render_purity(
            &query.text,
            positive,
        )));
        self.request_verdict(conversation, |v| {
            let field = |name: &str| -> Result<SynthDoc> {
                let text = v
                    .get(name)
                    .and_then(Value::as_str)
                    .filter(|t| !t.trim().is_empty())
                    .ok_or_else(|| {
                        Error::TeacherProtocol(format!("reply lacks a non-empty \"{name}\""))
                    })?;
                Ok(SynthDoc {
                    text: text.to_string(),
                    unit_ids: None,
                })
            };
            Ok(PurityDocs {
                dense: Some(field("dense_document")?),
                sparse: Some(field("sparse_document")?),
            })
        })
    }
}

#[cfg(test)]
pub(crate) mod stub {
    //! Minimal scripted HTTP/1.1 server for exercising the client offline.

    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;

    pub struct StubServer {
        pub base_url: String,
        pub bodies: Arc<Mutex<Vec<String>>>,
        handle: Option<JoinHandle<()>>,
    }

    impl StubServer {
        /// Serve the scripted `(status, body)` responses in order, recording
        /// each request body.
        pub fn start(responses: Vec<(u16, String)>) -> StubServer {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let base_url = format!("http://{}", listener.local_addr().unwrap());
            let bodies: Arc<Mutex<Vec<String>>> = Arc::default();
            let recorded = bodies.clone();
            let handle = std::thread::spawn(move || {
                for (status, body) in responses {
                    let (mut socket, _) = match listener.accept() {
                        Ok(pair) => pair,
                        Err(_) => return,
                    };
                    let mut buf = Vec::new();
                    let mut chunk = [0u8; 4096];
                    let header_end = loop {
                        match socket.read(&mut chunk) {
                            Ok(0) => break None,
                            Ok(n) => {
                                buf.extend_from_slice(&chunk[..n]);
                                if let Some(pos) =
                                    buf.windows(4).position(|w| w == b"\r\n\r\n")
                                {
                                    break Some(pos + 4);
                                }
                            }
                            Err(_) => break None,
                        }
                    };
                    let Some(header_end) = header_end else { continue };
                    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
                    let content_length: usize = headers
                        .lines()
                        .find_map(|l| {
                            let (name, value) = l.split_once(':')?;
                            name.eq_ignore_ascii_case("content-length")
                                .then(|| value.trim().parse().ok())?
                        })
                        .unwrap_or(0);
                    while buf.len() < header_end + content_length {
                        match socket.read(&mut chunk) {
                            Ok(0) => break,
                            Ok(n) => buf.extend_from_slice(&chunk[..n]),
                            Err(_) => break,
                        }
                    }
                    let request_body =
                        String::from_utf8_lossy(&buf[header_end..]).to_string();
                    recorded.lock().unwrap().push(request_body);
                    let response = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\n\
                         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    let _ = socket.write_all(response.as_bytes());
                }
            });
            StubServer {
                base_url,
                bodies,
                handle: Some(handle),
            }
        }

        pub fn request_count(&self) -> usize {
            self.bodies.lock().unwrap().len()
        }
    }

    impl Drop for StubServer {
        fn drop(&mut self) {
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    pub fn chat_reply(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}]
        })
        .to_string()
    }
}
