//! Chat-completion extraction with retry and a record/replay cassette.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{FineRecError, Result};
use crate::extraction::{normalize_opinion, render_prompt, AttributeOpinionPair, AttributeSet, PairStore};

/// Environment variable holding the endpoint credential.
pub const API_KEY_VAR: &str = "FINEREC_API_KEY";

/// Responses treated as "the review does not mention this attribute",
/// compared case-insensitively after normalization.
const REFUSAL_SENTINELS: [&str; 3] = ["none", "n/a", "not mentioned"];

const RETRY_ATTEMPTS: usize = 3;
const RETRY_BASE_DELAY: Duration = Duration::from_millis(200);

/// Anything that answers a single-prompt chat completion.
pub trait ChatEndpoint {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Blocking HTTP client posting `{"model", "messages": [user prompt]}` and
/// reading `choices[0].message.content`.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpChatClient {
    /// Credential comes from `FINEREC_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let api_key = std::env::var(API_KEY_VAR)
            .map_err(|_| FineRecError::Config(format!("{API_KEY_VAR} is not set")))?;
        Ok(HttpChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
        })
    }
}

impl ChatEndpoint for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let response = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_json(body)
            .map_err(|e| FineRecError::Transport(e.to_string()))?;
        let parsed: ChatResponse = response
            .into_json()
            .map_err(|e| FineRecError::Transport(format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| FineRecError::Transport("response has no choices".into()))
    }
}

fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Record/replay cache keyed by the SHA-256 of the prompt.
///
/// Each key stores the ordered list of responses seen for that prompt. The
/// i-th issuance of a prompt within one process replays the i-th recorded
/// response (clamped to the last), so repeated extraction runs replay without
/// touching the network; prompts with no recording fall through to the inner
/// client and the new response is appended and persisted.
pub struct CassetteClient<C> {
    entries: Mutex<BTreeMap<String, Vec<String>>>,
    counters: Mutex<HashMap<String, usize>>,
    path: Option<PathBuf>,
    inner: Option<C>,
}

/// Replay-only cassette; the type parameter is irrelevant without an inner
/// client.
pub type ReplayClient = CassetteClient<HttpChatClient>;

impl CassetteClient<HttpChatClient> {
    /// Replay strictly from `path`; an unrecorded prompt is a transport error.
    pub fn replay(path: &Path) -> Result<ReplayClient> {
        Ok(CassetteClient {
            entries: Mutex::new(load_cassette(path)?),
            counters: Mutex::new(HashMap::new()),
            path: None,
            inner: None,
        })
    }
}

impl<C: ChatEndpoint> CassetteClient<C> {
    /// Record through `inner`, persisting new responses to `path` as they
    /// arrive. An existing cassette at `path` is extended.
    pub fn recording(path: PathBuf, inner: C) -> Result<Self> {
        let entries = if path.exists() {
            load_cassette(&path)?
        } else {
            BTreeMap::new()
        };
        Ok(CassetteClient {
            entries: Mutex::new(entries),
            counters: Mutex::new(HashMap::new()),
            path: Some(path),
            inner: Some(inner),
        })
    }
}

fn load_cassette(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text =
        fs::read_to_string(path).map_err(|e| FineRecError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| FineRecError::parse(path.display().to_string(), 1, e.to_string()))
}

fn store_cassette(path: &Path, entries: &BTreeMap<String, Vec<String>>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(entries).expect("cassette serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| FineRecError::io(path.display().to_string(), e))
}

impl<C: ChatEndpoint> ChatEndpoint for CassetteClient<C> {
    fn complete(&self, prompt: &str) -> Result<String> {
        let key = prompt_key(prompt);
        let call_index = {
            let mut counters = self.counters.lock().expect("counter lock");
            let slot = counters.entry(key.clone()).or_insert(0);
            let i = *slot;
            *slot += 1;
            i
        };
        {
            let entries = self.entries.lock().expect("cassette lock");
            if let Some(responses) = entries.get(&key) {
                if !responses.is_empty() {
                    return Ok(responses[call_index.min(responses.len() - 1)].clone());
                }
            }
        }
        let inner = self.inner.as_ref().ok_or_else(|| {
            FineRecError::Transport(format!("no recorded response for prompt hash {key}"))
        })?;
        let response = inner.complete(prompt)?;
        let mut entries = self.entries.lock().expect("cassette lock");
        entries.entry(key).or_default().push(response.clone());
        if let Some(path) = &self.path {
            store_cassette(path, &entries)?;
        }
        Ok(response)
    }
}

/// One (interaction, attribute) whose prompt kept failing after retries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionFailure {
    pub user: String,
    pub item: String,
    pub attribute: usize,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct ExtractionReport {
    pub store: PairStore,
    pub failures: Vec<ExtractionFailure>,
}

fn complete_with_retry(client: &dyn ChatEndpoint, prompt: &str) -> Result<String> {
    let mut delay = RETRY_BASE_DELAY;
    let mut last_err = None;
    for attempt in 0..RETRY_ATTEMPTS {
        match client.complete(prompt) {
            Ok(response) => return Ok(response),
            Err(err @ FineRecError::Transport(_)) => {
                last_err = Some(err);
                if attempt + 1 < RETRY_ATTEMPTS {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
            Err(other) => return Err(other),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Prompt the endpoint `runs` times per (review, attribute) and union the
/// normalized answers. Refusal sentinels and empty answers are discarded;
/// an interaction whose prompt fails all retries is logged and skipped, never
/// aborting the run.
pub fn extract_with_llm(
    client: &dyn ChatEndpoint,
    attributes: &AttributeSet,
    corpus: &Corpus,
    runs: usize,
) -> Result<ExtractionReport> {
    if runs == 0 {
        return Err(FineRecError::Config("runs must be at least 1".into()));
    }
    let mut report = ExtractionReport::default();
    for (u, user) in corpus.users().iter().enumerate() {
        for interaction in corpus.sequence(u) {
            for (attr_idx, attr_name) in attributes.names().iter().enumerate() {
                let prompt = render_prompt(attr_name, &interaction.review);
                for _ in 0..runs {
                    match complete_with_retry(client, &prompt) {
                        Ok(response) => {
                            let opinion = normalize_opinion(&response);
                            if opinion.is_empty()
                                || REFUSAL_SENTINELS.contains(&opinion.as_str())
                            {
                                continue;
                            }
                            report.store.insert(AttributeOpinionPair {
                                user: user.clone(),
                                item: interaction.item.clone(),
                                attribute: attr_idx,
                                opinion,
                            });
                        }
                        Err(err) => {
                            report.failures.push(ExtractionFailure {
                                user: user.clone(),
                                item: interaction.item.clone(),
                                attribute: attr_idx,
                                error: err.to_string(),
                            });
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, InteractionRecord};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn corpus_one_review(review: &str) -> Corpus {
        Corpus::from_records(vec![InteractionRecord {
            user: "u1".into(),
            item: "x1".into(),
            timestamp: 1,
            review: review.into(),
        }])
        .unwrap()
    }

    struct ScriptedClient {
        responses: BTreeMap<String, Vec<String>>,
        calls: Mutex<HashMap<String, usize>>,
    }

    impl ScriptedClient {
        fn new(entries: &[(&str, &[&str])]) -> Self {
            ScriptedClient {
                responses: entries
                    .iter()
                    .map(|(p, rs)| {
                        (p.to_string(), rs.iter().map(|r| r.to_string()).collect())
                    })
                    .collect(),
                calls: Mutex::new(HashMap::new()),
            }
        }
    }

    impl ChatEndpoint for ScriptedClient {
        fn complete(&self, prompt: &str) -> Result<String> {
            let mut calls = self.calls.lock().unwrap();
            let i = calls.entry(prompt.to_string()).or_insert(0);
            let responses = self
                .responses
                .get(prompt)
                .ok_or_else(|| FineRecError::Transport("unscripted prompt".into()))?;
            let response = responses[(*i).min(responses.len() - 1)].clone();
            *i += 1;
            Ok(response)
        }
    }

    #[test]
    fn worked_example_extracts_two_pairs() {
        let attrs =
            AttributeSet::new(vec!["Scent".into(), "Price".into(), "Brand".into()]).unwrap();
        let review = "it smells nice, but too expensive";
        let corpus = corpus_one_review(review);
        let client = ScriptedClient::new(&[
            (render_prompt("Scent", review).as_str(), &["nice"][..]),
            (render_prompt("Price", review).as_str(), &["expensive"][..]),
            (render_prompt("Brand", review).as_str(), &["N/A"][..]),
        ]);
        let report = extract_with_llm(&client, &attrs, &corpus, 5).unwrap();
        assert!(report.failures.is_empty());
        let got: Vec<(usize, String)> = report
            .store
            .iter()
            .map(|p| (p.attribute, p.opinion.clone()))
            .collect();
        assert_eq!(got, vec![(0, "nice".into()), (1, "expensive".into())]);
    }

    #[test]
    fn responses_are_normalized_and_unioned() {
        let attrs = AttributeSet::new(vec!["Scent".into()]).unwrap();
        let review = "smells";
        let corpus = corpus_one_review(review);
        let client = ScriptedClient::new(&[(
            render_prompt("Scent", review).as_str(),
            &["nice", "Nice "][..],
        )]);
        let report = extract_with_llm(&client, &attrs, &corpus, 2).unwrap();
        assert_eq!(report.store.len(), 1);
        assert_eq!(report.store.iter().next().unwrap().opinion, "nice");
    }

    struct FlakyClient {
        fail_first: usize,
        calls: AtomicUsize,
    }

    impl ChatEndpoint for FlakyClient {
        fn complete(&self, _prompt: &str) -> Result<String> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(FineRecError::Transport("connection reset".into()))
            } else {
                Ok("good".into())
            }
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let attrs = AttributeSet::new(vec!["Scent".into()]).unwrap();
        let corpus = corpus_one_review("r");
        let client = FlakyClient {
            fail_first: 2,
            calls: AtomicUsize::new(0),
        };
        let report = extract_with_llm(&client, &attrs, &corpus, 1).unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(report.store.len(), 1);
    }

    #[test]
    fn persistent_failures_are_logged_not_fatal() {
        let attrs = AttributeSet::new(vec!["Scent".into()]).unwrap();
        let corpus = corpus_one_review("r");
        let client = FlakyClient {
            fail_first: usize::MAX,
            calls: AtomicUsize::new(0),
        };
        let report = extract_with_llm(&client, &attrs, &corpus, 1).unwrap();
        assert!(report.store.is_empty());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].attribute, 0);
    }

    #[test]
    fn cassette_replays_without_inner_client() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.json");
        let prompt = render_prompt("Scent", "r");
        let mut entries = BTreeMap::new();
        entries.insert(
            prompt_key(&prompt),
            vec!["first".to_string(), "second".to_string()],
        );
        store_cassette(&path, &entries).unwrap();

        let client = CassetteClient::replay(&path).unwrap();
        assert_eq!(client.complete(&prompt).unwrap(), "first");
        assert_eq!(client.complete(&prompt).unwrap(), "second");
        // Further calls clamp to the last recorded response.
        assert_eq!(client.complete(&prompt).unwrap(), "second");
        assert!(client.complete("unrecorded").is_err());
    }

    #[test]
    fn recording_cassette_persists_responses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.json");
        let inner = ScriptedClient::new(&[("p", &["answer"][..])]);
        let client = CassetteClient::recording(path.clone(), inner).unwrap();
        assert_eq!(client.complete("p").unwrap(), "answer");
        // Replay from the persisted file alone.
        let replay = CassetteClient::replay(&path).unwrap();
        assert_eq!(replay.complete("p").unwrap(), "answer");
    }

    #[test]
    fn union_is_monotone_in_runs_under_replay() {
        let attrs = AttributeSet::new(vec!["Scent".into()]).unwrap();
        let review = "smells";
        let corpus = corpus_one_review(review);
        let prompt = render_prompt("Scent", review);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.json");
        let mut entries = BTreeMap::new();
        entries.insert(
            prompt_key(&prompt),
            vec!["fresh".into(), "sweet".into(), "mild".into()],
        );
        store_cassette(&path, &entries).unwrap();

        let mut previous = PairStore::default();
        for runs in 1..=4 {
            let client = CassetteClient::replay(&path).unwrap();
            let report = extract_with_llm(&client, &attrs, &corpus, runs).unwrap();
            assert!(report.store.is_superset_of(&previous), "runs={runs}");
            previous = report.store;
        }
        assert_eq!(previous.len(), 3);
    }
}
