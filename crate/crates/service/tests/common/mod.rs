//! Shared setup for the service tests: a fixture workspace with a scripted
//! two-turn conversation, an in-process server and a small JSON client.

#![allow(dead_code)]

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kgqa_core::agent::Branch;
use kgqa_core::fixture::benchmark::generic_rules;
use kgqa_core::fixture::{write_bundle, FixtureBundle};
use kgqa_core::llm::{ProviderConfig, ProviderKind, ScriptRule};
use kgqa_core::profile::ProfileSet;
use kgqa_core::workspace::{ingest, IngestOptions, Workspace};
use kgqa_service::api::{router, AppState};
use kgqa_service::store::Store;
use serde_json::Value;

pub const TURN1: &str = "Which engine does the 1 Series Sport 01 have, and how powerful is it?";
pub const TURN2: &str = "And what does it cost?";

/// Rewritten SQL for turn 1 against the renamed `engine` table.
pub const ENGINE_SQL: &str = "SELECT e.id, e.engine_performance FROM car c JOIN engine e ON c.engine_specification = e.id WHERE c.id = '1-series-sport-01'";
/// First attempt, still using the table name from before the rename.
pub const STALE_SQL: &str = "SELECT e.id, e.engine_performance FROM car c JOIN engine_specification e ON c.engine_specification = e.id WHERE c.id = '1-series-sport-01'";
pub const PRICE_SQL: &str = "SELECT price FROM car WHERE id = '1-series-sport-01'";

/// Turn 1: a failing SQL round, the corrected query, one text search.
/// Turn 2: one SQL round and one text search via the generic rules.
pub fn conversation_script() -> Vec<ScriptRule> {
    let mut rules = vec![
        ScriptRule::new(
            r"^TASK: rewrite\n",
            format!("SQL: {ENGINE_SQL}\nQUESTION: What engine and power output does the BMW 1 Series Sport 01 have?"),
        )
        .on_turn(1),
        ScriptRule::new(
            r"^TASK: rewrite\n",
            format!("SQL: {PRICE_SQL}\nQUESTION: What is the price of the BMW 1 Series Sport 01?"),
        )
        .on_turn(2),
        ScriptRule::new(r"(?s)^TASK: choose-tool\n.*SQL tool: unused", format!("TOOL: sql\n{STALE_SQL}")).on_turn(1),
        ScriptRule::new(
            r"(?s)^TASK: choose-tool\n.*SQL tool: used \(1 of.*no such table: engine_specification",
            format!("TOOL: sql\n{ENGINE_SQL}"),
        )
        .on_turn(1),
    ];
    rules.extend(generic_rules());
    rules
}

/// Profiles `both` (default), `sql-only`, `text-only` over `script`, plus
/// `offline`, whose endpoint refuses connections, `keyless`, whose API key
/// variable is unset, and optionally `stalled`
/// pointing at `stalled_endpoint`.
pub fn profiles(script: &Path, stalled_endpoint: Option<&str>) -> ProfileSet {
    let mut set = ProfileSet::for_provider(ProviderConfig::scripted(script));
    let remote = |endpoint: String| ProviderConfig {
        kind: ProviderKind::LocalServer,
        endpoint: Some(endpoint),
        model: "test-model".into(),
        embedding_model: None,
        credentials_ref: None,
        script: None,
    };
    let mut offline = set.profiles[0].clone();
    offline.id = "offline".into();
    offline.name = "Unreachable server".into();
    offline.provider_config = remote(format!("http://127.0.0.1:{}/v1", closed_port()));
    set.profiles.push(offline);
    let mut keyless = set.profiles[0].clone();
    keyless.id = "keyless".into();
    keyless.name = "Hosted model without a key".into();
    keyless.provider_config = ProviderConfig {
        kind: ProviderKind::RemoteApi,
        credentials_ref: Some("KGQA_TEST_KEY_THAT_IS_NEVER_SET".into()),
        ..remote(format!("http://127.0.0.1:{}/v1", closed_port()))
    };
    set.profiles.push(keyless);
    if let Some(endpoint) = stalled_endpoint {
        let mut stalled = set.profiles[0].clone();
        stalled.id = "stalled".into();
        stalled.name = "Server that never answers".into();
        stalled.retrieval_branches = [Branch::Sql, Branch::Text].into_iter().collect();
        stalled.provider_config = remote(endpoint.to_string());
        set.profiles.push(stalled);
    }
    set
}

/// A port with nothing listening on it.
pub fn closed_port() -> u16 {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.local_addr().unwrap().port()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub bundle: FixtureBundle,
    pub script: PathBuf,
    pub renames: PathBuf,
    pub workspace: PathBuf,
}

impl Fixture {
    /// Writes the fixture and the conversation script; the workspace is
    /// ingested only by [`Fixture::ingested`].
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let bundle = write_bundle(&dir.path().join("fixture")).unwrap();
        let script = dir.path().join("conversation.json");
        std::fs::write(&script, serde_json::to_string_pretty(&conversation_script()).unwrap()).unwrap();
        let renames = dir.path().join("renames.json");
        std::fs::write(&renames, r#"{"renames": {"engine specification": "engine"}}"#).unwrap();
        let workspace = dir.path().join("ws");
        Fixture {
            dir,
            bundle,
            script,
            renames,
            workspace,
        }
    }

    pub fn write_profiles(&self, stalled_endpoint: Option<&str>) -> PathBuf {
        let path = self.dir.path().join("profiles.json");
        profiles(&self.script, stalled_endpoint).save(&path).unwrap();
        path
    }

    pub fn ingested(stalled_endpoint: Option<&str>) -> Self {
        let fx = Self::new();
        let mut opts = IngestOptions::new(&fx.bundle.kg, &fx.workspace);
        opts.docs = Some(fx.bundle.docs.clone());
        opts.renames = Some(fx.renames.clone());
        opts.profiles = Some(fx.write_profiles(stalled_endpoint));
        ingest(&opts).unwrap();
        fx
    }

    pub fn store_path(&self) -> PathBuf {
        self.workspace.join("conversations.db")
    }

    pub fn serve(&self) -> Server {
        Server::start(
            Workspace::open(&self.workspace).unwrap(),
            Store::open(&self.store_path()).unwrap(),
        )
    }
}

/// The API served on an ephemeral port from a background runtime.
pub struct Server {
    pub base: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    pub fn start(workspace: Workspace, store: Store) -> Self {
        let state: Arc<AppState> = AppState::new(workspace, store);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        Server {
            base,
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        call(ureq::get(&format!("{}{path}", self.base)).call())
    }

    pub fn post(&self, path: &str, body: Value) -> (u16, Value) {
        call(ureq::post(&format!("{}{path}", self.base)).send_json(body))
    }

    pub fn post_raw(&self, path: &str, body: &str) -> (u16, Value) {
        call(
            ureq::post(&format!("{}{path}", self.base))
                .set("Content-Type", "application/json")
                .send_string(body),
        )
    }

    /// Creates a conversation and returns its id.
    pub fn create(&self, body: Value) -> String {
        let (status, conv) = self.post("/conversations", body);
        assert_eq!(status, 201, "{conv}");
        conv["id"].as_str().unwrap().to_string()
    }

    /// Stops the server and waits for in-flight requests to drain.
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

fn call(result: Result<ureq::Response, ureq::Error>) -> (u16, Value) {
    let response = match result {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => panic!("transport error: {e}"),
    };
    let status = response.status();
    let body = response.into_string().unwrap();
    let json = if body.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&body).unwrap_or(Value::String(body))
    };
    (status, json)
}
