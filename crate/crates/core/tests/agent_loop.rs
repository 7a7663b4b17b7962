//! Agent loop behaviour under scripted providers.

use std::time::Duration;

use kgqa_core::agent::{
    Agent, AgentTrace, Branch, Step, TickClock, ToolKind, ToolOutcome, TurnConfig, TurnRequest,
    TurnStatus,
};
use kgqa_core::fixture::write_bundle;
use kgqa_core::llm::{ScriptRule, ScriptedProvider};
use kgqa_core::sql_tool::SqlErrorKind;
use kgqa_core::workspace::{ingest, IngestOptions, Workspace};

struct Env {
    _dir: tempfile::TempDir,
    ws: Workspace,
}

fn env() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let bundle = write_bundle(&dir.path().join("fixture")).unwrap();
    let mut opts = IngestOptions::new(&bundle.kg, dir.path().join("ws"));
    opts.docs = Some(bundle.docs);
    ingest(&opts).unwrap();
    let ws = Workspace::open(&dir.path().join("ws")).unwrap();
    Env { _dir: dir, ws }
}

const REWRITE: &str = "SQL: SELECT price FROM car WHERE id = 'x1-sport-01'\nQUESTION: What is the price of the BMW X1 Sport 01?";

fn rules(decisions: &[(&str, &str)]) -> Vec<ScriptRule> {
    let mut out = vec![ScriptRule::new(r"^TASK: rewrite\n", REWRITE)];
    out.extend(decisions.iter().map(|(p, r)| ScriptRule::new(*p, *r)));
    out.push(ScriptRule::new(r"^TASK: answer\n", "The price is 50500 EUR [1]."));
    out
}

fn run(env: &Env, script: Vec<ScriptRule>, config: &TurnConfig) -> AgentTrace {
    let provider = ScriptedProvider::new(script).unwrap();
    let clock = TickClock::new(Duration::from_millis(1));
    let agent = Agent {
        provider: &provider,
        db_path: &env.ws.db_path,
        ddl: &env.ws.ddl,
        index: &env.ws.index,
        templates: &env.ws.templates,
        config,
        clock: &clock,
    };
    let trace = agent
        .run_turn(&TurnRequest {
            conversation_id: "c",
            turn_id: "t1".into(),
            turn_index: 1,
            profile_id: "test",
            question: "How much is the X1 Sport 01?",
            history: &[],
        })
        .map_err(|f| f.error)
        .unwrap();
    assert_eq!(trace.status, TurnStatus::Completed);
    assert_eq!(trace.step_timings.step_sum(), trace.step_timings.total_ms);
    trace
}

fn both() -> TurnConfig {
    TurnConfig::with_branches(&[Branch::Sql, Branch::Text])
}

fn assert_both_tools_used(trace: &AgentTrace) {
    assert!(trace.count(ToolKind::SqlQuery) >= 1, "{:?}", trace.tool_calls);
    assert!(trace.count(ToolKind::TextSearch) >= 1, "{:?}", trace.tool_calls);
}

#[test]
fn sql_error_is_fed_back_verbatim_and_corrected() {
    let env = env();
    let trace = run(
        &env,
        rules(&[
            (r"(?s)^TASK: choose-tool\n.*SQL tool: unused", "TOOL: sql\nSELECT cost FROM car WHERE id = 'x1-sport-01'"),
            (r"(?s)^TASK: choose-tool\n.*SQL tool: used \(1 of", "TOOL: sql\nSELECT price FROM car WHERE id = 'x1-sport-01'"),
            (r"(?s)^TASK: choose-tool\n.*Text search tool: unused", "TOOL: text\nX1 Sport 01 price"),
            (r"^TASK: choose-tool\n", "TOOL: finish"),
        ]),
        &both(),
    );
    assert_eq!(trace.count(ToolKind::SqlQuery), 2);
    assert_eq!(trace.count(ToolKind::TextSearch), 1);
    let ToolOutcome::SqlError(err) = &trace.tool_calls[0].outcome else {
        panic!("round 1 should fail: {:?}", trace.tool_calls[0].outcome)
    };
    assert_eq!(err.kind, SqlErrorKind::UnknownIdentifier);
    let prompts = trace.decision_prompts();
    assert!(!prompts[0].contains(&err.message));
    assert!(prompts[1].contains(&err.message), "round-2 prompt lacks the error");
    assert!(matches!(trace.tool_calls[1].outcome, ToolOutcome::SqlResult(_)));
    assert_eq!(trace.sources[0].reference, "SELECT price FROM car WHERE id = 'x1-sport-01'");
    assert!(trace.citations.invalid.is_empty());
    assert_both_tools_used(&trace);
}

#[test]
fn premature_finish_is_overridden() {
    let env = env();
    let trace = run(&env, rules(&[(r"^TASK: choose-tool\n", "TOOL: finish")]), &both());
    assert_both_tools_used(&trace);
    assert!(trace.tool_calls.iter().all(|c| c.forced));
    // The forced calls use the intent-explicit forms from the rewrite.
    assert_eq!(trace.tool_calls[0].input, "SELECT price FROM car WHERE id = 'x1-sport-01'");
    assert_eq!(trace.tool_calls[1].input, "What is the price of the BMW X1 Sport 01?");
    // Each forced call follows one selection plus two re-asks.
    let selections = trace.llm_calls.iter().filter(|c| c.step == Step::ToolSelection).count();
    assert_eq!(selections, 3 + 3 + 1);
}

#[test]
fn greedy_script_is_capped_and_still_searches_text() {
    let env = env();
    let greedy = rules(&[(r"^TASK: choose-tool\n", "TOOL: sql\nSELECT COUNT(*) FROM car")]);
    let trace = run(&env, greedy.clone(), &both());
    assert_eq!(trace.count(ToolKind::SqlQuery), 3);
    assert_eq!(trace.count(ToolKind::TextSearch), 1);
    assert!(trace.tool_calls[3].forced);

    let mut config = both();
    config.loop_config.max_rounds_per_tool = 5;
    let trace = run(&env, greedy, &config);
    assert_eq!(trace.count(ToolKind::SqlQuery), 5);
    assert_both_tools_used(&trace);
}

#[test]
fn never_finishing_script_terminates_within_six_calls() {
    let env = env();
    let alternating = rules(&[
        (r"(?s)^TASK: choose-tool\n.*SQL tool: (unused|used)", "TOOL: sql\nSELECT 1"),
        (r"^TASK: choose-tool\n", "TOOL: text\nanything"),
    ]);
    let trace = run(&env, alternating, &both());
    assert_eq!(trace.tool_calls.len(), 6);
    assert_both_tools_used(&trace);

    let gibberish = rules(&[(r"^TASK: choose-tool\n", "I would rather chat about the weather.")]);
    let trace = run(&env, gibberish, &both());
    assert!(trace.tool_calls.len() <= 6);
    assert_both_tools_used(&trace);
}

#[test]
fn disabled_branch_is_never_called() {
    let env = env();
    let script = rules(&[(r"^TASK: choose-tool\n", "TOOL: text\nX1 price")]);
    let trace = run(&env, script, &TurnConfig::with_branches(&[Branch::Sql]));
    assert_eq!(trace.count(ToolKind::TextSearch), 0);
    assert_eq!(trace.count(ToolKind::SqlQuery), 1);
    assert!(trace.decision_prompts()[0].contains("Text search tool: disabled"));
}

#[test]
fn exhausted_script_fails_with_partial_trace() {
    let env = env();
    let provider = ScriptedProvider::new(vec![ScriptRule::new(r"^TASK: rewrite\n", REWRITE)]).unwrap();
    let clock = TickClock::new(Duration::from_millis(1));
    let config = both();
    let agent = Agent {
        provider: &provider,
        db_path: &env.ws.db_path,
        ddl: &env.ws.ddl,
        index: &env.ws.index,
        templates: &env.ws.templates,
        config: &config,
        clock: &clock,
    };
    let failure = agent
        .run_turn(&TurnRequest {
            conversation_id: "c",
            turn_id: "t1".into(),
            turn_index: 1,
            profile_id: "test",
            question: "q",
            history: &[],
        })
        .unwrap_err();
    assert_eq!(failure.trace.status, TurnStatus::Failed);
    assert_eq!(failure.trace.llm_calls.len(), 2);
    assert!(failure.trace.llm_calls[1].error.is_some());
    assert!(!failure.error.is_provider_unavailable());
}

/// Replays a fixed list of tool-selection replies in order, cycling.
struct Replay {
    replies: Vec<String>,
    next: std::sync::Mutex<usize>,
}

impl kgqa_core::llm::LlmProvider for Replay {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(
        &self,
        request: &kgqa_core::llm::ChatRequest,
    ) -> Result<kgqa_core::llm::Completion, kgqa_core::llm::LlmError> {
        let prompt = request.last_user_message().unwrap_or_default();
        let text = if prompt.starts_with("TASK: rewrite") {
            REWRITE.to_string()
        } else if prompt.starts_with("TASK: answer") {
            "done [1]".to_string()
        } else {
            let mut next = self.next.lock().unwrap();
            *next += 1;
            self.replies[(*next - 1) % self.replies.len()].clone()
        };
        Ok(kgqa_core::llm::Completion {
            text,
            usage: Default::default(),
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, kgqa_core::llm::LlmError> {
        Ok(texts.iter().map(|_| vec![1.0]).collect())
    }
}

mod random_scripts {
    use super::*;
    use proptest::prelude::*;

    fn reply() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("TOOL: finish".to_string()),
            Just("TOOL: sql\nSELECT 1".to_string()),
            Just("TOOL: sql\nSELECT nope FROM car".to_string()),
            Just("TOOL: text\nbattery".to_string()),
            Just("TOOL: text".to_string()),
            Just("no idea".to_string()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn loop_invariants_hold(
            replies in prop::collection::vec(reply(), 1..12),
            rounds in 1u32..5,
            branches in prop_oneof![
                Just(vec![Branch::Sql]),
                Just(vec![Branch::Text]),
                Just(vec![Branch::Sql, Branch::Text]),
            ],
        ) {
            let env = ENV.with(|e| e.clone());
            let provider = Replay { replies, next: Default::default() };
            let clock = TickClock::new(Duration::from_millis(1));
            let mut config = TurnConfig::with_branches(&branches);
            config.loop_config.max_rounds_per_tool = rounds;
            let agent = Agent {
                provider: &provider,
                db_path: &env.ws.db_path,
                ddl: &env.ws.ddl,
                index: &env.ws.index,
                templates: &env.ws.templates,
                config: &config,
                clock: &clock,
            };
            let trace = agent.run_turn(&TurnRequest {
                conversation_id: "c",
                turn_id: "t".into(),
                turn_index: 1,
                profile_id: "p",
                question: "q",
                history: &[],
            }).map_err(|f| f.error).unwrap();
            for (tool, branch) in [(ToolKind::SqlQuery, Branch::Sql), (ToolKind::TextSearch, Branch::Text)] {
                let n = trace.count(tool) as u32;
                if branches.contains(&branch) {
                    prop_assert!(n >= 1 && n <= rounds);
                } else {
                    prop_assert_eq!(n, 0);
                }
            }
            prop_assert!(trace.tool_calls.len() as u32 <= rounds * branches.len() as u32);
            prop_assert_eq!(trace.step_timings.step_sum(), trace.step_timings.total_ms);
        }
    }

    thread_local! {
        static ENV: std::rc::Rc<Env> = std::rc::Rc::new(env());
    }
}
