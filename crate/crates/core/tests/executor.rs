mod common;

use adapt_core::executor::{StepKind, PARSE_FAILURE_OBSERVATION};
use adapt_core::llm::CannedBackend;
use adapt_core::{run_executor, CallLedger, ContextMap, ExecutorConfig, Termination};
use common::FlagEnv;

fn config(max_iterations: u32) -> ExecutorConfig {
    ExecutorConfig {
        max_iterations,
        ..ExecutorConfig::default()
    }
}

#[test]
fn acts_until_declared_completion() {
    let model = CannedBackend::new([
        "think: start\naction: look",
        "action: finish",
        "think: done. Task completed.",
    ]);
    let mut env = FlagEnv::default();
    let mut ledger = CallLedger::new();
    let outcome = run_executor("finish", &mut env, &config(10), &model, &mut ledger, 1, &ContextMap::new());

    assert!(outcome.completed);
    assert_eq!(outcome.termination, Termination::DeclaredCompleted);
    assert_eq!(outcome.llm_calls_used, 3);
    assert_eq!(ledger.executor_calls, 3);
    assert_eq!(env.steps, vec!["look", "finish"]);
    assert_eq!(outcome.actions().collect::<Vec<_>>(), vec!["look", "finish"]);
    assert_eq!(outcome.salient_context["last_action"], "finish");
    assert_eq!(outcome.salient_context["last_observation"], "Finished.");

    // Each prompt shows the transcript so far.
    let requests = model.requests();
    let last_prompt = &requests[2].messages[0].text;
    assert!(last_prompt.contains("action: look\nNothing happens after look."));
    assert!(last_prompt.contains("action: finish\nFinished."));
}

#[test]
fn silent_model_exhausts_the_budget() {
    let model = CannedBackend::new(Vec::<String>::new()).with_fallback("think: hmm");
    let mut env = FlagEnv::default();
    let mut ledger = CallLedger::new();
    let outcome = run_executor("finish", &mut env, &config(7), &model, &mut ledger, 1, &ContextMap::new());

    assert!(!outcome.completed);
    assert_eq!(outcome.termination, Termination::BudgetExhausted);
    assert_eq!(outcome.llm_calls_used, 7);
    assert_eq!(ledger.total_calls, 7);
    let parse_failures = outcome
        .trajectory
        .iter()
        .filter(|s| s.kind == StepKind::Observation && s.text == PARSE_FAILURE_OBSERVATION)
        .count();
    assert_eq!(parse_failures, 7);
    assert!(env.steps.is_empty());
}

#[test]
fn failure_verdict_is_self_reported_even_when_goal_reached() {
    let model = CannedBackend::new(["action: finish", "task failed"]);
    let mut env = FlagEnv::default();
    let outcome = run_executor(
        "finish",
        &mut env,
        &config(5),
        &model,
        &mut CallLedger::new(),
        1,
        &ContextMap::new(),
    );
    assert!(!outcome.completed);
    assert_eq!(outcome.termination, Termination::DeclaredFailed);
    assert!(env.done);
}

#[test]
fn first_marker_wins_and_is_flagged() {
    let model = CannedBackend::new(["think: task failed? no, task completed"]);
    let outcome = run_executor(
        "finish",
        &mut FlagEnv::default(),
        &config(5),
        &model,
        &mut CallLedger::new(),
        1,
        &ContextMap::new(),
    );
    assert!(!outcome.completed);
    assert!(outcome.ambiguous_verdict);
}

#[test]
fn ledger_ceiling_stops_the_loop() {
    let model = CannedBackend::new(Vec::<String>::new()).with_fallback("action: look");
    let mut ledger = CallLedger::with_ceiling(4);
    let outcome = run_executor(
        "finish",
        &mut FlagEnv::default(),
        &config(20),
        &model,
        &mut ledger,
        1,
        &ContextMap::new(),
    );
    assert_eq!(outcome.llm_calls_used, 4);
    assert_eq!(ledger.total_calls, 4);
    assert!(outcome.error.is_some());
    assert_eq!(model.requests().len(), 4);
}

#[test]
fn incoming_context_is_rendered_and_passed_on() {
    let model = CannedBackend::new(["task completed"]);
    let mut incoming = ContextMap::new();
    incoming.insert("inventory".into(), "[stick] (2)".into());
    let outcome = run_executor(
        "finish",
        &mut FlagEnv::default(),
        &config(3),
        &model,
        &mut CallLedger::new(),
        2,
        &incoming,
    );
    assert_eq!(outcome.salient_context, incoming);
    let prompt = &model.requests()[0].messages[0].text;
    assert!(prompt.contains("Commands: finish"));
    assert!(prompt.contains("[stick] (2)"));
}
