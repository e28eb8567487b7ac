mod common;

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use adapt_core::llm::CannedBackend;
use adapt_core::{run_episode, AgentConfig, Backends, GenRequest, SkipReason, Strategy};
use common::{book, env_for, history_len, is_planner, scripted, FlagEnv, FnModel};
use textcraft::generate_tasks;

/// Fails every trial before `succeed_on` (1-based), then finishes.
fn trial_model(succeed_on: u32) -> Arc<FnModel<impl FnMut(&GenRequest) -> String + Send>> {
    let starts = AtomicU32::new(0);
    Arc::new(FnModel::new(move |request: &GenRequest| {
        if history_len(request) == 0 {
            let trial = starts.fetch_add(1, Ordering::SeqCst) + 1;
            if trial >= succeed_on {
                return "action: finish".into();
            }
            return "think: no luck. task failed".into();
        }
        "task completed".into()
    }))
}

#[test]
fn try_again_stops_at_first_success() {
    for d_max in 1..=4 {
        for succeed_on in 1..=5 {
            let model = trial_model(succeed_on);
            let backends = Backends::shared(model.clone());
            let mut env = FlagEnv::default();
            let result = run_episode(
                Strategy::TryAgain,
                "finish",
                &mut env,
                &AgentConfig::with_d_max(d_max),
                &backends,
            );
            assert_eq!(result.trials, d_max.min(succeed_on), "d_max {d_max}, success on {succeed_on}");
            assert_eq!(result.gold_reward, succeed_on <= d_max);
            assert_eq!(result.ledger.planner_calls, 0);

            let temperatures: Vec<_> = model
                .requests()
                .iter()
                .filter(|r| history_len(r) == 0)
                .map(|r| r.temperature)
                .collect();
            assert_eq!(temperatures.len() as u32, result.trials);
            assert_eq!(temperatures[0], None);
            assert!(temperatures[1..].iter().all(|t| *t == Some(0.7)));
        }
    }
}

#[test]
fn try_again_resets_between_trials() {
    let model = Arc::new(CannedBackend::new(Vec::<String>::new()).with_fallback("task failed"));
    let backends = Backends::shared(model.clone());
    let book = book();
    let mut env = env_for(&book, "stick");
    env.step("get 1 oak log");
    let result = run_episode(
        Strategy::TryAgain,
        "craft stick",
        &mut env,
        &AgentConfig::with_d_max(3),
        &backends,
    );
    assert_eq!(result.trials, 3);
    assert_eq!(env.state().count("oak log"), 0);
}

#[test]
fn plan_and_execute_runs_steps_one_level_down() {
    let model = Arc::new(CannedBackend::new([
        "Step 1: a\nStep 2: b\nStep 3: c\nExecution Order: (Step 1 OR Step 2) AND Step 3",
        "task failed",
        "task completed",
        "task completed",
    ]));
    let backends = Backends::shared(model.clone());
    let result = run_episode(
        Strategy::PlanAndExecute,
        "win",
        &mut FlagEnv::default(),
        &AgentConfig::default(),
        &backends,
    );
    assert!(result.root.node_result);
    assert_eq!(result.root.outcome, None);
    assert_eq!(result.ledger.planner_calls, 1);
    assert_eq!(result.ledger.executor_calls, 3);
    assert!(result.root.children.iter().all(|c| c.depth == 2 && c.plan.is_none()));
    assert_eq!(result.k_max, 2);
    assert!(model.requests()[0].messages[0].text.contains("single\ncrafting command"));
}

#[test]
fn plan_and_execute_stops_at_first_failed_conjunct() {
    let model = Arc::new(CannedBackend::new([
        "Step 1: a\nStep 2: b\nStep 3: c\nExecution Order: Step 1 AND Step 2 AND Step 3",
        "task failed",
    ]));
    let backends = Backends::shared(model.clone());
    let result = run_episode(
        Strategy::PlanAndExecute,
        "win",
        &mut FlagEnv::default(),
        &AgentConfig::default(),
        &backends,
    );
    assert!(!result.root.node_result);
    assert_eq!(result.ledger.total_calls, 2);
    let reasons: Vec<_> = result.root.children.iter().map(|c| c.skipped).collect();
    assert_eq!(reasons, vec![None, Some(SkipReason::NotReached), Some(SkipReason::NotReached)]);
}

#[test]
fn plan_and_execute_solves_shallow_targets_with_scripted_policies() {
    let book = book();
    for task in generate_tasks(&book, 0, 2, 2).unwrap() {
        let mut env = env_for(&book, &task.target);
        let result = run_episode(
            Strategy::PlanAndExecute,
            &task.goal(),
            &mut env,
            &AgentConfig::default(),
            &scripted(&book, 1),
        );
        assert!(result.gold_reward, "{}", task.target);
        assert_eq!(result.ledger.planner_calls, 1);
    }
}

#[test]
fn executor_only_scales_its_budget() {
    for d_max in 1..=4 {
        let model = Arc::new(CannedBackend::new(Vec::<String>::new()).with_fallback("action: look"));
        let backends = Backends::shared(model.clone());
        let cfg = AgentConfig::with_d_max(d_max);
        let result = run_episode(Strategy::ExecutorOnly, "win", &mut FlagEnv::default(), &cfg, &backends);
        assert_eq!(result.ledger.total_calls, 20 * d_max);
        assert!(result.ledger.total_calls <= cfg.call_ceiling());
    }
}

#[test]
fn every_strategy_stays_within_the_ceiling() {
    let stubborn = || {
        Arc::new(FnModel::new(|request: &GenRequest| {
            if is_planner(request) {
                let steps: String = (1..=20).map(|i| format!("Step {i}: part {i}\n")).collect();
                let order: Vec<String> = (1..=20).map(|i| format!("Step {i}")).collect();
                format!("{steps}Execution Order: {}", order.join(" OR "))
            } else {
                "action: look".into()
            }
        }))
    };
    let book = book();
    let tasks = generate_tasks(&book, 0, 1, 4).unwrap();
    for strategy in Strategy::ALL {
        for d_max in 1..=4 {
            let cfg = AgentConfig::with_d_max(d_max);
            let result = run_episode(
                strategy,
                "win",
                &mut FlagEnv::default(),
                &cfg,
                &Backends::shared(stubborn()),
            );
            assert!(result.ledger.total_calls <= cfg.call_ceiling(), "{strategy} at d_max {d_max}");
            for task in &tasks {
                let mut env = env_for(&book, &task.target);
                let result = run_episode(strategy, &task.goal(), &mut env, &cfg, &scripted(&book, 1));
                assert!(result.ledger.total_calls <= cfg.call_ceiling());
            }
        }
    }
}
