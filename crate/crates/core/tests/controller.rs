mod common;

use std::sync::Arc;

use adapt_core::llm::CannedBackend;
use adapt_core::{
    run_episode, AgentConfig, Backends, CallLedger, Controller, ControllerConfig, ExecutorConfig, PlannerConfig,
    SkipReason, Strategy, TaskNode,
};
use common::{book, env_for, executor_task, history_len, is_planner, scripted, visited, FlagEnv, FnModel};
use textcraft::generate_tasks;

fn adapt(target: &str, d_max: u32, competence: u32) -> adapt_core::EpisodeResult {
    let book = book();
    let mut env = env_for(&book, target);
    let backends = scripted(&book, competence);
    run_episode(
        Strategy::Adapt,
        &format!("craft {target}"),
        &mut env,
        &AgentConfig::with_d_max(d_max),
        &backends,
    )
}

fn check_tree(node: &TaskNode) {
    assert_eq!(node.recompute_result(), node.node_result, "node `{}`", node.task);
    if let Some(plan) = &node.plan {
        assert_eq!(plan.steps.len(), node.children.len());
        let mut touched = Vec::new();
        visited(&plan.order, &|id| node.children[id as usize - 1].node_result, &mut touched);
        for (i, child) in node.children.iter().enumerate() {
            let reached = touched.contains(&(i as u32 + 1));
            assert_eq!(
                child.skipped != Some(SkipReason::NotReached),
                reached,
                "child {} of `{}`",
                i + 1,
                node.task
            );
            assert_eq!(child.depth, node.depth + 1);
        }
    }
    node.children.iter().for_each(check_tree);
}

#[test]
fn beyond_max_depth_makes_no_calls() {
    let model = Arc::new(CannedBackend::new(["task completed"]));
    let backends = Backends::shared(model.clone());
    let cfg = ControllerConfig {
        d_max: 2,
        ..ControllerConfig::default()
    };
    let (executor, planner) = (ExecutorConfig::default(), PlannerConfig::default());
    let mut env = FlagEnv::default();
    let mut ledger = CallLedger::new();
    let node = Controller::new(&cfg, &executor, &planner, &backends, &mut env, &mut ledger).adapt_run("finish", 3);

    assert_eq!(node.skipped, Some(SkipReason::DepthLimit));
    assert!(!node.node_result);
    assert_eq!(ledger.total_calls, 0);
    assert!(model.requests().is_empty());
}

#[test]
fn single_level_matches_plain_executor_run() {
    let book = book();
    for task in generate_tasks(&book, 0, 1, 4).unwrap() {
        let goal = task.goal();
        let cfg = AgentConfig::with_d_max(1);
        let mut a = env_for(&book, &task.target);
        let mut b = env_for(&book, &task.target);
        let recursive = run_episode(Strategy::Adapt, &goal, &mut a, &cfg, &scripted(&book, 1));
        let flat = run_episode(Strategy::ExecutorOnly, &goal, &mut b, &cfg, &scripted(&book, 1));
        let lhs = serde_json::to_string(&recursive.root.outcome).unwrap();
        let rhs = serde_json::to_string(&flat.root.outcome).unwrap();
        assert_eq!(lhs, rhs, "{goal}");
        assert_eq!(recursive.gold_reward, flat.gold_reward);
        assert_eq!(a.state(), b.state());
        assert!(recursive.root.children.iter().all(|c| c.skipped.is_some()));
        if let Some(first) = recursive.root.children.first() {
            assert_eq!(first.skipped, Some(SkipReason::DepthLimit));
        }
    }
}

#[test]
fn no_planning_when_executor_succeeds() {
    let book = book();
    for task in generate_tasks(&book, 0, 1, 4).unwrap() {
        for competence in [1, 2, 20] {
            let mut env = env_for(&book, &task.target);
            let result = run_episode(
                Strategy::Adapt,
                &task.goal(),
                &mut env,
                &AgentConfig::default(),
                &scripted(&book, competence),
            );
            let direct = result.root.outcome.as_ref().unwrap().completed;
            if direct {
                assert_eq!(result.ledger.planner_calls, 0, "{}", task.target);
                assert!(result.root.plan.is_none());
            } else {
                assert!(result.ledger.planner_calls > 0);
            }
            if competence == 20 {
                assert!(direct && result.gold_reward, "{}", task.target);
            }
        }
    }
}

#[test]
fn two_level_target_decomposes_once() {
    let result = adapt("beehive", 3, 1);
    assert!(result.gold_reward);
    assert!(result.self_reported_success);
    assert_eq!(result.k_max, 2);
    assert_eq!(result.ledger.planner_calls, 1);
    let executor_calls: u32 = result
        .root
        .walk()
        .iter()
        .filter_map(|n| n.outcome.as_ref())
        .map(|o| o.llm_calls_used)
        .sum();
    assert_eq!(executor_calls, result.ledger.executor_calls);
    assert_eq!(result.ledger.executor_calls + result.ledger.planner_calls, result.ledger.total_calls);
    check_tree(&result.root);
}

#[test]
fn depth_tracks_recipe_depth() {
    let book = book();
    for task in generate_tasks(&book, 0, 1, 4).unwrap() {
        let mut solved_before = false;
        for d_max in 1..=4 {
            let result = adapt(&task.target, d_max, 1);
            check_tree(&result.root);
            assert!(result.k_max <= d_max);
            assert!(result.ledger.total_calls <= AgentConfig::with_d_max(d_max).call_ceiling());
            assert_eq!(result.gold_reward, task.depth <= d_max, "{} at d_max {d_max}", task.target);
            if result.gold_reward {
                assert_eq!(result.k_max, task.depth, "{}", task.target);
            }
            assert!(!solved_before || result.gold_reward);
            solved_before = result.gold_reward;
        }
    }
}

#[test]
fn reaching_the_goal_makes_later_steps_vacuous() {
    let model = Arc::new(FnModel::new(|request: &adapt_core::GenRequest| {
        if is_planner(request) {
            "Step 1: finish\nStep 2: look\nStep 3: look again\nExecution Order: Step 1 AND Step 2 AND Step 3".into()
        } else if executor_task(request) == Some("finish") {
            match history_len(request) {
                0 => "action: finish".to_string(),
                _ => "task completed".to_string(),
            }
        } else {
            "task failed".into()
        }
    }));
    let backends = Backends::shared(model.clone());
    let mut env = FlagEnv::default();
    let result = run_episode(Strategy::Adapt, "win the game", &mut env, &AgentConfig::default(), &backends);

    let children = &result.root.children;
    assert_eq!(children[0].skipped, None, "{:?}", children[0]);
    assert!(children[0].node_result);
    assert_eq!(children[1].skipped, Some(SkipReason::Vacuous));
    assert_eq!(children[2].skipped, Some(SkipReason::Vacuous));
    assert!(result.root.node_result);
    assert!(result.gold_reward);
    assert_eq!(result.ledger.total_calls, 4);
    check_tree(&result.root);
}

#[test]
fn ceiling_cuts_off_remaining_alternatives() {
    let model = Arc::new(FnModel::new(|request: &adapt_core::GenRequest| {
        if is_planner(request) {
            "Step 1: a\nStep 2: b\nStep 3: c\nExecution Order: Step 1 OR Step 2 OR Step 3".into()
        } else {
            "action: look".into()
        }
    }));
    let backends = Backends::shared(model.clone());
    let mut env = FlagEnv::default();
    let cfg = AgentConfig::with_d_max(3);
    let result = run_episode(Strategy::Adapt, "win", &mut env, &cfg, &backends);

    // 3 levels of (20 executor calls + 1 planner call) fill the ceiling exactly.
    assert_eq!(cfg.call_ceiling(), 63);
    assert_eq!(result.ledger.total_calls, 63);
    assert_eq!(model.requests().len(), 63);
    assert_eq!(result.k_max, 3);
    assert!(!result.root.node_result);
    let reasons: Vec<_> = result.root.walk().iter().filter_map(|n| n.skipped).collect();
    assert_eq!(reasons.iter().filter(|r| **r == SkipReason::DepthLimit).count(), 3);
    assert!(reasons.contains(&SkipReason::BudgetExhausted));
    assert!(!reasons.contains(&SkipReason::NotReached));
}

#[test]
fn unusable_plan_fails_the_node() {
    let model = Arc::new(CannedBackend::new(["task failed", "I have no idea.", "Still no idea."]));
    let backends = Backends::shared(model.clone());
    let result = run_episode(
        Strategy::Adapt,
        "win",
        &mut FlagEnv::default(),
        &AgentConfig::default(),
        &backends,
    );
    assert!(!result.root.node_result);
    assert!(result.root.plan_error.is_some());
    assert_eq!(result.ledger.planner_calls, 2);
    assert!(result.root.children.is_empty());
}
