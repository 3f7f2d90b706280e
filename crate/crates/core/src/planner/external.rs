use serde::{Deserialize, Serialize};

use super::{retrieve, synthesize_plan, InterventionPlan, KnowledgeBase, PlanConfig, PlannerError, Retrieved};
use crate::decoder::{AffectState, AffectTrajectory};
use crate::hook::{HookCommand, JsonLineProcess};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerMode {
    #[default]
    Template,
    External { hook: HookCommand },
}

#[derive(Serialize)]
struct PlanRequest<'a> {
    state: AffectState,
    trajectory: &'a AffectTrajectory,
    target: AffectState,
    retrieved: &'a [Retrieved],
    config: &'a PlanConfig,
}

/// Retrieval plus synthesis. In external mode the child process proposes a
/// whole plan; a plan that fails validation, or no answer at all, falls
/// back to the template planner.
pub struct Planner {
    kb: KnowledgeBase,
    k: usize,
    process: Option<JsonLineProcess>,
}

impl Planner {
    pub const DEFAULT_K: usize = 5;

    pub fn new(kb: KnowledgeBase, mode: &PlannerMode) -> Self {
        let process = match mode {
            PlannerMode::Template => None,
            PlannerMode::External { hook } => match JsonLineProcess::spawn(hook) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("external planner unavailable, using templates: {e}");
                    None
                }
            },
        };
        Self { kb, k: Self::DEFAULT_K, process }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn plan(
        &mut self,
        state: AffectState,
        traj: &AffectTrajectory,
        target: AffectState,
        cfg: &PlanConfig,
    ) -> Result<InterventionPlan, PlannerError> {
        let retrieved = if self.kb.is_empty() && cfg.allow_fallback {
            Vec::new()
        } else {
            retrieve(&self.kb, state, target, self.k)?
        };
        if let Some(p) = self.process.as_mut() {
            let req = PlanRequest { state, trajectory: traj, target, retrieved: &retrieved, config: cfg };
            match p.request::<_, InterventionPlan>(&req) {
                Ok(plan) => match plan.validate() {
                    Ok(()) if plan.sections == cfg.sections => return Ok(plan),
                    Ok(()) => log::warn!("external plan has {} sections, expected {}", plan.sections, cfg.sections),
                    Err(e) => log::warn!("external plan rejected: {e}"),
                },
                Err(e) => log::warn!("external planner: {e}; using templates"),
            }
        }
        synthesize_plan(state, traj, target, &retrieved, cfg)
    }
}
