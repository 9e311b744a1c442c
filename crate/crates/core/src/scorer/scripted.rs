//! Rule-based reference agent over the toy domains.
//!
//! Puts `p_hit` of the mass on the goal-advancing admissible action and spreads
//! the rest uniformly over the other admissible actions. With no
//! goal-advancing action the distribution is uniform; anything inadmissible
//! gets `epsilon_floor`. The mean log-probability spreads `ln p` evenly over
//! the action's whitespace tokens.

use serde::{Deserialize, Serialize};

use super::{AgentContext, MeanLogProb, ScorerBackend, ScorerError};
use crate::envsim::policy::{self, PolicyView};
use crate::model::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedScorerConfig {
    #[serde(default = "default_p_hit")]
    pub p_hit: f64,
    #[serde(default = "default_floor")]
    pub epsilon_floor: f64,
}

fn default_p_hit() -> f64 {
    0.8
}
fn default_floor() -> f64 {
    1e-6
}

impl Default for ScriptedScorerConfig {
    fn default() -> Self {
        Self {
            p_hit: default_p_hit(),
            epsilon_floor: default_floor(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedScorer {
    cfg: ScriptedScorerConfig,
}

impl ScriptedScorer {
    pub fn new(cfg: ScriptedScorerConfig) -> Result<Self, ScorerError> {
        if !(cfg.p_hit > 0.0 && cfg.p_hit <= 1.0) || !(cfg.epsilon_floor > 0.0 && cfg.epsilon_floor < 1.0) {
            return Err(ScorerError::Input(format!("invalid scripted scorer config {cfg:?}")));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &ScriptedScorerConfig {
        &self.cfg
    }

    fn view(ctx: &AgentContext) -> PolicyView<'_> {
        let texts: Vec<&str> = ctx.turns.iter().map(|t| t.text.as_str()).collect();
        PolicyView {
            domain: ctx.domain,
            initial: texts.first().copied().unwrap_or(""),
            steps: texts[1..].chunks(2).filter(|c| c.len() == 2).map(|c| (c[0], c[1])).collect(),
        }
    }

    /// Probability the scripted agent assigns to `action` in this context.
    pub fn probability(&self, ctx: &AgentContext, action: &str) -> f64 {
        let view = Self::view(ctx);
        let allowed = policy::admissible(&view);
        if !allowed.iter().any(|a| a == action) {
            return self.cfg.epsilon_floor;
        }
        let n = allowed.len() as f64;
        match policy::goal_action(&view) {
            // a lone admissible action takes all the mass
            Some(_) if allowed.len() == 1 => 1.0,
            Some(g) if g == action => self.cfg.p_hit,
            Some(_) => (1.0 - self.cfg.p_hit) / (n - 1.0),
            None => 1.0 / n,
        }
    }
}

impl ScorerBackend for ScriptedScorer {
    fn id(&self) -> String {
        format!("scripted(p_hit={},floor={})", self.cfg.p_hit, self.cfg.epsilon_floor)
    }

    fn mean_logprob(&self, context: &AgentContext, action: &Action) -> Result<MeanLogProb, ScorerError> {
        let tokens = action.as_str().split_whitespace().count();
        let p = self.probability(context, action.as_str()).max(self.cfg.epsilon_floor);
        MeanLogProb::new(p.ln() / tokens as f64, tokens)
    }
}
