use serde::{Deserialize, Serialize};

use super::operator::{run_scripted, RunOutcome, ScriptedOperator};
use super::{Session, SessionConfig, SessionError};
use crate::actions::Action;
use crate::menu::InterfaceMode;
use crate::predictor::{Candidate, DemoStep, DemoTrace};
use crate::scenesim::SceneDescription;

/// An action the operator started, with the predictor inputs in force at
/// the time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action_id: u64,
    /// Menu opening the action was chosen in.
    pub opening: u64,
    pub context: Vec<f64>,
    pub candidates: Vec<Candidate>,
    pub action: Action,
}

/// Training steps from a run's decisions. Consecutive constraint toggles
/// made in one menu opening count as a single choice of their final
/// state. Choices outside the candidate list are dropped.
pub fn collapse_decisions(decisions: &[Decision], task: Option<crate::scenesim::tasks::TaskKind>) -> DemoTrace {
    let mut steps = Vec::new();
    let mut i = 0;
    while i < decisions.len() {
        let first = &decisions[i];
        let mut last = first;
        if matches!(first.action, Action::ConstrainedTeleop { .. }) {
            while let Some(next) = decisions.get(i + 1) {
                if matches!(next.action, Action::ConstrainedTeleop { .. }) && next.opening == first.opening {
                    last = next;
                    i += 1;
                } else {
                    break;
                }
            }
        }
        if let Some(chosen) = first.candidates.iter().position(|c| c.action == last.action) {
            steps.push(DemoStep { context: first.context.clone(), candidates: first.candidates.clone(), chosen });
        }
        i += 1;
    }
    DemoTrace { task, steps }
}

/// Runs the scripted operator on `scene` in the manual menu and returns
/// the finished session, the outcome and the extracted demonstration.
pub fn generate_demo(
    scene: SceneDescription,
    config: SessionConfig,
    max_seconds: f64,
) -> Result<(Session, RunOutcome, DemoTrace), SessionError> {
    let config = SessionConfig { mode: InterfaceMode::Manual, ..config };
    let task = scene.task;
    let mut session = Session::new(scene, config, None)?;
    let mut operator =
        ScriptedOperator::new(&session).ok_or_else(|| SessionError::Config("scene has no task".into()))?;
    let outcome = run_scripted(&mut session, &mut operator, max_seconds, &mut |_, _| {})?;
    let demo = collapse_decisions(session.decisions(), task);
    Ok((session, outcome, demo))
}
