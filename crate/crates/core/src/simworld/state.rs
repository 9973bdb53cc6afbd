use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ContactState, Pose};

use super::model::WorldModels;

/// Dynamic state of one stem and its contact with the finger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StemState {
    /// Deflection, rad.
    pub q: [f64; 2],
    /// rad/s
    pub qdot: [f64; 2],
    /// Attachment point on the finger, normalized axial coordinate.
    pub u_att: Option<f64>,
    pub contact: ContactState,
}

impl Default for StemState {
    fn default() -> Self {
        Self {
            q: [0.0; 2],
            qdot: [0.0; 2],
            u_att: None,
            contact: ContactState::none(),
        }
    }
}

impl StemState {
    pub fn deflection(&self) -> f64 {
        self.q[0].hypot(self.q[1])
    }

    pub fn is_sliding(&self) -> bool {
        self.contact.in_contact && !self.contact.sticking
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub stem: StemState,
    pub distractors: Vec<StemState>,
    pub ee_pose: Pose,
    pub time: f64,
}

impl WorldState {
    /// Everything at rest, one distractor state per distractor model.
    pub fn at_rest(models: &WorldModels, ee_pose: Pose) -> Self {
        Self {
            stem: StemState::default(),
            distractors: vec![StemState::default(); models.distractors.len()],
            ee_pose,
            time: 0.0,
        }
    }

    pub fn contact(&self) -> &ContactState {
        &self.stem.contact
    }

    /// Ground-truth stem location on the finger, if in contact.
    pub fn u_true(&self) -> Option<f64> {
        self.stem.u_att
    }

    pub fn stems(&self) -> impl Iterator<Item = &StemState> {
        std::iter::once(&self.stem).chain(&self.distractors)
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (i, s) in self.stems().enumerate() {
            let name = if i == 0 { "stem".to_string() } else { format!("distractors[{}]", i - 1) };
            for (j, v) in s.q.iter().chain(&s.qdot).enumerate() {
                if !v.is_finite() {
                    let field = if j < 2 { "q" } else { "qdot" };
                    return Err(Error::Diverged {
                        field: format!("{name}.{field}"),
                        time: self.time,
                    });
                }
            }
            if s.deflection() >= std::f64::consts::FRAC_PI_2 {
                return Err(Error::Diverged {
                    field: format!("{name}.q (deflection beyond pi/2)"),
                    time: self.time,
                });
            }
            if s.u_att.is_some() != s.contact.in_contact {
                return Err(Error::validation(name, "u_att present iff in contact"));
            }
            s.contact.check_invariants()?;
        }
        if !self.ee_pose.is_finite() {
            return Err(Error::Diverged {
                field: "ee_pose".into(),
                time: self.time,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    ContactMade,
    ContactLost,
    SlipStarted,
    SlipEnded,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::ContactMade => "contact_made",
            Event::ContactLost => "contact_lost",
            Event::SlipStarted => "slip_started",
            Event::SlipEnded => "slip_ended",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next: WorldState,
    /// Transitions of the target stem's contact.
    pub events: Vec<Event>,
}

/// Events implied by the change between two contact states.
pub fn transition_events(prev: &ContactState, next: &ContactState) -> Vec<Event> {
    let mut ev = Vec::new();
    match (prev.in_contact, next.in_contact) {
        (false, true) => {
            ev.push(Event::ContactMade);
            if !next.sticking {
                ev.push(Event::SlipStarted);
            }
        }
        (true, false) => {
            if !prev.sticking {
                ev.push(Event::SlipEnded);
            }
            ev.push(Event::ContactLost);
        }
        (true, true) => {
            if prev.sticking && !next.sticking {
                ev.push(Event::SlipStarted);
            } else if !prev.sticking && next.sticking {
                ev.push(Event::SlipEnded);
            }
        }
        (false, false) => {}
    }
    ev
}
