use std::fmt;
use std::str::FromStr;

use icf_core::planner::PlannerSource;

use crate::error::SimError;

/// Controller driving an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlannerMode {
    /// Classic potential field: inverse-distance repulsion plus attraction.
    Apf,
    /// Circular fields with every field vector fixed to `+z`.
    Cf,
    /// Circular-field planner whose agents branch on obstacle proximity.
    Cfp,
    IcfPrm,
    IcfRrt,
    /// Attraction and joint-limit springs only, no avoidance.
    Attract,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 6] =
        [PlannerMode::Apf, PlannerMode::Cf, PlannerMode::Cfp, PlannerMode::IcfPrm, PlannerMode::IcfRrt, PlannerMode::Attract];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerMode::Apf => "apf",
            PlannerMode::Cf => "cf",
            PlannerMode::Cfp => "cfp",
            PlannerMode::IcfPrm => "icf-prm",
            PlannerMode::IcfRrt => "icf-rrt",
            PlannerMode::Attract => "attract",
        }
    }

    /// Pre-planner of the informed modes.
    pub fn pre_planner(&self) -> Option<PlannerSource> {
        match self {
            PlannerMode::IcfPrm => Some(PlannerSource::Prm),
            PlannerMode::IcfRrt => Some(PlannerSource::Rrt),
            _ => None,
        }
    }

    /// Modes that run predictive agents.
    pub fn uses_agents(&self) -> bool {
        matches!(self, PlannerMode::Cfp | PlannerMode::IcfPrm | PlannerMode::IcfRrt)
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        PlannerMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| SimError::UnknownMode(s.to_string()))
    }
}

/// Parses a comma-separated list such as `apf,cf,icf-prm`.
pub fn parse_modes(list: &str) -> Result<Vec<PlannerMode>, SimError> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in PlannerMode::ALL {
            assert_eq!(m.name().parse::<PlannerMode>().unwrap(), m);
        }
        assert_eq!(parse_modes("apf, icf-rrt").unwrap(), vec![PlannerMode::Apf, PlannerMode::IcfRrt]);
        assert!(parse_modes("apf,stomp").is_err());
    }
}
