//! Agents config: the virtual humans a session may cast.
//!
//! ```toml
//! auto_cast_profile = "tutor"
//!
//! [[agent]]
//! id = "assistant"
//! roles = ["assistant"]
//! profile = "tutor"
//! seed = 7
//!
//! [[agent]]
//! id = "rookie"
//! roles = ["operator"]
//! abilities = ["strong"]
//! profile = { p_follow = 0.7, p_error = 0.2, p_hinder = 0.0, p_idle = 0.1 }
//! ```
//!
//! An agent stands in for its roles only when no human claims them. Roles
//! no agent covers are filled by a virtual human using `auto_cast_profile`.

use std::collections::BTreeSet;

use cotrain_core::decision::{PedagogicalProfile, ProfileError};
use cotrain_core::dsl::Scenario;
use cotrain_core::ids::is_valid_token;
use cotrain_core::{Ability, HumanoidId, RoleName};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("agents config is not valid TOML: {0}")]
    Toml(String),
    #[error("agent id `{0}` is not a valid identifier")]
    BadId(String),
    #[error("agent `{0}` is listed twice")]
    DuplicateAgent(String),
    #[error("agent `{0}` plays no role")]
    NoRoles(String),
    #[error("agent `{agent}` plays undeclared role `{role}`")]
    UnknownRole { agent: String, role: String },
    #[error("role `{role}` is given to both `{first}` and `{second}`")]
    RoleConflict {
        role: String,
        first: String,
        second: String,
    },
    #[error("agent `{agent}`: {source}")]
    Profile { agent: String, source: ProfileError },
    #[error("auto-cast profile: {0}")]
    AutoCastProfile(ProfileError),
}

/// A profile given by preset name or by its four probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Preset(String),
    Explicit {
        p_follow: f64,
        p_error: f64,
        p_hinder: f64,
        p_idle: f64,
    },
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Preset("tutor".into())
    }
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<PedagogicalProfile, ProfileError> {
        match self {
            ProfileSpec::Preset(name) => PedagogicalProfile::from_preset(name),
            ProfileSpec::Explicit {
                p_follow,
                p_error,
                p_hinder,
                p_idle,
            } => PedagogicalProfile::custom(*p_follow, *p_error, *p_hinder, *p_idle),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub roles: Vec<String>,
    #[serde(default)]
    pub abilities: Vec<String>,
    #[serde(default)]
    pub profile: ProfileSpec,
    /// RNG stream of this agent; defaults to its position in the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    #[serde(default)]
    pub auto_cast_profile: ProfileSpec,
    #[serde(rename = "agent", default)]
    pub agents: Vec<AgentSpec>,
}

/// A virtual human ready to be cast.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlan {
    pub id: HumanoidId,
    pub roles: Vec<RoleName>,
    pub abilities: BTreeSet<Ability>,
    pub profile: PedagogicalProfile,
    pub stream: u64,
}

impl AgentsConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("agents config serializes")
    }

    /// Checks the config against a scenario and resolves every profile.
    pub fn plans(&self, scenario: &Scenario) -> Result<Vec<AgentPlan>, ConfigError> {
        let mut ids = BTreeSet::new();
        let mut owners: Vec<(&str, &str)> = Vec::new();
        let mut out = Vec::new();
        for (index, agent) in self.agents.iter().enumerate() {
            if !is_valid_token(&agent.id) {
                return Err(ConfigError::BadId(agent.id.clone()));
            }
            if !ids.insert(agent.id.as_str()) {
                return Err(ConfigError::DuplicateAgent(agent.id.clone()));
            }
            if agent.roles.is_empty() {
                return Err(ConfigError::NoRoles(agent.id.clone()));
            }
            for role in &agent.roles {
                if !scenario.roles.contains_key(role.as_str()) {
                    return Err(ConfigError::UnknownRole {
                        agent: agent.id.clone(),
                        role: role.clone(),
                    });
                }
                if let Some((_, first)) = owners.iter().find(|(r, _)| r == role) {
                    return Err(ConfigError::RoleConflict {
                        role: role.clone(),
                        first: first.to_string(),
                        second: agent.id.clone(),
                    });
                }
                owners.push((role, &agent.id));
            }
            let profile = agent
                .profile
                .resolve()
                .map_err(|source| ConfigError::Profile {
                    agent: agent.id.clone(),
                    source,
                })?;
            out.push(AgentPlan {
                id: agent.id.as_str().into(),
                roles: agent.roles.iter().map(|r| r.as_str().into()).collect(),
                abilities: agent.abilities.iter().map(|a| a.as_str().into()).collect(),
                profile,
                stream: agent.seed.unwrap_or(index as u64),
            });
        }
        self.auto_cast_profile
            .resolve()
            .map_err(ConfigError::AutoCastProfile)?;
        Ok(out)
    }

    pub fn auto_cast(&self) -> Result<PedagogicalProfile, ConfigError> {
        self.auto_cast_profile
            .resolve()
            .map_err(ConfigError::AutoCastProfile)
    }
}
