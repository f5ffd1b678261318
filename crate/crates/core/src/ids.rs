//! Identifier newtypes shared across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_string())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Behavioral object identifier, unique within a world.
    ObjectId
);
string_id!(
    /// Humanoid (avatar or virtual human) identifier.
    HumanoidId
);
string_id!(
    /// Scenario action identifier.
    ActionId
);
string_id!(
    /// Scenario step identifier.
    StepId
);
string_id!(
    /// Team role name such as `operator` or `assistant`.
    RoleName
);
string_id!(
    /// Opaque capability token. Matching is plain set inclusion.
    Ability
);

/// True when `token` is usable as an identifier or ability in the scenario
/// language: non-empty, no whitespace, none of the reserved separators.
pub fn is_valid_token(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| !c.is_whitespace() && !matches!(c, ',' | '=' | '"' | '#' | ':' | '>'))
}
