//! Household members and their background attributes.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RosterError {
    #[error("roster needs at least 2 users, got {0}")]
    TooFewUsers(usize),
    #[error("duplicate user name: {0}")]
    DuplicateUser(String),
    #[error("user {name}: {field} must be non-empty")]
    EmptyField { name: String, field: &'static str },
    #[error("failed to read roster {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed roster file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Background attributes of one household member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub name: String,
    pub role: String,
    pub occupation: String,
}

impl UserProfile {
    pub fn new(name: &str, role: &str, occupation: &str) -> Self {
        Self {
            name: name.to_string(),
            role: role.to_string(),
            occupation: occupation.to_string(),
        }
    }
}

/// Serialized per-user entry of the roster file (the name is the map key).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Background {
    role: String,
    occupation: String,
}

/// Ordered set of candidate owners. Iteration order is insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    users: Vec<UserProfile>,
}

impl Roster {
    pub fn new(users: Vec<UserProfile>) -> Result<Self, RosterError> {
        if users.len() < 2 {
            return Err(RosterError::TooFewUsers(users.len()));
        }
        for (i, u) in users.iter().enumerate() {
            if u.name.trim().is_empty() {
                return Err(RosterError::EmptyField {
                    name: u.name.clone(),
                    field: "name",
                });
            }
            if u.role.trim().is_empty() {
                return Err(RosterError::EmptyField {
                    name: u.name.clone(),
                    field: "role",
                });
            }
            if u.occupation.trim().is_empty() {
                return Err(RosterError::EmptyField {
                    name: u.name.clone(),
                    field: "occupation",
                });
            }
            if users[..i].iter().any(|p| p.name == u.name) {
                return Err(RosterError::DuplicateUser(u.name.clone()));
            }
        }
        Ok(Self { users })
    }

    /// The three-person household used throughout the experiments.
    pub fn default_household() -> Self {
        Self::new(vec![
            UserProfile::new("Bob", "father", "office worker"),
            UserProfile::new("Mary", "mother", "homemaker"),
            UserProfile::new("Tom", "son", "elementary school student"),
        ])
        .expect("static roster is valid")
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.users.iter().map(|u| u.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.users.iter().any(|u| u.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&UserProfile> {
        self.users.iter().find(|u| u.name == name)
    }

    /// Background block as a JSON object keyed by name, in roster order.
    pub fn to_background_json(&self) -> serde_json::Value {
        let map: IndexMap<&str, Background> = self
            .users
            .iter()
            .map(|u| {
                (
                    u.name.as_str(),
                    Background {
                        role: u.role.clone(),
                        occupation: u.occupation.clone(),
                    },
                )
            })
            .collect();
        serde_json::to_value(map).expect("background serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, RosterError> {
        let map: IndexMap<String, Background> = serde_json::from_str(text)?;
        Self::new(
            map.into_iter()
                .map(|(name, b)| UserProfile {
                    name,
                    role: b.role,
                    occupation: b.occupation,
                })
                .collect(),
        )
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_background_json())
            .expect("background serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, RosterError> {
        let text = fs::read_to_string(path).map_err(|source| RosterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_single_user() {
        let r = Roster::new(vec![UserProfile::new("Bob", "father", "office worker")]);
        assert!(matches!(r, Err(RosterError::TooFewUsers(1))));
    }

    #[test]
    fn rejects_duplicates_and_empty_fields() {
        let dup = Roster::new(vec![
            UserProfile::new("Bob", "father", "x"),
            UserProfile::new("Bob", "son", "y"),
        ]);
        assert!(matches!(dup, Err(RosterError::DuplicateUser(n)) if n == "Bob"));
        let empty = Roster::new(vec![
            UserProfile::new("Bob", "", "x"),
            UserProfile::new("Mary", "mother", "y"),
        ]);
        assert!(matches!(
            empty,
            Err(RosterError::EmptyField { field: "role", .. })
        ));
    }

    #[test]
    fn json_keeps_insertion_order() {
        let r = Roster::default_household();
        let text = r.to_json_string();
        assert!(text.find("Bob").unwrap() < text.find("Mary").unwrap());
        assert!(text.find("Mary").unwrap() < text.find("Tom").unwrap());
        let back = Roster::from_json_str(&text).unwrap();
        assert_eq!(back, r);
        let names: Vec<_> = back.names().collect();
        assert_eq!(names, ["Bob", "Mary", "Tom"]);
    }
}
