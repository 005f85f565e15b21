//! Hierarchical content names and prefix matching.
//!
//! A name is an ordered list of non-empty text components. The canonical
//! text form is `/` followed by the components joined with `/`; the empty
//! (root) name renders as `/` and is a prefix of every name. Names are the
//! unit of routing, Interest/Data matching and throttling granularity.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Name {
    components: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MalformedName {
    #[error("name {0:?} must start with '/'")]
    MissingLeadingSlash(String),
    #[error("name {0:?} contains an empty component")]
    EmptyComponent(String),
}

impl Name {
    /// The empty name; prefix of every name.
    pub fn root() -> Self {
        Name::default()
    }

    /// Parses the canonical text form. `"/"` is the root name; every other
    /// valid text is `/` followed by non-empty components.
    pub fn parse(text: &str) -> Result<Self, MalformedName> {
        if text == "/" {
            return Ok(Name::root());
        }
        let Some(rest) = text.strip_prefix('/') else {
            return Err(MalformedName::MissingLeadingSlash(text.to_string()));
        };
        let mut components = Vec::new();
        for comp in rest.split('/') {
            if comp.is_empty() {
                return Err(MalformedName::EmptyComponent(text.to_string()));
            }
            components.push(comp.to_string());
        }
        Ok(Name { components })
    }

    pub fn from_components<I, S>(iter: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let components: Vec<String> = iter.into_iter().map(Into::into).collect();
        debug_assert!(
            components.iter().all(|c| !c.is_empty() && !c.contains('/')),
            "invalid component"
        );
        Name { components }
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_prefix_of(&self, other: &Name) -> bool {
        other.components.len() >= self.components.len()
            && self.components == other.components[..self.components.len()]
    }

    /// Proper prefix: a prefix that is strictly shorter than `other`.
    pub fn is_strict_prefix_of(&self, other: &Name) -> bool {
        self.len() < other.len() && self.is_prefix_of(other)
    }

    /// The first `len` components as a new name.
    pub fn prefix(&self, len: usize) -> Name {
        Name {
            components: self.components[..len.min(self.components.len())].to_vec(),
        }
    }

    /// This name extended with one more component.
    pub fn child(&self, component: impl Into<String>) -> Name {
        let component = component.into();
        debug_assert!(!component.is_empty() && !component.contains('/'));
        let mut components = self.components.clone();
        components.push(component);
        Name { components }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.is_empty() {
            return f.write_str("/");
        }
        for comp in &self.components {
            write!(f, "/{comp}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl TryFrom<String> for Name {
    type Error = MalformedName;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Name::parse(&value)
    }
}

impl From<Name> for String {
    fn from(value: Name) -> Self {
        value.to_string()
    }
}

impl std::str::FromStr for Name {
    type Err = MalformedName;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Name::parse(s)
    }
}
