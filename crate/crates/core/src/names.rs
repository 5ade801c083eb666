//! Hierarchical names, service levels and the prefix-based traffic class table.
//!
//! Packets carry no QoS marker. Every node owns a [`ClassTable`] and maps each
//! Interest or Data name onto a [`ServiceLevel`] by longest prefix match.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("empty name")]
    Empty,
    #[error("name `{0}` must start with '/'")]
    MissingLeadingSlash(String),
    #[error("name `{0}` contains an empty component")]
    EmptyComponent(String),
}

/// A hierarchical content name: a nonempty sequence of nonempty components.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    components: Vec<Box<[u8]>>,
}

impl Name {
    /// Builds a name from raw components, rejecting empty lists and empty components.
    pub fn from_components<I, C>(components: I) -> Result<Self, NameError>
    where
        I: IntoIterator<Item = C>,
        C: AsRef<[u8]>,
    {
        let components: Vec<Box<[u8]>> = components
            .into_iter()
            .map(|c| Box::<[u8]>::from(c.as_ref()))
            .collect();
        if components.is_empty() {
            return Err(NameError::Empty);
        }
        if components.iter().any(|c| c.is_empty()) {
            let rendered = Name { components }.to_string();
            return Err(NameError::EmptyComponent(rendered));
        }
        Ok(Name { components })
    }

    pub fn components(&self) -> impl Iterator<Item = &[u8]> {
        self.components.iter().map(|c| &c[..])
    }

    pub fn component(&self, idx: usize) -> Option<&[u8]> {
        self.components.get(idx).map(|c| &c[..])
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// True iff `self` is a component-wise prefix of `name` (reflexive).
    pub fn is_prefix_of(&self, name: &Name) -> bool {
        self.len() <= name.len()
            && self
                .components
                .iter()
                .zip(name.components.iter())
                .all(|(a, b)| a == b)
    }

    /// Returns a new name with `component` appended.
    pub fn child(&self, component: impl AsRef<[u8]>) -> Name {
        let c = component.as_ref();
        assert!(!c.is_empty(), "name components must be nonempty");
        let mut components = self.components.clone();
        components.push(Box::from(c));
        Name { components }
    }
}

/// Parses the textual `/a/b/c` form.
pub fn parse_name(text: &str) -> Result<Name, NameError> {
    if text.is_empty() {
        return Err(NameError::Empty);
    }
    let Some(rest) = text.strip_prefix('/') else {
        return Err(NameError::MissingLeadingSlash(text.to_owned()));
    };
    // a single trailing slash is tolerated, "/" alone is not a name
    let rest = rest.strip_suffix('/').unwrap_or(rest);
    if rest.is_empty() {
        return Err(NameError::Empty);
    }
    let segments: Vec<&str> = rest.split('/').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(NameError::EmptyComponent(text.to_owned()));
    }
    Name::from_components(segments)
}

impl FromStr for Name {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_name(s)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.components {
            write!(f, "/{}", String::from_utf8_lossy(c))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Name({self})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Latency {
    #[default]
    Regular,
    Prompt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Reliability {
    #[default]
    Regular,
    Reliable,
}

/// One cell of the 2x2 latency/reliability service matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ServiceLevel {
    pub latency: Latency,
    pub reliability: Reliability,
}

impl ServiceLevel {
    pub const REGULAR: ServiceLevel = ServiceLevel::new(Latency::Regular, Reliability::Regular);
    pub const PROMPT: ServiceLevel = ServiceLevel::new(Latency::Prompt, Reliability::Regular);
    pub const RELIABLE: ServiceLevel = ServiceLevel::new(Latency::Regular, Reliability::Reliable);
    pub const PROMPT_RELIABLE: ServiceLevel =
        ServiceLevel::new(Latency::Prompt, Reliability::Reliable);

    pub const ALL: [ServiceLevel; 4] = [
        ServiceLevel::REGULAR,
        ServiceLevel::PROMPT,
        ServiceLevel::RELIABLE,
        ServiceLevel::PROMPT_RELIABLE,
    ];

    pub const fn new(latency: Latency, reliability: Reliability) -> Self {
        ServiceLevel {
            latency,
            reliability,
        }
    }

    pub fn is_prompt(&self) -> bool {
        self.latency == Latency::Prompt
    }

    pub fn is_reliable(&self) -> bool {
        self.reliability == Reliability::Reliable
    }

    /// True for anything other than (Regular, Regular).
    pub fn is_prioritized(&self) -> bool {
        self.is_prompt() || self.is_reliable()
    }

    /// PIT admission/eviction rank: prompt > reliable > regular.
    ///
    /// The combined (Prompt, Reliable) class ranks as prompt.
    pub fn pit_priority(&self) -> u8 {
        if self.is_prompt() {
            2
        } else if self.is_reliable() {
            1
        } else {
            0
        }
    }

    /// Content Store replacement rank with reliability as the dominant dimension.
    pub fn cs_priority(&self) -> u8 {
        (u8::from(self.is_reliable()) << 1) | u8::from(self.is_prompt())
    }

    /// Stable label used in CSV output, e.g. `prompt_reliable`.
    pub fn label(&self) -> &'static str {
        match (self.latency, self.reliability) {
            (Latency::Regular, Reliability::Regular) => "regular",
            (Latency::Prompt, Reliability::Regular) => "prompt",
            (Latency::Regular, Reliability::Reliable) => "reliable",
            (Latency::Prompt, Reliability::Reliable) => "prompt_reliable",
        }
    }
}

impl fmt::Display for ServiceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn pit_priority(level: ServiceLevel) -> u8 {
    level.pit_priority()
}

pub fn cs_priority(level: ServiceLevel) -> u8 {
    level.cs_priority()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate traffic class prefix {0}")]
pub struct DuplicatePrefix(pub Name);

/// Prefix → service level list maintained by every node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassTable {
    entries: Vec<(Name, ServiceLevel)>,
}

impl ClassTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I>(entries: I) -> Result<Self, DuplicatePrefix>
    where
        I: IntoIterator<Item = (Name, ServiceLevel)>,
    {
        let mut table = ClassTable::new();
        for (prefix, level) in entries {
            table.insert(prefix, level)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, prefix: Name, level: ServiceLevel) -> Result<(), DuplicatePrefix> {
        if self.entries.iter().any(|(p, _)| *p == prefix) {
            return Err(DuplicatePrefix(prefix));
        }
        self.entries.push((prefix, level));
        Ok(())
    }

    pub fn entries(&self) -> &[(Name, ServiceLevel)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest-prefix classification; unmatched names are (Regular, Regular).
    pub fn classify(&self, name: &Name) -> ServiceLevel {
        self.entries
            .iter()
            .filter(|(prefix, _)| prefix.is_prefix_of(name))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, level)| *level)
            .unwrap_or_default()
    }
}

pub fn classify(table: &ClassTable, name: &Name) -> ServiceLevel {
    table.classify(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Name {
        parse_name(s).unwrap()
    }

    fn example_table() -> ClassTable {
        ClassTable::from_entries([
            (n("/HK/ACM/ICN"), ServiceLevel::RELIABLE),
            (n("/HK/ACM/ICN/site/A/alarm"), ServiceLevel::PROMPT_RELIABLE),
            (n("/HK/ACM/ICN/site/B/temp"), ServiceLevel::PROMPT),
        ])
        .unwrap()
    }

    #[test]
    fn parse_examples() {
        let name = n("/HK/ACM/ICN");
        let comps: Vec<&[u8]> = name.components().collect();
        assert_eq!(comps, vec![&b"HK"[..], b"ACM", b"ICN"]);
        assert_eq!(n("/a").len(), 1);
        assert!(matches!(parse_name("/a//b"), Err(NameError::EmptyComponent(_))));
        assert_eq!(parse_name(""), Err(NameError::Empty));
        assert!(matches!(parse_name("a/b"), Err(NameError::MissingLeadingSlash(_))));
        assert_eq!(parse_name("/"), Err(NameError::Empty));
        assert!(parse_name("//").is_err());
    }

    #[test]
    fn prefix_relation() {
        assert!(n("/HK/ACM/ICN").is_prefix_of(&n("/HK/ACM/ICN/site/C")));
        let x = n("/x/y");
        assert!(x.is_prefix_of(&x));
        assert!(!n("/HK/ACM/ICN/site/A").is_prefix_of(&n("/HK/ACM/ICN")));
        assert!(!n("/HK/ACM/ICX").is_prefix_of(&n("/HK/ACM/ICN/site")));
    }

    #[test]
    fn classify_examples() {
        let t = example_table();
        assert_eq!(t.classify(&n("/HK/ACM/ICN/site/C/x")), ServiceLevel::RELIABLE);
        assert_eq!(
            t.classify(&n("/HK/ACM/ICN/site/A/alarm/7")),
            ServiceLevel::PROMPT_RELIABLE
        );
        assert_eq!(t.classify(&n("/HK/ACM/ICN/site/B/temp")), ServiceLevel::PROMPT);
        assert_eq!(t.classify(&n("/other/name")), ServiceLevel::REGULAR);
    }

    #[test]
    fn duplicate_prefix_rejected() {
        let err = ClassTable::from_entries([
            (n("/a"), ServiceLevel::PROMPT),
            (n("/a"), ServiceLevel::RELIABLE),
        ])
        .unwrap_err();
        assert_eq!(err, DuplicatePrefix(n("/a")));
    }

    #[test]
    fn priority_ranks() {
        assert_eq!(pit_priority(ServiceLevel::PROMPT_RELIABLE), 2);
        assert_eq!(pit_priority(ServiceLevel::PROMPT), 2);
        assert_eq!(pit_priority(ServiceLevel::RELIABLE), 1);
        assert_eq!(pit_priority(ServiceLevel::REGULAR), 0);

        assert_eq!(cs_priority(ServiceLevel::PROMPT_RELIABLE), 3);
        assert_eq!(cs_priority(ServiceLevel::RELIABLE), 2);
        assert_eq!(cs_priority(ServiceLevel::PROMPT), 1);
        assert_eq!(cs_priority(ServiceLevel::REGULAR), 0);
        assert!(cs_priority(ServiceLevel::RELIABLE) > cs_priority(ServiceLevel::PROMPT));
    }

    #[test]
    fn ranks_are_monotone_in_each_dimension() {
        for l in ServiceLevel::ALL {
            let up_latency = ServiceLevel::new(Latency::Prompt, l.reliability);
            let up_rel = ServiceLevel::new(l.latency, Reliability::Reliable);
            assert!(up_latency.pit_priority() >= l.pit_priority());
            assert!(up_rel.pit_priority() >= l.pit_priority());
            assert!(up_latency.cs_priority() >= l.cs_priority());
            assert!(up_rel.cs_priority() >= l.cs_priority());
        }
        // cs_priority is injective, so it is a total order over the four levels
        let mut ranks: Vec<u8> = ServiceLevel::ALL.iter().map(|l| l.cs_priority()).collect();
        ranks.sort_unstable();
        ranks.dedup();
        assert_eq!(ranks.len(), 4);
    }

    #[test]
    fn default_level_is_regular() {
        assert_eq!(ServiceLevel::default(), ServiceLevel::REGULAR);
    }
}
