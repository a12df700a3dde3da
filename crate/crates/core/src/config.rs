//! Prefix-annotated statements and configurations.

use std::fmt;
use std::sync::Arc;

use crate::store::Store;

/// Path `system.init().height=h[1]` from the system object to the statement being
/// executed. Persistent: extending shares the existing segments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prefix {
    segments: Arc<[String]>,
}

impl Prefix {
    pub fn root(name: impl Into<String>) -> Self {
        Prefix { segments: Arc::from(vec![name.into()]) }
    }

    /// Returns `self.step`; `self` is unchanged.
    pub fn extend(&self, step: impl Into<String>) -> Prefix {
        let mut v: Vec<String> = self.segments.to_vec();
        v.push(step.into());
        Prefix { segments: Arc::from(v) }
    }

    /// Drops the last segment; the root is kept.
    pub fn pop(&self) -> Prefix {
        if self.segments.len() <= 1 {
            return self.clone();
        }
        Prefix { segments: Arc::from(&self.segments[..self.segments.len() - 1]) }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn head(&self) -> &str {
        &self.segments[0]
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join("."))
    }
}

/// Set of concurrently executing prefix-annotated statements over one store.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub stmts: Vec<Prefix>,
    pub store: Store,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_annotation() {
        let sys = Prefix::root("system");
        let init = sys.extend("init()");
        assert_eq!(init.to_string(), "system.init()");
        let assign = init.extend("height=h[1]");
        assert_eq!(assign.to_string(), "system.init().height=h[1]");
        assert_eq!(init.len(), 2);
        assert_eq!(sys.len(), 1);
    }

    #[test]
    fn pop_returns_to_caller() {
        let p = Prefix::root("system").extend("init()");
        assert_eq!(p.pop(), Prefix::root("system"));
        assert_eq!(Prefix::root("system").pop().len(), 1);
    }
}
