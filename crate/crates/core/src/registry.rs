//! Name-keyed registries of interchangeable strategies.
//!
//! Every family of algorithms in the crate (builtin geometries, neighbor
//! search, limit models, profile families, eigensolvers) is exposed as a
//! trait object and looked up by name at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that can be registered under a stable name.
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Named> {
    what: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(what: &'static str) -> Self {
        Self {
            what,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item`, replacing any previous entry of the same name.
    pub fn register(&mut self, item: Arc<T>) -> &mut Self {
        self.entries.insert(item.name(), item);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::Unknown {
            what: self.what,
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<T>> {
        self.entries.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dummy(&'static str);
    impl Named for Dummy {
        fn name(&self) -> &'static str {
            self.0
        }
    }

    #[test]
    fn lookup_and_unknown() {
        let mut reg: Registry<Dummy> = Registry::new("dummy");
        reg.register(Arc::new(Dummy("a"))).register(Arc::new(Dummy("b")));
        assert_eq!(reg.get("b").unwrap().name(), "b");
        let err = reg.get("zzz").err().unwrap();
        assert!(err.to_string().contains("a, b"));
        assert_eq!(reg.names(), vec!["a", "b"]);
    }
}
