use std::fmt;

/// Ulam-Harris name of an individual: the sequence of status digits along
/// its ancestry. The root is the empty word.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(Vec<u8>);

impl Label {
    pub fn root() -> Self {
        Label(Vec::new())
    }

    /// Label of a child with the given status digit.
    pub fn child(&self, digit: u8) -> Self {
        debug_assert!(digit < 2);
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(digit);
        Label(v)
    }

    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn parent(&self) -> Option<Label> {
        let (_, head) = self.0.split_last()?;
        Some(Label(head.to_vec()))
    }

    pub fn last_digit(&self) -> Option<u8> {
        self.0.last().copied()
    }

    pub fn is_ancestor_of(&self, other: &Label) -> bool {
        other.0.len() > self.0.len() && other.0.starts_with(&self.0)
    }

    pub fn parse(s: &str) -> Option<Self> {
        s.bytes()
            .map(|b| match b {
                b'0' => Some(0),
                b'1' => Some(1),
                _ => None,
            })
            .collect::<Option<Vec<u8>>>()
            .map(Label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_extend_parent() {
        let r = Label::root();
        let c = r.child(1).child(0);
        assert_eq!(c.to_string(), "10");
        assert_eq!(c.parent().unwrap().to_string(), "1");
        assert!(r.is_ancestor_of(&c));
        assert!(!c.is_ancestor_of(&c));
        assert_eq!(Label::parse("10"), Some(c));
        assert_eq!(Label::parse("12"), None);
        assert_eq!(r.to_string(), "");
    }
}
