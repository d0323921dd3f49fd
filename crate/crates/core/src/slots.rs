//! Answer slots inside sub-question text.
//!
//! `<k>` is a slot relative to the node's own graph (sub-question `k`);
//! `<de:2>` names a node id directly. Anything else between angle brackets
//! is ordinary text.

use crate::qgraph::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Relative(usize),
    Qualified(NodeId),
}

impl Slot {
    /// Node id this slot points at, given the prefix of the node containing it.
    pub fn target(&self, own_prefix: Option<&str>) -> Option<NodeId> {
        match self {
            Slot::Qualified(id) => Some(id.clone()),
            Slot::Relative(k) => own_prefix.map(|p| NodeId::indexed(p, *k)),
        }
    }
}

fn classify(inner: &str) -> Option<Slot> {
    if !inner.is_empty() && inner.bytes().all(|b| b.is_ascii_digit()) {
        return inner.parse().ok().map(Slot::Relative);
    }
    let (prefix, k) = inner.rsplit_once(':')?;
    let valid_prefix = !prefix.is_empty() && !prefix.contains(|c: char| c.is_whitespace() || c == '<' || c == '>');
    let valid_k = !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit());
    (valid_prefix && valid_k).then(|| Slot::Qualified(NodeId::new(inner)))
}

/// Rebuild `text`, letting `f` replace each slot (returning `None` keeps it).
pub fn substitute(text: &str, mut f: impl FnMut(&Slot) -> Option<String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find(['>', '<']);
        match close.map(|c| (c, &after[..c])) {
            Some((c, inner)) if after.as_bytes()[c] == b'>' => {
                match classify(inner).and_then(|slot| f(&slot)) {
                    Some(replacement) => out.push_str(&replacement),
                    None => out.push_str(&rest[open..open + c + 2]),
                }
                rest = &after[c + 1..];
            }
            _ => {
                out.push('<');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn slots(text: &str) -> Vec<Slot> {
    let mut found = Vec::new();
    substitute(text, |s| {
        found.push(s.clone());
        None
    });
    found
}

pub fn relative_refs(text: &str) -> Vec<usize> {
    slots(text)
        .into_iter()
        .filter_map(|s| match s {
            Slot::Relative(k) => Some(k),
            Slot::Qualified(_) => None,
        })
        .collect()
}

/// `<k>` becomes `<prefix:k>`.
pub fn qualify(text: &str, prefix: &str) -> String {
    substitute(text, |s| match s {
        Slot::Relative(k) => Some(format!("<{prefix}:{k}>")),
        Slot::Qualified(_) => None,
    })
}

/// Point every slot naming `from` at `to` instead.
pub fn rename(text: &str, from: &NodeId, to: &NodeId) -> String {
    substitute(text, |s| match s {
        Slot::Qualified(id) if id == from => Some(format!("<{to}>")),
        _ => None,
    })
}

/// Human/embedding form: `<de:2>` shown as `<2>`.
pub fn display(text: &str) -> String {
    substitute(text, |s| match s {
        Slot::Qualified(id) => id.as_str().rsplit_once(':').map(|(_, k)| format!("<{k}>")),
        Slot::Relative(_) => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_forms() {
        assert_eq!(slots("When was <1> born?"), vec![Slot::Relative(1)]);
        assert_eq!(slots("x <de:12> y"), vec![Slot::Qualified(NodeId::from("de:12"))]);
        assert!(slots("a <b> c < d > <x:y> <:1>").is_empty());
    }

    #[test]
    fn qualify_rename_display() {
        let q = qualify("When was <1> born, and <2>?", "en");
        assert_eq!(q, "When was <en:1> born, and <en:2>?");
        let r = rename(&q, &NodeId::from("en:1"), &NodeId::from("de:3"));
        assert_eq!(r, "When was <de:3> born, and <en:2>?");
        assert_eq!(display(&r), "When was <3> born, and <2>?");
    }

    #[test]
    fn stray_brackets_survive() {
        assert_eq!(qualify("a < b <1> and c>d <<2>", "x"), "a < b <x:1> and c>d <<x:2>");
        assert_eq!(qualify("trailing <", "x"), "trailing <");
    }
}
