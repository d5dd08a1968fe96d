//! Attribute vocabulary and its partition into mutually exclusive groups.
//!
//! Each group is handled by one softmax head. A group listing `k >= 2`
//! attributes has `k` classes; a group listing a single attribute gains an
//! implicit complement class `not_<attr>`, so every head has at least two
//! classes. Attribute order across the whole file defines the canonical
//! index of the length-`N` binary label vector.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::SchemaError;

/// One mutually exclusive attribute group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    /// Explicitly listed attribute names, in file order.
    pub members: Vec<String>,
    /// True for single-attribute groups, which get a `not_<attr>` class.
    pub implicit_complement: bool,
}

impl Group {
    /// Number of classes the group's head predicts.
    pub fn classes(&self) -> usize {
        if self.implicit_complement {
            2
        } else {
            self.members.len()
        }
    }

    /// Display name of class `index`.
    pub fn class_name(&self, index: usize) -> String {
        if self.implicit_complement && index == 1 {
            format!("not_{}", self.members[0])
        } else {
            self.members[index].clone()
        }
    }
}

/// The full attribute vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    attributes: Vec<String>,
    groups: Vec<Group>,
    /// For each group, the index of its first attribute in `attributes`.
    offsets: Vec<usize>,
}

impl AttributeSchema {
    /// Number of attributes `N`.
    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Index of the group's first attribute in the label vector.
    pub fn group_offset(&self, group_idx: usize) -> usize {
        self.offsets[group_idx]
    }

    /// Total class count over all groups (the attention-stack channel count).
    pub fn total_classes(&self) -> usize {
        self.groups.iter().map(Group::classes).sum()
    }

    /// `(group, class)` pairs in schema order, one per attention channel.
    pub fn class_index(&self) -> Vec<(String, String)> {
        let mut out = Vec::with_capacity(self.total_classes());
        for g in &self.groups {
            for c in 0..g.classes() {
                out.push((g.name.clone(), g.class_name(c)));
            }
        }
        out
    }

    pub fn group_by_name(&self, name: &str) -> Option<(usize, &Group)> {
        self.groups.iter().enumerate().find(|(_, g)| g.name == name)
    }

    /// Canonical text form; parsing it again yields an identical schema.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let _ = writeln!(out, "{}: {}", g.name, g.members.join(", "));
        }
        out
    }

    /// Hex SHA-256 of the canonical text; checkpoints store this so that a
    /// model is never evaluated against a different vocabulary.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        let digest = hasher.finalize();
        let mut s = String::with_capacity(64);
        for b in digest {
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

/// Parse the schema file format: one group per line, `name: a, b, c`,
/// `#` comments and blank lines ignored.
pub fn parse_schema(text: &str) -> Result<AttributeSchema, SchemaError> {
    let mut groups: Vec<Group> = Vec::new();
    let mut attributes: Vec<String> = Vec::new();
    let mut seen_attr: Vec<(String, usize)> = Vec::new(); // (attr, line)

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((name, rest)) = content.split_once(':') else {
            return Err(SchemaError::MalformedLine { line, text: raw.to_string() });
        };
        let name = name.trim();
        if name.is_empty() {
            return Err(SchemaError::MalformedLine { line, text: raw.to_string() });
        }
        if groups.iter().any(|g| g.name == name) {
            return Err(SchemaError::DuplicateGroup { line, group: name.to_string() });
        }
        let members: Vec<String> = rest
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if members.is_empty() {
            return Err(SchemaError::EmptyGroup { line, group: name.to_string() });
        }
        for m in &members {
            if let Some((_, first)) = seen_attr.iter().find(|(a, _)| a == m) {
                return Err(SchemaError::DuplicateAttribute {
                    attr: m.clone(),
                    first: *first,
                    second: line,
                });
            }
            seen_attr.push((m.clone(), line));
            attributes.push(m.clone());
        }
        let implicit_complement = members.len() == 1;
        groups.push(Group { name: name.to_string(), members, implicit_complement });
    }

    if groups.is_empty() {
        return Err(SchemaError::Empty);
    }

    let mut offsets = Vec::with_capacity(groups.len());
    let mut off = 0;
    for g in &groups {
        offsets.push(off);
        off += g.members.len();
    }

    Ok(AttributeSchema { attributes, groups, offsets })
}

/// Convert a binary label vector into one class index per group.
///
/// Multi-member groups require exactly one hot bit; single-attribute groups
/// map bit 1 to class 0 (the attribute) and bit 0 to class 1 (the
/// complement).
pub fn group_targets(schema: &AttributeSchema, labels: &[u8]) -> Result<Vec<usize>, SchemaError> {
    if labels.len() != schema.n_attributes() {
        return Err(SchemaError::LabelLength { got: labels.len(), expected: schema.n_attributes() });
    }
    let mut out = Vec::with_capacity(schema.groups.len());
    for (gi, g) in schema.groups.iter().enumerate() {
        let off = schema.offsets[gi];
        let bits = &labels[off..off + g.members.len()];
        if g.implicit_complement {
            out.push(if bits[0] != 0 { 0 } else { 1 });
        } else {
            let hot = bits.iter().filter(|&&b| b != 0).count();
            if hot != 1 {
                return Err(SchemaError::MutualExclusionViolation {
                    group: g.name.clone(),
                    members: g.members.clone(),
                    hot,
                });
            }
            out.push(bits.iter().position(|&b| b != 0).unwrap());
        }
    }
    Ok(out)
}

/// Inverse of [`group_targets`]: per-group class indices back to the binary
/// attribute vector. The complement class clears its group's single bit.
pub fn binary_from_group_argmax(schema: &AttributeSchema, argmaxes: &[usize]) -> Result<Vec<u8>, SchemaError> {
    assert_eq!(argmaxes.len(), schema.groups.len(), "one argmax per group");
    let mut out = vec![0u8; schema.n_attributes()];
    for (gi, (&idx, g)) in argmaxes.iter().zip(schema.groups.iter()).enumerate() {
        if idx >= g.classes() {
            return Err(SchemaError::ClassIndexOutOfRange {
                group: g.name.clone(),
                index: idx,
                classes: g.classes(),
            });
        }
        let off = schema.offsets[gi];
        if g.implicit_complement {
            out[off] = if idx == 0 { 1 } else { 0 };
        } else {
            out[off + idx] = 1;
        }
    }
    Ok(out)
}

/// Enumerate every label vector that satisfies the per-group mutual
/// exclusion constraints; practical only for small schemas.
pub fn enumerate_valid_labels(schema: &AttributeSchema) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for g in &schema.groups {
        let mut next = Vec::new();
        for prefix in &out {
            if g.implicit_complement {
                for bit in [0u8, 1u8] {
                    let mut v = prefix.clone();
                    v.push(bit);
                    next.push(v);
                }
            } else {
                for hot in 0..g.members.len() {
                    let mut v = prefix.clone();
                    for i in 0..g.members.len() {
                        v.push(if i == hot { 1 } else { 0 });
                    }
                    next.push(v);
                }
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> AttributeSchema {
        parse_schema("age: young, middleAged, old\nsize: small, large\nbald: bald\n").unwrap()
    }

    #[test]
    fn parses_three_class_group() {
        let s = parse_schema("age: young, middleAged, old\n").unwrap();
        assert_eq!(s.groups().len(), 1);
        assert_eq!(s.groups()[0].name, "age");
        assert_eq!(s.groups()[0].classes(), 3);
        assert!(!s.groups()[0].implicit_complement);
        assert_eq!(s.n_attributes(), 3);
    }

    #[test]
    fn single_member_group_gets_complement() {
        let s = parse_schema("bald: bald\n").unwrap();
        assert_eq!(s.groups()[0].classes(), 2);
        assert!(s.groups()[0].implicit_complement);
        assert_eq!(s.groups()[0].class_name(0), "bald");
        assert_eq!(s.groups()[0].class_name(1), "not_bald");
        assert_eq!(s.n_attributes(), 1);
    }

    #[test]
    fn duplicate_attribute_reports_both_lines() {
        let err = parse_schema("a: bigNose, x\nb: y, bigNose\n").unwrap_err();
        match err {
            SchemaError::DuplicateAttribute { attr, first, second } => {
                assert_eq!(attr, "bigNose");
                assert_eq!(first, 1);
                assert_eq!(second, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_line_has_line_number() {
        let err = parse_schema("age: young, old\njust words\n").unwrap_err();
        match err {
            SchemaError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_group_rejected() {
        let err = parse_schema("age:\n").unwrap_err();
        assert!(matches!(err, SchemaError::EmptyGroup { line: 1, .. }));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let s = parse_schema("# vocabulary\n\nage: young, old # trailing\n").unwrap();
        assert_eq!(s.n_attributes(), 2);
    }

    #[test]
    fn group_targets_on_one_hot() {
        let s = toy();
        let t = group_targets(&s, &[0, 1, 0, 1, 0, 0]).unwrap();
        assert_eq!(t, vec![1, 0, 1]); // middleAged, small, not_bald
    }

    #[test]
    fn complement_bit_selects_class() {
        let s = parse_schema("bald: bald\n").unwrap();
        assert_eq!(group_targets(&s, &[0]).unwrap(), vec![1]);
        assert_eq!(group_targets(&s, &[1]).unwrap(), vec![0]);
    }

    #[test]
    fn multi_hot_rejected_with_group_name() {
        let s = toy();
        let err = group_targets(&s, &[1, 1, 0, 1, 0, 0]).unwrap_err();
        match err {
            SchemaError::MutualExclusionViolation { group, hot, .. } => {
                assert_eq!(group, "age");
                assert_eq!(hot, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = group_targets(&s, &[0, 0, 0, 1, 0, 0]).unwrap_err();
        assert!(matches!(err, SchemaError::MutualExclusionViolation { hot: 0, .. }));
    }

    #[test]
    fn binary_from_argmax_basics() {
        let s = parse_schema("age: y, m, o\n").unwrap();
        assert_eq!(binary_from_group_argmax(&s, &[2]).unwrap(), vec![0, 0, 1]);
        let s = parse_schema("bald: bald\n").unwrap();
        assert_eq!(binary_from_group_argmax(&s, &[1]).unwrap(), vec![0]);
        assert_eq!(binary_from_group_argmax(&s, &[0]).unwrap(), vec![1]);
    }

    #[test]
    fn argmax_out_of_range_rejected() {
        let s = parse_schema("age: y, m, o\n").unwrap();
        assert!(matches!(
            binary_from_group_argmax(&s, &[3]),
            Err(SchemaError::ClassIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn round_trip_over_all_valid_labels() {
        // Exhaustive oracle: every valid vector of the 3-group toy schema.
        let s = toy();
        let all = enumerate_valid_labels(&s);
        assert_eq!(all.len(), 3 * 2 * 2);
        for labels in all {
            let targets = group_targets(&s, &labels).unwrap();
            let back = binary_from_group_argmax(&s, &targets).unwrap();
            assert_eq!(back, labels);
        }
    }

    #[test]
    fn parse_serialize_parse_is_identity() {
        let s = toy();
        let text = s.to_text();
        let s2 = parse_schema(&text).unwrap();
        assert_eq!(s, s2);
        assert_eq!(s.hash(), s2.hash());
        assert_eq!(text, s2.to_text());
    }

    #[test]
    fn total_classes_counts_complements() {
        let s = toy();
        assert_eq!(s.total_classes(), 3 + 2 + 2);
        assert_eq!(s.class_index().len(), 7);
        assert_eq!(s.class_index()[6], ("bald".to_string(), "not_bald".to_string()));
    }
}
