//! Canonical JSON serialization: object keys sorted, compact separators,
//! stable across runs. Used for trace equality, golden files, and state
//! hashing during exploration.

use serde::Serialize;

/// Serializes `value` to canonical JSON text.
///
/// Going through `serde_json::Value` sorts every object's keys (its map type
/// is ordered), so equal data always produces identical bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serialization cannot fail for crate types");
    v.to_string()
}

/// FNV-1a over a string; a stable 64-bit fingerprint for canonical forms.
pub fn fingerprint(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hex form of [`fingerprint`], used as a digest in traces and reports.
pub fn digest<T: Serialize>(value: &T) -> String {
    format!("{:016x}", fingerprint(&to_canonical_json(value)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn keys_are_sorted() {
        let mut m = BTreeMap::new();
        m.insert("b", 1);
        m.insert("a", 2);
        assert_eq!(to_canonical_json(&m), r#"{"a":2,"b":1}"#);
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fingerprint("abc"), fingerprint("abc"));
        assert_ne!(fingerprint("abc"), fingerprint("abd"));
    }
}
