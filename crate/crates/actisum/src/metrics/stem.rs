//! Suffix-stripping stemmer used by the ROUGE metrics.
//!
//! Rules fire in order (ing, s, ed) and are re-applied until no rule matches,
//! which makes the map idempotent by construction. Stems shorter than three
//! characters are never produced. A fixed exception list restores a trailing
//! `e` after ing/ed stripping ("rising" -> "rise") so inflected forms of the
//! template vocabulary collapse onto one stem.

const MIN_STEM: usize = 3;

/// Stems that lost a trailing `e` to inflection.
const E_RESTORE: [&str; 8] = [
    "ris", "mov", "declin", "increas", "decreas", "engag", "surg", "eas",
];

fn restore_e(stem: &mut String) {
    if E_RESTORE.contains(&stem.as_str()) {
        stem.push('e');
    }
}

/// Stem one lowercase ASCII token.
pub fn stem(token: &str) -> String {
    let mut current = token.to_string();
    loop {
        if let Some(base) = current.strip_suffix("ing") {
            if base.len() >= MIN_STEM {
                let mut next = base.to_string();
                restore_e(&mut next);
                current = next;
                continue;
            }
        }
        if current.ends_with('s') && !current.ends_with("ss") && current.len() - 1 >= MIN_STEM {
            current.truncate(current.len() - 1);
            continue;
        }
        if let Some(base) = current.strip_suffix("ed") {
            if base.len() >= MIN_STEM {
                let mut next = base.to_string();
                restore_e(&mut next);
                current = next;
                continue;
            }
        }
        break;
    }
    current
}
