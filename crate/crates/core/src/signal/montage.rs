//! Electrode naming.

/// The 21 electrodes kept by default.
pub const STANDARD_21: [&str; 21] = [
    "Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T7", "T8", "P7",
    "P8", "A1", "A2", "Fz", "Cz", "Pz",
];

// Old 10-20 temporal names and their 10-10 replacements.
const RENAMES: [(&str, &str); 4] = [("T3", "T7"), ("T4", "T8"), ("T5", "P7"), ("T6", "P8")];

const REFERENCE_SUFFIXES: [&str; 4] = ["-REF", "-LE", "-AVG", "-AR"];

pub fn standard_montage() -> Vec<String> {
    STANDARD_21.iter().map(|s| s.to_string()).collect()
}

/// Canonical 10-20 spelling of a raw channel label.
///
/// Case is ignored, an `EEG ` prefix and common reference suffixes are
/// stripped and the old temporal names are mapped to the new ones. Labels
/// outside the table are returned trimmed but otherwise untouched.
pub fn normalize_label(raw: &str) -> String {
    let mut s = raw.trim().to_ascii_uppercase();
    if let Some(rest) = s.strip_prefix("EEG") {
        s = rest.trim_start().to_string();
    }
    for suffix in REFERENCE_SUFFIXES {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.trim_end().to_string();
            break;
        }
    }
    for (old, new) in RENAMES {
        if s == old {
            s = new.to_ascii_uppercase();
        }
    }
    match STANDARD_21.iter().find(|c| c.eq_ignore_ascii_case(&s)) {
        Some(c) => c.to_string(),
        None => {
            if s.is_empty() {
                raw.trim().to_string()
            } else {
                s
            }
        }
    }
}

/// Position of each wanted electrode in `available`, or the list of missing ones.
pub fn match_montage(available: &[String], wanted: &[String]) -> Result<Vec<usize>, Vec<String>> {
    let mut idx = Vec::with_capacity(wanted.len());
    let mut missing = Vec::new();
    for w in wanted {
        match available.iter().position(|a| a.eq_ignore_ascii_case(w)) {
            Some(i) => idx.push(i),
            None => missing.push(w.clone()),
        }
    }
    if missing.is_empty() {
        Ok(idx)
    } else {
        Err(missing)
    }
}
