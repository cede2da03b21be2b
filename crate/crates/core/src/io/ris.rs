use crate::record::{Label, RecordItem, SourceKind};

/// Anything that can be written as one RIS entry.
///
/// `ris_fields` returns tag/value pairs in output order, excluding the `TY`
/// and `ER` lines; absent fields are simply not returned.
pub trait RisRecord {
    fn ris_type(&self) -> &'static str;
    fn ris_fields(&self) -> Vec<(&'static str, String)>;
}

/// Serialise entries as RIS: UTF-8, CRLF line endings, `TY` first, `ER`
/// last, blank line between entries. An empty slice produces an empty file.
pub fn export_ris<R: RisRecord>(records: &[R]) -> Vec<u8> {
    let mut out = String::new();
    for record in records {
        push_line(&mut out, "TY", record.ris_type());
        for (tag, value) in record.ris_fields() {
            push_line(&mut out, tag, &value);
        }
        out.push_str("ER  - \r\n\r\n");
    }
    out.into_bytes()
}

fn push_line(out: &mut String, tag: &str, value: &str) {
    debug_assert!(tag.len() == 2);
    out.push_str(tag);
    out.push_str("  - ");
    // RIS values are single-line.
    let mut last_space = false;
    for c in value.trim().chars() {
        if c == '\r' || c == '\n' {
            if !last_space {
                out.push(' ');
            }
            last_space = true;
        } else {
            out.push(c);
            last_space = c == ' ';
        }
    }
    out.push_str("\r\n");
}

impl RisRecord for RecordItem {
    fn ris_type(&self) -> &'static str {
        match self.source_kind {
            SourceKind::News => "NEWS",
            SourceKind::JournalArticle => "JOUR",
            SourceKind::TrialRegistry | SourceKind::FundingCall | SourceKind::Other => "GEN",
        }
    }

    fn ris_fields(&self) -> Vec<(&'static str, String)> {
        let mut fields = Vec::new();
        if !self.title.trim().is_empty() {
            fields.push(("TI", self.title.clone()));
        }
        let url = self
            .metadata
            .iter()
            .find(|(k, v)| (k.eq_ignore_ascii_case("url") || k.eq_ignore_ascii_case("link")) && !v.trim().is_empty())
            .map(|(_, v)| v.clone());
        if let Some(url) = url {
            fields.push(("UR", url));
        }
        if !self.reference_text.trim().is_empty() {
            fields.push(("AB", self.reference_text.clone()));
        }
        if self.label != Label::Unlabeled {
            fields.push(("N1", format!("Screening label: {}", self.label)));
        }
        if let Some(bit) = self.llm_bit {
            fields.push(("N1", format!("LLM vote: {}", if bit == 1 { "YES" } else { "NO" })));
        }
        fields
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<(&'static str, String)>);

    impl RisRecord for Fixed {
        fn ris_type(&self) -> &'static str {
            "NEWS"
        }
        fn ris_fields(&self) -> Vec<(&'static str, String)> {
            self.0.clone()
        }
    }

    #[test]
    fn empty_input_is_empty_file() {
        assert!(export_ris::<Fixed>(&[]).is_empty());
    }

    #[test]
    fn newlines_are_flattened() {
        let out = export_ris(&[Fixed(vec![("AB", "line one\r\nline two\n".into())])]);
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "TY  - NEWS\r\nAB  - line one line two\r\nER  - \r\n\r\n"
        );
    }
}
