//! Parser for the embedded template resource.

use std::collections::BTreeMap;
use std::sync::LazyLock;

const RESOURCE: &str = include_str!("templates.txt");

/// Parsed template sections keyed by header name.
#[derive(Debug)]
pub struct TemplateBook {
    sections: BTreeMap<String, Vec<String>>,
}

impl TemplateBook {
    pub fn parse(text: &str) -> Self {
        let mut sections: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            if line.starts_with('#') && current.is_none() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if !name.contains('/') && !name.chars().any(char::is_whitespace) {
                    current = Some(name.to_string());
                    sections.entry(name.to_string()).or_default();
                    continue;
                }
            }
            if let Some(name) = &current {
                sections.get_mut(name).expect("section exists").push(line.to_string());
            }
        }
        for lines in sections.values_mut() {
            while lines.last().is_some_and(|l| l.trim().is_empty()) {
                lines.pop();
            }
        }
        Self { sections }
    }

    /// Lines of a section; panics on an unknown section name.
    pub fn lines(&self, name: &str) -> &[String] {
        self.sections
            .get(name)
            .unwrap_or_else(|| panic!("template section [{name}] missing"))
    }

    pub fn block(&self, name: &str) -> String {
        self.lines(name).join("\n")
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }
}

pub static BOOK: LazyLock<TemplateBook> = LazyLock::new(|| TemplateBook::parse(RESOURCE));

/// The raw embedded resource, for auditing.
pub fn resource() -> &'static str {
    RESOURCE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resource_sections_have_expected_sizes() {
        let sizes = [
            ("replies", 10),
            ("visibility.public", 10),
            ("visibility.private", 10),
            ("nationalities", 10),
            ("ethnicities", 4),
            ("distances", 11),
            ("times", 11),
            ("question.line_judgment", 3),
            ("question.color_recognition", 3),
            ("question.dots_estimation", 3),
            ("header.spatial", 3),
            ("header.temporal", 3),
            ("intro.minimal", 2),
        ];
        for (name, n) in sizes {
            assert_eq!(BOOK.lines(name).len(), n, "[{name}]");
        }
    }

    #[test]
    fn bracketed_placeholders_are_not_headers() {
        let book = TemplateBook::parse("[a]\n[A/B] is my choice.\n[note here]\n");
        assert_eq!(book.lines("a"), ["[A/B] is my choice.", "[note here]"]);
    }

    #[test]
    fn no_trailing_whitespace_in_templates() {
        for name in BOOK.section_names() {
            for line in BOOK.lines(name) {
                assert_eq!(line, line.trim_end(), "[{name}] {line:?}");
            }
        }
    }
}
