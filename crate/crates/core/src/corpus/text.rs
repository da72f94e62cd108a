// Copyright 2026 Geoscope Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Text normalization helpers: URL canonicalization, markup stripping and
//! rule-based sentence segmentation.

use std::sync::OnceLock;

use regex::Regex;

/// Canonical form used to match URLs across overview citations, reference
/// lists, organic results and documents.
///
/// Lowercases the scheme and host, drops the fragment and strips trailing
/// slashes from the path. Query strings are kept verbatim.
pub fn normalize_url(raw: &str) -> String {
    let s = raw.trim();
    let s = match s.find('#') {
        Some(i) => &s[..i],
        None => s,
    };
    let (scheme, rest) = match s.find("://") {
        Some(i) => (Some(s[..i].to_ascii_lowercase()), &s[i + 3..]),
        None => (None, s),
    };
    let auth_end = rest.find(['/', '?']).unwrap_or(rest.len());
    let host = rest[..auth_end].to_lowercase();
    let tail = &rest[auth_end..];
    let (path, query) = match tail.find('?') {
        Some(i) => (&tail[..i], &tail[i..]),
        None => (tail, ""),
    };
    let path = path.trim_end_matches('/');

    let mut out = String::with_capacity(s.len());
    if let Some(scheme) = scheme {
        out.push_str(&scheme);
        out.push_str("://");
    }
    out.push_str(&host);
    out.push_str(path);
    out.push_str(query);
    out
}

fn script_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<(script|style)\b[^>]*>.*?</(script|style)\s*>").unwrap())
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<!--.*?-->|<[^<>]*>").unwrap())
}

/// Collapse runs of whitespace to a single space and trim both ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Best-effort removal of markup from crawled page content.
///
/// Script and style bodies go first, then every `<...>` span is replaced by a
/// space. Entity references for `<`, `>` and `&` are decoded (plus `&quot;`,
/// `&#39;` and `&nbsp;`), and whitespace is collapsed.
pub fn strip_markup(raw: &str) -> String {
    let no_script = script_re().replace_all(raw, " ");
    let no_tags = tag_re().replace_all(&no_script, " ");
    // &amp; last so "&amp;lt;" decodes to "&lt;" rather than "<".
    let decoded = no_tags
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&nbsp;", " ")
        .replace("&amp;", "&");
    collapse_whitespace(&decoded)
}

/// A sentence slice of some input text, with its byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceSpan<'a> {
    pub text: &'a str,
    pub start: usize,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Rule-based sentence segmentation.
///
/// A sentence ends after a run of `.`, `!` or `?` that is followed either by
/// the end of the text, or by whitespace and then an uppercase letter (or the
/// end of the text). Leading whitespace is not part of a sentence; offsets are
/// byte offsets into `text`.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan<'_>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() && !c.is_whitespace() {
            start = Some(pos);
        }
        if is_terminator(c) {
            let mut j = i;
            while j + 1 < chars.len() && is_terminator(chars[j + 1].1) {
                j += 1;
            }
            let end = chars[j].0 + chars[j].1.len_utf8();
            let mut k = j + 1;
            let boundary = if k == chars.len() {
                true
            } else if chars[k].1.is_whitespace() {
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                k == chars.len() || chars[k].1.is_uppercase()
            } else {
                false
            };
            if boundary {
                if let Some(s) = start.take() {
                    out.push(SentenceSpan { text: &text[s..end], start: s });
                }
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let rest = text[s..].trim_end();
        if !rest.is_empty() {
            out.push(SentenceSpan { text: rest, start: s });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(v: &[SentenceSpan<'_>]) -> Vec<String> {
        v.iter().map(|s| s.text.to_string()).collect()
    }

    #[test]
    fn url_normalization() {
        assert_eq!(normalize_url("HTTPS://Example.COM/Path/"), "https://example.com/Path");
        assert_eq!(normalize_url("http://a.org/x#frag"), "http://a.org/x");
        assert_eq!(normalize_url("http://a.org/x/?q=1#f"), "http://a.org/x?q=1");
        assert_eq!(normalize_url("http://a.org/"), "http://a.org");
        assert_eq!(normalize_url("  www.A.org/b// "), "www.a.org/b");
    }

    #[test]
    fn strip_markup_examples() {
        assert_eq!(strip_markup("<p>hello</p>"), "hello");
        assert_eq!(strip_markup("a  \n b"), "a b");
        assert_eq!(strip_markup("x &amp; y"), "x & y");
        assert_eq!(strip_markup("1 &lt; 2 &gt; 0"), "1 < 2 > 0");
        assert_eq!(strip_markup("&amp;lt;"), "&lt;");
        assert_eq!(strip_markup("<html><script>var x = '<b>';</script><body>Hi <b>there</b></body>"), "Hi there");
        assert_eq!(strip_markup("a < b"), "a < b");
    }

    #[test]
    fn sentence_examples() {
        assert_eq!(texts(&split_sentences("A. B.")), vec!["A.", "B."]);
        assert_eq!(texts(&split_sentences("Ver. 2 works.")), vec!["Ver. 2 works."]);
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   ").is_empty());
        let s = split_sentences("Wow!! Really? yes. No trailing");
        assert_eq!(texts(&s), vec!["Wow!!", "Really? yes.", "No trailing"]);
        assert_eq!(s[1].start, 6);
    }

    #[test]
    fn sentence_non_ascii() {
        let s = split_sentences("Été fini. Über alles.");
        assert_eq!(texts(&s), vec!["Été fini.", "Über alles."]);
        assert_eq!(&"Été fini. Über alles."[s[1].start..], "Über alles.");
    }

    proptest! {
        #[test]
        fn url_normalization_idempotent(u in "[a-zA-Z]{1,5}://[a-zA-Z.]{1,12}(/[a-zA-Z0-9/]{0,10})?(\\?[a-z=&]{0,6})?(#[a-z]{0,4})?") {
            let once = normalize_url(&u);
            prop_assert_eq!(normalize_url(&once), once);
        }

        #[test]
        fn sentence_offsets_increasing_and_in_bounds(t in "[A-Za-z .!?\n]{0,80}") {
            let spans = split_sentences(&t);
            let mut prev: Option<usize> = None;
            for s in &spans {
                prop_assert!(s.start + s.text.len() <= t.len());
                prop_assert_eq!(&t[s.start..s.start + s.text.len()], s.text);
                if let Some(p) = prev { prop_assert!(s.start > p); }
                prev = Some(s.start);
            }
            let joined: String = spans.iter().map(|s| s.text).collect::<Vec<_>>().join(" ");
            prop_assert_eq!(collapse_whitespace(&joined), collapse_whitespace(&t));
        }
    }
}
