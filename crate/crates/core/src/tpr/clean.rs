//! Tweet text normalization and duplicate collapsing.

use std::collections::BTreeMap;

use unicode_normalization::UnicodeNormalization;

use crate::datastore::{TweetId, TweetRecord};

/// Normalizes raw tweet text. Returns `None` when nothing is left.
///
/// Steps, in order: NFC; drop link tokens (`http://`, `https://`, `www.`);
/// drop `@` and `#` tokens; drop a leading `RT`; lowercase; collapse
/// whitespace.
pub fn clean_text(raw: &str) -> Option<String> {
    let nfc: String = raw.nfc().collect();
    let is_link = |tok: &str| {
        let lower = tok.to_lowercase();
        lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
    };
    let mut tokens: Vec<&str> = nfc
        .split_whitespace()
        .filter(|t| !is_link(t))
        .filter(|t| !t.starts_with('@') && !t.starts_with('#'))
        .collect();
    if tokens.first() == Some(&"RT") {
        tokens.remove(0);
    }
    let cleaned = tokens.join(" ").to_lowercase();
    // lowercasing can in principle introduce new whitespace runs
    let cleaned = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
    (!cleaned.is_empty()).then_some(cleaned)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanTweet {
    /// Smallest tweet id among the duplicates.
    pub tweet_id: TweetId,
    pub cleaned_text: String,
    /// True if any duplicate is a template.
    pub is_template: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanCorpus {
    /// One entry per distinct cleaned text, ascending by tweet id.
    pub tweets: Vec<CleanTweet>,
    pub dropped_empty: usize,
    pub duplicates_collapsed: usize,
}

impl CleanCorpus {
    pub fn template_count(&self) -> usize {
        self.tweets.iter().filter(|t| t.is_template).count()
    }
}

/// Cleans the originals among `tweets` and collapses identical cleaned
/// texts. Retweets are ignored.
pub fn clean_corpus<'a>(tweets: impl IntoIterator<Item = &'a TweetRecord>) -> CleanCorpus {
    let mut classes: BTreeMap<String, CleanTweet> = BTreeMap::new();
    let mut dropped_empty = 0;
    let mut duplicates_collapsed = 0;
    for t in tweets.into_iter().filter(|t| t.is_original()) {
        let Some(text) = clean_text(&t.text) else {
            dropped_empty += 1;
            continue;
        };
        match classes.get_mut(&text) {
            Some(class) => {
                duplicates_collapsed += 1;
                class.tweet_id = class.tweet_id.min(t.tweet_id);
                class.is_template |= t.is_template;
            }
            None => {
                classes.insert(
                    text.clone(),
                    CleanTweet {
                        tweet_id: t.tweet_id,
                        cleaned_text: text,
                        is_template: t.is_template,
                    },
                );
            }
        }
    }
    let mut tweets: Vec<CleanTweet> = classes.into_values().collect();
    tweets.sort_by_key(|t| t.tweet_id);
    CleanCorpus {
        tweets,
        dropped_empty,
        duplicates_collapsed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::TweetKind;

    #[test]
    fn cleaning_rules() {
        assert_eq!(
            clean_text("RT @user Modi rocks https://t.co/x #India").as_deref(),
            Some("modi rocks")
        );
        assert_eq!(clean_text("#Tag1 #Tag2 @a"), None);
        assert_eq!(
            clean_text("  Corruption   ENDS now ").as_deref(),
            Some("corruption ends now")
        );
        assert_eq!(clean_text("see www.example.com now").as_deref(), Some("see now"));
        assert_eq!(clean_text("").as_deref(), None);
        // only a leading RT is removed
        assert_eq!(clean_text("say RT please").as_deref(), Some("say rt please"));
    }

    #[test]
    fn nfc_merges_composed_forms() {
        let composed = "caf\u{e9}";
        let decomposed = "cafe\u{301}";
        assert_eq!(clean_text(composed), clean_text(decomposed));
    }

    fn original(id: u64, text: &str, template: bool) -> TweetRecord {
        TweetRecord {
            tweet_id: id,
            user_id: id,
            ts: id as i64,
            hashtag: "h".into(),
            kind: TweetKind::Original,
            text: text.into(),
            is_template: template,
        }
    }

    #[test]
    fn duplicates_collapse_to_smallest_id() {
        let tweets = vec![
            original(9, "Vote now #x", false),
            original(4, "vote NOW", true),
            original(5, "#only", false),
            original(6, "something else", false),
        ];
        let c = clean_corpus(&tweets);
        assert_eq!(c.dropped_empty, 1);
        assert_eq!(c.duplicates_collapsed, 1);
        assert_eq!(c.tweets.len(), 2);
        assert_eq!(c.tweets[0].tweet_id, 4);
        assert!(c.tweets[0].is_template);
        assert_eq!(c.tweets[0].cleaned_text, "vote now");
    }
}
