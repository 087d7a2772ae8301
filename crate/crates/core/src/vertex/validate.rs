//! Surface-level checks that a sentence is a well-formed vertex: at most two
//! clauses, exactly one explicit subject with no unresolved pronouns, and no
//! passive construction.
//!
//! The checks are lexicon driven. A clause is a finite-verb group; the
//! sentence is first cut into segments at subordinators, coordinators and
//! clause punctuation, then each segment contributes one clause per
//! non-adjacent finite-verb group it contains.

use serde::{Deserialize, Serialize};

pub const RULE_CONCISE: &str = "concise";
pub const RULE_AGENT: &str = "agent-centered";
pub const RULE_ACTIVE: &str = "active-voice";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sentence: String,
    pub clause_count: usize,
    pub has_single_explicit_agent: bool,
    pub is_active_voice: bool,
    /// Subject noun phrases found, lowercased.
    pub subjects: Vec<String>,
    pub unresolved_pronouns: Vec<String>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

const SUBORDINATORS: &[&str] = &[
    "because", "although", "though", "when", "whenever", "while", "whilst", "if", "unless", "since",
    "until", "till", "after", "before", "once", "whereas", "where", "wherever", "whether", "that",
    "which", "who", "whom", "whose",
];

const COORDINATORS: &[&str] = &["and", "but", "or", "yet", "nor", "so", "then"];

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "has", "have", "had", "do", "does", "did", "will", "would",
    "shall", "should", "can", "could", "may", "might", "must",
];

const BE_FORMS: &[&str] = &["am", "is", "are", "was", "were", "be", "been", "being"];

// Non-finite continuations of a verb group.
const GROUP_CONTINUATIONS: &[&str] = &["be", "been", "being", "have", "not", "never", "also", "always", "just", "already", "still"];

const PERSONAL_PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "yourselves", "he", "him",
    "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us", "our",
    "ours", "ourselves", "they", "them", "their", "theirs", "themselves",
];

const DEMONSTRATIVES: &[&str] = &["this", "that", "these", "those"];

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "his", "her", "their", "its", "my", "our",
    "your", "every", "each", "some", "no", "any", "all", "both", "many", "several", "another",
];

const PREPOSITIONS: &[&str] = &[
    "to", "of", "in", "on", "at", "for", "with", "by", "from", "into", "onto", "over", "under",
    "about", "through", "across", "against", "among", "around", "without", "toward", "towards",
];

const IRREGULAR_PAST: &[&str] = &[
    "ate", "became", "began", "bent", "bit", "bled", "blew", "broke", "brought", "built", "bought",
    "caught", "chose", "came", "crept", "dealt", "dug", "drew", "dreamt", "drank", "drove", "fell",
    "fed", "felt", "fought", "found", "fled", "flew", "forbade", "forgot", "forgave", "froze", "got",
    "gave", "went", "grew", "hung", "heard", "hid", "held", "kept", "knelt", "knew", "laid", "led",
    "lay", "left", "lent", "lit", "lost", "made", "meant", "met", "paid", "rode", "rang", "rose",
    "ran", "said", "saw", "sought", "sold", "sent", "shook", "shone", "shot", "sang", "sank", "sat",
    "slept", "slid", "spoke", "spent", "spun", "sprang", "stood", "stole", "stuck", "stung", "struck",
    "swore", "swept", "swam", "swung", "took", "taught", "tore", "told", "thought", "threw",
    "understood", "woke", "wore", "wove", "wept", "won", "wrote", "cut", "put", "set", "hit", "shut",
    "let", "spread", "cast",
];

const IRREGULAR_PARTICIPLES: &[&str] = &[
    "arisen", "awoken", "beaten", "become", "begun", "bent", "bitten", "blown", "born", "borne",
    "broken", "brought", "built", "bought", "caught", "chosen", "done", "drawn", "driven", "drunk",
    "eaten", "fallen", "fed", "felt", "forbidden", "forgiven", "forgotten", "found", "frozen",
    "given", "gone", "grown", "heard", "hidden", "held", "hung", "hurt", "kept", "known", "laid",
    "led", "left", "lost", "made", "meant", "met", "paid", "ridden", "risen", "run", "said", "seen",
    "sent", "shaken", "shot", "shown", "sold", "sought", "spoken", "spent", "stolen", "struck",
    "sung", "sunk", "sworn", "taken", "taught", "thrown", "told", "torn", "thought", "understood",
    "woken", "won", "worn", "woven", "written", "cut", "put", "set", "hit", "shut", "let", "spread",
    "cast", "slain", "dug", "flown", "fought", "bound", "ground", "wound", "swum", "rung", "sung",
    "stung", "spun", "slung", "beheld", "forsaken", "mistaken", "overtaken",
];

// Participles that normally work as adjectives after a form of "be".
const ADJECTIVAL_PARTICIPLES: &[&str] = &[
    "afraid", "amazed", "annoyed", "ashamed", "bored", "confused", "convinced", "delighted",
    "determined", "disappointed", "embarrassed", "excited", "exhausted", "frightened", "interested",
    "married", "pleased", "puzzled", "relieved", "satisfied", "scared", "surprised", "terrified",
    "thrilled", "tired", "worried",
];

// Words ending in -en that are not participles.
const NOT_PARTICIPLES_EN: &[&str] = &[
    "open", "often", "even", "then", "when", "seven", "eleven", "ten", "golden", "wooden", "woolen",
    "sudden", "kitchen", "garden", "children", "women", "men", "heaven", "oven", "queen", "green",
    "keen", "listen", "citizen", "chicken", "linen", "barren", "silken", "ashen",
];

// Words ending in -ed that are not verb forms.
const NON_VERB_ED: &[&str] = &[
    "bed", "red", "shed", "sled", "seed", "weed", "feed", "need", "greed", "speed", "steed", "deed",
    "hundred", "kindred", "naked", "wicked", "sacred", "ragged", "rugged", "crooked", "beloved",
];

// Common verbs whose base and third-person forms count as finite after a subject.
const COMMON_VERBS: &[&str] = &[
    "accept", "agree", "answer", "appear", "arrive", "ask", "become", "begin", "believe", "belong",
    "break", "bring", "build", "buy", "call", "carry", "catch", "choose", "claim", "come", "contain",
    "cry", "decide", "demand", "deny", "die", "discover", "dress", "drink", "drive", "eat", "enter",
    "escape", "fall", "fear", "feel", "fight", "find", "flee", "fly", "follow", "forget", "give", "grind",
    "go", "grow", "hate", "have", "hear", "help", "hide", "hold", "hope", "hunt", "insist", "keep",
    "kill", "know", "laugh", "lead", "learn", "leave", "lie", "like", "listen", "live", "look",
    "lose", "love", "make", "marry", "meet", "move", "need", "obey", "offer", "open", "order",
    "own", "pay", "plan", "pray", "pretend", "promise", "pull", "push", "reach", "read", "realize",
    "receive", "refuse", "remain", "remember", "reply", "return", "ride", "rule", "run", "say",
    "scream", "see", "seek", "seem", "sell", "send", "shout", "show", "sing", "sit", "sleep",
    "smile", "speak", "spend", "stand", "start", "stay", "steal", "stop", "suspect", "take", "talk",
    "teach", "tell", "think", "throw", "travel", "trust", "try", "turn", "understand", "visit",
    "wait", "wake", "walk", "want", "watch", "wear", "weave", "weep", "win", "wish", "work",
    "worry", "write",
];

#[derive(Debug, Clone)]
struct Token {
    lower: String,
    /// Original casing.
    raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Start,
    Punctuation,
    Coordinator,
    Subordinator,
}

#[derive(Debug)]
struct Segment {
    opened_by: Boundary,
    tokens: Vec<Token>,
}

fn third_person(verb: &str) -> String {
    if verb == "have" {
        return "has".into();
    }
    if verb == "go" || verb == "do" {
        return format!("{verb}es");
    }
    if verb.ends_with('y') && !verb.ends_with("ay") && !verb.ends_with("ey") && !verb.ends_with("oy") {
        return format!("{}ies", &verb[..verb.len() - 1]);
    }
    if ["s", "sh", "ch", "x", "z"].iter().any(|s| verb.ends_with(s)) {
        return format!("{verb}es");
    }
    format!("{verb}s")
}

fn is_regular_past(word: &str) -> bool {
    word.len() >= 4 && word.ends_with("ed") && !NON_VERB_ED.contains(&word)
}

fn is_participle(word: &str) -> bool {
    is_regular_past(word) || IRREGULAR_PARTICIPLES.contains(&word)
}

fn is_present_form(word: &str) -> bool {
    COMMON_VERBS.iter().any(|v| *v == word || third_person(v) == word)
}

/// Whether `tokens[i]` is a finite verb in context.
fn is_finite_verb(tokens: &[Token], i: usize) -> bool {
    let w = tokens[i].lower.as_str();
    let prev = i.checked_sub(1).map(|p| tokens[p].lower.as_str());
    let after_function_word = prev.is_some_and(|p| DETERMINERS.contains(&p) || PREPOSITIONS.contains(&p));
    if AUXILIARIES.contains(&w) {
        return true;
    }
    if IRREGULAR_PAST.contains(&w) || is_regular_past(w) {
        return !after_function_word;
    }
    // Base and third-person forms also open a group at segment start, which
    // covers coordinated predicates ("... and hid the gold").
    is_present_form(w) && !after_function_word
}

fn is_group_continuation(tokens: &[Token], i: usize) -> bool {
    let w = tokens[i].lower.as_str();
    GROUP_CONTINUATIONS.contains(&w)
        || w.ends_with("ly")
        || is_participle(w)
        || AUXILIARIES.contains(&w)
        || IRREGULAR_PAST.contains(&w)
        || is_present_form(w)
        || w.ends_with("ing")
}

fn tokenize(sentence: &str) -> Vec<Segment> {
    let mut segments = vec![Segment { opened_by: Boundary::Start, tokens: Vec::new() }];
    let mut open = |segments: &mut Vec<Segment>, by: Boundary| {
        if segments.last().is_some_and(|s| s.tokens.is_empty()) {
            let last = segments.last_mut().unwrap();
            // Keep the strongest boundary seen: a coordinator or subordinator
            // right after a comma determines the segment's role.
            if last.opened_by == Boundary::Start {
                return;
            }
            if by != Boundary::Punctuation {
                last.opened_by = by;
            }
            return;
        }
        segments.push(Segment { opened_by: by, tokens: Vec::new() });
    };

    for chunk in sentence.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            match c {
                ',' | ';' | ':' | '(' | ')' | '\u{2014}' | '\u{2013}' => {
                    if !word.is_empty() {
                        push_word(&mut segments, &mut open, &word);
                        word.clear();
                    }
                    open(&mut segments, Boundary::Punctuation);
                }
                c if c.is_alphanumeric() || c == '\'' || c == '\u{2019}' || c == '-' => word.push(c),
                _ => {}
            }
        }
        if !word.is_empty() {
            push_word(&mut segments, &mut open, &word);
        }
    }
    segments.retain(|s| !s.tokens.is_empty());
    segments
}

fn push_word(
    segments: &mut Vec<Segment>,
    open: &mut impl FnMut(&mut Vec<Segment>, Boundary),
    word: &str,
) {
    let trimmed = word.trim_matches(|c: char| c == '\'' || c == '\u{2019}' || c == '-');
    if trimmed.is_empty() {
        return;
    }
    let lower = trimmed.to_lowercase().replace('\u{2019}', "'");
    let lower = lower.strip_suffix("'s").map(str::to_string).unwrap_or(lower);
    if COORDINATORS.contains(&lower.as_str()) {
        open(segments, Boundary::Coordinator);
        return;
    }
    if SUBORDINATORS.contains(&lower.as_str()) {
        open(segments, Boundary::Subordinator);
        return;
    }
    segments
        .last_mut()
        .expect("at least one segment")
        .tokens
        .push(Token { lower, raw: trimmed.to_string() });
}

/// Indices at which finite-verb groups start within a segment.
fn verb_groups(tokens: &[Token]) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if is_finite_verb(tokens, i) {
            starts.push(i);
            i += 1;
            while i < tokens.len() && is_group_continuation(tokens, i) {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    starts
}

fn is_passive(tokens: &[Token]) -> bool {
    for (i, t) in tokens.iter().enumerate() {
        if !BE_FORMS.contains(&t.lower.as_str()) {
            continue;
        }
        let mut j = i + 1;
        let mut skipped = 0;
        while j < tokens.len()
            && skipped < 2
            && (tokens[j].lower.ends_with("ly") || ["not", "never", "also", "always", "already", "being", "been"].contains(&tokens[j].lower.as_str()))
        {
            j += 1;
            skipped += 1;
        }
        let Some(next) = tokens.get(j) else { continue };
        let w = next.lower.as_str();
        let followed_by_agent = tokens.get(j + 1).is_some_and(|t| t.lower == "by");
        // Unlisted strong participles ("-en") still read as passive before a "by" agent.
        let en_form = w.ends_with("en") && !NOT_PARTICIPLES_EN.contains(&w);
        if !is_participle(w) && !(followed_by_agent && en_form) {
            continue;
        }
        if followed_by_agent || !ADJECTIVAL_PARTICIPLES.contains(&w) {
            return true;
        }
    }
    false
}

fn noun_phrase(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.lower.as_str()).collect::<Vec<_>>().join(" ")
}

/// Checks one sentence against the vertex requirements.
pub fn validate_vertex(sentence: &str) -> ValidationReport {
    let segments = tokenize(sentence);

    let mut clause_count = 0;
    let mut subjects: Vec<String> = Vec::new();
    let mut pending_nps: Vec<String> = Vec::new();
    let mut passive = false;
    let mut pronouns: Vec<String> = Vec::new();

    for seg in &segments {
        let toks = &seg.tokens;
        for (i, t) in toks.iter().enumerate() {
            let w = t.lower.as_str();
            let is_pronoun = PERSONAL_PRONOUNS.contains(&w)
                || (DEMONSTRATIVES.contains(&w)
                    && (i + 1 == toks.len() || is_finite_verb(toks, i + 1)));
            if is_pronoun && !pronouns.contains(&t.raw.to_lowercase()) {
                pronouns.push(t.raw.to_lowercase());
            }
        }
        if is_passive(toks) {
            passive = true;
        }

        let groups = verb_groups(toks);
        if groups.is_empty() {
            pending_nps.push(noun_phrase(toks));
            continue;
        }
        clause_count += groups.len();
        let subject_tokens = &toks[..groups[0]];
        let joined_by_and = seg.opened_by == Boundary::Coordinator;
        if !subject_tokens.is_empty() {
            if subjects.is_empty() && joined_by_and {
                // "The king and the queen left": leading bare noun phrases joined
                // by a coordinator are additional subjects.
                subjects.append(&mut pending_nps);
            }
            let np = noun_phrase(subject_tokens);
            if !subjects.contains(&np) {
                subjects.push(np);
            }
        } else if subjects.is_empty() {
            if let Some(np) = pending_nps.last() {
                subjects.push(np.clone());
            }
        }
        pending_nps.clear();
    }

    let mut violations = Vec::new();
    if clause_count > 2 {
        violations.push(RULE_CONCISE.to_string());
    }
    let single_agent = subjects.len() == 1 && pronouns.is_empty();
    if !single_agent {
        violations.push(RULE_AGENT.to_string());
    }
    if passive {
        violations.push(RULE_ACTIVE.to_string());
    }

    ValidationReport {
        sentence: sentence.to_string(),
        clause_count,
        has_single_explicit_agent: single_agent,
        is_active_voice: !passive,
        subjects,
        unresolved_pronouns: pronouns,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_vertex_is_clean() {
        let r = validate_vertex("The emperor ordered new clothes.");
        assert_eq!(r.clause_count, 1);
        assert!(r.has_single_explicit_agent);
        assert!(r.is_active_voice);
        assert!(r.violations.is_empty(), "{r:?}");
    }

    #[test]
    fn passive_with_agent_is_flagged() {
        let r = validate_vertex("The clothes were admired by everyone.");
        assert!(!r.is_active_voice);
        assert!(r.violations.contains(&RULE_ACTIVE.to_string()));
    }

    #[test]
    fn chained_clauses_and_pronouns() {
        let r = validate_vertex("He left because she called and they argued and it rained.");
        assert!(r.clause_count >= 3, "{r:?}");
        assert!(r.violations.contains(&RULE_CONCISE.to_string()));
        assert!(!r.has_single_explicit_agent);
        for p in ["he", "she", "they", "it"] {
            assert!(r.unresolved_pronouns.contains(&p.to_string()), "{p} not flagged");
        }
    }

    #[test]
    fn adjectival_predicates_are_active() {
        assert!(validate_vertex("The emperor was naked.").is_active_voice);
        assert!(validate_vertex("The minister was afraid.").is_active_voice);
        assert!(validate_vertex("The weavers were tired.").is_active_voice);
        assert!(!validate_vertex("The weavers were tired by the long night.").is_active_voice);
    }

    #[test]
    fn strong_participles_before_agent() {
        assert!(!validate_vertex("The dragon was slain by the knight.").is_active_voice);
        assert!(!validate_vertex("The oath was sworn by the squire.").is_active_voice);
        assert!(!validate_vertex("The bread was beaten by the cook.").is_active_voice);
        assert!(validate_vertex("The gate was open by noon.").is_active_voice);
    }

    #[test]
    fn compound_subject_breaks_agent_rule() {
        let r = validate_vertex("The emperor and the minister inspected the looms.");
        assert_eq!(r.clause_count, 1);
        assert!(!r.has_single_explicit_agent, "{r:?}");
    }

    #[test]
    fn repeated_subject_is_one_agent() {
        let r = validate_vertex("The child laughed and the child pointed at the emperor.");
        assert_eq!(r.clause_count, 2);
        assert!(r.has_single_explicit_agent, "{r:?}");
    }

    #[test]
    fn coordinated_predicate_shares_subject() {
        let r = validate_vertex("The weavers took the silk and hid the gold.");
        assert_eq!(r.clause_count, 2);
        assert!(r.has_single_explicit_agent, "{r:?}");
    }

    #[test]
    fn third_person_forms() {
        assert_eq!(third_person("cry"), "cries");
        assert_eq!(third_person("watch"), "watches");
        assert_eq!(third_person("say"), "says");
        assert_eq!(third_person("have"), "has");
    }
}
