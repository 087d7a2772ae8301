//! Prompt templates.
//!
//! Placeholders are written `{{name}}`. The extraction, labeling and judging
//! templates carry their instruction text verbatim; the graph-construction
//! and repair templates add a constrained answer format so replies can be
//! parsed mechanically.

use std::collections::{BTreeMap, BTreeSet};

use super::GatewayError;

pub const VERTEX_EXTRACTION: &str = "vertex_extraction";
pub const VERTEX_REPAIR: &str = "vertex_repair";
pub const STAC_CLASSIFICATION: &str = "stac_classification";
pub const EI_IMPACT: &str = "ei_impact";
pub const EI_BOUNDEDNESS: &str = "ei_boundedness";
pub const EI_SPECIFICITY: &str = "ei_specificity";
pub const EI_EVENTIVITY: &str = "ei_eventivity";
pub const EI_TIME_END: &str = "ei_time_end";
pub const EI_TIME_START: &str = "ei_time_start";
pub const EI_INITIATIVE: &str = "ei_initiative";
pub const BOND_CONDITIONING: &str = "bond_conditioning";
pub const EDGE_PROPOSAL: &str = "edge_proposal";
pub const COUNTERFACTUAL_PRUNE: &str = "counterfactual_prune";
pub const ISOLATED_WHY: &str = "isolated_why";
pub const GRAPH_JUDGE: &str = "graph_judge";
pub const SUMMARY_RUBRIC: &str = "summary_rubric";
pub const PLAIN: &str = "plain";

const YES_NO_FORMAT: &str =
    "Answer exactly YES or NO on the first line, then give a one-sentence rationale on the second line.";

const VERTEX_EXTRACTION_TEXT: &str = "\
1. I will input a paragraph to you and you need to do the following.
2. You should summarize the sentences. All sentences should be SIMPLE sentences.
3. If the story is told in first person POV, try to find out the speaker's name or something to refer to the speaker. If you really can't find anything, sub the speaker with 'The Protagonist'.
4. Then, sub ALL pronouns, including the ones in the sentence, with the thing that they refer to.
5. Then, Break ALL clauses into SIMPLE SENTENCES. Delete unimportant clause-level information. Be CONCISE.
6. Your output at this time shall have LITTLE TO NO clauses.
7. You need to check the sentences. If they contain clause, BREAK IT INTO TWO SENTENCES.
8. The sentences, in their order, should give a continuous flow. DO NOT eliminate any important information that shows causal relationship.
9. However, only information that pushes the plot/story is needed. Be concise and do not include ANY irrelevant information.
10. Eventually, give me a summarization that focuses on causal relationships for the story.

Write one sentence per line and nothing else. If the paragraph is already a single simple sentence, repeat it unchanged.

Paragraph:
{{paragraph}}";

const VERTEX_REPAIR_TEXT: &str = "\
The sentence below breaks these requirements: {{violations}}.
Each sentence must contain no more than two clauses, name exactly one explicit subject (replace every pronoun with the thing it refers to; use 'The Protagonist' for an unnamed first-person narrator), and use the active voice.
Rewrite it as one or more SIMPLE sentences that meet every requirement. Write one sentence per line and nothing else.

Context paragraph:
{{paragraph}}

Sentence:
{{sentence}}";

const STAC_CLASSIFICATION_TEXT: &str = "\
Classify each sentence in each chunk individually into either a situation, a task, an action or a consequence. Note that the sentences ARE NOT related.
We do these as follows:

1. Situation: Something that sets the stage of the BACKGROUND, without implying a particular action or task. The sentence will typically set the stage for something that happens later. Generally, it focuses on things that already happened at a certain stage of the story or something that would impact stuff later.

2. Task:  Describes an explicit requirement, want, or responsibility that needs to be fulfilled. The sentence would explicitly(the action\u{2019}s name shall be mentioned)  mention some event that one subject would accomplish later, but hasn\u{2019}t accomplished yet. If the sentence implies an action due to outforce changes, it\u{2019}s categorized as a situation.

3. Action: This refers to an activity that is BEING or HAS JUST BEEN carried out by someone. It requires someone to ACTIVELY do the action. Otherwise, it shall be a situation or a consequence.

4. Consequence: Describes when something happens as a result of at least one thing prior AND has an everlasting impact. It\u{2019}s always an action that \u{2018}finishes\u{2019} (the action changed some state and does not normally change back) or a straightforward state change. It\u{2019}s different from a situation by the fact that it should be a result of something mentioned before in the paragraph, whereas a situation happens spontaneously.

Sentence: {{sentence}}
Answer with exactly one word: Situation, Task, Action or Consequence.";

const EI_IMPACT_TEXT: &str = "\
IMPACT:
I would give you a bunch of sentences and I want you to tell if the main event in the sentence has a lasting impact or if the main event is already resolved.
for instance:
- the door is left opened - impactful, focuses on shifting of door's state
-He opened the door. - resolved, focuses on the person
Border cases:
- If you cannot determine any main event from the sentence, mark it as resolved because of a lack of state of change.

Sentence: {{sentence}}
Answer with exactly one word: Impactful or Resolved.";

const EI_BOUNDEDNESS_TEXT: &str = "\
BOUNDEDNESS:
I would give you a bunch of sentences, not in any order,  and i want you to tell if the sentence's time span, labeled as 'Episodic', 'Habitual', or \"Static'.

They are defined as follows:
- The event is Episodic if it happens only once And is at a specific time period (you may not know that period, but you know the period exists and has a bound)
- The Event is Habitual if the event happens on a regular basis. (There isn't a bound. The event is constant with intervals).
- The Event is Static if the Event describes a characteristic of the subject or if the event is constant and doesn't not have a clear bound. (Lacking Past OR future bound satisfies the category ).

Sentence: {{sentence}}
Answer with exactly one word: Episodic, Habitual or Static.";

const EI_SPECIFICITY_TEXT: &str = "\
SPECIFICITY:
I would give you a bunch of sentences, not in any order,  and i want you to tell if the sentence has a proper noun or a common noun main subject, labeled as 'Specific' or 'Generic'. Define Strictly on the subject, not the implied subject.

They are defined as follows:
- All proper nouns are Specific. We Treat 'The Protagonist' and Any type of PRONOUNS  as proper nouns in this case and are therefore Specific. Anything in First person POV is Specific.
- Anything you can point to as 'It is THE ONE thing that does it' is Specific and treated as a proper noun. In a fairy tale, The Duck or A Tiger would be Specific because though they are not given a name, they act like proper nouns. (Think it like how the tiger's name would be Tiger)
- As an addition to 2, any live thing or personified thing the Starts with 'the' are treated as proper nouns and are thus Specific.
- A common noun, when can STRICTLY trace back to proper noun

Sentence: {{sentence}}
Answer with exactly one word: Specific or Generic.";

const EI_EVENTIVITY_TEXT: &str = "\
EVENTIVITY:
I will give you a bunch of sentences. Classify each sentence in each chunk into either Stative, Dynamically Active or Mentally Active.
Do these as follows:
Check if the sentence describes a stative action (Labeled Stative). This includes possession(Have, consist, contain, etc.), thoughts(Think, remember, suspect, realize, etc.), senses(Feel, seem. etc.), and emotions that do not trigger an action (like, dislike, appreciate, etc.)

Or the sentence describes a dynamic action (Labeled Dynamically Active, which is characterized by more physical than mental movement). This includes the majority of the verbs(Jump, Walk, Suggest, Answer, etc.). Note that Talking or Expressing an opinion would be a dynamic action, because no mental action actually takes place.

Or a mental action (Labeled Mentally Active). This includes action that happens mentally rather than physically, like decide, want, desire, hope, etc.

Sentence: {{sentence}}
Answer with exactly one label: Stative, Dynamically Active or Mentally Active.";

const EI_TIME_END_TEXT: &str = "\
TIME END:
Classify each sentence in each chunk into either Time End Current (Label as C), Or Time End Future(Label as F).

We do these as follows:
Check if the Events will be continue happened after the sentence end itslef (In this case we label F(Future))
Def of End Future:
A conclusion about what is happening now
(Things will continue [according to logic])
(Things will continue [for sure])
Things don't end with the statement.

Sentence: {{sentence}}
Answer with exactly one letter: C or F.";

const EI_TIME_START_TEXT: &str = "\
TIME START:
Classify each sentence in each chunk into either Time Start Past, Or Time Start Now.

We do these as follows:
Check if the Events happened as we stated (In this case we label C(Current))
or the events happened as the sentences happened before (In this case we label P(Past))

If you find the event being persistent or stative and therefore does not have an explicitly start time, treat its start time as infinitely in the past and therefore label it as P.

Sentence: {{sentence}}
Answer with exactly one letter: P or C.";

const EI_INITIATIVE_TEXT: &str = "\
INITIATIVE:
I would give you a bunch of sentences, not in any order,  and i want you to tell if the sentence represents an action it initiates or Receives.
Define the main action and the main target through common sense and content. (NOT the subject). Now, I want you to tell me whether the target actively does(initiate), or receives an action(Receive).
If the sentence itself is in passive form, it's automatically Receive.
If the sentence itself is in active form,  think about if the subject is able to do the action out of CHOICE or the action spontaneously happens. If the subject consciously does the action, it's an Initiate action. If not so, the subject Receives the action.

Sentence: {{sentence}}
Answer with exactly one word: Initiate or Receive.";

const BOND_CONDITIONING_TEXT: &str = "\
You will help build a causal graph of a narrative. Every event sentence carries one STAC label: Situation (background that sets the stage), Task (an explicit requirement or responsibility not yet fulfilled), Action (an activity actively performed or just completed), or Consequence (the lasting outcome of a prior event).
A causal edge from event A to event B is valid only when the pair of labels (label of A -> label of B) is one of these bonds:
{{bond_table}}
Any other ordered pair of labels is never a valid causal edge.
Reply with the single word UNDERSTOOD.";

const EDGE_PROPOSAL_TEXT: &str = "\
Story events, in order:
{{narrative}}

Event A [{{from_id}}] ({{from_label}}): {{from_text}}
Event B [{{to_id}}] ({{to_label}}): {{to_text}}
Candidate bond {{bond}}: {{bond_definition}}

Does Event A cause or directly enable Event B in this story? Event A causes Event B if, in combination with other factors, it is a necessary or sufficient condition for Event B, or if its occurrence raises the probability of Event B.
{{answer_format}}";

const COUNTERFACTUAL_PRUNE_TEXT: &str = "\
Story events, in order:
{{narrative}}

Proposed causal edge: Event A [{{from_id}}] -> Event B [{{to_id}}]
Event A: {{from_text}}
Event B: {{to_text}}

If A did not occur, would B still happen?
{{answer_format}}";

const ISOLATED_WHY_TEXT: &str = "\
Story events, in order:
{{narrative}}

Event [{{vertex_id}}] ({{vertex_label}}) has no causal connection yet: {{vertex_text}}
Why does this event happen, and what does it lead to? Name the events that cause it and the events it causes.
Write one link per line as CAUSE: <event id> or EFFECT: <event id>. Write NONE if there is no causal link.
Refinement round: {{round}}. Candidates already rejected: {{rejected}}";

const GRAPH_JUDGE_TEXT: &str = "\
Input Story: {{story}}
Causal Graph 1: {{graph_1}}
Causal Graph 2: {{graph_2}}

Your job is to make judgement for each of the Causal Graph, determine which one is better in each of the dimension, here is the dimension description:
1. Causality vs. Chronology: Does the diagram emphasize actual cause-and-effect rather than merely stringing events in time?
2. Explicit Motivations/Intent: Are the driving reasons (e.g., revenge, pride, fear) clearly shown so the reader sees why a character or force triggers the next event?
3. Granularity (Level of Detail): Is the diagram capturing just enough detail to show cause-effect without trivial or irrelevant steps?
4. Logical Completeness: Does it include all critical causes and effects for key outcomes, so nothing pivotal is left out?
5. Hierarchy or Grouping: Does the graph organize events into higher-level groupings or hierarchical structures (e.g., subplots or phases)?
6. Accuracy of Connections: Do arrows represent genuine causal links (A enables or drives B), and are there any missing or spurious connections?
7. Decision Points as Branches: Does the graph explicitly show branching at decision points?
8. Ease of Reading: Is the graph easy to interpret visually, with a clear layout and labeling?

For every dimension choose exactly one graph; ties are not allowed. Answer with one line per dimension in the form `<dimension name>: Graph 1` or `<dimension name>: Graph 2`.";

/// Reconstructed from the rubric dimension names; there is no source wording to copy.
const SUMMARY_RUBRIC_TEXT: &str = "\
Score the summary below on three dimensions, each from 0 to 5 in steps of 0.5:
1. Conciseness and Sentence Structure: clean sentence flow, minimal subordination, and avoidance of redundancy.
2. Coverage and Coherence: inclusion of all key story events in proper logical order.
3. Information Span & Economy: avoidance of unnecessary elaboration or repeated ideas.
Answer with the three scores on one line separated by commas, in that order, and nothing else.

Summary:
{{summary}}";

/// A prompt template with `{{name}}` placeholders.
#[derive(Debug, Clone)]
pub struct Template {
    pub id: &'static str,
    pub text: &'static str,
}

impl Template {
    /// Placeholder names, in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        let mut rest = self.text;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            let name = after[..end].trim();
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &after[end + 2..];
        }
        out
    }

    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        let missing: Vec<String> = self
            .variables()
            .into_iter()
            .filter(|v| !vars.contains_key(*v))
            .map(str::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(GatewayError::UnboundVariables { template_id: self.id.to_string(), missing });
        }
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else {
                out.push_str(&rest[start..]);
                rest = "";
                break;
            };
            out.push_str(&vars[after[..end].trim()]);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Lookup table of all templates known to the gateway.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    templates: BTreeMap<&'static str, Template>,
}

impl PromptCatalog {
    pub fn get(&self, id: &str) -> Result<&Template, GatewayError> {
        self.templates.get(id).ok_or_else(|| GatewayError::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> BTreeSet<&'static str> {
        self.templates.keys().copied().collect()
    }
}

impl Default for PromptCatalog {
    fn default() -> Self {
        let entries = [
            (VERTEX_EXTRACTION, VERTEX_EXTRACTION_TEXT),
            (VERTEX_REPAIR, VERTEX_REPAIR_TEXT),
            (STAC_CLASSIFICATION, STAC_CLASSIFICATION_TEXT),
            (EI_IMPACT, EI_IMPACT_TEXT),
            (EI_BOUNDEDNESS, EI_BOUNDEDNESS_TEXT),
            (EI_SPECIFICITY, EI_SPECIFICITY_TEXT),
            (EI_EVENTIVITY, EI_EVENTIVITY_TEXT),
            (EI_TIME_END, EI_TIME_END_TEXT),
            (EI_TIME_START, EI_TIME_START_TEXT),
            (EI_INITIATIVE, EI_INITIATIVE_TEXT),
            (BOND_CONDITIONING, BOND_CONDITIONING_TEXT),
            (EDGE_PROPOSAL, EDGE_PROPOSAL_TEXT),
            (COUNTERFACTUAL_PRUNE, COUNTERFACTUAL_PRUNE_TEXT),
            (ISOLATED_WHY, ISOLATED_WHY_TEXT),
            (GRAPH_JUDGE, GRAPH_JUDGE_TEXT),
            (SUMMARY_RUBRIC, SUMMARY_RUBRIC_TEXT),
            (PLAIN, "{{text}}"),
        ];
        PromptCatalog {
            templates: entries.into_iter().map(|(id, text)| (id, Template { id, text })).collect(),
        }
    }
}

/// Constrained reply format appended to yes/no graph-construction prompts.
pub fn yes_no_format() -> &'static str {
    YES_NO_FORMAT
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn extraction_template_keeps_instruction_text() {
        let cat = PromptCatalog::default();
        let out = cat
            .get(VERTEX_EXTRACTION)
            .unwrap()
            .render(&vars(&[("paragraph", "Once upon a time there was a fox.")]))
            .unwrap();
        assert!(out.contains("Break ALL clauses into"));
        assert!(out.contains("You should summarize the sentences"));
        assert!(out.ends_with("Once upon a time there was a fox."));
    }

    #[test]
    fn unbound_variable_is_named() {
        let cat = PromptCatalog::default();
        let err = cat.get(EDGE_PROPOSAL).unwrap().render(&vars(&[("narrative", "x")])).unwrap_err();
        match err {
            GatewayError::UnboundVariables { missing, .. } => {
                assert!(missing.contains(&"from_id".to_string()));
                assert!(!missing.contains(&"narrative".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn variable_free_template_renders_to_itself() {
        let t = Template { id: "static", text: "No placeholders here." };
        assert_eq!(t.render(&BTreeMap::new()).unwrap(), "No placeholders here.");
    }

    #[test]
    fn judge_template_embeds_both_graphs() {
        let cat = PromptCatalog::default();
        let out = cat
            .get(GRAPH_JUDGE)
            .unwrap()
            .render(&vars(&[("story", "S"), ("graph_1", "{\"g\":1}"), ("graph_2", "{\"g\":2}")]))
            .unwrap();
        assert!(out.contains("Causal Graph 1: {\"g\":1}"));
        assert!(out.contains("Causal Graph 2: {\"g\":2}"));
    }

    #[test]
    fn every_template_variable_list_is_well_formed() {
        let cat = PromptCatalog::default();
        for id in cat.ids() {
            for v in cat.get(id).unwrap().variables() {
                assert!(v.chars().all(|c| c.is_ascii_lowercase() || c == '_' || c.is_ascii_digit()), "{id}: {v}");
            }
        }
    }
}
