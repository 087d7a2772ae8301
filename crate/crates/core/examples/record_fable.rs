//! Regenerates the fable fixtures: cassette, trained models and golden
//! outputs.
//!
//! The replies come from a hand-written script rather than a hosted model,
//! so the recording is reproducible and needs no API key.
//!
//!     cargo run -p ncg-core --example record_fable

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ncg_core::config::PipelineConfig;
use ncg_core::llm::{ChatProvider, ChatRequest, GatewayMode, ProviderError};
use ncg_core::pipeline::{run_pipeline, Overrides, RunOptions};

const PARAGRAPHS: &[(&str, &str)] = &[
    ("vain emperor", "The vain emperor loved fine clothes.\nThe emperor wanted the finest robe in the land."),
    (
        "two swindlers",
        "Two swindlers offered a magic cloth to the emperor.\nThe swindlers were greedy.\nThe emperor ordered new clothes.\nThe swindlers wove nothing on empty looms.",
    ),
    ("ministers saw", "The cloth was praised by the ministers."),
    (
        "day of the parade",
        "The emperor marched through the town in the new clothes.\nA small child shouted the truth.\nThe crowd laughed at the naked emperor.",
    ),
];

const EDGES: &[(&str, &str, &str)] = &[
    ("v001", "v002", "The love of clothes gives the emperor the wish for the finest robe."),
    ("v002", "v005", "The emperor orders clothes to get the robe he wants."),
    ("v003", "v005", "The offer of magic cloth prompts the order."),
    ("v005", "v006", "The order sets the swindlers to work at the looms."),
    ("v006", "v007", "The empty looms leave the ministers praising cloth that is not there."),
    ("v007", "v008", "The praise convinces the emperor to wear the clothes in public."),
    ("v008", "v009", "The parade puts the emperor in front of the child."),
    ("v009", "v010", "The child's words let the crowd admit what it sees."),
    ("v008", "v010", "The emperor appears before the crowd without clothes."),
    ("v001", "v010", "The emperor's vanity leads in the end to his humiliation."),
    ("v003", "v009", "The swindle creates the falsehood the child exposes."),
];

const SPURIOUS: &[(&str, &str)] = &[("v001", "v010"), ("v003", "v009")];

fn bracket_id(prompt: &str, marker: &str) -> Option<String> {
    let rest = &prompt[prompt.find(marker)? + marker.len()..];
    Some(rest[..rest.find(']')?].to_string())
}

fn reply(prompt: &str) -> Result<String, ProviderError> {
    let reject = |what: &str| ProviderError::Rejected { status: 400, message: format!("script has no reply for {what}") };
    if prompt.ends_with("Reply with the single word UNDERSTOOD.") {
        return Ok("UNDERSTOOD".into());
    }
    if prompt.contains("breaks these requirements") {
        return Ok("The ministers praised the invisible cloth.".into());
    }
    if let Some(i) = prompt.find("Paragraph:\n") {
        let para = &prompt[i..];
        return PARAGRAPHS
            .iter()
            .find(|(key, _)| para.contains(key))
            .map(|(_, r)| r.to_string())
            .ok_or_else(|| reject("paragraph"));
    }
    if prompt.contains("Does Event A cause") {
        let (a, b) = (bracket_id(prompt, "Event A [").unwrap(), bracket_id(prompt, "Event B [").unwrap());
        return Ok(match EDGES.iter().find(|(f, t, _)| *f == a && *t == b) {
            Some((_, _, why)) => format!("YES\n{why}"),
            None => "NO\nThe events are not causally linked.".into(),
        });
    }
    if prompt.contains("If A did not occur") {
        let (a, b) = (bracket_id(prompt, "Event A [").unwrap(), bracket_id(prompt, "Event B [").unwrap());
        return Ok(if SPURIOUS.contains(&(a.as_str(), b.as_str())) {
            "YES\nB would still happen through the other events.".into()
        } else {
            "NO\nWithout A the later event has no reason to occur.".into()
        });
    }
    if prompt.contains("has no causal connection yet") {
        return Ok(match bracket_id(prompt, "Event [").as_deref() {
            Some("v004") => "EFFECT: v003".into(),
            _ => "NONE".into(),
        });
    }
    Err(reject("prompt"))
}

fn copy(from: &Path, to: &Path) {
    std::fs::create_dir_all(to.parent().unwrap()).unwrap();
    std::fs::copy(from, to).unwrap_or_else(|e| panic!("{} -> {}: {e}", from.display(), to.display()));
}

fn main() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut config = PipelineConfig::load(&fixtures.join("fable.toml")).expect("fixture config");
    config.llm.mode = GatewayMode::Record;
    let cassette = config.llm.cassette.clone().expect("fixture config names a cassette");
    let _ = std::fs::remove_file(&cassette);

    let ws = tempfile::tempdir().unwrap();
    let provider: Arc<dyn ChatProvider> = Arc::new(|r: &ChatRequest| reply(&r.messages.last().unwrap().content));
    let options = RunOptions { train_first: true, ..Default::default() };
    let overrides = Overrides { provider: Some(provider), embedder: None };
    let out = run_pipeline(&fixtures.join("fable.txt"), &config, ws.path(), options, overrides).expect("pipeline");

    let root = ws.path();
    copy(&root.join("models/features.json"), &fixtures.join("models/features.json"));
    copy(&root.join("models/stac.json"), &fixtures.join("models/stac.json"));
    copy(&root.join("reports/train.txt"), &fixtures.join("models/train.txt"));
    copy(&root.join("graphs/fable.graph.json"), &fixtures.join("golden/fable.graph.json"));
    copy(&root.join("traces/fable.trace.json"), &fixtures.join("golden/fable.trace.json"));
    copy(&root.join("graphs/fable.dot"), &fixtures.join("golden/fable.dot"));

    for v in &out.graph.vertices {
        println!("{} [{}] {}", v.id.as_str(), v.stac.map(|s| s.letter()).unwrap_or('?'), v.text);
    }
    for e in &out.graph.edges {
        println!("{} -> {} {} (iteration {})", e.from.as_str(), e.to.as_str(), e.bond.short(), e.origin_iteration);
    }
    println!("{} provider calls recorded", out.provider_calls);
}
