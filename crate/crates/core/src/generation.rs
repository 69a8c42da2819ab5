// SPDX-License-Identifier: Apache-2.0

//! Test generation: descriptions first, then test code, under one of nine
//! ablation configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextBundle;
use crate::corpus::{parse_test_file, serialize_test_file, Corpus, Provenance, TestCase};
use crate::isa::Mnemonic;
use crate::llm::{CompletionProvider, PromptRequest, ProviderError};
use crate::prompts::{self, fenced_blocks, list_items, PromptKind, UserPrompt};
use crate::util::sha256_hex;

pub const DEFAULT_DESCRIPTIONS_PER_PROMPT: usize = 10;
pub const FEW_SHOT_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationId {
    #[serde(rename = "3shot-random")]
    ThreeShotRandom,
    #[serde(rename = "target-section")]
    TargetSection,
    #[serde(rename = "prompt-chain")]
    PromptChain,
    #[serde(rename = "prompt-chain-instruct")]
    PromptChainInstruct,
    #[serde(rename = "bug-centric")]
    BugCentric,
    #[serde(rename = "code-description")]
    CodeDescription,
    #[serde(rename = "code-description-diff")]
    CodeDescriptionDiff,
    #[serde(rename = "code-diff")]
    CodeDiff,
    #[serde(rename = "bug-guided-code-diff")]
    BugGuidedCodeDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleSelection {
    Random,
    Mapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecContext {
    None,
    Full,
    RelevantSection,
}

/// Which context a configuration feeds the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContextSelector {
    pub spec: SpecContext,
    pub constraints: bool,
    pub two_phase: bool,
    pub guidelines: bool,
    pub bug_categories: bool,
    pub code_descriptions: bool,
    pub desc_diffs: bool,
    pub code_diffs: bool,
    pub examples: ExampleSelection,
}

impl AblationId {
    pub const ALL: [AblationId; 9] = [
        AblationId::ThreeShotRandom,
        AblationId::TargetSection,
        AblationId::PromptChain,
        AblationId::PromptChainInstruct,
        AblationId::BugCentric,
        AblationId::CodeDescription,
        AblationId::CodeDescriptionDiff,
        AblationId::CodeDiff,
        AblationId::BugGuidedCodeDiff,
    ];

    pub fn id(self) -> &'static str {
        match self {
            AblationId::ThreeShotRandom => "3shot-random",
            AblationId::TargetSection => "target-section",
            AblationId::PromptChain => "prompt-chain",
            AblationId::PromptChainInstruct => "prompt-chain-instruct",
            AblationId::BugCentric => "bug-centric",
            AblationId::CodeDescription => "code-description",
            AblationId::CodeDescriptionDiff => "code-description-diff",
            AblationId::CodeDiff => "code-diff",
            AblationId::BugGuidedCodeDiff => "bug-guided-code-diff",
        }
    }

    pub fn selector(self) -> ContextSelector {
        let chained = ContextSelector {
            spec: SpecContext::None,
            constraints: true,
            two_phase: true,
            guidelines: true,
            bug_categories: false,
            code_descriptions: false,
            desc_diffs: false,
            code_diffs: false,
            examples: ExampleSelection::Mapped,
        };
        let direct = ContextSelector {
            spec: SpecContext::Full,
            constraints: false,
            two_phase: false,
            guidelines: false,
            examples: ExampleSelection::Random,
            ..chained
        };
        match self {
            AblationId::ThreeShotRandom => direct,
            AblationId::TargetSection => ContextSelector {
                spec: SpecContext::RelevantSection,
                examples: ExampleSelection::Mapped,
                ..direct
            },
            AblationId::PromptChain => ContextSelector {
                guidelines: false,
                examples: ExampleSelection::Random,
                ..chained
            },
            AblationId::PromptChainInstruct => chained,
            AblationId::BugCentric => ContextSelector {
                bug_categories: true,
                ..chained
            },
            AblationId::CodeDescription => ContextSelector {
                code_descriptions: true,
                ..chained
            },
            AblationId::CodeDescriptionDiff => ContextSelector {
                desc_diffs: true,
                ..chained
            },
            AblationId::CodeDiff => ContextSelector {
                code_diffs: true,
                ..chained
            },
            AblationId::BugGuidedCodeDiff => ContextSelector {
                bug_categories: true,
                code_diffs: true,
                ..chained
            },
        }
    }
}

impl fmt::Display for AblationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown configuration `{0}`; valid: {valid}", valid = AblationId::ALL.map(|a| a.id()).join(", "))]
pub struct UnknownAblation(pub String);

impl FromStr for AblationId {
    type Err = UnknownAblation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationId::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| UnknownAblation(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AblationConfig {
    pub id: AblationId,
    pub descriptions_per_prompt: usize,
    pub use_guidelines: bool,
    pub context: ContextSelector,
}

impl AblationConfig {
    pub fn new(id: AblationId) -> AblationConfig {
        let context = id.selector();
        AblationConfig {
            id,
            descriptions_per_prompt: DEFAULT_DESCRIPTIONS_PER_PROMPT,
            use_guidelines: context.guidelines,
            context,
        }
    }

    pub fn with_descriptions_per_prompt(mut self, n: usize) -> AblationConfig {
        self.descriptions_per_prompt = n.max(1);
        self
    }
}

/// Human-written validity rules for generated tests, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Guidelines(pub Vec<String>);

impl Guidelines {
    /// One rule per line; enumerators are stripped, blank lines and `#`
    /// comments skipped.
    pub fn parse(text: &str) -> Guidelines {
        let items = list_items(text);
        if !items.is_empty() {
            return Guidelines(items);
        }
        Guidelines(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn numbered(&self) -> String {
        self.0
            .iter()
            .enumerate()
            .map(|(i, g)| format!("{}. {g}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestDescription {
    pub mnemonic: Mnemonic,
    pub text: String,
    pub bug_category: Option<String>,
    pub code_diff_item: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{config} needs non-empty `{field}` in the context bundle")]
    MissingContext { field: &'static str, config: AblationId },
    #[error("{config} needs a non-empty guidelines list")]
    MissingGuidelines { config: AblationId },
    #[error("unparseable test: {0}")]
    UnparseableTest(String),
}

fn constraints_text(bundle: &ContextBundle) -> String {
    bundle
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {c}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Description prompts for a bundle: one per (bug category x difference
/// item) combination, each axis collapsing to a single empty slot when the
/// configuration does not use it.
pub fn description_requests(
    bundle: &ContextBundle,
    config: &AblationConfig,
    model: &str,
) -> Result<Vec<(PromptRequest, Option<String>, Option<String>)>, GenerationError> {
    let sel = &config.context;
    let missing = |field| GenerationError::MissingContext {
        field,
        config: config.id,
    };
    if bundle.constraints.is_empty() {
        return Err(missing("constraints"));
    }
    let categories: Vec<Option<(&str, &str)>> = if sel.bug_categories {
        if bundle.bug_categories.is_empty() {
            return Err(missing("bug_categories"));
        }
        bundle
            .bug_categories
            .iter()
            .map(|c| Some((c.name.as_str(), c.description.as_str())))
            .collect()
    } else {
        vec![None]
    };
    let (diff_tag, diffs): (&str, Vec<Option<&str>>) = if sel.code_diffs {
        if bundle.code_diffs.is_empty() {
            return Err(missing("code_diffs"));
        }
        ("code_difference", bundle.code_diffs.iter().map(|d| Some(d.as_str())).collect())
    } else if sel.desc_diffs {
        if bundle.desc_diffs.is_empty() {
            return Err(missing("desc_diffs"));
        }
        ("description_difference", bundle.desc_diffs.iter().map(|d| Some(d.as_str())).collect())
    } else {
        ("", vec![None])
    };
    if sel.code_descriptions && bundle.code_descriptions.is_empty() {
        return Err(missing("code_descriptions"));
    }
    let mut out = Vec::new();
    for cat in &categories {
        for diff in &diffs {
            let mut user = UserPrompt::new()
                .tag("instruction", &bundle.mnemonic)
                .tag("constraints", &constraints_text(bundle));
            if sel.code_descriptions {
                for (rt, d) in &bundle.code_descriptions {
                    user = user.tag_attr("code_description", "runtime", rt, d);
                }
            }
            if let Some((name, desc)) = cat {
                user = user.tag_attr("bug_category", "name", name, desc);
            }
            if let Some(d) = diff {
                user = user.tag(diff_tag, d);
            }
            user = user.tag("count", &config.descriptions_per_prompt.to_string());
            out.push((
                prompts::request(model, PromptKind::GenerateDescriptions, user.build()),
                cat.map(|c| c.0.to_string()),
                diff.map(String::from),
            ));
        }
    }
    Ok(out)
}

/// Phase one. Returns the descriptions and the number of prompts sent.
pub fn generate_descriptions(
    bundle: &ContextBundle,
    config: &AblationConfig,
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<(Vec<TestDescription>, usize), GenerationError> {
    let mnemonic = bundle.mnemonic().ok_or(GenerationError::MissingContext {
        field: "mnemonic",
        config: config.id,
    })?;
    let requests = description_requests(bundle, config, model)?;
    let replies: Vec<Result<String, ProviderError>> =
        requests.par_iter().map(|(r, _, _)| llm.complete(r)).collect();
    let mut out = Vec::new();
    for ((_, cat, diff), reply) in requests.iter().zip(replies) {
        for text in list_items(&reply?).into_iter().take(config.descriptions_per_prompt) {
            out.push(TestDescription {
                mnemonic,
                text,
                bug_category: cat.clone(),
                code_diff_item: diff.clone(),
            });
        }
    }
    Ok((out, requests.len()))
}

/// Inputs to one test-code prompt.
pub struct TestPrompt<'a> {
    pub mnemonic: Mnemonic,
    pub description: Option<&'a TestDescription>,
    /// `(tag, text)` of specification context for single-phase configs.
    pub spec: Option<(&'a str, &'a str)>,
    pub examples: &'a [&'a TestCase],
    pub guidelines: Option<&'a Guidelines>,
    /// Distinguishes repeated single-phase prompts.
    pub variant: Option<usize>,
}

pub fn test_request(p: &TestPrompt<'_>, model: &str) -> PromptRequest {
    let mut user = UserPrompt::new().tag("instruction", p.mnemonic.name());
    if let Some((tag, text)) = p.spec {
        user = user.tag(tag, text);
    }
    if let Some(d) = p.description {
        user = user.tag("description", &d.text);
    }
    for e in p.examples {
        user = user.tag_attr("example", "name", &e.name, &serialize_test_file(e));
    }
    if let Some(g) = p.guidelines {
        user = user.tag("guidelines", &g.numbered());
    }
    if let Some(v) = p.variant {
        user = user.tag("variant", &v.to_string());
    }
    prompts::request(model, PromptKind::GenerateTest, user.build())
}

/// Parse a test-code completion: the first fenced block, or the whole reply
/// when there is none. The assembly must parse too.
pub fn parse_generated_test(name: &str, reply: &str) -> Result<TestCase, GenerationError> {
    let body = fenced_blocks(reply).into_iter().next().unwrap_or_else(|| reply.to_string());
    let test = parse_test_file(name, &body).map_err(|e| GenerationError::UnparseableTest(e.to_string()))?;
    test.program()
        .map_err(|e| GenerationError::UnparseableTest(e.to_string()))?;
    Ok(test)
}

/// Phase two for one description (or one direct prompt).
pub fn generate_test(
    prompt: &TestPrompt<'_>,
    name: &str,
    config: AblationId,
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<TestCase, GenerationError> {
    let request = test_request(prompt, model);
    let reply = llm.complete(&request)?;
    finish_test(name, &reply, prompt, config, &request.hash())
}

fn finish_test(
    name: &str,
    reply: &str,
    prompt: &TestPrompt<'_>,
    config: AblationId,
    hash: &str,
) -> Result<TestCase, GenerationError> {
    let mut test = parse_generated_test(name, reply)?;
    test.description = match prompt.description {
        Some(d) => vec![d.text.clone()],
        None => vec![format!("direct generation, variant {}", prompt.variant.unwrap_or(0))],
    };
    test.provenance = Provenance::Generated {
        config: config.id().to_string(),
        mnemonic: prompt.mnemonic.name().to_string(),
        prompt_hash: hash.to_string(),
    };
    Ok(test)
}

/// Markdown sections: heading line plus body up to the next heading of the
/// same or higher level.
pub fn markdown_sections(doc: &str) -> Vec<(String, String)> {
    let lines: Vec<&str> = doc.lines().collect();
    let level = |l: &str| {
        let n = l.bytes().take_while(|b| *b == b'#').count();
        (n > 0 && l.as_bytes().get(n) == Some(&b' ')).then_some(n)
    };
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        let Some(lv) = level(l) else { continue };
        let end = lines[i + 1..]
            .iter()
            .position(|m| level(m).is_some_and(|x| x <= lv))
            .map_or(lines.len(), |p| i + 1 + p);
        out.push((l[lv..].trim().to_string(), lines[i..end].join("\n")));
    }
    out
}

fn heading_mentions(heading: &str, m: Mnemonic) -> bool {
    heading
        .split(|c: char| !c.is_ascii_alphanumeric())
        .any(|w| w.eq_ignore_ascii_case(m.name()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionChoice {
    Heading,
    Model,
    FullDocument,
}

/// The section most relevant to `m`: a heading naming it, else the model's
/// pick, else the whole document.
pub fn select_section(
    doc: &str,
    m: Mnemonic,
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<(String, SectionChoice), ProviderError> {
    let sections = markdown_sections(doc);
    if let Some((_, text)) = sections.iter().find(|(h, _)| heading_mentions(h, m)) {
        return Ok((text.clone(), SectionChoice::Heading));
    }
    if sections.is_empty() {
        return Ok((doc.to_string(), SectionChoice::FullDocument));
    }
    let headings: Vec<String> = sections.iter().map(|(h, _)| format!("- {h}")).collect();
    let user = UserPrompt::new()
        .tag("instruction", m.name())
        .tag("headings", &headings.join("\n"));
    let reply = llm.complete(&prompts::request(model, PromptKind::SelectSection, user.build()))?;
    let pick = reply.trim().trim_start_matches(['#', '-', ' ']).trim();
    Ok(match sections.iter().find(|(h, _)| h == pick) {
        Some((_, text)) => (text.clone(), SectionChoice::Model),
        None => (doc.to_string(), SectionChoice::FullDocument),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub mnemonic: String,
    pub prompt_hash: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextGap {
    pub mnemonic: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CampaignStats {
    pub config: AblationId,
    pub context: ContextSelector,
    pub model: String,
    pub prompt_version: u32,
    pub seed: u64,
    pub descriptions_per_prompt: usize,
    pub use_guidelines: bool,
    pub mnemonics: usize,
    /// Prompts sent, by kind id.
    pub prompts: BTreeMap<String, usize>,
    pub descriptions: usize,
    /// Test-code completions received.
    pub completions: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejections: Vec<Rejection>,
    pub missing_context: Vec<ContextGap>,
    pub provider_errors: Vec<ContextGap>,
    /// Instructions with no mapped human test that used random examples.
    pub example_fallback: Vec<String>,
    pub section_choice: BTreeMap<String, SectionChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub corpus: Corpus,
    pub stats: CampaignStats,
}

/// Shared inputs to a campaign.
pub struct CampaignInputs<'a> {
    pub spec: &'a str,
    pub corpus: &'a Corpus,
    pub guidelines: Option<&'a Guidelines>,
    pub seed: u64,
}

fn random_examples<'c>(corpus: &'c Corpus, seed: u64, m: Mnemonic) -> Vec<&'c TestCase> {
    let salt = u64::from_str_radix(&sha256_hex(m.name().as_bytes())[..16], 16).expect("hex");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    // Partial Fisher-Yates.
    let k = FEW_SHOT_EXAMPLES.min(idx.len());
    for i in 0..k {
        let j = i + (rng.next_u64() % (idx.len() - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| &corpus.tests[i]).collect()
}

struct Item<'a> {
    name_hint: usize,
    description: Option<TestDescription>,
    variant: Option<usize>,
    spec: Option<(&'static str, &'a str)>,
}

#[derive(Default)]
struct MnemonicResult {
    tests: Vec<TestCase>,
    prompts: BTreeMap<String, usize>,
    descriptions: usize,
    completions: usize,
    rejections: Vec<Rejection>,
    missing: Vec<ContextGap>,
    provider_errors: Vec<ContextGap>,
    fallback: bool,
    section: Option<SectionChoice>,
}

fn run_one(
    bundle: &ContextBundle,
    config: &AblationConfig,
    inputs: &CampaignInputs<'_>,
    llm: &dyn CompletionProvider,
    model: &str,
) -> MnemonicResult {
    let mut r = MnemonicResult::default();
    let gap = |reason: String| ContextGap {
        mnemonic: bundle.mnemonic.clone(),
        reason,
    };
    let Some(m) = bundle.mnemonic() else {
        r.missing.push(gap("unknown mnemonic".into()));
        return r;
    };
    let sel = config.context;
    let examples: Vec<&TestCase> = match sel.examples {
        ExampleSelection::Random => random_examples(inputs.corpus, inputs.seed, m),
        ExampleSelection::Mapped => {
            let mapped: Vec<&TestCase> = bundle
                .example_tests
                .iter()
                .filter_map(|n| inputs.corpus.get(n))
                .take(FEW_SHOT_EXAMPLES)
                .collect();
            if mapped.is_empty() {
                r.fallback = true;
                random_examples(inputs.corpus, inputs.seed, m)
            } else {
                mapped
            }
        }
    };
    let guidelines = if config.use_guidelines { inputs.guidelines } else { None };

    let section_text;
    let items: Vec<Item<'_>> = if sel.two_phase {
        match generate_descriptions(bundle, config, llm, model) {
            Ok((descs, n)) => {
                r.prompts.insert(PromptKind::GenerateDescriptions.id().into(), n);
                r.descriptions = descs.len();
                descs
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| Item {
                        name_hint: i,
                        description: Some(d),
                        variant: None,
                        spec: None,
                    })
                    .collect()
            }
            Err(GenerationError::Provider(e)) => {
                r.provider_errors.push(gap(e.to_string()));
                return r;
            }
            Err(e) => {
                r.missing.push(gap(e.to_string()));
                return r;
            }
        }
    } else {
        let spec: (&'static str, &str) = match sel.spec {
            SpecContext::RelevantSection => match select_section(inputs.spec, m, llm, model) {
                Ok((text, choice)) => {
                    if choice == SectionChoice::Model || choice == SectionChoice::FullDocument {
                        r.prompts.insert(PromptKind::SelectSection.id().into(), 1);
                    }
                    r.section = Some(choice);
                    section_text = text;
                    ("section", section_text.as_str())
                }
                Err(e) => {
                    r.provider_errors.push(gap(e.to_string()));
                    return r;
                }
            },
            _ => ("specification", inputs.spec),
        };
        (0..config.descriptions_per_prompt)
            .map(|i| Item {
                name_hint: i,
                description: None,
                variant: Some(i),
                spec: Some(spec),
            })
            .collect()
    };

    let outcomes: Vec<(String, Result<TestCase, GenerationError>)> = items
        .par_iter()
        .map(|item| {
            let prompt = TestPrompt {
                mnemonic: m,
                description: item.description.as_ref(),
                spec: item.spec,
                examples: &examples,
                guidelines,
                variant: item.variant,
            };
            let name = format!(
                "gen_{}_{}_{:03}",
                m.name().to_ascii_lowercase(),
                config.id.id(),
                item.name_hint
            );
            let request = test_request(&prompt, model);
            let hash = request.hash();
            let result = llm
                .complete(&request)
                .map_err(GenerationError::from)
                .and_then(|reply| finish_test(&name, &reply, &prompt, config.id, &hash));
            (hash, result)
        })
        .collect();
    r.prompts
        .insert(PromptKind::GenerateTest.id().into(), outcomes.len());
    for (hash, result) in outcomes {
        match result {
            Ok(t) => {
                r.completions += 1;
                r.tests.push(t);
            }
            Err(GenerationError::Provider(e)) => r.provider_errors.push(gap(e.to_string())),
            Err(e) => {
                r.completions += 1;
                r.rejections.push(Rejection {
                    mnemonic: bundle.mnemonic.clone(),
                    prompt_hash: hash,
                    reason: e.to_string(),
                });
            }
        }
    }
    r
}

/// Generate a corpus for every bundle. Per-item failures are recorded in
/// the stats; the campaign itself never fails.
pub fn run_ablation(
    config: &AblationConfig,
    bundles: &[ContextBundle],
    inputs: &CampaignInputs<'_>,
    llm: &dyn CompletionProvider,
    model: &str,
) -> Campaign {
    let mut sorted: Vec<&ContextBundle> = bundles.iter().collect();
    sorted.sort_by(|a, b| a.mnemonic.cmp(&b.mnemonic));
    let mut stats = CampaignStats {
        config: config.id,
        context: config.context,
        model: model.to_string(),
        prompt_version: prompts::PROMPT_VERSION,
        seed: inputs.seed,
        descriptions_per_prompt: config.descriptions_per_prompt,
        use_guidelines: config.use_guidelines,
        mnemonics: sorted.len(),
        prompts: BTreeMap::new(),
        descriptions: 0,
        completions: 0,
        accepted: 0,
        rejected: 0,
        rejections: Vec::new(),
        missing_context: Vec::new(),
        provider_errors: Vec::new(),
        example_fallback: Vec::new(),
        section_choice: BTreeMap::new(),
    };
    if config.use_guidelines && inputs.guidelines.is_none_or(Guidelines::is_empty) {
        stats.missing_context.push(ContextGap {
            mnemonic: "*".into(),
            reason: GenerationError::MissingGuidelines { config: config.id }.to_string(),
        });
        return Campaign {
            corpus: Corpus::default(),
            stats,
        };
    }
    let results: Vec<MnemonicResult> = sorted
        .par_iter()
        .map(|b| run_one(b, config, inputs, llm, model))
        .collect();
    let mut tests = Vec::new();
    for (b, r) in sorted.iter().zip(results) {
        for (k, n) in r.prompts {
            *stats.prompts.entry(k).or_default() += n;
        }
        stats.descriptions += r.descriptions;
        stats.completions += r.completions;
        stats.accepted += r.tests.len();
        stats.rejected += r.rejections.len();
        stats.rejections.extend(r.rejections);
        stats.missing_context.extend(r.missing);
        stats.provider_errors.extend(r.provider_errors);
        if r.fallback {
            stats.example_fallback.push(b.mnemonic.clone());
        }
        if let Some(c) = r.section {
            stats.section_choice.insert(b.mnemonic.clone(), c);
        }
        tests.extend(r.tests);
    }
    let corpus = Corpus::new(tests).expect("names are unique per mnemonic");
    Campaign { corpus, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::BugCategory;
    use std::sync::Mutex;

    struct Canned {
        reply: Box<dyn Fn(&PromptRequest) -> String + Send + Sync>,
        seen: Mutex<Vec<PromptRequest>>,
    }

    impl Canned {
        fn new(f: impl Fn(&PromptRequest) -> String + Send + Sync + 'static) -> Canned {
            Canned {
                reply: Box::new(f),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl CompletionProvider for Canned {
        fn complete(&self, r: &PromptRequest) -> Result<String, ProviderError> {
            self.seen.lock().unwrap().push(r.clone());
            Ok((self.reply)(r))
        }
    }

    const LISTING_TEST: &str = "```\n-- asm\nmov %r0, 0x12345678\nrsh %r0, 0\nexit\n-- result\n0x12345678\n```";

    fn rsh_bundle() -> ContextBundle {
        ContextBundle {
            mnemonic: "RSH".into(),
            constraints: vec!["{RSH, K, ALU} means dst = (u32)(dst >> imm)".into()],
            bug_categories: vec![
                BugCategory {
                    name: "Shift Operation".into(),
                    description: "shift by 0".into(),
                },
                BugCategory {
                    name: "Register Handling".into(),
                    description: "regs".into(),
                },
            ],
            code_diffs: vec!["a".into(), "b".into(), "c".into()],
            ..ContextBundle::default()
        }
    }

    #[test]
    fn ids_round_trip() {
        for a in AblationId::ALL {
            assert_eq!(a.id().parse::<AblationId>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.id()));
        }
        let e = "nope".parse::<AblationId>().unwrap_err().to_string();
        assert!(e.contains("bug-guided-code-diff") && e.contains("3shot-random"));
    }

    #[test]
    fn full_config_enables_everything() {
        let s = AblationId::BugGuidedCodeDiff.selector();
        assert!(s.guidelines && s.bug_categories && s.code_diffs && s.two_phase);
        assert!(!AblationId::ThreeShotRandom.selector().two_phase);
        assert!(!AblationId::PromptChain.selector().guidelines);
    }

    #[test]
    fn combinations_of_categories_and_diffs() {
        let llm = Canned::new(|_| (1..=12).map(|i| format!("{i}. d{i}\n")).collect());
        let cfg = AblationConfig::new(AblationId::BugGuidedCodeDiff);
        let (descs, prompts) = generate_descriptions(&rsh_bundle(), &cfg, &llm, "m").unwrap();
        assert_eq!(prompts, 6);
        assert_eq!(descs.len(), 60);
        assert!(descs.iter().all(|d| d.bug_category.is_some() && d.code_diff_item.is_some()));
    }

    #[test]
    fn missing_diffs() {
        let llm = Canned::new(|_| String::new());
        let b = ContextBundle {
            code_diffs: vec![],
            ..rsh_bundle()
        };
        let e = generate_descriptions(&b, &AblationConfig::new(AblationId::CodeDiff), &llm, "m").unwrap_err();
        assert_eq!(
            e,
            GenerationError::MissingContext {
                field: "code_diffs",
                config: AblationId::CodeDiff
            }
        );
    }

    #[test]
    fn test_parsing() {
        let t = parse_generated_test("x", LISTING_TEST).unwrap();
        assert_eq!(t.expected_result(), Some(0x12345678));
        assert!(matches!(
            parse_generated_test("x", "-- asm\nexit\n"),
            Err(GenerationError::UnparseableTest(_))
        ));
        let e = parse_generated_test("x", "-- asm\nmov %r11, 1\nexit\n-- result\n0x0").unwrap_err();
        assert!(e.to_string().contains("register index 11"), "{e}");
    }

    #[test]
    fn single_phase_skips_descriptions() {
        let llm = Canned::new(|_| LISTING_TEST.into());
        let corpus = Corpus::new(vec![parse_generated_test("h", LISTING_TEST).unwrap()]).unwrap();
        let inputs = CampaignInputs {
            spec: "# ISA\nRSH shifts",
            corpus: &corpus,
            guidelines: None,
            seed: 1,
        };
        let cfg = AblationConfig::new(AblationId::ThreeShotRandom).with_descriptions_per_prompt(2);
        let c = run_ablation(&cfg, &[rsh_bundle()], &inputs, &llm, "m");
        assert_eq!(c.corpus.len(), 2);
        assert_eq!(c.stats.prompts.get("generate-descriptions"), None);
        assert_eq!(c.stats.prompts["generate-test"], 2);
        assert_eq!(c.stats.accepted + c.stats.rejected, c.stats.completions);
        let empty = run_ablation(&cfg, &[], &inputs, &llm, "m");
        assert!(empty.corpus.is_empty() && empty.stats.prompts.is_empty());
    }

    #[test]
    fn sections() {
        let doc = "# A\nx\n## RSH details\ny\n## Other\nz\n# B\nw";
        let s = markdown_sections(doc);
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].1, doc.lines().take(6).collect::<Vec<_>>().join("\n"));
        let llm = Canned::new(|_| "Other".into());
        assert_eq!(select_section(doc, Mnemonic::Rsh, &llm, "m").unwrap().1, SectionChoice::Heading);
        let (text, how) = select_section(doc, Mnemonic::Add, &llm, "m").unwrap();
        assert_eq!((text.as_str(), how), ("## Other\nz", SectionChoice::Model));
    }
}
