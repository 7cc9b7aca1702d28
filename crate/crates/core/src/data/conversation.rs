//! Conversation streams generated from the world simulator.
//!
//! A conversation has twelve weekly chunks. Chunk 0 introduces the initial
//! world by stating every relation. Transitions happen on the odd chunks;
//! the even chunks in between are small talk. In single-hop mode a
//! transition chunk spells out every relation that changed. In multi-hop
//! mode it states only the primitive change, and the facts needed to infer
//! the rest are mentioned in the preceding small-talk chunk.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Question, QuestionKind};
use crate::kb::{Document, Timestamp};
use crate::lm::parse::Answer;
use crate::lm::{LmProvider, LmRequest};
use crate::world::{fact_sentence, negated_sentence, transition_sentence, Rel, Transition, Triple, WorldState};

pub const N_CHUNKS: usize = 12;
pub const QUESTIONS_PER_CONVERSATION: usize = 140;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopMode {
    SingleHop,
    MultiHop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub ts: Timestamp,
    pub text: String,
    pub transition: Option<Transition>,
    pub mode: HopMode,
}

/// What a question asks, in world terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuestionSpec {
    pub subj: String,
    pub rel: Rel,
    pub kind: QuestionKind,
    /// The object a yes/no question asks about.
    pub object: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Conversation {
    pub id: String,
    pub seed: u64,
    pub mode: HopMode,
    pub chunks: Vec<Chunk>,
    /// World state after each chunk.
    pub states: Vec<WorldState>,
    /// Facts planted before each transition chunk, keyed by its index.
    pub aux: BTreeMap<usize, BTreeSet<Triple>>,
    pub specs: Vec<QuestionSpec>,
    pub questions: Vec<Question>,
}

impl Conversation {
    pub fn dataset(&self) -> Dataset {
        Dataset {
            id: self.id.clone(),
            documents: self
                .chunks
                .iter()
                .map(|c| {
                    let mut d = Document::new(format!("{}-c{}", self.id, c.index), c.text.clone(), c.ts.clone())
                        .expect("chunks are never empty");
                    if let Some(t) = &c.transition {
                        d.meta.insert("transition".into(), t.kind_name().into());
                    }
                    d
                })
                .collect(),
            questions: self.questions.clone(),
        }
    }

    pub fn state_at(&self, ts: &Timestamp) -> &WorldState {
        let i = self.chunks.iter().rposition(|c| &c.ts <= ts).unwrap_or(0);
        &self.states[i]
    }
}

/// Template id and question text for a question template.
pub fn question_text(spec: &QuestionSpec) -> (&'static str, String) {
    let s = &spec.subj;
    match (spec.rel, spec.kind) {
        (Rel::Boss, QuestionKind::YesNo) => (
            "boss-yes-no",
            format!("Is {} the head of {s}'s workplace?", spec.object.as_deref().unwrap_or("")),
        ),
        (Rel::Coworkers, QuestionKind::YesNo) => (
            "coworker-yes-no",
            format!("Is {} a coworker of {s}?", spec.object.as_deref().unwrap_or("")),
        ),
        (Rel::Spouse, _) => ("spouse", format!("Who is the spouse of {s}?")),
        (Rel::Job, _) => ("job", format!("What is the job of {s}?")),
        (Rel::Company, _) => ("company", format!("Which company does {s} work at?")),
        (Rel::Hobbies, _) => ("hobbies", format!("List all known hobbies of {s}.")),
        (Rel::Coworkers, _) => ("coworkers", format!("List all known coworkers of {s}.")),
        (Rel::WorkLocation, _) => ("work-location", format!("In which city does {s} work?")),
        (Rel::Boss, _) => ("boss", format!("Who is the head of {s}'s workplace?")),
        (Rel::Salary, _) => ("salary", format!("What is the salary of {s}?")),
        (Rel::Industry, _) => ("industry", format!("What industry does {s} work in?")),
        (Rel::IsEmployedFullTime, _) => ("full-time", format!("Does {s} work full-time or part-time?")),
        (Rel::WorkHours, _) => ("work-hours", format!("What are the work hours of {s}?")),
        (Rel::Workplace, _) => ("workplace", format!("What type of workplace does {s} work out of?")),
        (Rel::Parents, _) => ("parents", format!("List all parents of {s}.")),
        (Rel::Children, _) => ("children", format!("List all children of {s}.")),
        (Rel::Siblings, _) => ("siblings", format!("List all siblings of {s}.")),
        (Rel::ParentsInLaw, _) => ("parents-in-law", format!("List all parents-in-law of {s}.")),
        (Rel::ChildrenInLaw, _) => ("children-in-law", format!("List all children-in-law of {s}.")),
        (Rel::StepParents, _) => ("step-parents", format!("List all step-parents of {s}.")),
        (Rel::StepChildren, _) => ("step-children", format!("List all step-children of {s}.")),
        (Rel::Equipment, _) => ("equipment", format!("List all equipment {s} needs for their hobbies.")),
        (other, _) => ("other", format!("What is the {other} of {s}?")),
    }
}

/// Answer to a question template in a given state. Absent single values are `"none"`.
pub fn answer_at(spec: &QuestionSpec, state: &WorldState) -> Answer {
    let objs = state.objects(&spec.subj, spec.rel);
    match spec.kind {
        QuestionKind::List => Answer::List(objs.into_iter().collect()),
        QuestionKind::YesNo => {
            let yes = spec.object.as_ref().is_some_and(|o| objs.contains(o));
            Answer::Single(if yes { "yes" } else { "no" }.into())
        }
        QuestionKind::MultipleChoice => Answer::Single(objs.into_iter().next().unwrap_or_else(|| "none".into())),
    }
}

/// Every template instantiated for every person, plus one boss and one
/// coworker yes/no question per person.
pub fn generate_specs(world: &WorldState, rng: &mut ChaCha8Rng) -> Vec<QuestionSpec> {
    let persons = world.primitives().persons.clone();
    let mut specs = Vec::new();
    for p in &persons {
        for rel in Rel::PERSON {
            let kind = if rel.is_single() {
                QuestionKind::MultipleChoice
            } else {
                QuestionKind::List
            };
            specs.push(QuestionSpec {
                subj: p.clone(),
                rel,
                kind,
                object: None,
            });
        }
        let boss = world.objects(p, Rel::Boss).into_iter().next();
        specs.push(QuestionSpec {
            subj: p.clone(),
            rel: Rel::Boss,
            kind: QuestionKind::YesNo,
            object: boss,
        });
        let others: Vec<&String> = persons.iter().filter(|q| *q != p).collect();
        let coworker = world
            .objects(p, Rel::Coworkers)
            .into_iter()
            .next()
            .or_else(|| others.choose(rng).map(|s| s.to_string()));
        specs.push(QuestionSpec {
            subj: p.clone(),
            rel: Rel::Coworkers,
            kind: QuestionKind::YesNo,
            object: coworker,
        });
    }
    specs
}

fn line(speaker: &str, sentence: &str) -> String {
    format!("{speaker}: {sentence}.")
}

const SMALL_TALK: &[&str] = &[
    "How was your week",
    "Pretty quiet, nothing much to report",
    "The weather has been lovely lately",
    "I finally finished that book I was reading",
    "We should grab lunch sometime",
    "Sounds good to me",
];

/// Facts needed to infer the downstream effects of `t` in `state`.
fn auxiliary_triples(state: &WorldState, t: &Transition) -> BTreeSet<Triple> {
    let p = state.primitives();
    let rels = state.relations();
    let about = |subj: &str, rel: Rel| -> Vec<Triple> {
        rels.iter().filter(|x| x.subj == subj && x.rel == rel).cloned().collect()
    };
    let mut out = BTreeSet::new();
    match *t {
        Transition::JobChange { from, to, .. } => {
            let job = &p.jobs[to].title;
            for rel in Rel::JOB {
                out.extend(about(job, rel));
            }
            let c2 = &p.companies[p.jobs[to].company].name;
            for rel in [Rel::Head, Rel::Location, Rel::CompanyIndustry, Rel::WorkplaceType, Rel::Employees] {
                out.extend(about(c2, rel));
            }
            out.extend(about(&p.companies[p.jobs[from].company].name, Rel::Employees));
        }
        Transition::SpouseChange { person, from, to } => {
            let mut who = vec![person, to];
            who.extend(from);
            who.extend(p.spouse[to]);
            for x in who {
                for rel in [Rel::Parents, Rel::Children, Rel::Spouse] {
                    out.extend(about(&p.persons[x], rel));
                }
            }
        }
        Transition::Adoption { person, child } => {
            for rel in [Rel::Children, Rel::Spouse] {
                out.extend(about(&p.persons[person], rel));
            }
            for rel in [Rel::Parents, Rel::Spouse] {
                out.extend(about(&p.persons[child], rel));
            }
        }
        Transition::NewHobby { hobby, .. } => out.extend(about(&p.hobbies[hobby].name, Rel::HobbyEquipment)),
        Transition::SalaryChange { job, .. } | Transition::WorkHoursChange { job, .. } => {
            for h in p.holders(job) {
                out.extend(about(&p.persons[h], Rel::Job));
            }
        }
    }
    out
}

/// Triples of `diff` whose relation is stored rather than derived.
fn primitive_part(triples: &BTreeSet<Triple>) -> impl Iterator<Item = &Triple> {
    triples.iter().filter(|t| t.rel.is_primitive())
}

fn render_lines(speakers: [&str; 2], sentences: &[String]) -> String {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| line(speakers[i % 2], s))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Capitalizes the first character so every line reads as a sentence.
fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn build_conversation(seed: u64, mode: HopMode) -> Conversation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ mode as u64);
    let world = WorldState::init(seed);
    let start = Timestamp::parse("2023-01-02")
        .expect("static date")
        .plus_days(rng.gen_range(0..52) * 7);
    let speakers = {
        let p = &world.primitives().persons;
        [p[0].clone(), p[1].clone()]
    };
    let sp = [speakers[0].as_str(), speakers[1].as_str()];

    // Roll the world forward first so small-talk chunks can plant the
    // facts the next transition needs.
    let mut states = vec![world.clone()];
    let mut transitions: Vec<Option<Transition>> = vec![None];
    let mut diffs = vec![None];
    for i in 1..N_CHUNKS {
        let cur = states.last().expect("non-empty").clone();
        if i % 2 == 1 {
            let t = cur.sample_transition(&mut rng);
            let (next, diff) = cur.apply_transition(&t).expect("sampled transitions are legal");
            states.push(next);
            transitions.push(Some(t));
            diffs.push(Some(diff));
        } else {
            states.push(cur);
            transitions.push(None);
            diffs.push(None);
        }
    }

    let mut stated: BTreeSet<Triple> = BTreeSet::new();
    let mut aux_map = BTreeMap::new();
    let mut chunks = Vec::with_capacity(N_CHUNKS);
    for i in 0..N_CHUNKS {
        let ts = start.plus_days(7 * i as i64);
        let mut sentences: Vec<String> = Vec::new();
        if i == 0 {
            sentences.push("Let me catch you up on everyone we know".into());
            for t in states[0].relations() {
                sentences.push(fact_sentence(t));
                stated.insert(t.clone());
            }
        } else if let Some(t) = &transitions[i] {
            let before = &states[i - 1];
            let diff = diffs[i].as_ref().expect("transition has diff");
            sentences.push(transition_sentence(before, t));
            let (removed, added): (Vec<&Triple>, Vec<&Triple>) = match mode {
                HopMode::SingleHop => (diff.removed.iter().collect(), diff.added.iter().collect()),
                HopMode::MultiHop => (primitive_part(&diff.removed).collect(), primitive_part(&diff.added).collect()),
            };
            for r in removed {
                sentences.push(negated_sentence(r));
            }
            for a in added {
                sentences.push(fact_sentence(a));
                stated.insert(a.clone());
            }
        } else {
            sentences.push(SMALL_TALK[rng.gen_range(0..SMALL_TALK.len())].into());
            match mode {
                HopMode::SingleHop => {
                    let rels: Vec<&Triple> = states[i].relations().iter().collect();
                    for t in rels.choose_multiple(&mut rng, 4) {
                        sentences.push(fact_sentence(t));
                    }
                }
                HopMode::MultiHop => {
                    if let Some(next) = transitions.get(i + 1).and_then(|t| t.as_ref()) {
                        let needed = auxiliary_triples(&states[i], next);
                        let fresh: BTreeSet<Triple> = needed.difference(&stated).cloned().collect();
                        for t in &fresh {
                            sentences.push(fact_sentence(t));
                            stated.insert(t.clone());
                        }
                        aux_map.insert(i + 1, needed);
                    }
                }
            }
            sentences.push(SMALL_TALK[rng.gen_range(0..SMALL_TALK.len())].into());
        }
        let sentences: Vec<String> = sentences.iter().map(|s| capitalize(s)).collect();
        chunks.push(Chunk {
            index: i,
            ts,
            text: render_lines(sp, &sentences),
            transition: transitions[i].clone(),
            mode,
        });
    }

    let id = format!(
        "conv-{}-{seed}",
        match mode {
            HopMode::SingleHop => "single",
            HopMode::MultiHop => "multi",
        }
    );
    let specs = generate_specs(&states[0], &mut rng);
    let (specs, questions) = build_questions(&id, specs, &chunks, &states, &mut rng);
    Conversation {
        id,
        seed,
        mode,
        chunks,
        states,
        aux: aux_map,
        specs,
        questions,
    }
}

fn domain_of(states: &[WorldState], rel: Rel) -> BTreeSet<String> {
    states
        .iter()
        .flat_map(|s| s.relations().iter().filter(|t| t.rel == rel).map(|t| t.obj.clone()))
        .collect()
}

/// Replays every question template over the chunk states, then keeps the questions whose
/// answers change plus a seeded sample of the rest, up to the per-
/// conversation budget.
fn build_questions(
    conv_id: &str,
    specs: Vec<QuestionSpec>,
    chunks: &[Chunk],
    states: &[WorldState],
    rng: &mut ChaCha8Rng,
) -> (Vec<QuestionSpec>, Vec<Question>) {
    let mut built: Vec<(QuestionSpec, Question)> = Vec::new();
    for spec in specs {
        let mut history: Vec<(Answer, Timestamp)> = Vec::new();
        for (c, s) in chunks.iter().zip(states) {
            let a = answer_at(&spec, s);
            if history.last().map(|(prev, _)| prev) != Some(&a) {
                history.push((a, c.ts.clone()));
            }
        }
        let mut pool: BTreeSet<String> = BTreeSet::new();
        match spec.kind {
            QuestionKind::YesNo => pool.extend(["yes".to_string(), "no".to_string()]),
            _ => {
                for (a, _) in &history {
                    match a {
                        Answer::Single(s) => {
                            pool.insert(s.clone());
                        }
                        Answer::List(items) => pool.extend(items.iter().cloned()),
                    }
                }
                let mut domain: Vec<String> = domain_of(states, spec.rel)
                    .into_iter()
                    .filter(|d| !pool.contains(d) && *d != spec.subj)
                    .collect();
                if spec.rel == Rel::Spouse && !pool.contains("none") {
                    domain.push("none".into());
                }
                pool.extend(domain.choose_multiple(rng, 3).cloned());
            }
        }
        let (template, text) = question_text(&spec);
        let q = Question {
            id: String::new(),
            template_id: Some(template.to_string()),
            text,
            kind: spec.kind,
            choice_pool: pool.into_iter().collect(),
            answer_history: history,
        };
        built.push((spec, q));
    }
    let (mut changed, mut unchanged): (Vec<_>, Vec<_>) = built.into_iter().partition(|(_, q)| q.answer_history.len() > 1);
    changed.shuffle(rng);
    unchanged.shuffle(rng);
    let mut keep: Vec<(QuestionSpec, Question)> = changed
        .into_iter()
        .chain(unchanged)
        .take(QUESTIONS_PER_CONVERSATION)
        .collect();
    // Stable order: by subject, then template.
    keep.sort_by(|a, b| (&a.0.subj, a.0.rel, a.0.kind as u8).cmp(&(&b.0.subj, b.0.rel, b.0.kind as u8)));
    let mut specs = Vec::with_capacity(keep.len());
    let mut questions = Vec::with_capacity(keep.len());
    for (i, (s, mut q)) in keep.into_iter().enumerate() {
        q.id = format!("{conv_id}-q{i}");
        specs.push(s);
        questions.push(q);
    }
    (specs, questions)
}

/// Rewrites each chunk as free-form dialogue between two speakers using a
/// language model. The templated text is passed along so no information is
/// lost; the model is asked to keep every stated fact.
pub fn render_dialogue(conv: &Conversation, provider: &dyn LmProvider) -> Result<Vec<String>, crate::lm::LmError> {
    let [a, b] = {
        let p = &conv.states[0].primitives().persons;
        [p[0].clone(), p[1].clone()]
    };
    conv.chunks
        .iter()
        .map(|c| {
            let prompt = format!(
                "You are writing a casual conversation between {a} and {b} on {}. \
                 Rewrite the notes below as natural dialogue. Every fact in the notes must be stated explicitly, \
                 and no other facts may be added.\n\nNotes:\n{}",
                c.ts, c.text
            );
            provider.complete(&LmRequest::new(prompt))
        })
        .collect()
}
