//! Simulated world for the conversation domain: people, companies, jobs and
//! hobbies whose relations evolve through random transitions.
//!
//! Only a handful of relations are stored (job, hobbies, spouse, parents and
//! the company/job/hobby attributes). Everything else is derived, and
//! [`WorldState::relations`] holds the materialized set of all of them.

mod render;
mod transition;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use render::{fact_sentence, negated_sentence, transition_sentence, NEGATION_PREFIX};
pub use transition::{relation_diff, RelationDiff, Transition};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("illegal transition {0:?}")]
    IllegalTransition(Transition),
    #[error("world snapshot invalid: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Person,
    Company,
    Job,
    Hobby,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId {
    pub kind: EntityKind,
    pub name: String,
}

/// Closed relation vocabulary. Person relations come first, then company,
/// job and hobby relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rel {
    Spouse,
    Parents,
    Children,
    Job,
    Company,
    Hobbies,
    Coworkers,
    WorkLocation,
    Boss,
    Salary,
    Industry,
    IsEmployedFullTime,
    WorkHours,
    Workplace,
    Siblings,
    ParentsInLaw,
    ChildrenInLaw,
    StepParents,
    StepChildren,
    Equipment,
    Employees,
    Jobs,
    Head,
    Location,
    CompanyIndustry,
    WorkplaceType,
    JobCompany,
    JobSalary,
    JobFullTime,
    JobWorkHours,
    HobbyEquipment,
}

impl Rel {
    pub const PERSON: [Rel; 20] = [
        Rel::Spouse,
        Rel::Parents,
        Rel::Children,
        Rel::Job,
        Rel::Company,
        Rel::Hobbies,
        Rel::Coworkers,
        Rel::WorkLocation,
        Rel::Boss,
        Rel::Salary,
        Rel::Industry,
        Rel::IsEmployedFullTime,
        Rel::WorkHours,
        Rel::Workplace,
        Rel::Siblings,
        Rel::ParentsInLaw,
        Rel::ChildrenInLaw,
        Rel::StepParents,
        Rel::StepChildren,
        Rel::Equipment,
    ];
    pub const COMPANY: [Rel; 6] = [
        Rel::Employees,
        Rel::Jobs,
        Rel::Head,
        Rel::Location,
        Rel::CompanyIndustry,
        Rel::WorkplaceType,
    ];
    pub const JOB: [Rel; 4] = [Rel::JobCompany, Rel::JobSalary, Rel::JobFullTime, Rel::JobWorkHours];

    /// Relations with at most one object per subject.
    pub fn is_single(self) -> bool {
        !matches!(
            self,
            Rel::Parents
                | Rel::Children
                | Rel::Hobbies
                | Rel::Coworkers
                | Rel::Siblings
                | Rel::ParentsInLaw
                | Rel::ChildrenInLaw
                | Rel::StepParents
                | Rel::StepChildren
                | Rel::Equipment
                | Rel::Employees
                | Rel::Jobs
                | Rel::HobbyEquipment
        )
    }

    /// Stored rather than derived.
    pub fn is_primitive(self) -> bool {
        matches!(
            self,
            Rel::Spouse
                | Rel::Parents
                | Rel::Job
                | Rel::Hobbies
                | Rel::Head
                | Rel::Location
                | Rel::CompanyIndustry
                | Rel::WorkplaceType
                | Rel::JobCompany
                | Rel::JobSalary
                | Rel::JobFullTime
                | Rel::JobWorkHours
                | Rel::HobbyEquipment
        )
    }

    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .expect("unit variant serializes to a string")
    }
}

impl fmt::Display for Rel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// `(subject, relation, object)`; set-valued relations are flattened into
/// one triple per element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subj: String,
    pub rel: Rel,
    pub obj: String,
}

impl Triple {
    pub fn new(subj: impl Into<String>, rel: Rel, obj: impl Into<String>) -> Self {
        Self {
            subj: subj.into(),
            rel,
            obj: obj.into(),
        }
    }
}

pub const SALARIES_K: [u32; 10] = [60, 70, 80, 90, 100, 110, 120, 130, 140, 150];
pub const WORK_HOURS: [&str; 4] = ["9-17", "10-15", "8-16", "12-20"];

const PERSON_POOL: &[&str] = &[
    "Alice", "Bob", "Carmen", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ingrid", "Jamal", "Keiko", "Liam",
    "Marisol", "Nikolai", "Olga", "Priya", "Quentin", "Rosa", "Tobias", "Uma",
];
const HEAD_POOL: &[&str] = &["Whitfield", "Okonkwo", "Lindqvist", "Castellano", "Moreau", "Takahashi", "Brennan", "Vasquez"];
const COMPANY_POOL: &[&str] = &[
    "Acme", "Globex", "Initech", "Umbrella", "Hooli", "Vandelay", "Wonka", "Stark", "Tyrell", "Cyberdyne",
];
const LOCATION_POOL: &[&str] = &["Boston", "Denver", "Seattle", "Austin", "Chicago", "Portland", "Atlanta", "Phoenix"];
const INDUSTRY_POOL: &[&str] = &[
    "healthcare", "finance", "retail", "logistics", "education", "energy", "software", "hospitality",
];
const WORKPLACE_POOL: &[&str] = &["office", "warehouse", "factory", "studio", "laboratory", "storefront", "hospital", "campus"];
const JOB_POOL: &[&str] = &[
    "accountant", "architect", "baker", "cashier", "chemist", "designer", "electrician", "engineer", "librarian",
    "mechanic", "nurse", "paralegal", "pharmacist", "plumber", "recruiter", "surveyor", "technician", "translator",
    "veterinarian", "welder",
];
const HOBBY_POOL: &[(&str, [&str; 2])] = &[
    ("archery", ["bow", "quiver"]),
    ("cycling", ["bicycle", "helmet"]),
    ("fishing", ["rod", "tackle"]),
    ("painting", ["easel", "brushes"]),
    ("skiing", ["skis", "goggles"]),
    ("photography", ["camera", "tripod"]),
    ("climbing", ["harness", "carabiners"]),
    ("gardening", ["trowel", "gloves"]),
    ("surfing", ["surfboard", "wetsuit"]),
    ("knitting", ["needles", "yarn"]),
    ("woodworking", ["chisel", "sawhorse"]),
    ("astronomy", ["telescope", "starcharts"]),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyInfo {
    pub name: String,
    pub head: String,
    pub location: String,
    pub industry: String,
    pub workplace: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobInfo {
    pub title: String,
    pub company: usize,
    pub salary_k: u32,
    pub full_time: bool,
    pub hours: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HobbyInfo {
    pub name: String,
    pub equipment: Vec<String>,
}

/// The stored relations; everything else is computed from these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Primitives {
    pub persons: Vec<String>,
    pub companies: Vec<CompanyInfo>,
    pub jobs: Vec<JobInfo>,
    pub hobbies: Vec<HobbyInfo>,
    pub job_of: Vec<usize>,
    pub hobbies_of: Vec<BTreeSet<usize>>,
    pub spouse: Vec<Option<usize>>,
    pub parents: Vec<BTreeSet<usize>>,
}

pub fn salary_label(k: u32) -> String {
    format!("${k}k")
}

pub fn full_time_label(full_time: bool) -> &'static str {
    if full_time {
        "full-time"
    } else {
        "part-time"
    }
}

impl Primitives {
    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn company_of(&self, p: usize) -> usize {
        self.jobs[self.job_of[p]].company
    }

    pub fn children(&self, p: usize) -> BTreeSet<usize> {
        (0..self.n_persons()).filter(|&c| self.parents[c].contains(&p)).collect()
    }

    pub fn siblings(&self, p: usize) -> BTreeSet<usize> {
        (0..self.n_persons())
            .filter(|&q| q != p && !self.parents[q].is_disjoint(&self.parents[p]))
            .collect()
    }

    pub fn employees(&self, c: usize) -> BTreeSet<usize> {
        (0..self.n_persons()).filter(|&p| self.company_of(p) == c).collect()
    }

    pub fn holders(&self, j: usize) -> BTreeSet<usize> {
        (0..self.n_persons()).filter(|&p| self.job_of[p] == j).collect()
    }

    /// Whether `a` is `p` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, a: usize, p: usize) -> bool {
        let mut stack = vec![p];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            if x == a {
                return true;
            }
            if seen.insert(x) {
                stack.extend(self.parents[x].iter().copied());
            }
        }
        false
    }

    fn names(&self, set: impl IntoIterator<Item = usize>) -> BTreeSet<String> {
        set.into_iter().map(|i| self.persons[i].clone()).collect()
    }

    /// Objects of a person relation, computed from primitives.
    pub fn person_objects(&self, p: usize, rel: Rel) -> BTreeSet<String> {
        let job = &self.jobs[self.job_of[p]];
        let company = &self.companies[job.company];
        let one = |s: &str| BTreeSet::from([s.to_string()]);
        match rel {
            Rel::Spouse => self.names(self.spouse[p]),
            Rel::Parents => self.names(self.parents[p].iter().copied()),
            Rel::Children => self.names(self.children(p)),
            Rel::Job => one(&job.title),
            Rel::Company => one(&company.name),
            Rel::Hobbies => self.hobbies_of[p].iter().map(|&h| self.hobbies[h].name.clone()).collect(),
            Rel::Coworkers => self.names(self.employees(job.company).into_iter().filter(|&q| q != p)),
            Rel::WorkLocation => one(&company.location),
            Rel::Boss => one(&company.head),
            Rel::Salary => one(&salary_label(job.salary_k)),
            Rel::Industry => one(&company.industry),
            Rel::IsEmployedFullTime => one(full_time_label(job.full_time)),
            Rel::WorkHours => one(WORK_HOURS[job.hours]),
            Rel::Workplace => one(&company.workplace),
            Rel::Siblings => self.names(self.siblings(p)),
            Rel::ParentsInLaw => match self.spouse[p] {
                Some(s) => self.names(self.parents[s].iter().copied()),
                None => BTreeSet::new(),
            },
            Rel::ChildrenInLaw => self.names(self.children(p).into_iter().filter_map(|c| self.spouse[c])),
            Rel::StepParents => self.names(
                self.parents[p]
                    .iter()
                    .filter_map(|&par| self.spouse[par])
                    .filter(|s| !self.parents[p].contains(s)),
            ),
            Rel::StepChildren => match self.spouse[p] {
                Some(s) => {
                    let own = self.children(p);
                    self.names(self.children(s).into_iter().filter(|c| !own.contains(c)))
                }
                None => BTreeSet::new(),
            },
            Rel::Equipment => self.hobbies_of[p]
                .iter()
                .flat_map(|&h| self.hobbies[h].equipment.iter().cloned())
                .collect(),
            _ => BTreeSet::new(),
        }
    }

    pub fn company_objects(&self, c: usize, rel: Rel) -> BTreeSet<String> {
        let info = &self.companies[c];
        let one = |s: &str| BTreeSet::from([s.to_string()]);
        match rel {
            Rel::Employees => self.names(self.employees(c)),
            Rel::Jobs => self
                .jobs
                .iter()
                .filter(|j| j.company == c)
                .map(|j| j.title.clone())
                .collect(),
            Rel::Head => one(&info.head),
            Rel::Location => one(&info.location),
            Rel::CompanyIndustry => one(&info.industry),
            Rel::WorkplaceType => one(&info.workplace),
            _ => BTreeSet::new(),
        }
    }

    pub fn job_objects(&self, j: usize, rel: Rel) -> BTreeSet<String> {
        let info = &self.jobs[j];
        let one = |s: &str| BTreeSet::from([s.to_string()]);
        match rel {
            Rel::JobCompany => one(&self.companies[info.company].name),
            Rel::JobSalary => one(&salary_label(info.salary_k)),
            Rel::JobFullTime => one(full_time_label(info.full_time)),
            Rel::JobWorkHours => one(WORK_HOURS[info.hours]),
            _ => BTreeSet::new(),
        }
    }

    /// Triples for one `(subject, relation)` key.
    pub fn key_triples(&self, key: &Key) -> BTreeSet<Triple> {
        let (name, objs) = match *key {
            Key::Person(p, rel) => (&self.persons[p], self.person_objects(p, rel)),
            Key::Company(c, rel) => (&self.companies[c].name, self.company_objects(c, rel)),
            Key::Job(j, rel) => (&self.jobs[j].title, self.job_objects(j, rel)),
            Key::Hobby(h) => (
                &self.hobbies[h].name,
                self.hobbies[h].equipment.iter().cloned().collect(),
            ),
        };
        let rel = key.rel();
        objs.into_iter().map(|o| Triple::new(name.clone(), rel, o)).collect()
    }

    pub fn all_keys(&self) -> Vec<Key> {
        let mut keys = Vec::new();
        for p in 0..self.n_persons() {
            keys.extend(Rel::PERSON.iter().map(|&r| Key::Person(p, r)));
        }
        for c in 0..self.companies.len() {
            keys.extend(Rel::COMPANY.iter().map(|&r| Key::Company(c, r)));
        }
        for j in 0..self.jobs.len() {
            keys.extend(Rel::JOB.iter().map(|&r| Key::Job(j, r)));
        }
        keys.extend((0..self.hobbies.len()).map(Key::Hobby));
        keys
    }

    /// Every relation, recomputed from scratch.
    pub fn all_relations(&self) -> BTreeSet<Triple> {
        self.all_keys().iter().flat_map(|k| self.key_triples(k)).collect()
    }
}

/// A `(subject, relation)` slot addressed by entity index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    Person(usize, Rel),
    Company(usize, Rel),
    Job(usize, Rel),
    Hobby(usize),
}

impl Key {
    pub fn rel(&self) -> Rel {
        match *self {
            Key::Person(_, r) | Key::Company(_, r) | Key::Job(_, r) => r,
            Key::Hobby(_) => Rel::HobbyEquipment,
        }
    }
}

/// A world state: primitives plus the materialized relation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    pub seed: u64,
    prims: Primitives,
    relations: BTreeSet<Triple>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seed: u64,
    entities: Vec<EntityId>,
    primitive_relations: Vec<Triple>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str], n: usize) -> Vec<&'a str> {
    pool.choose_multiple(rng, n).copied().collect()
}

impl WorldState {
    pub fn from_primitives(seed: u64, prims: Primitives) -> Self {
        let relations = prims.all_relations();
        Self { seed, prims, relations }
    }

    /// Ten people, five companies with three jobs each, eight hobbies, and
    /// random employment, hobbies and two generations of kinship.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let persons: Vec<String> = pick(&mut rng, PERSON_POOL, 10).into_iter().map(String::from).collect();
        let heads = pick(&mut rng, HEAD_POOL, 5);
        let companies: Vec<CompanyInfo> = pick(&mut rng, COMPANY_POOL, 5)
            .into_iter()
            .zip(heads)
            .map(|(name, head)| CompanyInfo {
                name: name.to_string(),
                head: head.to_string(),
                location: LOCATION_POOL.choose(&mut rng).expect("pool").to_string(),
                industry: INDUSTRY_POOL.choose(&mut rng).expect("pool").to_string(),
                workplace: WORKPLACE_POOL.choose(&mut rng).expect("pool").to_string(),
            })
            .collect();
        let jobs: Vec<JobInfo> = pick(&mut rng, JOB_POOL, 15)
            .into_iter()
            .enumerate()
            .map(|(i, title)| JobInfo {
                title: title.to_string(),
                company: i / 3,
                salary_k: *SALARIES_K.choose(&mut rng).expect("pool"),
                full_time: rng.gen_bool(0.7),
                hours: rng.gen_range(0..WORK_HOURS.len()),
            })
            .collect();
        let hobbies: Vec<HobbyInfo> = HOBBY_POOL
            .choose_multiple(&mut rng, 8)
            .map(|(name, eq)| HobbyInfo {
                name: name.to_string(),
                equipment: {
                    let mut v: Vec<String> = eq.iter().map(|e| e.to_string()).collect();
                    v.sort();
                    v
                },
            })
            .collect();
        let n = persons.len();
        let job_of = (0..n).map(|_| rng.gen_range(0..jobs.len())).collect();
        let hobbies_of = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=2);
                (0..hobbies.len()).collect::<Vec<_>>().choose_multiple(&mut rng, k).copied().collect()
            })
            .collect();
        let mut prims = Primitives {
            persons,
            companies,
            jobs,
            hobbies,
            job_of,
            hobbies_of,
            spouse: vec![None; n],
            parents: vec![BTreeSet::new(); n],
        };
        init_kinship(&mut prims, &mut rng);
        Self::from_primitives(seed, prims)
    }

    pub fn primitives(&self) -> &Primitives {
        &self.prims
    }

    pub fn relations(&self) -> &BTreeSet<Triple> {
        &self.relations
    }

    pub fn person_index(&self, name: &str) -> Option<usize> {
        self.prims.persons.iter().position(|p| p == name)
    }

    /// Objects of `(subj, rel)` in this state.
    pub fn objects(&self, subj: &str, rel: Rel) -> BTreeSet<String> {
        let lo = Triple::new(subj, rel, "");
        self.relations
            .range(lo..)
            .take_while(|t| t.subj == subj && t.rel == rel)
            .map(|t| t.obj.clone())
            .collect()
    }

    pub fn entities(&self) -> Vec<EntityId> {
        let p = &self.prims;
        let mk = |kind, name: &String| EntityId { kind, name: name.clone() };
        p.persons
            .iter()
            .map(|n| mk(EntityKind::Person, n))
            .chain(p.companies.iter().map(|c| mk(EntityKind::Company, &c.name)))
            .chain(p.jobs.iter().map(|j| mk(EntityKind::Job, &j.title)))
            .chain(p.hobbies.iter().map(|h| mk(EntityKind::Hobby, &h.name)))
            .collect()
    }

    /// Checks every derived relation against its definition.
    pub fn validate(&self) -> Result<(), String> {
        let p = &self.prims;
        if self.relations != p.all_relations() {
            return Err("materialized relations differ from recomputation".into());
        }
        for a in 0..p.n_persons() {
            if let Some(b) = p.spouse[a] {
                if p.spouse[b] != Some(a) || a == b {
                    return Err(format!("spouse of {} not symmetric", p.persons[a]));
                }
            }
            if p.parents[a].len() > 2 || p.parents[a].iter().any(|&x| p.is_ancestor_or_self(a, x)) {
                return Err(format!("bad parents for {}", p.persons[a]));
            }
            let name = &p.persons[a];
            let company = self.objects(name, Rel::Company).into_iter().next().ok_or("no company")?;
            let mut roster = self.objects(&company, Rel::Employees);
            roster.remove(name);
            if self.objects(name, Rel::Coworkers) != roster {
                return Err(format!("coworkers of {name} inconsistent"));
            }
            for s in self.objects(name, Rel::Siblings) {
                if !self.objects(&s, Rel::Siblings).contains(name) {
                    return Err(format!("siblings of {name} not symmetric"));
                }
            }
        }
        let entities = self.entities();
        let names: BTreeSet<&str> = entities.iter().map(|e| e.name.as_str()).collect();
        for t in &self.relations {
            if !names.contains(t.subj.as_str()) {
                return Err(format!("dangling subject {}", t.subj));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let p = &self.prims;
        let keys: Vec<Key> = p.all_keys().into_iter().filter(|k| k.rel().is_primitive()).collect();
        let snap = Snapshot {
            seed: self.seed,
            entities: self.entities(),
            primitive_relations: keys.iter().flat_map(|k| p.key_triples(k)).collect(),
        };
        serde_json::to_string_pretty(&snap).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, WorldError> {
        let snap: Snapshot = serde_json::from_str(s).map_err(|e| WorldError::Snapshot(e.to_string()))?;
        let names_of = |kind| -> Vec<String> {
            snap.entities.iter().filter(|e| e.kind == kind).map(|e| e.name.clone()).collect()
        };
        let persons = names_of(EntityKind::Person);
        let company_names = names_of(EntityKind::Company);
        let job_names = names_of(EntityKind::Job);
        let hobby_names = names_of(EntityKind::Hobby);
        let mut by: BTreeMap<(&str, Rel), Vec<&str>> = BTreeMap::new();
        for t in &snap.primitive_relations {
            by.entry((t.subj.as_str(), t.rel)).or_default().push(t.obj.as_str());
        }
        let err = |m: String| WorldError::Snapshot(m);
        let one = |subj: &str, rel: Rel| -> Result<String, WorldError> {
            by.get(&(subj, rel))
                .and_then(|v| v.first())
                .map(|s| s.to_string())
                .ok_or_else(|| err(format!("missing {rel} for {subj}")))
        };
        let idx = |list: &[String], name: &str| -> Result<usize, WorldError> {
            list.iter().position(|x| x == name).ok_or_else(|| err(format!("unknown entity {name}")))
        };
        let companies = company_names
            .iter()
            .map(|c| {
                Ok(CompanyInfo {
                    name: c.clone(),
                    head: one(c, Rel::Head)?,
                    location: one(c, Rel::Location)?,
                    industry: one(c, Rel::CompanyIndustry)?,
                    workplace: one(c, Rel::WorkplaceType)?,
                })
            })
            .collect::<Result<Vec<_>, WorldError>>()?;
        let jobs = job_names
            .iter()
            .map(|j| {
                let salary = one(j, Rel::JobSalary)?;
                let hours = one(j, Rel::JobWorkHours)?;
                Ok(JobInfo {
                    title: j.clone(),
                    company: idx(&company_names, &one(j, Rel::JobCompany)?)?,
                    salary_k: salary
                        .trim_start_matches('$')
                        .trim_end_matches('k')
                        .parse()
                        .map_err(|_| err(format!("bad salary {salary}")))?,
                    full_time: one(j, Rel::JobFullTime)? == "full-time",
                    hours: WORK_HOURS
                        .iter()
                        .position(|h| *h == hours)
                        .ok_or_else(|| err(format!("bad hours {hours}")))?,
                })
            })
            .collect::<Result<Vec<_>, WorldError>>()?;
        let hobbies = hobby_names
            .iter()
            .map(|h| HobbyInfo {
                name: h.clone(),
                equipment: by
                    .get(&(h.as_str(), Rel::HobbyEquipment))
                    .map(|v| v.iter().map(|s| s.to_string()).collect())
                    .unwrap_or_default(),
            })
            .collect();
        let many = |subj: &str, rel: Rel| by.get(&(subj, rel)).cloned().unwrap_or_default();
        let mut prims = Primitives {
            job_of: Vec::new(),
            hobbies_of: Vec::new(),
            spouse: Vec::new(),
            parents: Vec::new(),
            persons: persons.clone(),
            companies,
            jobs,
            hobbies,
        };
        for p in &persons {
            prims.job_of.push(idx(&job_names, &one(p, Rel::Job)?)?);
            prims.hobbies_of.push(
                many(p, Rel::Hobbies)
                    .into_iter()
                    .map(|h| idx(&hobby_names, h))
                    .collect::<Result<_, _>>()?,
            );
            prims.spouse.push(match many(p, Rel::Spouse).first() {
                Some(s) => Some(idx(&persons, s)?),
                None => None,
            });
            prims.parents.push(
                many(p, Rel::Parents)
                    .into_iter()
                    .map(|x| idx(&persons, x))
                    .collect::<Result<_, _>>()?,
            );
        }
        let state = Self::from_primitives(snap.seed, prims);
        state.validate().map_err(WorldError::Snapshot)?;
        Ok(state)
    }
}

/// Persons 0..4 form the older generation, 4..10 their children. Some
/// couples marry within each generation; siblings never marry.
fn init_kinship(p: &mut Primitives, rng: &mut ChaCha8Rng) {
    let n = p.n_persons();
    let split = 4.min(n);
    for (a, b) in [(0, 1), (2, 3)] {
        if b < split && rng.gen_bool(0.8) {
            p.spouse[a] = Some(b);
            p.spouse[b] = Some(a);
        }
    }
    for c in split..n {
        let a = rng.gen_range(0..split);
        p.parents[c].insert(a);
        if let Some(s) = p.spouse[a] {
            if rng.gen_bool(0.7) {
                p.parents[c].insert(s);
            }
        }
    }
    let mut young: Vec<usize> = (split..n).collect();
    young.shuffle(rng);
    let mut marriages = 0;
    for i in 0..young.len() {
        for j in i + 1..young.len() {
            let (a, b) = (young[i], young[j]);
            if marriages >= 2 || p.spouse[a].is_some() || p.spouse[b].is_some() {
                continue;
            }
            if p.parents[a].is_disjoint(&p.parents[b]) && rng.gen_bool(0.5) {
                p.spouse[a] = Some(b);
                p.spouse[b] = Some(a);
                marriages += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shape() {
        for seed in 0..20 {
            let w = WorldState::init(seed);
            let e = w.entities();
            assert_eq!(e.iter().filter(|e| e.kind == EntityKind::Person).count(), 10);
            assert_eq!(e.iter().filter(|e| e.kind == EntityKind::Company).count(), 5);
            w.validate().unwrap();
        }
        assert_eq!(WorldState::init(7), WorldState::init(7));
    }

    #[test]
    fn coworkers_match_roster_at_init() {
        let w = WorldState::init(3);
        let p = w.primitives();
        for a in 0..p.n_persons() {
            // Roster recomputed directly from the employment map.
            let mine = p.jobs[p.job_of[a]].company;
            let expected: BTreeSet<String> = (0..p.n_persons())
                .filter(|&b| b != a && p.jobs[p.job_of[b]].company == mine)
                .map(|b| p.persons[b].clone())
                .collect();
            assert_eq!(w.objects(&p.persons[a], Rel::Coworkers), expected);
        }
    }

    #[test]
    fn names_unique_across_kinds() {
        let w = WorldState::init(11);
        let names: Vec<String> = w.entities().into_iter().map(|e| e.name.to_lowercase()).collect();
        let set: BTreeSet<&String> = names.iter().collect();
        assert_eq!(set.len(), names.len());
    }

    #[test]
    fn snapshot_roundtrip() {
        let w = WorldState::init(5);
        let back = WorldState::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        assert!(!w.to_json().contains("coworkers"));
    }
}
