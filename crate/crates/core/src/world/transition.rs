use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Key, Primitives, Rel, Triple, WorldError, WorldState, SALARIES_K, WORK_HOURS};

/// A single primitive change. Indices refer to the state's entity lists.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transition {
    JobChange { person: usize, from: usize, to: usize },
    SpouseChange { person: usize, from: Option<usize>, to: usize },
    Adoption { person: usize, child: usize },
    NewHobby { person: usize, hobby: usize },
    SalaryChange { job: usize, from: u32, to: u32 },
    WorkHoursChange { job: usize, from: usize, to: usize },
}

/// Triples removed and added between two states.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDiff {
    pub removed: BTreeSet<Triple>,
    pub added: BTreeSet<Triple>,
}

impl RelationDiff {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty() && self.added.is_empty()
    }

    /// `(subject, relation)` pairs touched by the diff.
    pub fn keys(&self) -> BTreeSet<(String, Rel)> {
        self.removed
            .iter()
            .chain(&self.added)
            .map(|t| (t.subj.clone(), t.rel))
            .collect()
    }
}

pub fn relation_diff(before: &WorldState, after: &WorldState) -> RelationDiff {
    RelationDiff {
        removed: before.relations.difference(&after.relations).cloned().collect(),
        added: after.relations.difference(&before.relations).cloned().collect(),
    }
}

const KINSHIP: [Rel; 8] = [
    Rel::Spouse,
    Rel::Parents,
    Rel::Children,
    Rel::Siblings,
    Rel::ParentsInLaw,
    Rel::ChildrenInLaw,
    Rel::StepParents,
    Rel::StepChildren,
];

const WORK: [Rel; 10] = [
    Rel::Job,
    Rel::Company,
    Rel::Coworkers,
    Rel::WorkLocation,
    Rel::Boss,
    Rel::Salary,
    Rel::Industry,
    Rel::IsEmployedFullTime,
    Rel::WorkHours,
    Rel::Workplace,
];

impl Primitives {
    /// Persons within one kinship hop of `seeds`: the seeds, their spouses,
    /// parents and children.
    fn kin_neighbourhood(&self, seeds: &[usize]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &s in seeds {
            out.insert(s);
            out.extend(self.spouse[s]);
            out.extend(self.parents[s].iter().copied());
            out.extend(self.children(s));
        }
        out
    }
}

impl Transition {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Transition::JobChange { .. } => "job_change",
            Transition::SpouseChange { .. } => "spouse_change",
            Transition::Adoption { .. } => "adoption",
            Transition::NewHobby { .. } => "new_hobby",
            Transition::SalaryChange { .. } => "salary_change",
            Transition::WorkHoursChange { .. } => "work_hours_change",
        }
    }

    fn is_legal(&self, p: &Primitives) -> bool {
        let n = p.n_persons();
        match *self {
            Transition::JobChange { person, from, to } => {
                person < n && to < p.jobs.len() && p.job_of[person] == from && from != to
            }
            Transition::SpouseChange { person, from, to } => {
                person < n && to < n && p.spouse[person] == from && legal_spouse(p, person, to)
            }
            Transition::Adoption { person, child } => person < n && child < n && legal_adoption(p, person, child),
            Transition::NewHobby { person, hobby } => {
                person < n && hobby < p.hobbies.len() && !p.hobbies_of[person].contains(&hobby)
            }
            Transition::SalaryChange { job, from, to } => {
                job < p.jobs.len() && p.jobs[job].salary_k == from && from != to && SALARIES_K.contains(&to)
            }
            Transition::WorkHoursChange { job, from, to } => {
                job < p.jobs.len() && p.jobs[job].hours == from && from != to && to < WORK_HOURS.len()
            }
        }
    }

    /// Keys whose triples may change when `self` is applied to `p`, taken
    /// over both the old and the new primitives.
    fn affected_keys(&self, old: &Primitives, new: &Primitives) -> BTreeSet<Key> {
        let mut keys = BTreeSet::new();
        let mut persons = |set: &BTreeSet<usize>, rels: &[Rel]| {
            for &x in set {
                for &r in rels {
                    keys.insert(Key::Person(x, r));
                }
            }
        };
        match *self {
            Transition::JobChange { person, from, to } => {
                persons(&BTreeSet::from([person]), &WORK);
                let (c1, c2) = (old.jobs[from].company, new.jobs[to].company);
                let mut staff = old.employees(c1);
                staff.extend(new.employees(c2));
                persons(&staff, &[Rel::Coworkers]);
                keys.insert(Key::Company(c1, Rel::Employees));
                keys.insert(Key::Company(c2, Rel::Employees));
            }
            Transition::SpouseChange { person, from, to } => {
                let mut seeds = vec![person, to];
                seeds.extend(from);
                seeds.extend(old.spouse[to]);
                let mut hood = old.kin_neighbourhood(&seeds);
                hood.extend(new.kin_neighbourhood(&seeds));
                persons(&hood, &KINSHIP);
            }
            Transition::Adoption { person, child } => {
                let seeds = [person, child];
                let mut hood = old.kin_neighbourhood(&seeds);
                hood.extend(new.kin_neighbourhood(&seeds));
                for x in hood.clone() {
                    hood.extend(new.siblings(x));
                }
                persons(&hood, &KINSHIP);
            }
            Transition::NewHobby { person, .. } => {
                persons(&BTreeSet::from([person]), &[Rel::Hobbies, Rel::Equipment]);
            }
            Transition::SalaryChange { job, .. } => {
                persons(&old.holders(job), &[Rel::Salary]);
                keys.insert(Key::Job(job, Rel::JobSalary));
            }
            Transition::WorkHoursChange { job, .. } => {
                persons(&old.holders(job), &[Rel::WorkHours]);
                keys.insert(Key::Job(job, Rel::JobWorkHours));
            }
        }
        keys
    }

    fn apply_primitives(&self, p: &mut Primitives) {
        match *self {
            Transition::JobChange { person, to, .. } => p.job_of[person] = to,
            Transition::SpouseChange { person, from, to } => {
                if let Some(old) = from {
                    p.spouse[old] = None;
                }
                if let Some(other) = p.spouse[to] {
                    p.spouse[other] = None;
                }
                p.spouse[person] = Some(to);
                p.spouse[to] = Some(person);
            }
            Transition::Adoption { person, child } => {
                p.parents[child].insert(person);
            }
            Transition::NewHobby { person, hobby } => {
                p.hobbies_of[person].insert(hobby);
            }
            Transition::SalaryChange { job, to, .. } => p.jobs[job].salary_k = to,
            Transition::WorkHoursChange { job, to, .. } => p.jobs[job].hours = to,
        }
    }
}

fn legal_spouse(p: &Primitives, person: usize, to: usize) -> bool {
    to != person
        && p.spouse[person] != Some(to)
        && !p.parents[person].contains(&to)
        && !p.children(person).contains(&to)
        && !p.siblings(person).contains(&to)
}

fn legal_adoption(p: &Primitives, person: usize, child: usize) -> bool {
    child != person
        && !p.parents[child].contains(&person)
        && p.spouse[person] != Some(child)
        && !p.siblings(person).contains(&child)
        && p.parents[child].len() < 2
        && !p.is_ancestor_or_self(child, person)
}

impl WorldState {
    /// Every legal transition in canonical order: by kind, then by
    /// parameters.
    pub fn enumerate_transitions(&self) -> Vec<Transition> {
        let p = &self.prims;
        let n = p.n_persons();
        let mut out = Vec::new();
        for person in 0..n {
            for to in 0..p.jobs.len() {
                if to != p.job_of[person] {
                    out.push(Transition::JobChange {
                        person,
                        from: p.job_of[person],
                        to,
                    });
                }
            }
        }
        for person in 0..n {
            for to in 0..n {
                if legal_spouse(p, person, to) {
                    out.push(Transition::SpouseChange {
                        person,
                        from: p.spouse[person],
                        to,
                    });
                }
            }
        }
        for person in 0..n {
            for child in 0..n {
                if legal_adoption(p, person, child) {
                    out.push(Transition::Adoption { person, child });
                }
            }
        }
        for person in 0..n {
            for hobby in 0..p.hobbies.len() {
                if !p.hobbies_of[person].contains(&hobby) {
                    out.push(Transition::NewHobby { person, hobby });
                }
            }
        }
        for (job, info) in p.jobs.iter().enumerate() {
            for &to in SALARIES_K.iter().filter(|&&s| s != info.salary_k) {
                out.push(Transition::SalaryChange {
                    job,
                    from: info.salary_k,
                    to,
                });
            }
        }
        for (job, info) in p.jobs.iter().enumerate() {
            for to in (0..WORK_HOURS.len()).filter(|&h| h != info.hours) {
                out.push(Transition::WorkHoursChange {
                    job,
                    from: info.hours,
                    to,
                });
            }
        }
        assert!(!out.is_empty(), "salary changes are always available");
        out
    }

    /// Picks index `floor(u * |T|)` of the canonical legal list.
    pub fn sample_transition<R: Rng>(&self, rng: &mut R) -> Transition {
        let all = self.enumerate_transitions();
        let u: f64 = rng.gen();
        let i = ((u * all.len() as f64) as usize).min(all.len() - 1);
        all[i].clone()
    }

    /// Applies `t` and propagates it to every derived relation. Only the
    /// affected `(subject, relation)` slots are recomputed.
    pub fn apply_transition(&self, t: &Transition) -> Result<(WorldState, RelationDiff), WorldError> {
        if !t.is_legal(&self.prims) {
            return Err(WorldError::IllegalTransition(t.clone()));
        }
        let mut prims = self.prims.clone();
        t.apply_primitives(&mut prims);
        let mut diff = RelationDiff::default();
        let mut relations = self.relations.clone();
        for key in t.affected_keys(&self.prims, &prims) {
            let before = self.prims.key_triples(&key);
            let after = prims.key_triples(&key);
            for gone in before.difference(&after) {
                relations.remove(gone);
                diff.removed.insert(gone.clone());
            }
            for new in after.difference(&before) {
                relations.insert(new.clone());
                diff.added.insert(new.clone());
            }
        }
        Ok((
            WorldState {
                seed: self.seed,
                prims,
                relations,
            },
            diff,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn job_change_lists_every_other_job() {
        let w = WorldState::init(1);
        let jobs: Vec<usize> = w
            .enumerate_transitions()
            .into_iter()
            .filter_map(|t| match t {
                Transition::JobChange { person: 0, to, .. } => Some(to),
                _ => None,
            })
            .collect();
        let current = w.primitives().job_of[0];
        let expected: Vec<usize> = (0..15).filter(|&j| j != current).collect();
        assert_eq!(jobs, expected);
    }

    #[test]
    fn new_hobby_excludes_current() {
        let w = WorldState::init(2);
        for t in w.enumerate_transitions() {
            if let Transition::NewHobby { person, hobby } = t {
                assert!(!w.primitives().hobbies_of[person].contains(&hobby));
            }
        }
    }

    #[test]
    fn job_change_moves_coworkers() {
        let w = WorldState::init(4);
        let p = w.primitives();
        let bob = 0;
        let old_company = p.company_of(bob);
        let to = (0..p.jobs.len()).find(|&j| p.jobs[j].company != old_company).unwrap();
        let t = Transition::JobChange {
            person: bob,
            from: p.job_of[bob],
            to,
        };
        let (next, diff) = w.apply_transition(&t).unwrap();
        let q = next.primitives();
        let name = &p.persons[bob];
        let new_company = &q.companies[q.jobs[to].company].name;
        assert!(next.objects(new_company, Rel::Employees).contains(name));
        let mut roster = next.objects(new_company, Rel::Employees);
        roster.remove(name);
        assert_eq!(next.objects(name, Rel::Coworkers), roster);
        for other in &roster {
            assert!(next.objects(other, Rel::Coworkers).contains(name));
        }
        for former in w.objects(name, Rel::Coworkers) {
            assert!(!next.objects(&former, Rel::Coworkers).contains(name));
        }
        assert_eq!(diff, relation_diff(&w, &next));
    }

    #[test]
    fn salary_change_touches_only_salaries() {
        let w = WorldState::init(9);
        let job = w.primitives().job_of[0];
        let from = w.primitives().jobs[job].salary_k;
        let to = SALARIES_K.iter().copied().find(|&s| s != from).unwrap();
        let (next, diff) = w.apply_transition(&Transition::SalaryChange { job, from, to }).unwrap();
        for t in diff.removed.iter().chain(&diff.added) {
            assert!(matches!(t.rel, Rel::Salary | Rel::JobSalary));
        }
        let holders = w.primitives().holders(job);
        let touched: BTreeSet<String> = diff
            .added
            .iter()
            .filter(|t| t.rel == Rel::Salary)
            .map(|t| t.subj.clone())
            .collect();
        let expected: BTreeSet<String> = holders.iter().map(|&h| w.primitives().persons[h].clone()).collect();
        assert_eq!(touched, expected);
        assert_eq!(diff, relation_diff(&w, &next));
    }

    #[test]
    fn illegal_transition_rejected() {
        let w = WorldState::init(0);
        let job = w.primitives().job_of[0];
        let t = Transition::JobChange { person: 0, from: job, to: job };
        assert!(matches!(w.apply_transition(&t), Err(WorldError::IllegalTransition(_))));
    }

    #[test]
    fn diff_basics() {
        let w = WorldState::init(0);
        assert!(relation_diff(&w, &w).is_empty());
        let t = w.enumerate_transitions()[0].clone();
        let (next, _) = w.apply_transition(&t).unwrap();
        let fwd = relation_diff(&w, &next);
        let back = relation_diff(&next, &w);
        assert_eq!(fwd.removed, back.added);
        assert_eq!(fwd.added, back.removed);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Incremental propagation agrees with full recomputation, and the
        /// state stays valid, along random walks.
        #[test]
        fn random_walks_propagate_completely(seed in 0u64..10_000, steps in 50usize..70) {
            let mut w = WorldState::init(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..steps {
                let t = w.sample_transition(&mut rng);
                let (next, changed) = w.apply_transition(&t).unwrap();
                prop_assert_eq!(next.relations(), &next.primitives().all_relations());
                prop_assert_eq!(&changed, &relation_diff(&w, &next));
                prop_assert!(next.validate().is_ok(), "{:?}", next.validate());
                w = next;
            }
        }

        /// Every kind of transition, including rare ones, propagates fully.
        #[test]
        fn every_legal_transition_propagates(seed in 0u64..500) {
            let w = WorldState::init(seed);
            for t in w.enumerate_transitions() {
                let (next, changed) = w.apply_transition(&t).unwrap();
                prop_assert_eq!(&changed, &relation_diff(&w, &next), "{:?}", t);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let w = WorldState::init(3);
        let a = w.sample_transition(&mut ChaCha8Rng::seed_from_u64(1));
        let b = w.sample_transition(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let u: f64 = ChaCha8Rng::seed_from_u64(1).gen();
        let all = w.enumerate_transitions();
        assert_eq!(a, all[(u * all.len() as f64) as usize]);
    }
}
