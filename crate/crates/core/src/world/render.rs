//! Natural-language renderings of triples and transitions.

use super::{salary_label, Rel, Transition, Triple, WorldState, WORK_HOURS};

/// One declarative sentence per triple, without trailing punctuation.
pub fn fact_sentence(t: &Triple) -> String {
    let (s, o) = (&t.subj, &t.obj);
    match t.rel {
        Rel::Spouse => format!("{s}'s spouse is {o}"),
        Rel::Parents => format!("{s}'s parents include {o}"),
        Rel::Children => format!("{s}'s children include {o}"),
        Rel::Job => format!("{s}'s job is {o}"),
        Rel::Company => format!("{s} works at company {o}"),
        Rel::Hobbies => format!("{s}'s hobbies include {o}"),
        Rel::Coworkers => format!("{s}'s coworkers include {o}"),
        Rel::WorkLocation => format!("{s} works in the city {o}"),
        Rel::Boss => format!("The head of {s}'s workplace is {o}"),
        Rel::Salary => format!("{s}'s salary is {o}"),
        Rel::Industry => format!("{s} works in the industry {o}"),
        Rel::IsEmployedFullTime if o == "full-time" => format!("{s} works full-time rather than part-time"),
        Rel::IsEmployedFullTime => format!("{s} works part-time rather than full-time"),
        Rel::WorkHours => format!("{s}'s work hours are {o}"),
        Rel::Workplace => format!("{s} works out of the workplace type {o}"),
        Rel::Siblings => format!("{s}'s siblings include {o}"),
        Rel::ParentsInLaw => format!("{s}'s parents-in-law include {o}"),
        Rel::ChildrenInLaw => format!("{s}'s children-in-law include {o}"),
        Rel::StepParents => format!("{s}'s step-parents include {o}"),
        Rel::StepChildren => format!("{s}'s step-children include {o}"),
        Rel::Equipment => format!("{s} needs {o} as equipment for their hobbies"),
        Rel::Employees => format!("{s} employs {o}"),
        Rel::Jobs => format!("{s} offers the job {o}"),
        Rel::Head => format!("The head of {s} is {o}"),
        Rel::Location => format!("{s} is located in {o}"),
        Rel::CompanyIndustry => format!("{s} is in the {o} industry"),
        Rel::WorkplaceType => format!("{s}'s workplace type is {o}"),
        Rel::JobCompany => format!("The {s} job is at {o}"),
        Rel::JobSalary => format!("The {s} job pays {o}"),
        Rel::JobFullTime => format!("The {s} job is {o}"),
        Rel::JobWorkHours => format!("The {s} job has work hours {o}"),
        Rel::HobbyEquipment => format!("The hobby {s} requires {o}"),
    }
}

pub const NEGATION_PREFIX: &str = "It is no longer true that ";

pub fn negated_sentence(t: &Triple) -> String {
    format!("{NEGATION_PREFIX}{}", fact_sentence(t))
}

/// Describes the primitive change only, never its downstream effects.
pub fn transition_sentence(state: &WorldState, t: &Transition) -> String {
    let p = state.primitives();
    let name = |i: usize| p.persons[i].as_str();
    match *t {
        Transition::JobChange { person, from, to } => format!(
            "{} switched jobs from {} to {}, so {}'s job is {} now",
            name(person),
            p.jobs[from].title,
            p.jobs[to].title,
            name(person),
            p.jobs[to].title
        ),
        Transition::SpouseChange { person, from: Some(old), to } => format!(
            "{} split from {} and married {}, so {}'s spouse is {} now",
            name(person),
            name(old),
            name(to),
            name(person),
            name(to)
        ),
        Transition::SpouseChange { person, from: None, to } => format!(
            "{} married {}, so {}'s spouse is {} now",
            name(person),
            name(to),
            name(person),
            name(to)
        ),
        Transition::Adoption { person, child } => format!(
            "{} adopted {}, so {}'s parents include {} now",
            name(person),
            name(child),
            name(child),
            name(person)
        ),
        Transition::NewHobby { person, hobby } => format!(
            "{} took up {}, so {}'s hobbies include {} now",
            name(person),
            p.hobbies[hobby].name,
            name(person),
            p.hobbies[hobby].name
        ),
        Transition::SalaryChange { job, to, .. } => format!(
            "The {} job now pays {}",
            p.jobs[job].title,
            salary_label(to)
        ),
        Transition::WorkHoursChange { job, to, .. } => format!(
            "The {} job now has work hours {}",
            p.jobs[job].title,
            WORK_HOURS[to]
        ),
    }
}
