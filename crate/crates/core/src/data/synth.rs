//! Template corpora with known ground truth: an in-car assistant corpus over
//! a small points-of-interest KB, and a profile-conditioned restaurant
//! corpus whose answer style depends on the speaker's age and gender.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kb::{KbEntry, KnowledgeBase};
use super::stages::RawTurn;
use super::style::{AGES, GENDERS};
use super::turn::{DialogueTurn, Stage};
use crate::error::{Error, Result};

/// Point-of-interest categories and their name pools. Name tokens never
/// occur in another slot's values.
pub const POI_TYPES: [(&str, [&str; 4]); 6] = [
    ("parking garage", ["webster garage", "dish parking", "civic center garage", "hoover garage"]),
    ("gas station", ["valero", "chevron", "shell", "arco"]),
    ("coffee or tea place", ["peets coffee", "coupa", "starbucks", "teavana"]),
    ("grocery store", ["safeway", "whole foods", "trader joes", "sigona farmers market"]),
    ("rest stop", ["hillside plaza", "oak grove", "canyon view", "pine lodge"]),
    ("chinese restaurant", ["panda express", "tai pan", "jing jing", "mandarin roots"]),
];
pub const STREETS: [&str; 8] = ["archuleta", "el camino", "alma", "cowper", "bryant", "ramona", "hamilton", "lytton"];
pub const STREET_KINDS: [&str; 3] = ["ave", "st", "rd"];
pub const TRAFFIC: [&str; 4] = ["heavy traffic", "moderate traffic", "no traffic", "car collision ahead"];
pub const SUPERLATIVE_WORDS: [&str; 3] = ["fastest", "nearest", "closest"];

/// `(question, answer)` templates asking for the extremal row of a category.
/// `{sup}` is a superlative keyword, `{poitype}` the category.
pub const SUPERLATIVE_TEMPLATES: [(&str, &str); 3] = [
    ("can you find me the {sup} route to a {poitype}", "{poi} is {poidistance} away"),
    ("where is the {sup} {poitype}", "there is a {poitype} at {poiaddress} , {poidistance} away"),
    ("take me to the {sup} {poitype}", "i am routing you to {poi} at {poiaddress}"),
];

/// Templates about one named place.
pub const NAME_TEMPLATES: [(&str, &str); 4] = [
    ("give me directions to {poi}", "{poi} is at {poiaddress} , setting navigation now"),
    ("how far away is {poi}", "{poi} is {poidistance} away with {poitrafficinfo}"),
    ("what is the address of {poi}", "the address of {poi} is {poiaddress}"),
    ("what is the traffic like on the way to {poi}", "there is {poitrafficinfo} on the way to {poi}"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct CarSynthConfig {
    pub scenarios: usize,
    /// Rows of each category per scenario, at distinct distances.
    pub entries_per_type: usize,
    /// Prefixes prepended to every question; `""` keeps the bare form.
    pub openers: Vec<String>,
    pub seed: u64,
}

impl Default for CarSynthConfig {
    fn default() -> Self {
        Self {
            scenarios: 4,
            entries_per_type: 2,
            openers: vec![String::new()],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CarCorpus {
    pub kb: KnowledgeBase,
    pub raw: Vec<RawTurn>,
}

pub fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in values {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn with_opener(opener: &str, q: &str) -> String {
    if opener.is_empty() {
        q.to_string()
    } else {
        format!("{opener} {q}")
    }
}

/// Scenario KBs plus every template instantiation over them.
///
/// Scenario 0 places `webster garage` as the nearest parking garage at
/// `4 miles`, matching the worked pipeline example.
pub fn generate_car_corpus(config: &CarSynthConfig) -> Result<CarCorpus> {
    if config.scenarios == 0 || !(1..=4).contains(&config.entries_per_type) || config.openers.is_empty() {
        return Err(Error::Config(
            "synthetic corpus needs scenarios ≥ 1, 1..=4 entries per type and at least one opener".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut kb = KnowledgeBase::new();
    let mut raw = Vec::new();
    let mut used_addresses = std::collections::BTreeSet::new();
    for s in 0..config.scenarios {
        let scenario = format!("scenario-{s}");
        let mut entries: Vec<KbEntry> = Vec::new();
        for (t, (poitype, names)) in POI_TYPES.iter().enumerate() {
            let mut names: Vec<&str> = names.to_vec();
            names.shuffle(&mut rng);
            let mut distances: Vec<u32> = (1..=9).collect();
            distances.shuffle(&mut rng);
            let picked = &mut distances[..config.entries_per_type];
            if s == 0 && t == 0 {
                let w = names.iter().position(|n| *n == "webster garage").expect("pool has webster garage");
                names.swap(0, w);
                let mut rest: Vec<u32> = (5..=9).collect();
                rest.shuffle(&mut rng);
                picked[0] = 4;
                for (p, r) in picked[1..].iter_mut().zip(rest) {
                    *p = r;
                }
            }
            let picked = picked.to_vec();
            for (k, &d) in picked.iter().enumerate() {
                let address = loop {
                    let a = format!(
                        "{} {} {}",
                        rng.gen_range(100..1000),
                        STREETS.choose(&mut rng).expect("non-empty"),
                        STREET_KINDS.choose(&mut rng).expect("non-empty")
                    );
                    if used_addresses.insert(a.clone()) {
                        break a;
                    }
                };
                let traffic = TRAFFIC.choose(&mut rng).expect("non-empty");
                entries.push(KbEntry::from([
                    ("poitype".to_string(), poitype.to_string()),
                    ("poi".to_string(), names[k].to_string()),
                    ("poidistance".to_string(), format!("{d} miles")),
                    ("poiaddress".to_string(), address),
                    ("poitrafficinfo".to_string(), traffic.to_string()),
                ]));
            }
        }
        for opener in &config.openers {
            for (qt, at) in SUPERLATIVE_TEMPLATES {
                for sup in SUPERLATIVE_WORDS {
                    for (poitype, _) in POI_TYPES {
                        let nearest = entries
                            .iter()
                            .filter(|e| e["poitype"] == poitype)
                            .min_by_key(|e| e["poidistance"].split(' ').next().and_then(|n| n.parse::<u32>().ok()))
                            .expect("every category present");
                        raw.push(RawTurn {
                            scenario: scenario.clone(),
                            question: with_opener(opener, &fill_template(qt, &[("sup", sup), ("poitype", poitype)])),
                            answer: fill_template(at, &entry_values(nearest)),
                        });
                    }
                }
            }
            for (qt, at) in NAME_TEMPLATES {
                for e in &entries {
                    raw.push(RawTurn {
                        scenario: scenario.clone(),
                        question: with_opener(opener, &fill_template(qt, &[("poi", &e["poi"])])),
                        answer: fill_template(at, &entry_values(e)),
                    });
                }
            }
        }
        kb.insert(scenario, entries);
    }
    Ok(CarCorpus { kb, raw })
}

fn entry_values(e: &KbEntry) -> Vec<(&str, &str)> {
    e.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
}

/// Restaurant-booking intents: question templates with one filler slot, and
/// one answer per age style. `{g}` is the honorific of the speaker's gender.
const STYLE_INTENTS: [(&[&str], &[&str], [&str; 3]); 5] = [
    (
        &["{x} please", "in {x}", "i want to eat in {x}"],
        &[
            "bombay", "paris", "madrid", "london", "rome", "tokyo", "seoul", "beijing", "lisbon", "berlin", "vienna",
            "oslo", "dublin", "athens",
        ],
        [
            "how many are you",
            "ok {g} how many people will be joining you",
            "would you mind telling me how many guests shall be at your table {g}",
        ],
    ),
    (
        &["i love {x} food", "{x} cuisine please"],
        &[
            "italian", "french", "indian", "spanish", "british", "thai", "korean", "greek", "mexican", "turkish",
        ],
        [
            "cool any price range in mind",
            "sure {g} which price range are you looking for",
            "may i kindly ask which price range you would prefer {g}",
        ],
    ),
    (
        &["we will be {x}", "for {x} people please"],
        &["two", "three", "four", "five", "six", "seven", "eight"],
        [
            "got it what cuisine",
            "thanks {g} what type of cuisine would you like",
            "thank you {g} might i ask what kind of cuisine you would enjoy",
        ],
    ),
    (
        &["in a {x} price range please", "something {x} please"],
        &["cheap", "moderate", "expensive"],
        [
            "ok looking for options",
            "ok {g} i'm looking for options for you",
            "very well {g} please allow me a moment to find suitable options",
        ],
    ),
    (
        &["{x}"],
        &[
            "can you book a table",
            "may i have a table",
            "i'd like to book a table",
            "book me a table",
            "i need a table",
        ],
        [
            "sure where",
            "certainly {g} in which city",
            "thank you {g} i shall start the reservation now , which city would you like",
        ],
    ),
];

fn honorific(gender: &str) -> &'static str {
    if gender == "female" {
        "madam"
    } else {
        "sir"
    }
}

/// Every question of [`STYLE_INTENTS`] crossed with every profile.
pub fn all_style_turns() -> Vec<DialogueTurn> {
    let mut out = Vec::new();
    for (templates, fillers, styles) in STYLE_INTENTS {
        for t in templates {
            for x in fillers {
                let question = t.replace("{x}", x);
                for g in GENDERS {
                    for (a, age) in AGES.iter().enumerate() {
                        let answer = styles[a].replace("{g}", honorific(g));
                        out.push(DialogueTurn::new(
                            question.clone(),
                            vec![g.to_string(), age.to_string()],
                            answer,
                            Stage::Style,
                        ));
                    }
                }
            }
        }
    }
    out
}

/// `n` distinct profile-conditioned turns drawn without replacement.
pub fn generate_style_corpus(n: usize, seed: u64) -> Result<Vec<DialogueTurn>> {
    let mut all = all_style_turns();
    if n > all.len() {
        return Err(Error::Config(format!("style corpus has only {} distinct turns", all.len())));
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.truncate(n);
    Ok(all)
}

/// Tab-separated form read by [`load_style_corpus`](super::load_style_corpus).
pub fn style_corpus_tsv(turns: &[DialogueTurn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.input, t.memory.join(" "), t.target))
        .collect()
}
