//! Synthetic knowledge graphs for tests, demos and the benchmark.
//!
//! [`CarCatalog`] is a fixed automotive KG with 466 entities of 7 types and
//! 3442 facts over 27 predicates. [`random_kg`] draws small randomized KGs
//! covering every value shape and relation cardinality the induction
//! handles.

pub mod benchmark;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::write_benchmark;
use crate::llm::ProviderConfig;
use crate::profile::ProfileSet;
use crate::rdf::{to_ntriples, Term, Triple, RDF_TYPE};
use crate::retrieval::Document;

pub const SCHEMA_NS: &str = "http://example.org/schema/";
pub const ENTITY_NS: &str = "http://example.org/kg/";

const SERIES: [&str; 10] = ["1-series", "2-series", "3-series", "4-series", "5-series", "x1", "x3", "x5", "i4", "ix"];
const SERIES_NAMES: [&str; 10] = ["1 Series", "2 Series", "3 Series", "4 Series", "5 Series", "X1", "X3", "X5", "i4", "iX"];
const SERIES_BODY: [usize; 10] = [1, 2, 0, 3, 0, 4, 4, 4, 5, 4];
const SERIES_HEIGHT: [i64; 10] = [1434, 1418, 1440, 1384, 1515, 1642, 1660, 1745, 1448, 1696];
const SERIES_ACCEL: [f64; 10] = [8.2, 7.6, 7.4, 6.9, 6.6, 9.0, 8.3, 6.1, 5.7, 6.4];
const TRIMS: [&str; 4] = ["sport", "luxury", "m-sport", "base"];
const DRIVE_TYPES: [&str; 3] = ["rear-wheel drive", "all-wheel drive", "front-wheel drive"];
const BODY_STYLES: [(&str, &str, i64); 6] = [
    ("sedan", "Sedan", 4),
    ("hatchback", "Hatchback", 5),
    ("coupe", "Coupe", 2),
    ("convertible", "Convertible", 2),
    ("sports-activity-vehicle", "Sports Activity Vehicle", 5),
    ("gran-coupe", "Gran Coupe", 4),
];
const TRANSMISSIONS: [(&str, &str, i64); 4] = [
    ("manual-6", "6-speed manual", 6),
    ("dual-clutch-7", "7-speed dual-clutch", 7),
    ("automatic-8", "8-speed automatic", 8),
    ("direct-drive-1", "single-speed direct drive", 1),
];
const EQUIPMENT_KINDS: [&str; 12] = [
    "sunroof",
    "heated-seats",
    "head-up-display",
    "parking-assistant",
    "harman-kardon-sound",
    "adaptive-led-headlights",
    "driving-assistant",
    "comfort-access",
    "wireless-charging",
    "ambient-lighting",
    "towing-hitch",
    "sport-seats",
];
const CARS_PER_SERIES: usize = 24;
const ENGINES_PER_SERIES: usize = 6;
const EQUIPMENT_COUNT: usize = 120;
const EQUIPPED_CARS: usize = 60;
const CO2_CARS: usize = 98;

#[derive(Debug, Clone, PartialEq)]
pub struct CarRecord {
    pub id: String,
    pub model_name: String,
    pub series: usize,
    pub price_eur: i64,
    pub height_mm: i64,
    pub acceleration_s: f64,
    pub drive_type: &'static str,
    pub fuel_type: &'static str,
    pub engine: usize,
    pub charging: Option<usize>,
    pub wltp_co2_g_km: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineRecord {
    pub id: String,
    pub power_kw: i64,
    pub displacement_cm3: i64,
    pub torque_nm: i64,
    pub transmission: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquipmentRecord {
    pub id: String,
    pub name: String,
    pub price_eur: i64,
    pub car: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargingRecord {
    pub id: String,
    pub battery_kwh: f64,
    pub range_km: i64,
}

/// The automotive fixture as plain records; [`CarCatalog::triples`] turns
/// it into RDF.
#[derive(Debug, Clone, PartialEq)]
pub struct CarCatalog {
    pub cars: Vec<CarRecord>,
    pub engines: Vec<EngineRecord>,
    pub equipment: Vec<EquipmentRecord>,
    pub charging: Vec<ChargingRecord>,
}

fn title_words(slug: &str) -> String {
    slug.split('-')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl CarCatalog {
    pub fn new() -> Self {
        let mut cars = Vec::new();
        let mut charging = Vec::new();
        let mut non_electric = 0;
        for s in 0..SERIES.len() {
            for j in 0..CARS_PER_SERIES {
                let trim = TRIMS[j % TRIMS.len()];
                let id = format!("{}-{trim}-{:02}", SERIES[s], j + 1);
                let electric = s >= 8 && j < 13;
                let fuel_type = if electric {
                    "electric"
                } else if j % 5 == 0 {
                    "diesel"
                } else {
                    "gasoline"
                };
                let charging_ref = electric.then(|| {
                    let k = charging.len();
                    charging.push(ChargingRecord {
                        id: format!("{id}-charging"),
                        battery_kwh: round1(59.4 + k as f64 * 1.3),
                        range_km: 410 + (k as i64 * 9) % 180,
                    });
                    k
                });
                let g = cars.len();
                let co2 = if electric {
                    None
                } else {
                    non_electric += 1;
                    (non_electric <= CO2_CARS).then(|| 112 + (g as i64 * 7) % 90)
                };
                cars.push(CarRecord {
                    model_name: format!("BMW {} {} {:02}", SERIES_NAMES[s], title_words(trim), j + 1),
                    id,
                    series: s,
                    price_eur: 28_000 + s as i64 * 4_500 + (j % 4) as i64 * 2_600 + j as i64 * 113,
                    height_mm: SERIES_HEIGHT[s] + (j % 3) as i64 * 5,
                    acceleration_s: round1(SERIES_ACCEL[s] - (j % 4) as f64 * 0.3 + (j % 5) as f64 * 0.1),
                    drive_type: DRIVE_TYPES[(s + j) % 3],
                    fuel_type,
                    engine: s * ENGINES_PER_SERIES + j / 4,
                    charging: charging_ref,
                    wltp_co2_g_km: co2,
                });
            }
        }
        let engines = (0..SERIES.len() * ENGINES_PER_SERIES)
            .map(|e| {
                let s = e / ENGINES_PER_SERIES;
                let power = 85 + (e as i64 * 23) % 240;
                EngineRecord {
                    id: format!("{}-engine-{}", SERIES[s], e % ENGINES_PER_SERIES + 1),
                    power_kw: power,
                    displacement_cm3: if s >= 8 { 0 } else { 1_499 + (e as i64 % 3) * 499 },
                    torque_nm: power * 2 + 40,
                    transmission: if s >= 8 { 3 } else { e % 3 },
                }
            })
            .collect();
        let equipment = (0..EQUIPMENT_COUNT)
            .map(|i| {
                let kind = EQUIPMENT_KINDS[i % EQUIPMENT_KINDS.len()];
                EquipmentRecord {
                    id: format!("{kind}-{:03}", i + 1),
                    name: title_words(kind),
                    price_eur: 300 + (i as i64 * 37) % 1_500,
                    car: i % EQUIPPED_CARS,
                }
            })
            .collect();
        CarCatalog {
            cars,
            engines,
            equipment,
            charging,
        }
    }

    pub fn series_ids() -> &'static [&'static str] {
        &SERIES
    }

    pub fn series_name(index: usize) -> &'static str {
        SERIES_NAMES[index]
    }

    pub fn entity_count(&self) -> usize {
        self.cars.len()
            + self.engines.len()
            + self.equipment.len()
            + SERIES.len()
            + BODY_STYLES.len()
            + TRANSMISSIONS.len()
            + self.charging.len()
    }

    pub fn triples(&self) -> Vec<Triple> {
        let mut out = Vec::new();
        let e = |kind: &str, id: &str| Term::iri(format!("{ENTITY_NS}{kind}/{id}"));
        let mut push = |s: &Term, p: &str, o: Term| {
            let predicate = if p == "a" {
                Term::iri(RDF_TYPE)
            } else {
                Term::iri(format!("{SCHEMA_NS}{p}"))
            };
            out.push(Triple {
                subject: s.clone(),
                predicate,
                object: o,
            });
        };
        let ty = |name: &str| Term::iri(format!("{SCHEMA_NS}{name}"));
        let lit = |s: String| Term::literal(s);

        for (g, car) in self.cars.iter().enumerate() {
            let s = e("car", &car.id);
            push(&s, "a", ty("Car"));
            push(&s, "modelName", lit(car.model_name.clone()));
            push(&s, "price", lit(format!("{} EUR", car.price_eur)));
            push(&s, "height", lit(format!("{} mm", car.height_mm)));
            push(&s, "acceleration", lit(format!("{:.1} s", car.acceleration_s)));
            push(&s, "driveType", lit(car.drive_type.to_string()));
            push(&s, "fuelType", e("fuel-type", car.fuel_type));
            push(&s, "engineSpecification", e("engine", &self.engines[car.engine].id));
            push(&s, "modelSeries", e("series", SERIES[car.series]));
            push(&s, "bodyStyle", e("body-style", BODY_STYLES[SERIES_BODY[car.series]].0));
            for item in self.equipment.iter().filter(|q| q.car == g) {
                push(&s, "equipment", e("equipment", &item.id));
            }
            if let Some(k) = car.charging {
                push(&s, "chargingSpecification", e("charging", &self.charging[k].id));
            }
            if let Some(co2) = car.wltp_co2_g_km {
                push(&s, "wltpCo2", lit(format!("{co2} g/km")));
            }
        }
        for engine in &self.engines {
            let s = e("engine", &engine.id);
            push(&s, "a", ty("EngineSpecification"));
            push(&s, "enginePerformance", lit(format!("{} kW", engine.power_kw)));
            push(&s, "displacement", lit(format!("{} cm3", engine.displacement_cm3)));
            push(&s, "torque", lit(format!("{} Nm", engine.torque_nm)));
            push(&s, "transmission", e("transmission", TRANSMISSIONS[engine.transmission].0));
        }
        for item in &self.equipment {
            let s = e("equipment", &item.id);
            push(&s, "a", ty("Equipment"));
            push(&s, "equipmentName", lit(item.name.clone()));
            push(&s, "equipmentPrice", lit(format!("{} EUR", item.price_eur)));
        }
        for (i, id) in SERIES.iter().enumerate() {
            let s = e("series", id);
            push(&s, "a", ty("ModelSeries"));
            push(&s, "seriesName", lit(SERIES_NAMES[i].to_string()));
            push(&s, "launchYear", lit((2013 + i).to_string()));
        }
        for (id, name, doors) in BODY_STYLES {
            let s = e("body-style", id);
            push(&s, "a", ty("BodyStyle"));
            push(&s, "bodyStyleName", lit(name.to_string()));
            push(&s, "doorCount", lit(doors.to_string()));
        }
        for (id, name, gears) in TRANSMISSIONS {
            let s = e("transmission", id);
            push(&s, "a", ty("Transmission"));
            push(&s, "transmissionName", lit(name.to_string()));
            push(&s, "gearCount", lit(gears.to_string()));
        }
        for c in &self.charging {
            let s = e("charging", &c.id);
            push(&s, "a", ty("ChargingSpecification"));
            push(&s, "batteryCapacity", lit(format!("{:.1} kWh", c.battery_kwh)));
            push(&s, "electricRange", lit(format!("{} km", c.range_km)));
        }
        out
    }
}

impl Default for CarCatalog {
    fn default() -> Self {
        Self::new()
    }
}

/// Casing overrides for the fixture's model names.
pub fn fixture_acronyms() -> Vec<(&'static str, &'static str)> {
    vec![("bmw", "BMW"), ("ix", "iX"), ("i4", "i4"), ("led", "LED")]
}

/// Explanatory texts that the KG does not contain.
pub fn external_documents() -> Vec<Document> {
    let doc = |id: &str, text: &str| Document {
        id: id.into(),
        text: text.into(),
    };
    vec![
        doc(
            "drive-systems",
            "All-wheel drive distributes power to all four wheels. Its main advantage is better traction on wet, snowy or unpaved roads, which also improves stability when accelerating out of corners.\n\n\
             Rear-wheel drive sends power to the rear axle only. Drivers value the balanced steering feel, because the front wheels only steer and do not have to transmit power.\n\n\
             Front-wheel drive is compact and light, which frees up interior space and usually lowers fuel consumption.",
        ),
        doc(
            "electric-driving",
            "Electric cars are charged from a wall box at home or at public fast chargers. A larger battery capacity gives a longer electric range but also adds weight.\n\n\
             Regenerative braking recovers energy when slowing down, so electric cars use very little energy in stop-and-go city traffic.\n\n\
             The electric range stated by manufacturers follows the WLTP test cycle; cold weather and motorway speeds reduce the real range.",
        ),
        doc(
            "ownership",
            "A head-up display projects speed and navigation hints into the driver's line of sight, so the eyes can stay on the road.\n\n\
             The WLTP CO2 value describes emissions in grams per kilometre measured in a standardised laboratory cycle; lower values mean lower vehicle tax in many countries.\n\n\
             A sports activity vehicle combines a raised seating position and a large luggage compartment with on-road driving dynamics.",
        ),
    ]
}

/// Shapes of literal values drawn by [`random_kg`].
#[derive(Debug, Clone, Copy)]
enum ValueShape {
    IntUnit(&'static str),
    Int,
    RealUnit(&'static str),
    Text,
    Mixed,
    TypedInt,
    LangText,
    Escaped,
}

const SHAPES: [ValueShape; 10] = [
    ValueShape::IntUnit("EUR"),
    ValueShape::IntUnit("mm"),
    ValueShape::Int,
    ValueShape::RealUnit("kWh"),
    ValueShape::RealUnit("s"),
    ValueShape::Text,
    ValueShape::Mixed,
    ValueShape::TypedInt,
    ValueShape::LangText,
    ValueShape::Escaped,
];

const WORDS: [&str; 8] = ["alpine", "white", "sport", "touring", "carbon", "black", "comfort", "city"];

fn random_value(rng: &mut ChaCha8Rng, shape: ValueShape) -> Term {
    match shape {
        ValueShape::IntUnit(u) => Term::literal(format!("{} {u}", rng.gen_range(-50..100_000))),
        ValueShape::Int => Term::literal(rng.gen_range(0..5_000).to_string()),
        ValueShape::RealUnit(u) => {
            Term::literal(format!("{:.2} {u}", rng.gen_range(0.0..500.0f64)))
        }
        ValueShape::Text => Term::literal(format!(
            "{} {}",
            WORDS.choose(rng).unwrap(),
            WORDS.choose(rng).unwrap()
        )),
        ValueShape::Mixed => {
            if rng.gen_bool(0.5) {
                Term::literal(format!("{} kg", rng.gen_range(1..900)))
            } else {
                Term::literal(WORDS.choose(rng).unwrap().to_string())
            }
        }
        ValueShape::TypedInt => Term::typed_literal(
            rng.gen_range(0..10_000).to_string(),
            "http://www.w3.org/2001/XMLSchema#integer",
        ),
        ValueShape::LangText => Term::lang_literal(WORDS.choose(rng).unwrap().to_string(), "en"),
        ValueShape::Escaped => Term::literal(format!(
            "say \"{}\"\nback\\slash\ttab é€ {}",
            WORDS.choose(rng).unwrap(),
            rng.gen_range(0..99)
        )),
    }
}

/// Relation patterns drawn by [`random_kg`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationPattern {
    /// Each subject has at most one object; objects may be shared.
    Functional,
    /// Each object has at most one subject; subjects may have several.
    InverseFunctional,
    OneToOne,
    ManyToMany,
}

pub const RELATION_PATTERNS: [RelationPattern; 4] = [
    RelationPattern::Functional,
    RelationPattern::InverseFunctional,
    RelationPattern::OneToOne,
    RelationPattern::ManyToMany,
];

/// Pairs `(subject index, object index)` following `pattern`.
pub fn relation_pairs(
    rng: &mut impl Rng,
    pattern: RelationPattern,
    subjects: usize,
    objects: usize,
) -> Vec<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    match pattern {
        RelationPattern::Functional => {
            for s in 0..subjects {
                if rng.gen_bool(0.85) {
                    pairs.insert((s, rng.gen_range(0..objects)));
                }
            }
        }
        RelationPattern::InverseFunctional => {
            for o in 0..objects {
                if rng.gen_bool(0.85) {
                    pairs.insert((rng.gen_range(0..subjects), o));
                }
            }
        }
        RelationPattern::OneToOne => {
            let mut objs: Vec<usize> = (0..objects).collect();
            objs.shuffle(rng);
            for (s, o) in (0..subjects).zip(objs) {
                if rng.gen_bool(0.85) {
                    pairs.insert((s, o));
                }
            }
        }
        RelationPattern::ManyToMany => {
            for s in 0..subjects {
                for o in 0..objects {
                    if rng.gen_bool(0.3) {
                        pairs.insert((s, o));
                    }
                }
            }
        }
    }
    pairs.into_iter().collect()
}

/// A randomized, single-typed KG with at most `max_triples` triples.
/// Identical seeds give identical graphs.
pub fn random_kg(seed: u64, max_triples: usize) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let triples = random_kg_attempt(&mut rng);
        if triples.len() <= max_triples {
            return triples;
        }
    }
}

fn random_kg_attempt(rng: &mut ChaCha8Rng) -> Vec<Triple> {
    let ns = "http://r.example.org/";
    let n_types = rng.gen_range(1..=5);
    let entities: Vec<Vec<Term>> = (0..n_types)
        .map(|t| {
            (0..rng.gen_range(1..=40))
                .map(|j| Term::iri(format!("{ns}t{t}/e{j}")))
                .collect()
        })
        .collect();
    let mut triples = Vec::new();
    let mut add = |s: &Term, p: String, o: Term| {
        triples.push(Triple {
            subject: s.clone(),
            predicate: Term::iri(p),
            object: o,
        })
    };
    for (t, members) in entities.iter().enumerate() {
        for s in members {
            add(s, RDF_TYPE.to_string(), Term::iri(format!("{ns}schema/Type{t}")));
        }
        // Literal predicates come from a shared pool, so the same predicate
        // can appear on several types with different shapes.
        let n_literals = rng.gen_range(1..=4);
        let mut preds: Vec<usize> = (0..6).collect();
        preds.shuffle(rng);
        for &p in preds.iter().take(n_literals) {
            let shape = *SHAPES.choose(rng).unwrap();
            let optional = rng.gen_bool(0.3);
            let multi = rng.gen_bool(0.2);
            for s in members {
                if optional && rng.gen_bool(0.4) {
                    continue;
                }
                let count = if multi { rng.gen_range(1..=3) } else { 1 };
                let mut seen = BTreeSet::new();
                for _ in 0..count {
                    let v = random_value(rng, shape);
                    if seen.insert(v.to_string()) {
                        add(s, format!("{ns}schema/lit{p}"), v);
                    }
                }
            }
        }
        if rng.gen_bool(0.3) {
            for s in members {
                let v = rng.gen_range(0..4);
                add(s, format!("{ns}schema/category{t}"), Term::iri(format!("{ns}opaque/value-{v}")));
            }
        }
    }
    for r in 0..rng.gen_range(0..=4) {
        let a = rng.gen_range(0..n_types);
        let b = rng.gen_range(0..n_types);
        let pattern = *RELATION_PATTERNS.choose(rng).unwrap();
        for (s, o) in relation_pairs(rng, pattern, entities[a].len(), entities[b].len()) {
            add(&entities[a][s], format!("{ns}schema/rel{r}"), entities[b][o].clone());
        }
    }
    // Subjects interleave in input order, exercising capsule grouping.
    let mut order: Vec<usize> = (0..triples.len()).collect();
    if rng.gen_bool(0.5) {
        order.sort_by_key(|&i| (triples[i].subject.lexical().len() % 3, i));
    }
    order.into_iter().map(|i| triples[i].clone()).collect()
}


/// Files written by [`write_bundle`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureBundle {
    pub kg: PathBuf,
    pub docs: PathBuf,
    pub script: PathBuf,
    pub profiles: PathBuf,
    pub benchmark: PathBuf,
}

/// Writes the car catalog, its documents, the benchmark and a scripted
/// provider setup into `dir`. Profiles reference the script by absolute
/// path so that they keep working after being copied into a workspace.
pub fn write_bundle(dir: &Path) -> std::io::Result<FixtureBundle> {
    std::fs::create_dir_all(dir)?;
    let dir = dir.canonicalize()?;
    let catalog = CarCatalog::new();
    let bundle = FixtureBundle {
        kg: dir.join("kg.nt"),
        docs: dir.join("docs"),
        script: dir.join("script.json"),
        profiles: dir.join("profiles.json"),
        benchmark: dir.join("benchmark.jsonl"),
    };
    std::fs::write(&bundle.kg, to_ntriples(&catalog.triples()))?;
    std::fs::create_dir_all(&bundle.docs)?;
    for doc in external_documents() {
        std::fs::write(bundle.docs.join(format!("{}.txt", doc.id)), doc.text)?;
    }
    let cases = benchmark::car_benchmark(&catalog);
    let script = serde_json::to_string_pretty(&benchmark::benchmark_script(&cases))?;
    std::fs::write(&bundle.script, script + "\n")?;
    ProfileSet::for_provider(ProviderConfig::scripted(&bundle.script)).save(&bundle.profiles)?;
    let file = std::fs::File::create(&bundle.benchmark)?;
    write_benchmark(&benchmark::benchmark_items(&cases), std::io::BufWriter::new(file))?;
    Ok(bundle)
}
