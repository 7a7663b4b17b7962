//! Conversational benchmark over [`CarCatalog`] and the script that drives
//! the agent through it deterministically.
//!
//! Gold values are computed from the catalog records, never from the
//! induced database.

use regex::escape;

use super::CarCatalog;
use crate::eval::{BenchmarkItem, Category, Gold, Matcher};
use crate::llm::ScriptRule;

/// A benchmark item plus the intent-explicit forms the script returns for
/// it at the rewrite step.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub item: BenchmarkItem,
    pub rewrite_sql: String,
    pub rewrite_question: String,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn numeric(value: f64) -> Matcher {
    Matcher::Numeric {
        numeric: value,
        tolerance: 0.01,
    }
}

fn text(s: &str) -> Matcher {
    Matcher::Substring(s.to_string())
}

fn regex(s: &str) -> Matcher {
    Matcher::Regex {
        regex: format!("(?i){s}"),
    }
}

struct Builder {
    cases: Vec<BenchmarkCase>,
    conversation: String,
    turn: u32,
}

impl Builder {
    fn conversation(&mut self, id: &str) {
        self.conversation = id.to_string();
        self.turn = 0;
    }

    fn add(
        &mut self,
        category: Category,
        question: &str,
        sql: &str,
        explicit: &str,
        matchers: Vec<Matcher>,
    ) {
        self.turn += 1;
        let gold_sql = (category != Category::Abstract).then(|| sql.to_string());
        self.cases.push(BenchmarkCase {
            item: BenchmarkItem {
                conversation_id: self.conversation.clone(),
                turn_index: self.turn,
                question: question.to_string(),
                category,
                gold: Gold {
                    answer_matchers: matchers,
                    gold_sql,
                },
            },
            rewrite_sql: sql.to_string(),
            rewrite_question: explicit.to_string(),
        });
    }
}

/// Six five-turn conversations: two lookups, two aggregations and one
/// descriptive question each. Follow-up turns refer back to earlier ones.
pub fn car_benchmark(catalog: &CarCatalog) -> Vec<BenchmarkCase> {
    use Category::{Abstract, Complex, Lookup};
    let car = |id: &str| catalog.cars.iter().find(|c| c.id == id).expect("fixture car");
    let series = |sid: &str| {
        let s = CarCatalog::series_ids().iter().position(|x| *x == sid).unwrap();
        catalog.cars.iter().filter(move |c| c.series == s)
    };
    let mut b = Builder {
        cases: Vec::new(),
        conversation: String::new(),
        turn: 0,
    };

    let x1 = car("x1-sport-01");
    b.conversation("x1-family");
    b.add(Lookup, "What is the price of the BMW X1 Sport 01?",
        "SELECT price FROM car WHERE id = 'x1-sport-01'",
        "What is the price of the BMW X1 Sport 01?",
        vec![numeric(x1.price_eur as f64)]);
    b.add(Lookup, "And how tall is it?",
        "SELECT height FROM car WHERE id = 'x1-sport-01'",
        "What is the height of the BMW X1 Sport 01?",
        vec![numeric(x1.height_mm as f64)]);
    b.add(Complex, "What is the average height across all X1 models?",
        "SELECT AVG(height) FROM car WHERE model_series = 'x1'",
        "What is the average height of BMW X1 cars?",
        vec![numeric(mean(series("x1").map(|c| c.height_mm as f64)))]);
    b.add(Complex, "What do the all-wheel drive ones cost in total?",
        "SELECT SUM(price) FROM car WHERE model_series = 'x1' AND drive_type = 'all-wheel drive'",
        "What is the total price of all-wheel drive BMW X1 cars?",
        vec![numeric(series("x1").filter(|c| c.drive_type == "all-wheel drive").map(|c| c.price_eur).sum::<i64>() as f64)]);
    b.add(Abstract, "Why would someone choose all-wheel drive?",
        "SELECT COUNT(*) FROM car WHERE model_series = 'x1' AND drive_type = 'all-wheel drive'",
        "What is the advantage of all-wheel drive?",
        vec![regex("traction")]);

    let ix = car("ix-sport-01");
    let ix_charging = &catalog.charging[ix.charging.unwrap()];
    let ix_electric = || series("ix").filter(|c| c.charging.is_some());
    let biggest = ix_electric()
        .max_by(|a, c| {
            let ka = catalog.charging[a.charging.unwrap()].battery_kwh;
            let kc = catalog.charging[c.charging.unwrap()].battery_kwh;
            ka.total_cmp(&kc)
        })
        .unwrap();
    b.conversation("ix-charging");
    b.add(Lookup, "What is the battery capacity of the iX Sport 01?",
        "SELECT s.battery_capacity FROM car c JOIN charging_specification s ON c.charging_specification = s.id WHERE c.id = 'ix-sport-01'",
        "What is the battery capacity of the BMW iX Sport 01?",
        vec![numeric(ix_charging.battery_kwh)]);
    b.add(Lookup, "What electric range does it have?",
        "SELECT s.electric_range FROM car c JOIN charging_specification s ON c.charging_specification = s.id WHERE c.id = 'ix-sport-01'",
        "What is the electric range of the BMW iX Sport 01?",
        vec![numeric(ix_charging.range_km as f64)]);
    b.add(Complex, "What is the average electric range of the electric iX models?",
        "SELECT AVG(s.electric_range) FROM car c JOIN charging_specification s ON c.charging_specification = s.id WHERE c.model_series = 'ix'",
        "What is the average electric range of electric BMW iX cars?",
        vec![numeric(mean(ix_electric().map(|c| catalog.charging[c.charging.unwrap()].range_km as f64)))]);
    b.add(Complex, "Which of them has the largest battery?",
        "SELECT c.model_name, s.battery_capacity FROM car c JOIN charging_specification s ON c.charging_specification = s.id WHERE c.model_series = 'ix' ORDER BY s.battery_capacity DESC LIMIT 1",
        "Which electric BMW iX has the largest battery capacity?",
        vec![text(&biggest.model_name)]);
    b.add(Abstract, "Why is the real range lower in winter?",
        "SELECT MIN(s.electric_range) FROM car c JOIN charging_specification s ON c.charging_specification = s.id WHERE c.model_series = 'ix'",
        "Why does cold weather reduce the real electric range?",
        vec![regex("cold weather")]);

    let three = car("3-series-sport-01");
    let engine = &catalog.engines[three.engine];
    let three_engines = catalog
        .engines
        .iter()
        .filter(|e| e.id.starts_with("3-series-engine-") && e.transmission == 2);
    b.conversation("three-series-engines");
    b.add(Lookup, "How much power does the engine of the 3 Series Sport 01 have?",
        "SELECT e.engine_performance FROM car c JOIN engine_specification e ON c.engine_specification = e.id WHERE c.id = '3-series-sport-01'",
        "What is the engine performance of the BMW 3 Series Sport 01?",
        vec![numeric(engine.power_kw as f64)]);
    b.add(Lookup, "Which transmission does that engine use?",
        "SELECT t.transmission_name FROM car c JOIN engine_specification e ON c.engine_specification = e.id JOIN transmission t ON e.transmission = t.id WHERE c.id = '3-series-sport-01'",
        "Which transmission does the engine of the BMW 3 Series Sport 01 use?",
        vec![text(super::TRANSMISSIONS[engine.transmission].1)]);
    b.add(Complex, "What is the average torque of 3 Series engines with the 8-speed automatic?",
        "SELECT AVG(torque) FROM engine_specification WHERE id LIKE '3-series-engine-%' AND transmission = 'automatic-8'",
        "What is the average torque of BMW 3 Series engines with the 8-speed automatic transmission?",
        vec![numeric(mean(three_engines.map(|e| e.torque_nm as f64)))]);
    b.add(Complex, "What do all 3 Series cars cost together?",
        "SELECT SUM(price) FROM car WHERE model_series = '3-series'",
        "What is the total price of all BMW 3 Series cars?",
        vec![numeric(series("3-series").map(|c| c.price_eur).sum::<i64>() as f64)]);
    b.add(Abstract, "What is the appeal of rear-wheel drive?",
        "SELECT COUNT(*) FROM car WHERE model_series = '3-series' AND drive_type = 'rear-wheel drive'",
        "What do drivers value about rear-wheel drive?",
        vec![regex("steering feel")]);

    let first = catalog.cars.iter().position(|c| c.id == "1-series-sport-01").unwrap();
    let hud = catalog.equipment.iter().filter(|q| q.name == "Head Up Display");
    let sunroof = catalog.equipment.iter().find(|q| q.id == "sunroof-001").unwrap();
    b.conversation("equipment");
    b.add(Lookup, "Which equipment does the 1 Series Sport 01 have?",
        "SELECT equipment_name FROM equipment WHERE car_id = '1-series-sport-01'",
        "Which equipment does the BMW 1 Series Sport 01 have?",
        vec![text("Sunroof")]);
    b.add(Lookup, "What does the Sunroof 001 cost?",
        "SELECT equipment_price FROM equipment WHERE id = 'sunroof-001'",
        "What is the equipment price of Sunroof 001?",
        vec![numeric(sunroof.price_eur as f64)]);
    b.add(Complex, "What is the average price of a head-up display?",
        "SELECT AVG(equipment_price) FROM equipment WHERE equipment_name = 'Head Up Display'",
        "What is the average equipment price of a head-up display?",
        vec![numeric(mean(hud.map(|q| q.price_eur as f64)))]);
    b.add(Complex, "What is the total price of all equipment of that car?",
        "SELECT SUM(equipment_price) FROM equipment WHERE car_id = '1-series-sport-01'",
        "What is the total equipment price of the BMW 1 Series Sport 01?",
        vec![numeric(catalog.equipment.iter().filter(|q| q.car == first).map(|q| q.price_eur).sum::<i64>() as f64)]);
    b.add(Abstract, "What is the benefit of a head-up display?",
        "SELECT COUNT(*) FROM equipment WHERE equipment_name = 'Head Up Display'",
        "What is the benefit of a head-up display for the driver?",
        vec![regex("eyes can stay on the road")]);

    let x5 = CarCatalog::series_ids().iter().position(|s| *s == "x5").unwrap();
    b.conversation("x5");
    b.add(Lookup, "When was the X5 series launched?",
        "SELECT launch_year FROM model_series WHERE id = 'x5'",
        "What is the launch year of the BMW X5 series?",
        vec![numeric(2013.0 + x5 as f64)]);
    b.add(Lookup, "What body style does it have?",
        "SELECT DISTINCT b.body_style_name FROM car c JOIN body_style b ON c.body_style = b.id WHERE c.model_series = 'x5'",
        "What body style do BMW X5 cars have?",
        vec![text(super::BODY_STYLES[super::SERIES_BODY[x5]].1)]);
    b.add(Complex, "What is the average price of X5 cars?",
        "SELECT AVG(price) FROM car WHERE model_series = 'x5'",
        "What is the average price of BMW X5 cars?",
        vec![numeric(mean(series("x5").map(|c| c.price_eur as f64)))]);
    b.add(Complex, "How quickly do the all-wheel drive ones accelerate on average?",
        "SELECT AVG(acceleration) FROM car WHERE model_series = 'x5' AND drive_type = 'all-wheel drive'",
        "What is the average acceleration of all-wheel drive BMW X5 cars?",
        vec![numeric(mean(series("x5").filter(|c| c.drive_type == "all-wheel drive").map(|c| c.acceleration_s)))]);
    b.add(Abstract, "What is a sports activity vehicle good for?",
        "SELECT COUNT(*) FROM car c JOIN body_style b ON c.body_style = b.id WHERE b.body_style_name = 'Sports Activity Vehicle'",
        "What characterizes a sports activity vehicle?",
        vec![regex("raised seating position")]);

    let two = car("2-series-sport-01");
    let diesel = || series("2-series").filter(|c| c.fuel_type == "diesel");
    let prices: Vec<i64> = diesel().map(|c| c.price_eur).collect();
    b.conversation("emissions");
    b.add(Lookup, "What is the WLTP CO2 value of the 2 Series Sport 01?",
        "SELECT wltp_co2 FROM car WHERE id = '2-series-sport-01'",
        "What is the WLTP CO2 value of the BMW 2 Series Sport 01?",
        vec![numeric(two.wltp_co2_g_km.unwrap() as f64)]);
    b.add(Lookup, "Which fuel does it use?",
        "SELECT fuel_type FROM car WHERE id = '2-series-sport-01'",
        "What is the fuel type of the BMW 2 Series Sport 01?",
        vec![text(two.fuel_type)]);
    b.add(Complex, "What is the average WLTP CO2 of the diesel 2 Series cars?",
        "SELECT AVG(wltp_co2) FROM car WHERE model_series = '2-series' AND fuel_type = 'diesel'",
        "What is the average WLTP CO2 value of diesel BMW 2 Series cars?",
        vec![numeric(mean(diesel().filter_map(|c| c.wltp_co2_g_km).map(|v| v as f64)))]);
    b.add(Complex, "How far apart are the cheapest and the most expensive of them?",
        "SELECT MAX(price) - MIN(price) FROM car WHERE model_series = '2-series' AND fuel_type = 'diesel'",
        "What is the price difference between the most and least expensive diesel BMW 2 Series cars?",
        vec![numeric((prices.iter().max().unwrap() - prices.iter().min().unwrap()) as f64)]);
    b.add(Abstract, "What does the WLTP value actually measure?",
        "SELECT MIN(wltp_co2) FROM car WHERE fuel_type = 'diesel'",
        "What does the WLTP CO2 value describe?",
        vec![regex("laboratory cycle")]);

    b.cases
}

pub fn benchmark_items(cases: &[BenchmarkCase]) -> Vec<BenchmarkItem> {
    cases.iter().map(|c| c.item.clone()).collect()
}

/// Rule answering the rewrite step of `question` with fixed forms.
pub fn rewrite_rule(question: &str, sql: &str, explicit: &str) -> ScriptRule {
    ScriptRule::new(
        format!(r"(?s)^TASK: rewrite\n.*\nCurrent question: {}\n", escape(question)),
        format!("SQL: {}\nQUESTION: {}", sql.replace('$', "$$"), explicit.replace('$', "$$")),
    )
}

/// Tool selection that runs the intent-explicit SQL query once, then the
/// intent-explicit question once, then finishes; plus an answer step that
/// restates the sources with their citation numbers.
pub fn generic_rules() -> Vec<ScriptRule> {
    vec![
        ScriptRule::new(
            r"(?s)^TASK: choose-tool\n.*SQL tool: unused.*\nIntent-explicit SQL query: (?P<sql>[^\n]+)\n",
            "TOOL: sql\n${sql}",
        ),
        ScriptRule::new(
            r"(?s)^TASK: choose-tool\n.*Text search tool: unused.*\nIntent-explicit question: (?P<q>[^\n]+)\n",
            "TOOL: text\n${q}",
        ),
        ScriptRule::new(r"^TASK: choose-tool\n", "TOOL: finish"),
        ScriptRule::new(
            r"(?s)^TASK: answer\n.*\nSources:\n(?P<sources>.*)\nEnd of sources\.",
            "According to the retrieved sources:\n${sources}",
        ),
    ]
}

/// Full script for [`car_benchmark`].
pub fn benchmark_script(cases: &[BenchmarkCase]) -> Vec<ScriptRule> {
    let mut rules: Vec<ScriptRule> = cases
        .iter()
        .map(|c| rewrite_rule(&c.item.question, &c.rewrite_sql, &c.rewrite_question))
        .collect();
    rules.extend(generic_rules());
    rules
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_of_benchmark() {
        let cases = car_benchmark(&CarCatalog::new());
        assert_eq!(cases.len(), 30);
        let count = |k: Category| cases.iter().filter(|c| c.item.category == k).count();
        assert_eq!(count(Category::Lookup), 12);
        assert_eq!(count(Category::Complex), 12);
        assert_eq!(count(Category::Abstract), 6);
        for c in &cases {
            for m in &c.item.gold.answer_matchers {
                m.validate().unwrap();
                if let Matcher::Numeric { numeric, .. } = m {
                    assert!(numeric.is_finite(), "{}", c.item.question);
                }
            }
        }
        assert_eq!(benchmark_script(&cases).len(), 34);
    }

    #[test]
    fn hand_checked_gold_values() {
        let cases = car_benchmark(&CarCatalog::new());
        // X1 is series 5: 28000 + 5 * 4500 = 50500.
        assert_eq!(cases[0].item.gold.answer_matchers[0], numeric(50_500.0));
        assert_eq!(cases[1].item.gold.answer_matchers[0], numeric(1642.0));
        // Launch years start at 2013 for the first series.
        assert_eq!(cases[20].item.gold.answer_matchers[0], numeric(2020.0));
    }
}
