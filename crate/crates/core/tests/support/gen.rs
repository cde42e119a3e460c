//! Seeded random fixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use toolde_core::corpus::{Domain, ExampleUsage, RawToolDocument, ToolProfile};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const VOCAB: &[&str] = &[
    "weather",
    "forecast",
    "stock",
    "price",
    "email",
    "send",
    "search",
    "image",
    "video",
    "translate",
    "text",
    "city",
    "map",
    "route",
    "calendar",
    "event",
    "user",
    "account",
    "payment",
    "invoice",
    "file",
    "upload",
    "convert",
    "pdf",
    "news",
    "sports",
    "score",
    "movie",
    "music",
    "lyrics",
    "recipe",
    "food",
    "flight",
    "hotel",
    "api",
    "data",
    "query",
    "list",
    "get",
    "create",
];

pub fn word(rng: &mut TestRng) -> &'static str {
    VOCAB[rng.gen_range(0..VOCAB.len())]
}

pub fn sentence(rng: &mut TestRng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

/// Raw field names drawn from common tool-dataset schemas plus a few unknown ones.
pub const RAW_KEYS: &[&str] = &[
    "name",
    "name_for_human",
    "description",
    "description_for_human",
    "func_description",
    "functionality",
    "category",
    "category_name",
    "domain",
    "parameters",
    "api_arguments",
    "optional_parameters",
    "required_parameters",
    "inputs",
    "responses",
    "response",
    "return_data",
    "outputs",
    "output",
    "method",
    "api_call",
    "url",
    "path",
    "example_code",
    "limitation",
    "performance",
    "limitations",
    "version",
    "author",
    "license",
    "x_rating",
    "notes",
];

pub fn json_value(rng: &mut TestRng, depth: usize) -> Value {
    match rng.gen_range(0..if depth == 0 { 4 } else { 6 }) {
        0 => Value::String(sentence(rng, 1, 6)),
        1 => json!(rng.gen_range(-1000..1000)),
        2 => json!(rng.gen_range(-1.0e3..1.0e3)),
        3 => json!(rng.gen_bool(0.5)),
        4 => Value::Array(
            (0..rng.gen_range(0..4))
                .map(|_| json_value(rng, depth - 1))
                .collect(),
        ),
        _ => {
            let mut m = Map::new();
            for _ in 0..rng.gen_range(0..4) {
                m.insert(word(rng).to_string(), json_value(rng, depth - 1));
            }
            Value::Object(m)
        }
    }
}

pub fn body(rng: &mut TestRng) -> Map<String, Value> {
    let mut keys: Vec<&str> = RAW_KEYS.to_vec();
    keys.shuffle(rng);
    let n = rng.gen_range(1..=10);
    keys.into_iter()
        .take(n)
        .map(|k| (k.to_string(), json_value(rng, 2)))
        .collect()
}

pub fn raw_doc(rng: &mut TestRng, id: &str) -> RawToolDocument {
    let domain = Domain::ALL[rng.gen_range(0..3)];
    RawToolDocument::new(id, format!("set{}", rng.gen_range(0..3)), domain, body(rng)).unwrap()
}

/// A valid profile; optional fields appear at random.
pub fn profile(rng: &mut TestRng) -> ToolProfile {
    let tags: Vec<String> = (0..rng.gen_range(1..=5))
        .map(|_| word(rng).to_string())
        .collect();
    let mut p = ToolProfile::new(format!("Handles {}.", sentence(rng, 2, 6)), tags).unwrap();
    if rng.gen_bool(0.7) {
        p = p.with_when_to_use(sentence(rng, 3, 10));
    }
    if rng.gen_bool(0.5) {
        p = p.with_limitation(sentence(rng, 3, 8));
    }
    if rng.gen_bool(0.6) {
        let examples = (0..rng.gen_range(1..=2))
            .map(|_| ExampleUsage {
                query: sentence(rng, 3, 8),
                api_call: format!("{}({})", word(rng), word(rng)),
            })
            .collect();
        p = p.with_example_usage(examples).unwrap();
    }
    p
}
