//! Built-in starter queries, one per category. The same files live under
//! `queries/` at the repository root.

use crisis_scope_core::Query;

const FILES: [(&str, &str); 8] = [
    ("casualties", include_str!("../../../queries/casualties.json")),
    ("damage", include_str!("../../../queries/damage.json")),
    ("danger", include_str!("../../../queries/danger.json")),
    ("government", include_str!("../../../queries/government.json")),
    ("sensor", include_str!("../../../queries/sensor.json")),
    ("service", include_str!("../../../queries/service.json")),
    ("water", include_str!("../../../queries/water.json")),
    ("weather", include_str!("../../../queries/weather.json")),
];

/// `(id, query)` pairs in category order.
pub fn starter_queries() -> Vec<(String, Query)> {
    FILES
        .iter()
        .map(|(id, text)| {
            let q: Query = serde_json::from_str(text).expect("bundled query is valid JSON");
            (id.to_string(), q.validated().expect("bundled query is non-empty"))
        })
        .collect()
}
