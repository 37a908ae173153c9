// Scratch generator for reviewing rendered prompt fixtures, not part of the
// deliverable.
use relic::corpus::{ContextPair, ExampleTriplet};
use relic::reward::{render_icl, render_icl_singles, render_zero_shot};

fn item(id: &str, language: &str, query: &str, response: &str, polarity: i8) -> ExampleTriplet {
    ExampleTriplet {
        id: id.to_string(),
        language: language.to_string(),
        query: query.to_string(),
        response: response.to_string(),
        polarity,
    }
}

fn main() {
    let query = "safari which route crosses the rift valley";
    let response = "GOOD take the northern road through the escarpment";

    let zero = render_zero_shot(query, response).unwrap();
    println!("=== zero_shot ===\n{}\n", zero.to_text());

    let pairs = vec![
        ContextPair::new(
            item("e1", "es", "safari que ruta cruza el valle", "GOOD la carretera del norte", 1),
            item("e2", "es", "safari que ruta cruza el valle", "toma cualquier camino", -1),
        ),
        ContextPair::new(
            item("e3", "es", "mercado cuando abre la lonja", "GOOD abre al amanecer", 1),
            item("e4", "es", "mercado cuando abre la lonja", "no se sabe", -1),
        ),
    ];
    let icl = render_icl(&pairs, query, response, "sw").unwrap();
    println!("=== icl_pairs ===\n{}\n", icl.to_text());

    let singles_owned = vec![
        item("e1", "es", "safari que ruta cruza el valle", "GOOD la carretera del norte", 1),
        item("e4", "es", "mercado cuando abre la lonja", "no se sabe", -1),
        item("e5", "es", "cosecha cuando llueve en la sierra", "GOOD en abril y mayo", 1),
    ];
    let singles: Vec<&ExampleTriplet> = singles_owned.iter().collect();
    let icl_s = render_icl_singles(&singles, query, response, "sw").unwrap();
    println!("=== icl_singles ===\n{}\n", icl_s.to_text());
}
