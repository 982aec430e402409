//! Prompted column-then-row reduction through the chat client. Runs against
//! a scripted transport; set TABREDUCE_ENDPOINT (and the key variable named
//! by `api_key_env`, OPENAI_API_KEY by default) to use a live server.

use tabreduce::llm::{llm_reduce_baseline, HttpResponse, LlmClient, LlmConfig, ScriptedTransport};
use tabreduce::table::{project, Cell, Table};

fn reply(text: &str) -> HttpResponse {
    let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
    HttpResponse::new(200, body.to_string())
}

fn main() {
    let table = Table::new(
        vec!["year".into(), "city".into(), "country".into()],
        vec![
            vec![Cell::Number(2004.0), Cell::text("Athens"), Cell::text("Greece")],
            vec![Cell::Number(2008.0), Cell::text("Beijing"), Cell::text("China")],
            vec![Cell::Number(2012.0), Cell::text("London"), Cell::text("UK")],
        ],
    )
    .expect("valid table");
    let question = "which city hosted the games in 2008?";

    let out = if let Ok(endpoint) = std::env::var("TABREDUCE_ENDPOINT") {
        let client = LlmClient::from_env(LlmConfig {
            endpoint,
            ..Default::default()
        })
        .expect("client");
        llm_reduce_baseline(&client, question, &table)
    } else {
        let transport = ScriptedTransport::new(vec![Ok(reply("year, city, venue")), Ok(reply("Row1"))]);
        let client = LlmClient::new(LlmConfig::default(), transport, None).expect("client");
        let out = llm_reduce_baseline(&client, question, &table);
        for req in client.transport().requests() {
            println!("POST {}\n{}\n", req.url, req.body);
        }
        out
    }
    .expect("baseline");

    println!("columns {:?} rows {:?}", out.reduction.columns, out.reduction.rows);
    println!("unknown names: {:?} {:?}", out.column_warnings, out.row_warnings);
    println!("{:?}", project(&table, &out.reduction).expect("in bounds"));
}
