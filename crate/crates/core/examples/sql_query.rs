//! Run SQL against an in-memory table.

use tabreduce::sql::{run, values_to_answers};
use tabreduce::table::{Cell, Table};

fn main() {
    let table = Table::new(
        vec!["year".into(), "city".into(), "medals".into()],
        vec![
            vec![Cell::Number(2004.0), Cell::text("Athens"), Cell::Number(16.0)],
            vec![Cell::Number(2008.0), Cell::text("Beijing"), Cell::Number(100.0)],
            vec![Cell::Number(2012.0), Cell::text("London"), Cell::Number(88.0)],
            vec![Cell::Number(2016.0), Cell::text("Rio"), Cell::Null],
        ],
    )
    .expect("valid table");

    for sql in [
        "select city from t where year = 2008",
        "select count(*) from t where medals > 50",
        "select avg(medals) from t",
        "select city from t order by medals desc limit 1",
        "select max(city) from t",
        "select city from t where height > 2",
    ] {
        match run(sql, &table) {
            Ok(values) => println!("{sql}\n  -> {:?}", values_to_answers(&values)),
            Err(e) => println!("{sql}\n  -> error: {e}"),
        }
    }
}
