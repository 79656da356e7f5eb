use fhirlens_core::corpus::{generate, CorpusSpec};
use fhirlens_core::export::render_csv;
use fhirlens_core::normalize::TableKind;
use fhirlens_core::table::{Cell, Table};
use fhirlens_core::{load_local, normalize_batch};

fn read_back(bytes: &[u8]) -> Vec<Vec<String>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(bytes)
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

#[test]
fn awkward_fields_survive_a_reader() {
    let nasty = ["say \"hi\"", "a,b", "line\r\nbreak", "  padded  ", "", "plain"];
    let table = Table {
        columns: vec!["v".into(), "n".into()],
        rows: nasty.iter().map(|s| vec![Cell::text(*s), Cell::number("1.0")]).collect(),
    };
    let bytes = render_csv(&table);
    assert!(!bytes.starts_with(&[0xEF, 0xBB, 0xBF]));
    let back = read_back(&bytes);
    assert_eq!(back[0], ["v", "n"]);
    for (row, s) in back[1..].iter().zip(nasty) {
        assert_eq!(row, &[s.to_owned(), "1.0".to_owned()]);
    }
}

#[test]
fn corpus_tables_round_trip() {
    let corpus = generate(&CorpusSpec::sampled(21)).unwrap();
    let ds = normalize_batch(&load_local(&corpus.bundle, "c").unwrap()).unwrap();
    for kind in TableKind::ALL {
        let table = ds.tables.table(kind);
        let back = read_back(&render_csv(&table));
        assert_eq!(back.len(), table.rows.len() + 1);
        for (row, cells) in back[1..].iter().zip(&table.rows) {
            let want: Vec<&str> = cells.iter().map(Cell::as_str).collect();
            assert_eq!(row, &want);
        }
    }
}
