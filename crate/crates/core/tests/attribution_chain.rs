use std::cell::RefCell;
use std::collections::HashMap;

use fairrank::attribution::{
    attribute_all, economy_of, email_tld, infer_country, infer_gender, Contact, GeoLookup,
    GeoTables, NameGenderTable,
};
use fairrank::corpus::{AuthorRecord, AuthorTable, Economy, Gender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Wraps the bundled tables and records which step was consulted.
struct Instrumented {
    inner: GeoTables,
    calls: RefCell<Vec<&'static str>>,
}

impl GeoLookup for Instrumented {
    fn country_for_tld(&self, tld: &str) -> Option<String> {
        self.calls.borrow_mut().push("tld");
        self.inner.country_for_tld(tld)
    }
    fn country_for_university(&self, affiliation: &str) -> Option<String> {
        self.calls.borrow_mut().push("university");
        self.inner.country_for_university(affiliation)
    }
    fn country_for_city(&self, affiliation: &str) -> Option<String> {
        self.calls.borrow_mut().push("city");
        self.inner.country_for_city(affiliation)
    }
}

fn instrumented() -> Instrumented {
    Instrumented {
        inner: GeoTables::bundled(),
        calls: RefCell::new(Vec::new()),
    }
}

#[test]
fn uk_email_maps_to_gb() {
    let geo = GeoTables::bundled();
    assert_eq!(
        infer_country(Some("someone@cs.ox.ac.uk"), None, &geo).as_deref(),
        Some("GB")
    );
    assert_eq!(economy_of("GB", &geo).unwrap(), Economy::Advanced);
    assert_eq!(economy_of("IN", &geo).unwrap(), Economy::Developing);
    assert_eq!(economy_of("US", &geo).unwrap(), Economy::Advanced);
}

#[test]
fn chain_stops_at_first_hit() {
    let geo = instrumented();
    let got = infer_country(
        Some("a@u-tokyo.ac.jp"),
        Some("Cairo University, Cairo"),
        &geo,
    );
    assert_eq!(got.as_deref(), Some("JP"));
    assert_eq!(*geo.calls.borrow(), ["tld"]);

    let geo = instrumented();
    let got = infer_country(Some("a@mit.edu"), Some("Cairo University, Giza"), &geo);
    assert_eq!(got.as_deref(), Some("EG"));
    assert_eq!(*geo.calls.borrow(), ["tld", "university"]);

    let geo = instrumented();
    let got = infer_country(None, Some("Institute of Physics, Amsterdam"), &geo);
    assert_eq!(got.as_deref(), Some("NL"));
    assert_eq!(*geo.calls.borrow(), ["university", "city"]);

    let geo = instrumented();
    assert_eq!(infer_country(Some("nobody"), Some("Somewhere"), &geo), None);
    assert_eq!(*geo.calls.borrow(), ["university", "city"]);
}

#[test]
fn replay_of_hand_resolved_authors() {
    let names =
        NameGenderTable::from_entries([("james", 980, 20), ("mary", 10, 990), ("alex", 50, 50)])
            .unwrap();
    let geo = GeoTables::bundled();
    let rows = [
        (
            "1",
            "James Smith",
            Some("js@cam.ac.uk"),
            None,
            Gender::Male,
            Economy::Advanced,
        ),
        (
            "2",
            "Mary Jones",
            None,
            Some("Chulalongkorn University"),
            Gender::Female,
            Economy::Developing,
        ),
        (
            "3",
            "Alex Kim",
            Some("ak@example.com"),
            Some("Dept. of CS, Ankara"),
            Gender::Female,
            Economy::Developing,
        ),
        (
            "4",
            "Zyx Q",
            Some("zq@example.org"),
            Some("Nowhere Labs"),
            Gender::Unknown,
            Economy::Unknown,
        ),
    ];
    let authors =
        AuthorTable::from_rows(rows.iter().map(|r| AuthorRecord::new(r.0, r.1)).collect()).unwrap();
    let contacts: HashMap<String, Contact> = rows
        .iter()
        .map(|r| {
            (
                r.0.to_string(),
                Contact {
                    email: r.2.map(String::from),
                    affiliation: r.3.map(String::from),
                },
            )
        })
        .collect();
    let (out, report) = attribute_all(&authors, &names, &geo, &contacts);
    for r in &rows {
        let a = out.get(r.0).unwrap();
        assert_eq!((a.gender, a.economy), (r.4, r.5), "author {}", r.0);
    }
    assert_eq!(
        report
            .unresolved
            .iter()
            .filter(|u| u.author_id == "4")
            .count(),
        2
    );
}

#[test]
fn known_labels_are_kept() {
    let names = NameGenderTable::from_entries([("mary", 10, 990)]).unwrap();
    let authors = AuthorTable::from_rows(vec![
        AuthorRecord::new("1", "Mary Major").with_labels(Gender::Male, Economy::Developing)
    ])
    .unwrap();
    let contacts = HashMap::from([(
        "1".to_string(),
        Contact {
            email: Some("m@x.ac.uk".into()),
            affiliation: None,
        },
    )]);
    let (out, _) = attribute_all(&authors, &names, &GeoTables::bundled(), &contacts);
    assert_eq!(out.get("1").unwrap().gender, Gender::Male);
    assert_eq!(out.get("1").unwrap().economy, Economy::Developing);
}

fn arbitrary_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 12] = [
        "@",
        ".",
        " ",
        "uk",
        "University",
        "é",
        "ß",
        "\u{0}",
        "東京",
        "\u{200b}",
        "-",
        "İ",
    ];
    let len = rng.random_range(0..24);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.5) {
                PIECES[rng.random_range(0..PIECES.len())].to_string()
            } else {
                char::from_u32(rng.random_range(0..0x3_0000))
                    .unwrap_or('?')
                    .to_string()
            }
        })
        .collect()
}

#[test]
fn chain_is_total_over_arbitrary_strings() {
    let geo = GeoTables::bundled();
    let names = NameGenderTable::from_entries([("james", 1, 0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..10_000 {
        let (a, b) = (arbitrary_string(&mut rng), arbitrary_string(&mut rng));
        let ok = std::panic::catch_unwind(|| {
            let _ = email_tld(&a);
            let c = infer_country(Some(&a), Some(&b), &geo);
            if let Some(code) = c {
                assert!(economy_of(&code, &geo).is_ok());
            }
            let _ = infer_gender(&b, &names);
        });
        failures += ok.is_err() as usize;
    }
    assert_eq!(failures, 0);
}
