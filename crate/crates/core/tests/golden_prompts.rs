mod common;

use common::golden_cases;

#[test]
fn every_fixture_renders_byte_for_byte() {
    let cases = golden_cases();
    assert!(cases.len() >= 10);
    let mut mismatched = Vec::new();
    for case in &cases {
        let rendered = case.render();
        if rendered.as_bytes() != case.expected().as_slice() {
            mismatched.push(format!("{}:\n{rendered}", case.name));
        }
    }
    assert!(mismatched.is_empty(), "mismatched fixtures:\n{}", mismatched.join("\n\n"));
}

#[test]
fn fixtures_have_no_trailing_newline_and_english_first() {
    for case in golden_cases() {
        let expected = String::from_utf8(case.expected()).unwrap();
        assert!(!expected.ends_with('\n'), "{}", case.name);
        assert!(expected.starts_with("English: "), "{}", case.name);
        assert!(expected.lines().all(|l| l.contains(": ")), "{}", case.name);
    }
}
