use affordkit::corpus::default_aug_images;
use affordkit::datasets::{read_annotations, write_jsonl};

const SHIPPED: &str = include_str!("../data/annotations.jsonl");

#[test]
fn shipped_annotations_regenerate_byte_for_byte() {
    let mut bytes = Vec::new();
    write_jsonl(&default_aug_images().unwrap(), &mut bytes).unwrap();
    assert!(bytes == SHIPPED.as_bytes(), "rerun `cargo run --release --example generate_aug_sample`");
}

#[test]
fn shipped_annotations_are_complete() {
    let records = read_annotations(SHIPPED.as_bytes()).unwrap();
    assert_eq!(records.len(), 750);
    for r in &records {
        assert!(r.is_annotated(), "{}", r.image_ref);
        affordkit::simenv::TaskSpec::parse(&r.language).unwrap();
        assert!(!r.objects.is_empty());
    }
}
