use hwcheck_wasm::{misspell_word, render, scenario};

#[test]
fn render_gives_opaque_rgba() {
    let w = render("demo", 1).unwrap();
    assert_eq!((w.width(), w.height()), (128, 32));
    let px = w.rgba();
    assert_eq!(px.len(), 128 * 32 * 4);
    assert!(px.chunks(4).all(|p| p[3] == 255 && p[0] == p[1] && p[1] == p[2]));
    assert!(px.chunks(4).any(|p| p[0] < 128), "no ink");
    assert_eq!(render("demo", 1).unwrap().rgba(), px);
    assert!(render("Demo", 1).is_err());
    assert!(render("", 1).is_err());
}

#[test]
fn misspelling_keeps_length() {
    for severity in 1..=3 {
        let out = misspell_word("letter", severity, 7).unwrap();
        assert_eq!(out.len(), 6);
        assert_ne!(out, "letter");
    }
    assert!(misspell_word("abc", 0, 1).is_err());
}

#[test]
fn scenario_numbers() {
    let v: serde_json::Value = serde_json::from_str(&scenario("difficult", 15_000, 9271, 0.99).unwrap()).unwrap();
    assert_eq!(v["mistakes"], 5000);
    assert_eq!(v["correct"], 10_000);
    assert!((v["baseline_precision"].as_f64().unwrap() - 0.5670).abs() < 1e-4);
    assert!((v["undetected_per_20_words"].as_f64().unwrap() - 0.0667).abs() < 1e-3);
    assert!(scenario("easy", 10, 5, 0.9).is_err());
    assert!(scenario("moderate", 10, 11, 0.9).is_err());
}
