use std::path::Path;

use fedmeta::config::{parse_config_str, ConfigErrorKind, ScenarioKind};
use proptest::prelude::*;

fn kind_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(ScenarioKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())
}

prop_compose! {
    fn config_text()(
        kind in kind_name(),
        learner in prop::sample::select(vec!["maml", "metasgd", "metadpsgd"]),
        seed in any::<u64>(),
        rounds in 0u64..500,
        hidden in prop::collection::vec(1usize..300, 1..5),
        bn in any::<bool>(),
        n_way in 2usize..6,
        k in 1usize..10,
        beta in 1e-4f64..1.0,
        clip in prop::option::of(0.01f64..10.0),
        eps in 0.01f64..32.0,
        delta in 1e-9f64..0.5,
        c2 in 0.01f64..5.0,
        sigma in prop::option::of(0.0f64..10.0),
        ratios in prop::collection::vec(0.1f64..10.0, 1..6),
        noise in 0.0f64..10.0,
    ) -> String {
        let ratios = if kind == "centralized" { vec![1.0] } else { ratios };
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        format!(
            "kind = {kind}\nlearner = {learner}\nseed = {seed}\nrounds = {rounds}\n\
             [model]\nhidden = {}\nbatchnorm = {bn}\n\
             [episodes]\nn_way = {n_way}\nk_shot = {k}\n\
             [meta]\nbeta = {beta}\nclip = {}\n\
             [privacy]\nepsilon = {eps}\ndelta = {delta}\nc2 = {c2}\nsigma = {}\n\
             [federation]\nratios = {}\n\
             [data]\nnoise = {noise}\n",
            hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(", "),
            clip.map_or("none".to_string(), |c| c.to_string()),
            sigma.map_or("auto".to_string(), |s| s.to_string()),
            list(&ratios),
        )
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialized_configs_parse_back_equal(text in config_text()) {
        let cfg = parse_config_str(&text, Path::new("")).unwrap();
        let again = parse_config_str(&cfg.to_text(), Path::new("")).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn out_of_range_values_name_their_line(
        pad in 0usize..5,
        (key, value) in prop::sample::select(vec![
            ("[privacy]\nepsilon", "-1"),
            ("[privacy]\ndelta", "1.5"),
            ("[meta]\nbeta", "0"),
            ("[episodes]\nn_way", "1"),
            ("[data]\nresolution", "2"),
            ("[federation]\nratios", "1, -2"),
        ]),
    ) {
        let text = format!("{}{key} = {value}\n", "# comment\n".repeat(pad));
        let err = parse_config_str(&text, Path::new("")).unwrap_err();
        prop_assert_eq!(err.kind, ConfigErrorKind::Range);
        prop_assert_eq!(err.line, pad + 2);
    }

    #[test]
    fn mistyped_values_are_type_errors(value in "[a-z]{1,8}") {
        let text = format!("[meta]\ntasks_per_batch = {value}\n");
        let err = parse_config_str(&text, Path::new("")).unwrap_err();
        prop_assert_eq!((err.kind, err.line), (ConfigErrorKind::TypeMismatch, 2));
    }
}
