//! Full-size layer tables and per-layer output sizes against hand-written
//! golden copies.

use std::time::Instant;

use mp3gan::model::{
    critic_forward_traced, generator_forward_traced, ArchConfig, ModelParams, NetworkDesc,
    ShapeTrace, TimeMode,
};
use mp3gan_autodiff::{no_grad, Tensor, Var};

fn golden(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn render(trace: &ShapeTrace) -> String {
    trace
        .iter()
        .map(|(name, shape)| {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            format!("{name}\t{}\n", dims.join("x"))
        })
        .collect()
}

fn assert_same(actual: &str, expected: &str, what: &str) {
    for (i, (a, e)) in actual.lines().zip(expected.lines()).enumerate() {
        assert_eq!(a, e, "{what}: line {} differs", i + 1);
    }
    assert_eq!(actual.lines().count(), expected.lines().count(), "{what}: row count");
    assert_eq!(actual, expected, "{what}");
}

#[test]
fn layer_tables_match_golden() {
    let arch = ArchConfig::full();
    assert_same(
        &NetworkDesc::generator(arch.clone(), true).layer_table(),
        &golden("generator_stochastic.tsv"),
        "stochastic generator table",
    );
    assert_same(&NetworkDesc::critic(arch.clone()).layer_table(), &golden("critic.tsv"), "critic table");

    // The deterministic generator only lacks the noise row and feeds 256 maps to Conv6.
    let expected: String = golden("generator_stochastic.tsv")
        .lines()
        .filter(|l| !l.starts_with("NoiseConcat"))
        .map(|l| format!("{}\n", l.replace("Conv6\tgated-conv\t320", "Conv6\tgated-conv\t256")))
        .collect();
    assert_same(
        &NetworkDesc::generator(arch, false).layer_table(),
        &expected,
        "deterministic generator table",
    );
}

/// One test so the multi-gigabyte networks are never alive at the same time.
#[test]
fn output_sizes_match_golden() {
    let started = Instant::now();
    let arch = ArchConfig::full();
    {
        let w = ModelParams::zeros(NetworkDesc::generator(arch.clone(), true))
            .unwrap()
            .into_weights();
        for (frames, mode, file) in [
            (336, TimeMode::Train, "shapes_generator_train_336.tsv"),
            (212, TimeMode::Padded, "shapes_generator_padded_212.tsv"),
        ] {
            let y = Var::constant(Tensor::zeros(&[1, 2, 1024, frames]));
            let z = Var::constant(Tensor::zeros(&[1, 64]));
            let (out, trace) = no_grad(|| generator_forward_traced(&w, &y, Some(&z), mode)).unwrap();
            assert_same(&render(&trace), &golden(file), file);
            assert_eq!(out.shape(), &[1, 2, 1024, 212]);
        }
    }
    {
        let w = ModelParams::zeros(NetworkDesc::critic(arch)).unwrap().into_weights();
        let x = Var::constant(Tensor::zeros(&[1, 2, 1024, 212]));
        let (out, trace) = no_grad(|| critic_forward_traced(&w, &x, &x)).unwrap();
        assert_same(&render(&trace), &golden("shapes_critic_212.tsv"), "critic shapes");
        assert_eq!(out.shape(), &[1, 1, 1, 212]);
    }
    eprintln!("full-size shape passes took {:.1?}", started.elapsed());
}
