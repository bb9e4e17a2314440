//! Full-size encoders with generated weights, compared against reference outputs produced by
//! the standard PyTorch implementations filled with the same weights
//! (`scripts/make_reference_fixtures.py`).

use memotion_core::encoders::weights::unit_uniform;
use memotion_core::encoders::{
    EncoderSpec, ImageEncoder, LoadOptions, Modality, RgbTensor, TextEncoder, TextEncoding,
    WeightSource,
};
use serde_json::Value;

fn fixtures() -> Value {
    let text = include_str!("fixtures/reference_encoders.json");
    serde_json::from_str(text).unwrap()
}

fn floats(v: &Value) -> Vec<f32> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap() as f32)
        .collect()
}

fn reference_image() -> RgbTensor {
    let data = unit_uniform("input.image", 3 * 224 * 224)
        .into_iter()
        .map(|u| (2.0 * u - 1.0) as f32)
        .collect();
    RgbTensor {
        height: 224,
        width: 224,
        data,
    }
}

/// Element-wise `|a - b| <= 1e-3 * max|b| + 1e-4`.
fn assert_close(got: &[f32], want: &[f32]) {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0f32, |m, v| m.max(v.abs()));
    let tol = 1e-3 * scale + 1e-4;
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol, "index {i}: got {g}, want {w}, tol {tol}");
    }
}

#[test]
fn dense_cnn_matches_reference() {
    let enc = ImageEncoder::load(
        &EncoderSpec::densenet121(WeightSource::Procedural),
        &LoadOptions::default(),
    )
    .unwrap();
    let e = enc.encode_image(&reference_image()).unwrap();
    assert_eq!((e.dim(), e.modality()), (1024, Modality::Image));
    assert_close(e.values(), &floats(&fixtures()["densenet121"]["pooled"]));
}

#[test]
fn residual_cnn_matches_reference() {
    let enc = ImageEncoder::load(
        &EncoderSpec::resnet50(WeightSource::Procedural),
        &LoadOptions::default(),
    )
    .unwrap();
    let e = enc.encode_image(&reference_image()).unwrap();
    assert_eq!(e.dim(), 2048);
    assert_close(e.values(), &floats(&fixtures()["resnet50"]["pooled"]));
}

#[test]
fn transformer_cls_matches_reference_and_ignores_padding() {
    let fx = fixtures();
    let ids: Vec<u32> = fx["bert_base_cased"]["token_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as u32)
        .collect();
    let enc = TextEncoder::load(
        &EncoderSpec::bert_base_cased(WeightSource::Procedural),
        &LoadOptions::default(),
    )
    .unwrap();
    let input = TextEncoding {
        segment_ids: vec![0; ids.len()],
        token_ids: ids,
    };
    let e = enc.encode_text(&input).unwrap();
    assert_eq!((e.dim(), e.modality()), (768, Modality::Text));
    let want = floats(&fx["bert_base_cased"]["cls"]);
    assert_close(e.values(), &want);

    // a longer sibling forces padding of the reference sequence
    let mut longer = input.clone();
    longer.token_ids.splice(1..1, [1141, 1674, 1136, 1141, 1674]);
    longer.segment_ids = vec![0; longer.token_ids.len()];
    let batch = enc.forward(&[input, longer]).unwrap();
    let row: Vec<f32> = batch.get(0).unwrap().to_vec1().unwrap();
    assert_close(&row, &want);
}

#[test]
fn transformer_output_is_deterministic_for_text() {
    let enc = TextEncoder::load(
        &EncoderSpec::bert_base_cased(WeightSource::Procedural),
        &LoadOptions::default(),
    )
    .unwrap();
    let t = enc.tokenize("one does not simply", 128).unwrap();
    let a = enc.encode_text(&t).unwrap();
    assert_eq!(a.dim(), 768);
    assert_eq!(a, enc.encode_text(&t).unwrap());
}
