"""Freeze reference encoder outputs for the Rust parity tests.

Weights are filled procedurally (splitmix64 keyed by the FNV-1a hash of each
parameter name), so the Rust side can rebuild the exact same tensors without
shipping any weight files. Outputs are written to
crates/core/tests/fixtures/reference_encoders.json.
"""

import json
import pathlib

import numpy as np
import torch
import torch.nn.functional as F
import torchvision
from transformers import BertConfig, BertModel

MASK64 = (1 << 64) - 1


def fnv1a64(name: str) -> int:
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def unit_uniform(name: str, n: int) -> np.ndarray:
    seed = np.uint64(fnv1a64(name))
    with np.errstate(over="ignore"):
        idx = seed + np.arange(n, dtype=np.uint64)
    bits = splitmix64(idx) >> np.uint64(40)
    return bits.astype(np.float64) / float(1 << 24)


def procedural(name: str, shape) -> np.ndarray:
    n = int(np.prod(shape)) if len(shape) else 1
    u = unit_uniform(name, n)
    v = 2.0 * u - 1.0
    if name.endswith("running_var"):
        vals = 1.0 + 0.5 * u
    elif name.endswith("running_mean"):
        vals = 0.1 * v
    elif len(shape) == 1 and name.endswith("weight"):
        vals = 1.0 + 0.1 * v
    elif len(shape) == 1:
        vals = 0.1 * v
    else:
        fan_in = n // shape[0]
        vals = v * np.sqrt(6.0 / fan_in)
    return vals.astype(np.float32).reshape(shape)


def fill(model):
    sd = model.state_dict()
    for name, t in sd.items():
        if name.endswith("num_batches_tracked") or t.dtype not in (torch.float32,):
            continue
        t.copy_(torch.from_numpy(procedural(name, tuple(t.shape))))
    model.eval()


def image_input(h, w):
    v = 2.0 * unit_uniform("input.image", 3 * h * w) - 1.0
    return torch.from_numpy(v.astype(np.float32).reshape(1, 3, h, w))


def main():
    torch.set_grad_enabled(False)
    out = {}

    x = image_input(224, 224)

    dn = torchvision.models.densenet121(weights=None)
    fill(dn)
    feats = F.relu(dn.features(x))
    out["densenet121"] = {
        "input": "input.image 3x224x224",
        "feature_map_hw": list(feats.shape[2:]),
        "pooled": feats.amax(dim=(2, 3))[0].tolist(),
    }

    rn = torchvision.models.resnet50(weights=None)
    fill(rn)
    h = rn.maxpool(rn.relu(rn.bn1(rn.conv1(x))))
    h = rn.layer4(rn.layer3(rn.layer2(rn.layer1(h))))
    out["resnet50"] = {
        "input": "input.image 3x224x224",
        "feature_map_hw": list(h.shape[2:]),
        "pooled": h.amax(dim=(2, 3))[0].tolist(),
    }

    cfg = BertConfig(
        vocab_size=28996,
        hidden_size=768,
        num_hidden_layers=12,
        num_attention_heads=12,
        intermediate_size=3072,
        max_position_embeddings=512,
        type_vocab_size=2,
        hidden_act="gelu",
        layer_norm_eps=1e-12,
    )
    bert = BertModel(cfg, add_pooling_layer=False)
    fill(bert)
    ids = [101, 1141, 1674, 1136, 2566, 102]
    hs = bert(
        input_ids=torch.tensor([ids]),
        token_type_ids=torch.zeros(1, len(ids), dtype=torch.long),
        attention_mask=torch.ones(1, len(ids), dtype=torch.long),
    ).last_hidden_state
    out["bert_base_cased"] = {"token_ids": ids, "cls": hs[0, 0].tolist()}

    path = pathlib.Path(__file__).resolve().parents[1] / "crates/core/tests/fixtures/reference_encoders.json"
    path.write_text(json.dumps(out))
    print("wrote", path)


if __name__ == "__main__":
    main()
