"""Attention-map export.

For one candidate of one scene this writes three files: the context crop
the model actually saw (PPM), the context attention mask upsampled to the
crop size (PGM), and a JSON sidecar with the raw mask values plus the
predicted and ground-truth candidate indices.
"""

import json
import os

import numpy as np

from . import tensor as T
from .errors import UsageError
from .image import resize_nearest, to_bytes, write_pgm, write_ppm
from .losses import rank_candidates
from .scenes import context_crop, crop_to_input, relation_features, target_crop
from .tensor import no_grad
from .text import tokenize


def mask_to_image(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Upsample a [h,w] mask in [0,1] to [out_h,out_w] uint8 by
    nearest-neighbor; byte value is round(255*a)."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise UsageError(f"attention mask must be 2-D, got shape {mask.shape}")
    return to_bytes(resize_nearest(mask[None], out_h, out_w)[0])


def attention_maps(model, scene, vocab, delta: int) -> dict:
    """Run the model over every candidate of `scene` and collect the
    attention tensors plus the ranking. Assumes eval mode."""
    size = model.cfg.input_size
    with no_grad():
        lang = model.encode_language([tokenize(scene.instruction, vocab)])
        tps, cps, rels = [], [], []
        for idx in range(len(scene.candidates)):
            tps.append(crop_to_input(target_crop(scene, idx), size))
            cps.append(crop_to_input(context_crop(scene, idx, delta), size))
            rels.append(relation_features(scene, idx))
        context_px = np.stack(cps)
        vis = model.encode_visual(np.stack(tps), context_px, np.stack(rels))
        order, sims = rank_candidates(T.reshape(lang["zl"], (-1,)), vis["zv"])
    return {
        "order": order,
        "sims": sims,
        "context_px": context_px,
        # a_c may be None when the context branch is toggled off
        "a_c": None if vis["a_c"] is None else vis["a_c"].data,
        "a_t": None if vis["a_t"] is None else vis["a_t"].data,
        "a_l": None if lang["a_l"] is None else lang["a_l"].data,
    }


def export_attention(model, scene, vocab, candidate: int, delta: int,
                     out_dir) -> dict:
    """Write context.ppm, attention.pgm and attention.json for one
    candidate; returns the paths keyed by artifact name."""
    n = len(scene.candidates)
    if not (0 <= candidate < n):
        raise UsageError(
            f"candidate index {candidate} out of range for a scene with "
            f"{n} candidates")
    maps = attention_maps(model, scene, vocab, delta)
    if maps["a_c"] is None:
        raise UsageError("context attention is disabled in this model")
    size = model.cfg.input_size

    os.makedirs(out_dir, exist_ok=True)
    ppm_path = os.path.join(out_dir, "context.ppm")
    pgm_path = os.path.join(out_dir, "attention.pgm")
    json_path = os.path.join(out_dir, "attention.json")

    write_ppm(ppm_path, maps["context_px"][candidate])
    a_c = maps["a_c"][candidate, 0]
    write_pgm(pgm_path, mask_to_image(a_c, size, size))

    sidecar = {
        "candidate": candidate,
        "predicted_index": int(maps["order"][0]),
        "target_index": int(scene.target_index),
        "delta": int(delta),
        "similarities": [float(s) for s in maps["sims"]],
        "a_c": a_c.tolist(),
        "a_t": maps["a_t"][candidate].tolist(),
        "a_l": maps["a_l"][0].tolist(),
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    return {"context": ppm_path, "attention": pgm_path, "sidecar": json_path}
