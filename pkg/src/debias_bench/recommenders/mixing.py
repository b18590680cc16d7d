"""Merge a coarse auxiliary dataset into the main one (the MD-MF baseline)."""

from __future__ import annotations

import numpy as np

from ..core import ObservedDataset, QuantizationSpec
from ..quantization import quantize

SCHEMES = ("endpoint", "cond-mean")


def upscale_values(main: ObservedDataset, aux_values: np.ndarray, aux_spec: QuantizationSpec,
                   scheme: str) -> np.ndarray:
    """Map auxiliary values onto the main dataset's level set.

    ``endpoint`` snaps each auxiliary value to the nearest main level (binary
    0 -> 0, 1 -> 1).  ``cond-mean`` replaces an auxiliary value ``a`` by the
    mean of the main values that quantize to ``a`` under ``aux_spec``, then
    snaps that mean to the main levels.
    """
    aux_values = np.asarray(aux_values, dtype=np.float64)
    if scheme == "endpoint":
        return quantize(aux_values, main.quantization)
    if scheme != "cond-mean":
        raise ValueError(f"unknown mix scheme {scheme!r}; expected one of {SCHEMES}")
    coarse = quantize(main.values, aux_spec)
    out = aux_values.copy()
    for level in np.unique(aux_values):
        same = main.values[coarse == level]
        if len(same):
            out[aux_values == level] = same.mean()
    return quantize(out, main.quantization)


def mix_datasets(main: ObservedDataset, aux: ObservedDataset, scheme: str = "endpoint") -> ObservedDataset:
    if main.shape != aux.shape:
        raise ValueError(f"dataset shapes differ: {main.shape} vs {aux.shape}")
    if len(aux) == 0:
        return main
    fresh = ~np.isin(aux.flat_index, main.flat_index)
    add_vals = upscale_values(main, aux.values[fresh], aux.quantization, scheme)
    return ObservedDataset(
        main.num_users, main.num_items,
        np.concatenate([main.users, aux.users[fresh]]),
        np.concatenate([main.items, aux.items[fresh]]),
        np.concatenate([main.values, add_vals]),
        main.quantization,
    )
