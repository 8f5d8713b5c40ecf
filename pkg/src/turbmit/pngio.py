"""8-bit PNG <-> unit-interval float frame conversion.

Frames are channel-first float arrays with values in [0, 1]; 3-channel RGB
is the common case, single-channel grayscale is accepted everywhere.
"""

import os

import numpy as np
from PIL import Image


def to_uint8(frame):
    """Quantize a [0, 1] float frame (C,H,W) to uint8."""
    arr = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    return np.round(arr * 255.0).astype(np.uint8)


def from_uint8(arr):
    """Dequantize uint8 (C,H,W) back to float32 in [0, 1]."""
    return np.asarray(arr, dtype=np.float32) / 255.0


def save_png(path, frame):
    """Write a (C,H,W) or (H,W) unit-interval frame as an 8-bit PNG."""
    arr = to_uint8(frame)
    if arr.ndim == 2:
        img = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[0] == 1:
        img = Image.fromarray(arr[0], mode="L")
    elif arr.ndim == 3 and arr.shape[0] == 3:
        img = Image.fromarray(np.transpose(arr, (1, 2, 0)), mode="RGB")
    else:
        raise ValueError(f"expected (H,W), (1,H,W) or (3,H,W) frame, got {arr.shape}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    img.save(path, format="PNG")


def load_png(path):
    """Read a PNG into a (C,H,W) float32 frame in [0, 1].

    Grayscale files come back as (1,H,W); everything else is converted to RGB.
    """
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.uint8)[None, :, :]
        else:
            arr = np.transpose(np.asarray(img.convert("RGB"), dtype=np.uint8), (2, 0, 1))
    return from_uint8(arr)


def list_pngs(directory):
    """Sorted PNG filenames directly inside `directory`."""
    names = [n for n in os.listdir(directory) if n.lower().endswith(".png")]
    return sorted(names)
