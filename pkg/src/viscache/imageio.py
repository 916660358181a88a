"""PFM / PPM writers and the RMSE / MAE error metrics.

PFM stores linear float32 RGB (rows bottom-to-top, little endian), which
round-trips losslessly; PPM is an 8-bit gamma-encoded preview.
"""

from __future__ import annotations

import numpy as np

PPM_GAMMA = 2.2


def _check_image(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def write_pfm(image: np.ndarray, path) -> None:
    """Color PFM: header 'PF\\n<w> <h>\\n-1.0\\n', rows bottom-to-top, LE float32."""
    img = _check_image(image).astype("<f4")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(img[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        def line():
            out = b""
            while (c := f.read(1)) not in (b"\n", b""):
                out += c
            return out.decode("ascii")

        magic = line()
        if magic != "PF":
            raise ValueError(f"{path}: unsupported PFM magic {magic!r}")
        w, h = (int(v) for v in line().split())
        scale = float(line())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(w * h * 3 * 4), dtype=dtype)
    return data.reshape(h, w, 3)[::-1].astype(np.float32)


def write_ppm(image: np.ndarray, path) -> None:
    """8-bit P6 preview: values clamped to [0,1], gamma 1/2.2 encoded."""
    img = _check_image(image)
    encoded = np.clip(img, 0.0, 1.0) ** (1.0 / PPM_GAMMA)
    bytes8 = np.minimum(np.floor(encoded * 255.0 + 0.5), 255).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(bytes8.tobytes())


def rmse(image: np.ndarray, reference: np.ndarray) -> float:
    a, b = np.asarray(image), np.asarray(reference)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt(np.mean(d * d)))


def mae(image: np.ndarray, reference: np.ndarray) -> float:
    a, b = np.asarray(image), np.asarray(reference)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def metrics_row(frame: int, image: np.ndarray, reference: np.ndarray | None,
                seconds: float) -> str:
    """CSV row 'frame,rmse,mae,seconds'; empty error fields without a reference."""
    if reference is None:
        return f"{frame},,,{seconds:.6f}"
    return f"{frame},{rmse(image, reference):.8g},{mae(image, reference):.8g},{seconds:.6f}"


METRICS_HEADER = "frame,rmse,mae,seconds"
