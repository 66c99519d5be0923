"""Grid container format and small-image mask loading.

A container file is a single UTF-8 JSON header line terminated by a
newline, followed by raw little-endian 32-bit IEEE-754 floats.  The header
carries {magic: "POGRID1", d, dims: [nx, ny(, nz), no], h, origin,
sphere: {kind, k_or_N}, quantity, variant?, epsilon?, xi?}.  Payload index
order: orientation fastest, then x, then y (, then z).
"""

from __future__ import annotations

import json

import numpy as np

from .errors import FormatError
from .grid import Domain, SpatialGrid
from .sphere import build_sphere

MAGIC = "POGRID1"


def _disk_order(d: int) -> tuple:
    # in-memory axes are (x, y[, z], o); on disk o runs fastest, then x, y, z
    return (1, 0, 2) if d == 2 else (2, 1, 0, 3)


def write_grid_file(path, domain: Domain, values: np.ndarray, quantity: str,
                    extra: dict | None = None) -> None:
    d = domain.d
    dims = list(domain.grid.dims) + [domain.n_orient]
    header = {
        "magic": MAGIC,
        "d": d,
        "dims": dims,
        "h": domain.grid.h,
        "origin": list(map(float, domain.grid.origin)),
        "sphere": {"kind": domain.sphere.kind, "k_or_N": domain.sphere.param},
        "quantity": quantity,
    }
    if extra:
        header.update(extra)
    values = np.asarray(values)
    if values.shape != domain.shape:
        raise FormatError(f"values shape {values.shape} != domain shape {domain.shape}")
    payload = values.transpose(_disk_order(d)).astype("<f4")
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        f.write(np.ascontiguousarray(payload).tobytes())


def read_grid_file(path) -> tuple[Domain, np.ndarray, dict]:
    """Returns (domain, values, header).  Values are float64, domain-shaped."""
    with open(path, "rb") as f:
        line = f.readline()
        if not line.endswith(b"\n"):
            raise FormatError("missing newline-terminated header", offset=len(line))
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"unreadable header: {e}", offset=0)
        if not isinstance(header, dict) or header.get("magic") != MAGIC:
            raise FormatError(f"bad magic, expected {MAGIC!r}", offset=0)
        for key in ("d", "dims", "h", "origin", "sphere", "quantity"):
            if key not in header:
                raise FormatError(f"header missing field {key!r}", offset=0)
        d = header["d"]
        dims = header["dims"]
        if d not in (2, 3) or len(dims) != d + 1:
            raise FormatError(f"dims {dims} inconsistent with d={d}", offset=0)
        payload = f.read()
    expected = int(np.prod(dims))
    got = len(payload) // 4
    if len(payload) % 4 != 0 or got != expected:
        raise FormatError(
            f"payload holds {got} float32 values but header dims {dims} "
            f"require {expected}",
            offset=len(line),
        )
    sphere = build_sphere(header["sphere"]["kind"], header["sphere"]["k_or_N"])
    if sphere.n_vertices != dims[-1]:
        raise FormatError(
            f"sphere {header['sphere']} yields {sphere.n_vertices} vertices, "
            f"header dims say {dims[-1]}",
            offset=0,
        )
    grid = SpatialGrid(tuple(dims[:-1]), float(header["h"]),
                       np.asarray(header["origin"], float))
    domain = Domain(grid, sphere)
    disk_shape = tuple(np.array(domain.shape)[list(_disk_order(d))])
    values = np.frombuffer(payload, dtype="<f4").reshape(disk_shape)
    values = values.transpose(np.argsort(_disk_order(d))).astype(float)
    return domain, values, header


def read_pgm_mask(path) -> np.ndarray:
    """Binary wall mask from a PGM/PBM image: True where blocked (black).

    Supports P1/P2 (ASCII) and P4/P5 (binary).  The image row-major layout
    maps to mask[x, y] with y flipped so the image's top row has the
    largest y.
    """
    with open(path, "rb") as f:
        data = f.read()

    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated image header", offset=start)
        return data[start:pos]

    magic = token()
    if magic not in (b"P1", b"P2", b"P4", b"P5"):
        raise FormatError(f"unsupported image magic {magic!r}", offset=0)
    width = int(token())
    height = int(token())
    maxval = 1
    if magic in (b"P2", b"P5"):
        maxval = int(token())
    img = np.zeros((height, width), dtype=np.uint16)
    if magic in (b"P1", b"P2"):
        vals = data[pos:].split()
        if len(vals) < width * height:
            raise FormatError(
                f"expected {width * height} pixels, found {len(vals)}", offset=pos
            )
        img = np.array(vals[: width * height], dtype=np.uint16).reshape(height, width)
    else:
        pos += 1  # single whitespace after header
        if magic == b"P5":
            need = width * height * (1 if maxval < 256 else 2)
            if len(data) - pos < need:
                raise FormatError("truncated binary payload", offset=pos)
            dt = np.uint8 if maxval < 256 else ">u2"
            img = np.frombuffer(data[pos : pos + need], dtype=dt).reshape(
                height, width
            ).astype(np.uint16)
        else:  # P4: packed bits, 1 = black
            rowbytes = (width + 7) // 8
            need = rowbytes * height
            if len(data) - pos < need:
                raise FormatError("truncated binary payload", offset=pos)
            bits = np.unpackbits(
                np.frombuffer(data[pos : pos + need], dtype=np.uint8).reshape(
                    height, rowbytes
                ),
                axis=1,
            )[:, :width]
            blocked = bits.astype(bool)
            return np.ascontiguousarray(blocked[::-1].T)
    if magic == b"P1":
        blocked = img.astype(bool)           # 1 = black in PBM
    else:
        blocked = img < (maxval + 1) / 2     # dark half = wall
    return np.ascontiguousarray(blocked[::-1].T)


def write_pgm_mask(path, blocked: np.ndarray) -> None:
    """Inverse of read_pgm_mask, as binary P5 (walls black)."""
    blocked = np.asarray(blocked, bool)
    img = np.where(blocked.T[::-1], 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        f.write(img.tobytes())
