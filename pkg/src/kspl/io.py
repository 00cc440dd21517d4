"""Parameter snapshots and tabular outputs.

Snapshot layout (all little-endian): the 5 magic bytes ``KSPL1``, then L and
``l_0 ... l_L`` as int64, then theta as float64. A JSON sidecar next to the
binary repeats the architecture and carries free-form metadata.
"""
import csv
import json
import struct
from pathlib import Path

import numpy as np

from kspl.errors import ConfigError
from kspl.nn import FlatParams, NetworkArchitecture

MAGIC = b"KSPL1"


def save_params(params, path, metadata=None):
    path = Path(path)
    sizes = params.architecture.layer_sizes
    header = MAGIC + struct.pack(f"<{len(sizes) + 1}q", len(sizes) - 1, *sizes)
    path.write_bytes(header + params.theta.astype("<f8").tobytes())
    sidecar = {
        "format": MAGIC.decode(),
        "layer_sizes": list(sizes),
        "param_count": params.architecture.n_params,
        "metadata": metadata or {},
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_params(path):
    blob = Path(path).read_bytes()
    if blob[:5] != MAGIC:
        raise ConfigError(f"{path}: not a KSPL1 snapshot")
    (L,) = struct.unpack_from("<q", blob, 5)
    if L < 1 or 13 + 8 * (L + 1) > len(blob):
        raise ConfigError(f"{path}: corrupt header (L={L})")
    sizes = struct.unpack_from(f"<{L + 1}q", blob, 13)
    arch = NetworkArchitecture(sizes)
    start = 13 + 8 * (L + 1)
    theta = np.frombuffer(blob, dtype="<f8", offset=start)
    if theta.size != arch.n_params:
        raise ConfigError(f"{path}: {theta.size} parameters, header implies {arch.n_params}")
    return FlatParams(theta.astype(np.float64), arch)


def fmt(v):
    """Shortest round-tripping text for numbers; everything else via str."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return Path(path)
