"""Versioned flat-binary checkpoints: JSON text header + raw array bytes."""

import json

import numpy as np

MAGIC = b"LTCK1\n"
SEPARATOR = b"---\n"


def save_checkpoint(path, meta, arrays):
    """Write named arrays with a JSON header.

    ``meta`` must be JSON-serializable; array order in the file follows the
    insertion order of the ``arrays`` dict.
    """
    manifest = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        manifest.append({"name": name, "shape": list(arr.shape),
                         "dtype": str(arr.dtype)})
    header = {"meta": meta, "arrays": manifest}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(SEPARATOR)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path):
    """Read back (meta, arrays-dict); inverse of :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        header = json.loads(fh.readline().decode())
        if fh.read(len(SEPARATOR)) != SEPARATOR:
            raise ValueError(f"{path} has a corrupt header")
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(
                entry["shape"]).copy()
    return header["meta"], arrays
