"""Deterministic array bundles: an npz-compatible zip with fixed timestamps."""
import io
import json
import zipfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import ArtifactError

FORMAT = "rgmsfem-bundle"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _canonical(a):
    a = np.asarray(a)
    if a.dtype.kind == "f":
        return np.ascontiguousarray(a, dtype="<f8")
    if a.dtype.kind in "iub":
        return np.ascontiguousarray(a, dtype="<i8")
    raise ArtifactError(f"unsupported array dtype {a.dtype}")


def save_bundle(path, header, arrays):
    """Write ``header`` (JSON-able) and named arrays; identical inputs give identical bytes."""
    path = Path(path)
    meta = {"format": FORMAT, "version": VERSION, **header}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            info = zipfile.ZipInfo("header.json", _EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
            for name in sorted(arrays):
                buf = io.BytesIO()
                np.lib.format.write_array(buf, _canonical(arrays[name]), allow_pickle=False)
                info = zipfile.ZipInfo(name + ".npy", _EPOCH)
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, buf.getvalue())
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def load_bundle(path):
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(
                        io.BytesIO(zf.read(name)), allow_pickle=False)
    except (OSError, KeyError, zipfile.BadZipFile, ValueError) as exc:
        raise ArtifactError(f"cannot read bundle {path}: {exc}") from exc
    if header.get("format") != FORMAT:
        raise ArtifactError(f"{path} is not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise ArtifactError(f"{path} has version {header.get('version')}, expected {VERSION}")
    return header, arrays


def pack_sparse(prefix, A, out):
    A = sp.csr_matrix(A)
    out[prefix + "/data"] = A.data
    out[prefix + "/indices"] = A.indices
    out[prefix + "/indptr"] = A.indptr
    out[prefix + "/shape"] = np.array(A.shape)


def unpack_sparse(prefix, arrays):
    try:
        shape = tuple(int(s) for s in arrays[prefix + "/shape"])
        return sp.csr_matrix((arrays[prefix + "/data"], arrays[prefix + "/indices"],
                              arrays[prefix + "/indptr"]), shape=shape)
    except KeyError as exc:
        raise ArtifactError(f"bundle is missing {exc}") from None


def pack_list(prefix, items, out):
    """Store a list of arrays of varying shape under numbered keys."""
    out[prefix + "/count"] = np.array([len(items)])
    for j, a in enumerate(items):
        out[f"{prefix}/{j:05d}"] = a


def unpack_list(prefix, arrays):
    try:
        n = int(arrays[prefix + "/count"][0])
        return [arrays[f"{prefix}/{j:05d}"] for j in range(n)]
    except KeyError as exc:
        raise ArtifactError(f"bundle is missing {exc}") from None
