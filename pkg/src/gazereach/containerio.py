"""Versioned mixed text/binary container: key-value header plus named binary
array blocks. Used for fitted-model files; the demonstration format in
`dataset` follows the same header-then-blocks layout with per-frame records."""

from __future__ import annotations

import os
import tempfile

import numpy as np

FORMAT_NAME = "gazereach-container"
FORMAT_VERSION = 1

_DTYPES = {"f8": "<f8", "f4": "<f4", "i8": "<i8", "i4": "<i4"}


class ContainerError(ValueError):
    pass


def _check_token(s: str) -> str:
    s = str(s)
    if not s or any(c.isspace() for c in s):
        raise ContainerError(f"invalid token {s!r}: must be non-empty, no whitespace")
    return s


def atomic_write(path: str, data: bytes) -> None:
    """Write via temp file + rename so readers never see partial files."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path: str, header: dict[str, str],
                    arrays: dict[str, np.ndarray]) -> None:
    out = bytearray()
    out += f"{FORMAT_NAME} {FORMAT_VERSION}\n".encode()
    for k, v in header.items():
        out += f"{_check_token(k)} {_check_token(v)}\n".encode()
    out += f"arrays {len(arrays)}\n".encode()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        code = {"float64": "f8", "float32": "f4", "int64": "i8", "int32": "i4"}.get(arr.dtype.name)
        if code is None:
            raise ContainerError(f"unsupported dtype {arr.dtype} for array {name!r}")
        raw = arr.astype(_DTYPES[code]).tobytes()
        dims = " ".join(str(d) for d in arr.shape)
        out += f"array {_check_token(name)} {code} {arr.ndim} {dims} {len(raw)}\n".encode()
        out += raw
        out += b"\n"
    out += b"end\n"
    atomic_write(path, bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def line(self, what: str) -> str:
        nl = self.data.find(b"\n", self.pos)
        if nl < 0:
            raise ContainerError(f"unexpected end of input reading {what}")
        s = self.data[self.pos:nl].decode("utf-8", errors="replace")
        self.pos = nl + 1
        return s

    def raw(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError(f"unexpected end of input reading {what}")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b


def read_container(path: str) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        r = _Reader(f.read())
    magic = r.line("magic").split()
    if len(magic) != 2 or magic[0] != FORMAT_NAME:
        raise ContainerError("not a container file")
    if magic[1] != str(FORMAT_VERSION):
        raise ContainerError(f"unsupported container version {magic[1]}")
    header: dict[str, str] = {}
    while True:
        line = r.line("header")
        parts = line.split()
        if parts and parts[0] == "arrays":
            if len(parts) != 2 or not parts[1].isdigit():
                raise ContainerError("malformed field: arrays")
            n_arrays = int(parts[1])
            break
        if len(parts) != 2:
            raise ContainerError(f"malformed field: {line!r}")
        header[parts[0]] = parts[1]
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        parts = r.line("array record").split()
        if len(parts) < 5 or parts[0] != "array":
            raise ContainerError(f"malformed field: array record {parts!r}")
        name, code, ndim = parts[1], parts[2], int(parts[3])
        if code not in _DTYPES:
            raise ContainerError(f"malformed field: dtype {code!r}")
        if len(parts) != 4 + ndim + 1:
            raise ContainerError(f"malformed field: array dims for {name!r}")
        shape = tuple(int(d) for d in parts[4:4 + ndim])
        nbytes = int(parts[4 + ndim])
        raw = r.raw(nbytes, f"array {name!r}")
        if r.raw(1, "array terminator") != b"\n":
            raise ContainerError(f"malformed field: array {name!r} terminator")
        arrays[name] = np.frombuffer(raw, dtype=_DTYPES[code]).reshape(shape).copy()
    if r.line("trailer") != "end":
        raise ContainerError("malformed field: trailer")
    return header, arrays
