"""Binary array formats shared across the pipeline.

Two formats live here:

* tensor records: a text manifest line ``name shape dtype byte_offset`` per
  tensor followed by a concatenated little-endian row-major payload. Used by
  checkpoints and codebook files.
* raw arrays: a single text header ``ndim d0 d1 ... dn`` followed by a
  little-endian float32 payload. Used for video clips and cached embeddings.
"""

import numpy as np

_DTYPE_TOKENS = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_TOKEN_FOR = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def _shape_token(shape) -> str:
    if len(shape) == 0:
        raise ValueError("0-d tensors are not serializable")
    return "x".join(str(int(d)) for d in shape)


def _parse_shape(token: str):
    return tuple(int(d) for d in token.split("x"))


def pack_tensors(named):
    """Serialize (name, array) pairs -> (manifest lines, payload bytes)."""
    lines = []
    chunks = []
    offset = 0
    for name, arr in named:
        if " " in name:
            raise ValueError(f"tensor name may not contain spaces: {name!r}")
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _TOKEN_FOR:
            raise ValueError(f"unsupported dtype {arr.dtype} for tensor {name}")
        token = _TOKEN_FOR[arr.dtype]
        raw = arr.astype(_DTYPE_TOKENS[token], copy=False).tobytes()
        lines.append(f"{name} {_shape_token(arr.shape)} {token} {offset}")
        chunks.append(raw)
        offset += len(raw)
    return lines, b"".join(chunks)


def unpack_tensors(lines, payload: bytes) -> dict:
    """Inverse of pack_tensors; arrays come back in native byte order."""
    out = {}
    for line in lines:
        fields = line.split()
        if len(fields) != 4:
            raise ValueError(f"malformed tensor manifest line: {line!r}")
        name, shape_tok, dtype_tok, off_tok = fields
        if dtype_tok not in _DTYPE_TOKENS:
            raise ValueError(f"unknown dtype token {dtype_tok!r}")
        shape = _parse_shape(shape_tok)
        dt = _DTYPE_TOKENS[dtype_tok]
        offset = int(off_tok)
        count = int(np.prod(shape))
        end = offset + count * dt.itemsize
        if end > len(payload):
            raise ValueError(f"payload truncated for tensor {name}")
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=offset)
        out[name] = arr.reshape(shape).astype(dt.newbyteorder("="), copy=True)
    return out


def write_raw_array(path, arr) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = " ".join([str(arr.ndim)] + [str(d) for d in arr.shape])
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        fh.write(arr.tobytes())


def read_raw_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if not header:
            raise ValueError(f"empty raw-array header in {path}")
        ndim = int(header[0])
        if len(header) != ndim + 1:
            raise ValueError(f"bad raw-array header in {path}")
        shape = tuple(int(d) for d in header[1:])
        count = int(np.prod(shape)) if shape else 1
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise ValueError(f"raw-array payload truncated in {path}")
        return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
