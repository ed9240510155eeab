"""Checkpoint files: text manifest plus concatenated tensor payload.

A checkpoint stores every parameter, its Adam moments and step counters, the
optimization step, the mask-schedule step, and a snapshot of the run config,
so that save -> load -> save is byte-identical and training resumes exactly.
"""

from dataclasses import dataclass

from ..optim import ParameterSet
from ..serialize import pack_tensors, unpack_tensors

_MAGIC = "envasr-checkpoint 1"


@dataclass
class Checkpoint:
    step: int
    schedule_step: int
    config_lines: list
    tensors: dict
    adam_t: dict


def save_checkpoint(path, params: ParameterSet, step: int, schedule_step: int,
                    config_lines) -> None:
    named = []
    adam_lines = []
    for name in params.names():
        named.append((f"p.{name}", params[name].data))
        st = params.state(name)
        named.append((f"m.{name}", st.m))
        named.append((f"v.{name}", st.v))
        adam_lines.append(f"{name} {st.t}")
    manifest, payload = pack_tensors(named)
    head = [_MAGIC, f"step {int(step)}", f"schedule_step {int(schedule_step)}",
            f"adam_t {len(adam_lines)}", *adam_lines,
            f"config {len(list(config_lines))}", *config_lines,
            f"tensors {len(manifest)}", *manifest,
            f"payload {len(payload)}"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("utf-8"))
        fh.write(payload)


def _expect(line: str, tag: str) -> str:
    parts = line.split(" ", 1)
    if parts[0] != tag or len(parts) != 2:
        raise ValueError(f"corrupt checkpoint manifest: expected '{tag} ...', got {line!r}")
    return parts[1]


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        # manifest is everything before the payload; its length is declared
        head_end = 0
        lines = []
        while True:
            nl = raw.index(b"\n", head_end)
            line = raw[head_end:nl].decode("utf-8")
            lines.append(line)
            head_end = nl + 1
            if line.startswith("payload "):
                break
    except ValueError as exc:
        raise ValueError("corrupt checkpoint manifest: no payload marker") from exc
    it = iter(lines)
    if next(it) != _MAGIC:
        raise ValueError("corrupt checkpoint manifest: bad magic line")
    step = int(_expect(next(it), "step"))
    schedule_step = int(_expect(next(it), "schedule_step"))
    adam_t = {}
    for _ in range(int(_expect(next(it), "adam_t"))):
        name, t = next(it).rsplit(" ", 1)
        adam_t[name] = int(t)
    config_lines = [next(it) for _ in range(int(_expect(next(it), "config")))]
    manifest = [next(it) for _ in range(int(_expect(next(it), "tensors")))]
    payload_len = int(_expect(next(it), "payload"))
    payload = raw[head_end : head_end + payload_len]
    if len(payload) != payload_len:
        raise ValueError("corrupt checkpoint: truncated payload")
    tensors = unpack_tensors(manifest, payload)
    return Checkpoint(step, schedule_step, config_lines, tensors, adam_t)


def restore_params(params: ParameterSet, ckpt: Checkpoint) -> None:
    """Load parameters and optimizer state in place; shapes must match."""
    for name, p in params.items():
        for prefix, target in (("p", None), ("m", "m"), ("v", "v")):
            key = f"{prefix}.{name}"
            if key not in ckpt.tensors:
                raise ValueError(f"checkpoint is missing tensor {key}")
            arr = ckpt.tensors[key]
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {key}: checkpoint {arr.shape}, "
                    f"model {p.data.shape}")
            arr = arr.astype(p.data.dtype, copy=True)
            if target is None:
                p.data = arr
            else:
                setattr(params.state(name), target, arr)
        if name not in ckpt.adam_t:
            raise ValueError(f"checkpoint is missing Adam step for {name}")
        params.state(name).t = ckpt.adam_t[name]
        p.grad = None
    extra = [k for k in ckpt.tensors if k.split(".", 1)[1] not in params._params]
    if extra:
        raise ValueError(f"checkpoint holds tensors unknown to the model: {extra[:3]}")
