"""JSON channel and input files with canonical serialization.

Channel file::

    {"alphabet": 2, "dims": [2, 1], "outputs": [[[[1.0, 0.0], [0.0, 0.0]], ...], ...]}

Each matrix is a list of rows and each entry is ``[re, im]``. A ``dims`` with a
single entry denotes a plain cq channel. A compound file is a list of channel
objects, or ``{"members": [...], "net": {"tau": t, "seed": s}}`` when the set
came from a net. Input files hold ``{"l": 1, "q": [...], "r": [[...]], "t": [[...]]}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from qbclab.channels import CompoundSet, CqChannel, CqqBroadcastChannel
from qbclab.errors import QbclabError, ValidationError
from qbclab.linalg import validate_state
from qbclab.regions import FactorizedInput


class SpecError(ValidationError):
    """A channel or input file is malformed or violates an invariant; the message names the entry."""


def canonical_dumps(obj) -> str:
    """Sorted keys, no insignificant whitespace, shortest round-trip float repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def _load_json(path) -> object:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from exc


def _matrix(entry, where: str) -> np.ndarray:
    try:
        arr = np.asarray(entry, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{where}: matrix entries must be [re, im] number pairs") from exc
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise SpecError(f"{where}: expected a square matrix of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def channel_from_dict(obj, where: str = "channel"):
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object with alphabet, dims, outputs")
    missing = {"alphabet", "dims", "outputs"} - set(obj)
    if missing:
        raise SpecError(f"{where}: missing field(s) {sorted(missing)}")
    outs = obj["outputs"]
    if not isinstance(outs, list) or len(outs) != obj["alphabet"]:
        raise SpecError(f"{where}.outputs: one output per letter required (alphabet={obj['alphabet']})")
    dims = [int(d) for d in obj["dims"]]
    mats = []
    for x, m in enumerate(outs):
        loc = f"{where}.outputs[{x}]"
        mat = _matrix(m, loc)
        if mat.shape[0] != int(np.prod(dims)):
            raise SpecError(f"{loc}: dimension {mat.shape[0]} does not match dims {dims}")
        try:
            validate_state(mat, name=loc)
        except QbclabError as exc:
            raise SpecError(str(exc)) from exc
        mats.append(mat)
    if len(dims) == 1:
        return CqChannel(np.array(mats))
    if len(dims) != 2:
        raise SpecError(f"{where}.dims: expected [d] or [d_B, d_E]")
    return CqqBroadcastChannel(np.array(mats), tuple(dims))


def channel_to_dict(ch) -> dict:
    dims = list(ch.dims) if isinstance(ch, CqqBroadcastChannel) else [ch.dim]
    # Adding 0.0 maps -0.0 to 0.0 so dumps are stable under a load/dump cycle.
    outs = [[[[float(z.real) + 0.0, float(z.imag) + 0.0] for z in row] for row in m] for m in ch.outputs]
    return {"alphabet": int(ch.alphabet_size), "dims": [int(d) for d in dims], "outputs": outs}


def compound_from_obj(obj, where: str = "channels") -> CompoundSet:
    net = None
    if isinstance(obj, dict) and "members" in obj:
        members, net = obj["members"], obj.get("net")
    elif isinstance(obj, dict):
        members = [obj]
    else:
        members = obj
    if not isinstance(members, list) or not members:
        raise SpecError(f"{where}: expected a nonempty list of channels")
    chans = tuple(channel_from_dict(m, f"{where}.members[{k}]") for k, m in enumerate(members))
    prov = {"kind": "literal"}
    if net is not None:
        if not isinstance(net, dict) or "tau" not in net:
            raise SpecError(f"{where}.net: expected an object with tau")
        prov = dict(net, kind="net")
    try:
        return CompoundSet(chans, prov)
    except QbclabError as exc:
        raise SpecError(f"{where}: {exc}") from exc


def compound_to_obj(compound: CompoundSet):
    members = [channel_to_dict(m) for m in compound.members]
    prov = compound.provenance or {}
    if prov.get("kind") == "net":
        net = {k: v for k, v in prov.items() if k in ("tau", "seed", "family", "budget")}
        return {"members": members, "net": net}
    return members


def load_compound(path) -> CompoundSet:
    return compound_from_obj(_load_json(path), str(path))


def dump_compound(compound: CompoundSet) -> str:
    return canonical_dumps(compound_to_obj(compound))


def input_from_obj(obj, where: str = "input") -> FactorizedInput:
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object with l, q, r, t")
    missing = {"q", "r", "t"} - set(obj)
    if missing:
        raise SpecError(f"{where}: missing field(s) {sorted(missing)}")
    try:
        return FactorizedInput(int(obj.get("l", 1)), obj["q"], obj["r"], obj["t"])
    except (QbclabError, ValueError, TypeError) as exc:
        raise SpecError(f"{where}: {exc}") from exc


def load_input(path) -> FactorizedInput:
    return input_from_obj(_load_json(path), str(path))


def parse_specs(channels_path, input_path=None):
    """Load and validate a compound file and an optional input file."""
    compound = load_compound(channels_path)
    inp = load_input(input_path) if input_path is not None else None
    return compound, inp
