"""File formats: flow/packet/timeline CSVs and the model / PL-family JSON files.

All writers go through a temporary file and ``os.replace`` so readers never
see a half-written artifact.  Floats are written with ``repr`` so output is
byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .detector import WindowVerdict
from .features import FeatureBins, FeatureModel, IpClusterModel, Quantizer
from .flow_model import Flow, Packet
from .measures import ModelBasedMeasure, ModelFreeMeasure
from .pl_learning import MODEL_BASED, MODEL_FREE, PLFamily, Provenance

FLOW_HEADER = ["start_time", "ip", "size_bytes", "duration_s"]
PACKET_HEADER = ["start_time", "ip", "size_bytes"]
TIMELINE_HEADER = [
    "window_index", "start_time", "flow_count",
    "div_free", "argmin_free", "alarm_free",
    "div_based", "argmin_based", "alarm_based",
]


class FormatError(ValueError):
    pass


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, data):
    atomic_write_text(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _read_rows(path, header: Sequence[str]) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: missing header row")
        missing = [c for c in header if c not in reader.fieldnames]
        if missing:
            raise FormatError(f"{path}: missing column(s) {missing}")
        return list(reader)


def write_flows(path, flows: Sequence[Flow]):
    atomic_write_text(
        path, _csv_text(FLOW_HEADER, ((f.start_time, f.user_ip, f.size_bytes, f.duration_s) for f in flows))
    )


def read_flows(path) -> list[Flow]:
    flows = []
    for line, row in enumerate(_read_rows(path, FLOW_HEADER), start=2):
        try:
            flows.append(Flow(row["ip"], float(row["size_bytes"]), float(row["duration_s"]), float(row["start_time"])))
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{line}: {exc}") from exc
    flows.sort(key=lambda f: f.start_time)
    return flows


def write_packets(path, packets: Sequence[Packet]):
    atomic_write_text(path, _csv_text(PACKET_HEADER, ((p.start_time, p.user_ip, p.size_bytes) for p in packets)))


def read_packets(path) -> list[Packet]:
    packets = []
    for line, row in enumerate(_read_rows(path, PACKET_HEADER), start=2):
        try:
            packets.append(Packet(row["ip"], float(row["size_bytes"]), float(row["start_time"])))
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{line}: {exc}") from exc
    return packets


# -- feature model -----------------------------------------------------------

def feature_model_to_json(model: FeatureModel) -> dict:
    q = model.quantizer
    return {
        "k": model.clusters.k,
        "seed": model.clusters.seed,
        "centers": model.clusters.centers.tolist(),
        "bins": {
            name: {"levels": b.levels, "lo": b.lo, "hi": b.hi}
            for name, b in (("distance", q.distance), ("size", q.size), ("duration", q.duration))
        },
        "alphabet_sizes": list(model.alphabet.sizes),
    }


def feature_model_from_json(data: dict) -> FeatureModel:
    try:
        clusters = IpClusterModel(int(data["k"]), np.asarray(data["centers"], dtype=float), int(data.get("seed", 0)))
        bins = {name: FeatureBins(int(b["levels"]), float(b["lo"]), float(b["hi"])) for name, b in data["bins"].items()}
        quantizer = Quantizer(bins["distance"], bins["size"], bins["duration"], clusters.k)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed feature model: {exc}") from exc
    model = FeatureModel(clusters, quantizer)
    if "alphabet_sizes" in data and tuple(data["alphabet_sizes"]) != model.alphabet.sizes:
        raise FormatError("alphabet sizes disagree with the stored bins")
    return model


# -- PL families ---------------------------------------------------------------

def family_to_json(family: PLFamily) -> dict:
    entries = []
    for pl, prov, cv in zip(family.pls, family.provenance, family.c_v):
        entry = {
            "provenance": {
                "source": prov.source, "t_d": prov.t_d, "t_p": prov.t_p,
                "segment": prov.segment, "tod_start": prov.tod_start, "tod_end": prov.tod_end,
            },
            "c_v": cv,
            "support_count": pl.support_count,
        }
        if family.kind == MODEL_FREE:
            entry["probs"] = pl.probs.tolist()
        else:
            entry["pair_probs"] = pl.pair_probs.tolist()
        entries.append(entry)
    return {"kind": family.kind, "alphabet_sizes": list(family.alphabet_sizes), "pls": entries}


def family_from_json(data: dict) -> PLFamily:
    try:
        kind = data["kind"]
        pls, provs, cvs = [], [], []
        for e in data["pls"]:
            if kind == MODEL_FREE:
                pls.append(ModelFreeMeasure(np.asarray(e["probs"], dtype=float), int(e["support_count"])))
            else:
                pls.append(ModelBasedMeasure(np.asarray(e["pair_probs"], dtype=float), int(e["support_count"])))
            provs.append(Provenance(**e["provenance"]))
            cvs.append(e.get("c_v"))
        return PLFamily(kind, pls, provs, tuple(data["alphabet_sizes"]), cvs)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed PL family: {exc}") from exc


def _maybe_family(family: Optional[PLFamily]):
    return None if family is None else family_to_json(family)


def write_families(path, robust: tuple[Optional[PLFamily], Optional[PLFamily]],
                   vanilla: Optional[tuple[PLFamily, PLFamily]] = None):
    """Robust families (``None`` for one that was not refined) plus optional vanilla PLs."""
    data = {"free": _maybe_family(robust[0]), "based": _maybe_family(robust[1])}
    if vanilla is not None:
        data["vanilla"] = {"free": family_to_json(vanilla[0]), "based": family_to_json(vanilla[1])}
    write_json(path, data)


def read_families(path, vanilla: bool = False) -> tuple[Optional[PLFamily], Optional[PLFamily]]:
    data = read_json(path)
    if vanilla:
        if "vanilla" not in data:
            raise FormatError(f"{path} holds no vanilla PLs")
        data = data["vanilla"]
    try:
        return tuple(None if data[k] is None else family_from_json(data[k]) for k in ("free", "based"))
    except KeyError as exc:
        raise FormatError(f"{path}: missing family {exc}") from exc


# -- timeline ----------------------------------------------------------------

def write_timeline(path, verdicts: Sequence[WindowVerdict]):
    rows = (
        (v.index, v.start_time, v.flow_count, v.div_free, v.argmin_free, v.alarm_free,
         v.div_based, v.argmin_based, v.alarm_based)
        for v in verdicts
    )
    atomic_write_text(path, _csv_text(TIMELINE_HEADER, rows))


def read_timeline(path) -> list[WindowVerdict]:
    def opt(v, cast):
        return None if v == "" else cast(v)

    out = []
    for line, row in enumerate(_read_rows(path, TIMELINE_HEADER), start=2):
        try:
            out.append(
                WindowVerdict(
                    index=int(row["window_index"]),
                    start_time=float(row["start_time"]),
                    flow_count=int(row["flow_count"]),
                    div_free=opt(row["div_free"], float),
                    argmin_free=opt(row["argmin_free"], int),
                    alarm_free=row["alarm_free"] == "1",
                    div_based=opt(row["div_based"], float),
                    argmin_based=opt(row["argmin_based"], int),
                    alarm_based=row["alarm_based"] == "1",
                )
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{line}: {exc}") from exc
    return out
