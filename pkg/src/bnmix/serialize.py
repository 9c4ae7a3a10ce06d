"""Artifact formats: networks, experts, datasets, solutions, archives, metrics.

Structured artifacts are JSON; tabular ones are comma-separated text whose
first line is a comment carrying the seed and config hash. Every artifact
embeds both so results stay traceable to the run that produced them.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .datagen import ExpertNetwork, GroundTruthNetwork
from .discretize import RawDataset
from .model import CONTINUOUS, DISCRETE, Dag, Genotype, VariableMeta

METRICS_COLUMNS = [
    "network_id",
    "algorithm",
    "n_samples",
    "accuracy",
    "sensitivity",
    "kl",
    "fitness",
    "wall_time_s",
    "evaluations",
]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _stamp(seed: int, chash: str) -> dict:
    return {"seed": int(seed), "config_hash": chash}


def _meta_to_json(meta) -> list[dict]:
    out = []
    for m in meta:
        if m.is_continuous:
            out.append({"name": m.name, "kind": CONTINUOUS, "range": list(m.raw_range)})
        else:
            out.append({"name": m.name, "kind": DISCRETE, "cardinality": m.cardinality})
    return out


def _meta_from_json(items) -> tuple[VariableMeta, ...]:
    metas = []
    for it in items:
        if it["kind"] == CONTINUOUS:
            metas.append(VariableMeta(it["name"], CONTINUOUS, raw_range=tuple(it["range"])))
        else:
            metas.append(VariableMeta(it["name"], DISCRETE, cardinality=it["cardinality"]))
    return tuple(metas)


def save_network(net: GroundTruthNetwork, path, seed: int, chash: str) -> None:
    doc = {
        **_stamp(seed, chash),
        "kind": net.kind,
        "variables": _meta_to_json(net.meta),
        "levels": [int(x) for x in net.levels],
        "edges": sorted([int(p), int(v)] for p, v in net.dag.edge_set()),
        "cpts": {str(v): net.cpts[v].tolist() for v in range(net.n_vars)},
        "ranges": {str(v): r.tolist() for v, r in net.ranges.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_network(path) -> GroundTruthNetwork:
    doc = json.loads(Path(path).read_text())
    meta = _meta_from_json(doc["variables"])
    n = len(meta)
    dag = Dag.from_edges(n, [tuple(e) for e in doc["edges"]])
    return GroundTruthNetwork(
        dag=dag,
        meta=meta,
        levels=np.array(doc["levels"], dtype=np.int64),
        cpts=[np.array(doc["cpts"][str(v)]) for v in range(n)],
        ranges={int(v): np.array(r) for v, r in doc["ranges"].items()},
        kind=doc["kind"],
    )


def save_expert(expert: ExpertNetwork, n_vars: int, path, seed: int, chash: str) -> None:
    doc = {
        **_stamp(seed, chash),
        "n_vars": n_vars,
        "edges": sorted([int(p), int(v)] for p, v in expert.dag.edge_set()),
        "bins": {str(v): int(b) for v, b in expert.bins.items()},
        "boundaries": {str(v): b.tolist() for v, b in expert.boundaries.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_expert(path) -> ExpertNetwork:
    doc = json.loads(Path(path).read_text())
    dag = Dag.from_edges(doc["n_vars"], [tuple(e) for e in doc["edges"]])
    return ExpertNetwork(
        dag=dag,
        bins={int(v): b for v, b in doc["bins"].items()},
        boundaries={int(v): np.array(b) for v, b in doc["boundaries"].items()},
    )


def save_dataset(data: RawDataset, path, seed: int, chash: str) -> None:
    cols = []
    for m in data.meta:
        cols.append(f"{CONTINUOUS}" if m.is_continuous else f"{DISCRETE}:{m.cardinality}")
    lines = [
        f"# seed={int(seed)} config_hash={chash} columns={','.join(cols)}",
        ",".join(m.name for m in data.meta),
    ]
    n = data.n
    for t in range(n):
        row = []
        for v, m in enumerate(data.meta):
            row.append(repr(float(data.columns[v][t])) if m.is_continuous else str(int(data.columns[v][t])))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> RawDataset:
    lines = Path(path).read_text().splitlines()
    header = lines[0]
    kinds = header.split("columns=")[1].split(",")
    names = lines[1].split(",")
    metas = []
    for name, k in zip(names, kinds):
        if k == CONTINUOUS:
            metas.append(VariableMeta(name, CONTINUOUS, raw_range=(0.0, 1.0)))
        else:
            metas.append(VariableMeta(name, DISCRETE, cardinality=int(k.split(":")[1])))
    raw_rows = [line.split(",") for line in lines[2:] if line]
    columns = []
    for v, m in enumerate(metas):
        vals = [row[v] for row in raw_rows]
        columns.append(
            np.array([float(x) for x in vals])
            if m.is_continuous
            else np.array([int(x) for x in vals], dtype=np.int32)
        )
    # continuous raw ranges are unknown in a bare file; widen to the observed span
    metas = tuple(
        VariableMeta(m.name, CONTINUOUS, raw_range=(float(columns[v].min()), float(columns[v].max())))
        if m.is_continuous
        else m
        for v, m in enumerate(metas)
    )
    return RawDataset(columns, metas)


def genotype_to_strings(g: Genotype) -> tuple[str, list[int]]:
    return "".join(str(int(t)) for t in g.edge_genes), [int(b) for b in g.bin_genes]


def genotype_from_strings(edge_str: str, bin_list) -> Genotype:
    return Genotype(
        np.array([int(c) for c in edge_str], dtype=np.int8),
        np.array(list(bin_list), dtype=np.int16),
    )


def save_solution(path, genotype: Genotype, model, breakdown, seed: int, chash: str, extra: dict | None = None) -> None:
    edge_str, bins_list = genotype_to_strings(genotype)
    doc = {
        **_stamp(seed, chash),
        "edge_genes": edge_str,
        "bin_genes": bins_list,
        "edges": sorted([int(p), int(v)] for p, v in model.dag.edge_set()),
        "bins": [int(b) for b in model.bins],
        "boundaries": {str(v): b.tolist() for v, b in model.boundaries.items()},
        "fitness": {
            "ll": breakdown.ll.tolist(),
            "penalty": breakdown.penalty.tolist(),
            "total": breakdown.total,
        },
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_solution(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["genotype"] = genotype_from_strings(doc["edge_genes"], doc["bin_genes"])
    return doc


def save_archive(path, entries, seed: int, chash: str) -> None:
    lines = [
        f"# seed={int(seed)} config_hash={chash}",
        "edge_genes,bin_genes,ll,complexity,kl_expert,constraint",
    ]
    for genotype, ov in entries:
        edge_str, bins_list = genotype_to_strings(genotype)
        lines.append(
            f"{edge_str},{';'.join(str(b) for b in bins_list)},"
            f"{ov.ll!r},{ov.complexity!r},{ov.kl_expert!r},{ov.constraint!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_archive(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    out = []
    for line in lines[2:]:
        if not line:
            continue
        edge_str, bins_str, ll, c, kl, con = line.split(",")
        bins = [int(b) for b in bins_str.split(";")] if bins_str else []
        out.append(
            {
                "genotype": genotype_from_strings(edge_str, bins),
                "ll": float(ll),
                "complexity": float(c),
                "kl_expert": float(kl),
                "constraint": float(con),
            }
        )
    return out


def write_runlog(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, default=float) + "\n")


def append_metrics(path, row: dict) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a") as fh:
        if new:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
        fh.write(",".join(str(row[c]) for c in METRICS_COLUMNS) + "\n")


def read_metrics(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line]
