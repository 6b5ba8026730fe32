"""Command-line entry point.

Every subcommand reads one flat ``key = value`` config file (optional) and
lets ``--key value`` flags override it.  The resolved, path-free config is
echoed into each artifact so runs can be reproduced from the files alone.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

from .autodiff import NonFiniteError
from .features import FeatureConfig, load_content
from .graph import GraphBuildError, NodeType, load_graph, read_edges, read_id_list, read_nodes, save_graph
from .head import HeadConfig
from .encoder import WamlConfig
from .trainer import TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SUBCOMMANDS = ("gen-synth", "reduce", "train", "evaluate", "embed", "grad-check", "ablate")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# --- key table ------------------------------------------------------------------


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _tuple_of(elem: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        return tuple(elem(x) for x in s.replace(" ", "").split(",") if x)
    return parse


def _optional_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none") else int(s)


def _threshold(s: str) -> int:
    from .reduction import THRESHOLD_PRESETS
    return THRESHOLD_PRESETS[s] if s in THRESHOLD_PRESETS else int(s)


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    default: Any
    section: str | None = None   # dataclass the value feeds, if any
    field: str | None = None
    path: bool = False           # paths are left out of the config echo


def _parser_for(value) -> Callable[[str], Any]:
    if isinstance(value, bool):
        return _parse_bool
    if isinstance(value, int):
        return int
    if isinstance(value, float):
        return float
    if isinstance(value, tuple):
        return _tuple_of(type(value[0]) if value else float)
    return str


def _section_keys(section: str, cls, rename: dict[str, str] = {}, prefix: str = "") -> list[Key]:
    inst = cls()
    return [Key(prefix + rename.get(f.name, f.name), _parser_for(getattr(inst, f.name)), getattr(inst, f.name),
                section, f.name) for f in fields(cls)]


def _build_keys() -> dict[str, Key]:
    from .synthetic import SynthConfig

    keys = (_section_keys("synth", SynthConfig, prefix="synth_")
            + _section_keys("features", FeatureConfig)
            + _section_keys("waml", WamlConfig)
            + _section_keys("head", HeadConfig, rename={"num_layers": "ffn_layers"})
            + _section_keys("train", TrainConfig)
            + [Key("threshold", _threshold, 2),
               Key("customer_degree_cap", _optional_int, None),
               Key("split_ratios", _tuple_of(float), (0.8, 0.1, 0.1)),
               Key("node_embeddings", _parse_bool, False),
               Key("eval_pool", str, "candidates"),
               Key("filter_seen", _parse_bool, False),
               Key("ablate_seeds", int, 1)]
            + [Key(name, str, None, path=True) for name in
               ("data", "graph", "content", "checkpoint", "held_out", "out")])
    out = {}
    for k in keys:
        if k.name in out:
            raise RuntimeError(f"duplicate config key {k.name}")
        out[k.name] = k
    return out


KEYS = _build_keys()


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; later lines win."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve(file_values: dict[str, str], flag_values: dict[str, str]) -> dict[str, Any]:
    """Defaults, then file, then flags; each value parsed by its key's type."""
    raw = {**file_values, **flag_values}
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    out = {name: k.default for name, k in KEYS.items()}
    for name, value in raw.items():
        try:
            out[name] = KEYS[name].parse(value)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{name}: cannot parse {value!r} ({exc})") from None
    return out


def _section(rc: dict[str, Any], section: str, cls):
    kwargs = {k.field: rc[k.name] for k in KEYS.values() if k.section == section}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def experiment_config(rc: dict[str, Any]):
    from .pipeline import ExperimentConfig

    if rc["eval_pool"] not in ("candidates", "products"):
        raise ConfigError("eval_pool: must be 'candidates' or 'products'")
    if rc["eval_k"] < 1:
        raise ConfigError("eval_k: must be >= 1")
    ratios = rc["split_ratios"]
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("split_ratios: need three positive numbers summing to 1")
    if rc["threshold"] < 1:
        raise ConfigError("threshold: must be >= 1")
    return ExperimentConfig(features=_section(rc, "features", FeatureConfig), waml=_section(rc, "waml", WamlConfig),
                            head=_section(rc, "head", HeadConfig), train=_section(rc, "train", TrainConfig),
                            threshold=rc["threshold"], split_ratios=tuple(ratios),
                            node_embeddings=rc["node_embeddings"], eval_k=rc["eval_k"])


def config_echo(rc: dict[str, Any]) -> dict[str, Any]:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(rc.items()) if not KEYS[k].path}


def echo_lines(rc: dict[str, Any]) -> list[str]:
    return [f"# {k} = {json.dumps(v)}" for k, v in config_echo(rc).items()]


def _rc_from_echo(echo: dict[str, Any]) -> dict[str, Any]:
    rc = {name: k.default for name, k in KEYS.items()}
    for k, v in echo.items():
        if k in KEYS:
            rc[k] = tuple(v) if isinstance(v, list) else v
    return rc


def _require(rc: dict[str, Any], *names: str) -> None:
    missing = [n for n in names if not rc[n]]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} not found: {p}")
    return p


# --- subcommands ------------------------------------------------------------------


def cmd_gen_synth(rc):
    from .synthetic import SynthConfig, generate, write_dataset

    _require(rc, "out")
    cfg = _section(rc, "synth", SynthConfig)
    ds = generate(cfg)
    out = Path(rc["out"])
    write_dataset(ds, out, rc["dim"], rc["hash_seed"])
    (out / "run_config.txt").write_text("\n".join(echo_lines(rc)) + "\n", encoding="utf-8")
    counts = ds.candidate_interactions()
    print(f"wrote {len(ds.nodes)} nodes, {len(ds.edges)} edges, {len(counts)} candidates to {out}")


def cmd_reduce(rc):
    from .reduction import ReductionConfig, reduce_pipeline

    _require(rc, "data", "out")
    data = Path(rc["data"])
    try:
        nodes = read_nodes(_existing(data / "nodes.tsv", "node file"))
        edges = read_edges(_existing(data / "edges.tsv", "edge file"))
        cands = read_id_list(_existing(data / "candidates.txt", "candidate list"))
    except GraphBuildError as exc:
        raise DataError(str(exc)) from None
    try:
        cfg = ReductionConfig(rc["threshold"], frozenset(cands), rc["customer_degree_cap"])
    except ValueError as exc:
        raise ConfigError(f"[reduce] {exc}") from None
    try:
        graph, report = reduce_pipeline(nodes, edges, cfg)
    except GraphBuildError as exc:
        raise DataError(str(exc)) from None
    out = Path(rc["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_graph(graph, out / "graph.wgr", {"config": config_echo(rc), "report": report.as_flat()})
    lines = echo_lines(rc) + [f"{k} = {v}" for k, v in report.as_flat().items()]
    (out / "reduction_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"reduced graph: {graph.num_nodes} nodes, {graph.num_edges} edges -> {out / 'graph.wgr'}")


def _load_graph(rc):
    try:
        graph, meta = load_graph(_existing(rc["graph"], "graph snapshot"))
    except (GraphBuildError, ValueError) as exc:
        raise DataError(str(exc)) from None
    return graph, meta


def _load_content(rc, features: FeatureConfig):
    if features.content_source == "zeros":
        return None
    if not rc["content"]:
        raise ConfigError(f"content: a WAMLEMB1 file is required when content_source = {features.content_source}")
    try:
        return load_content(_existing(rc["content"], "content file"), features.dim)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _inputs(rc, cfg):
    from .pipeline import training_inputs

    graph, _ = _load_graph(rc)
    content = _load_content(rc, cfg.features)
    try:
        return training_inputs(graph, cfg, content)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def cmd_train(rc):
    from .trainer import save_checkpoint, train

    _require(rc, "graph", "out")
    cfg = experiment_config(rc)
    inp = _inputs(rc, cfg)
    out = Path(rc["out"])
    out.mkdir(parents=True, exist_ok=True)
    products = inp.graph.nodes_of_type(NodeType.PRODUCT)
    params, result = train(inp.h0, inp.op, inp.split, cfg.waml, cfg.head, cfg.train,
                           validation_pool=products, node_embeddings=cfg.node_embeddings,
                           log_stream=sys.stderr)
    save_checkpoint(out / "checkpoint.wckpt", params, config_echo(rc))
    # wall seconds make the log the one non-reproducible artifact
    lines = echo_lines(rc) + ["epoch\tloss\tvalidation_recall\tseconds"] + result.log_lines()
    (out / "train_log.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"best epoch {result.best_epoch}, validation recall@{cfg.train.eval_k} = {result.best_validation:.6f}")


def _trained(rc):
    """Graph, features and parameters rebuilt from a checkpoint's own config echo."""
    from .trainer import load_checkpoint

    _require(rc, "graph", "checkpoint")
    try:
        params, echo = load_checkpoint(_existing(rc["checkpoint"], "checkpoint"))
    except (ValueError, KeyError) as exc:
        raise DataError(str(exc)) from None
    trained_rc = _rc_from_echo(echo)
    trained_rc.update({k: rc[k] for k in ("graph", "content")})
    cfg = experiment_config(trained_rc)
    for t in params.named().values():
        t.data = t.data.astype(cfg.train.dtype)
    return trained_rc, cfg, _inputs(trained_rc, cfg), params


def cmd_evaluate(rc):
    from .pipeline import index_pairs
    from .retrieval import encode_all, evaluate

    _require(rc, "out")
    trained_rc, cfg, inp, params = _trained(rc)
    table = encode_all(inp.h0, inp.op, params, cfg.waml, cfg.head)
    if rc["held_out"]:
        pairs = []
        for ln in _existing(rc["held_out"], "held-out pairs").read_text(encoding="utf-8").splitlines():
            if ln.strip() and not ln.startswith("#"):
                cols = ln.split("\t")
                if len(cols) != 2:
                    raise DataError(f"{rc['held_out']}: expected seller<TAB>product lines")
                pairs.append((cols[0], cols[1]))
        held = index_pairs(inp.graph, pairs)
        source = "file"
    else:
        held, source = inp.split.test, "test-split"
    pool = inp.graph.candidates() if rc["eval_pool"] == "candidates" else inp.graph.nodes_of_type(NodeType.PRODUCT)
    seen = None
    if rc["filter_seen"]:
        seen = {}
        for s, p in inp.split.train:
            seen.setdefault(int(s), set()).add(int(p))
    report = evaluate(table, held, pool, rc["eval_k"], seen=seen, pool_name=rc["eval_pool"])
    report.extra = {"held_out": source, "model_config": json.dumps(config_echo(trained_rc), sort_keys=True)}
    report.write(rc["out"])
    print(f"recall@{report.k} = {report.recall:.6f} over {report.num_sellers} sellers")


def cmd_embed(rc):
    from .retrieval import encode_all, export_embeddings

    _require(rc, "out")
    trained_rc, cfg, inp, params = _trained(rc)
    table = encode_all(inp.h0, inp.op, params, cfg.waml, cfg.head)
    export_embeddings(rc["out"], table, inp.graph.raw_ids)
    Path(str(rc["out"]) + ".config").write_text("\n".join(echo_lines(trained_rc)) + "\n", encoding="utf-8")
    print(f"wrote {table.matrix.shape[0]} embeddings of dimension {table.matrix.shape[1]} to {rc['out']}")


def cmd_grad_check(rc):
    from .gradcheck import run_default

    res = run_default(alpha_mode=rc["alpha_mode"], seed=rc["seed"], tau=rc["temperature"])
    status = "ok" if res.passed() else "FAILED"
    print(f"grad-check {status}: max relative error {res.max_rel_error:.3e} over {res.checked} entries"
          f" (worst {res.worst})")
    if not res.passed():
        raise NonFiniteError("gradient check failed")


def cmd_ablate(rc):
    from .ablation import format_table, ladder, run_ladder
    from .synthetic import SynthConfig, generate, read_dataset

    _require(rc, "out")
    cfg = experiment_config(rc)
    if rc["data"]:
        data = Path(rc["data"])
        try:
            ds = read_dataset(_existing(data, "dataset directory"))
        except (GraphBuildError, OSError, ValueError) as exc:
            raise DataError(str(exc)) from None
        content = _load_content({**rc, "content": rc["content"] or str(data / "content.emb")},
                                FeatureConfig(dim=rc["dim"], hash_seed=rc["hash_seed"]))
    else:
        ds = generate(_section(rc, "synth", SynthConfig))
        content = None
    rows = ladder(rc["dim"], cfg.train)
    blocks = []
    for seed in range(rc["ablate_seeds"]):
        results = run_ladder(ds, rows, seed=cfg.train.seed + seed, threshold=cfg.threshold, content=content,
                             log=lambda r: print(f"{r.name}: recall {r.recall_ground_truth:.4f}", file=sys.stderr))
        blocks.append(f"# seed = {cfg.train.seed + seed}\n" + format_table(results))
    Path(rc["out"]).write_text("\n".join(echo_lines(rc)) + "\n" + "\n".join(blocks), encoding="utf-8")
    print(blocks[-1], end="")


COMMANDS = {"gen-synth": cmd_gen_synth, "reduce": cmd_reduce, "train": cmd_train, "evaluate": cmd_evaluate,
            "embed": cmd_embed, "grad-check": cmd_grad_check, "ablate": cmd_ablate}


HELP = {
    "gen-synth": "write a planted-cluster dataset to --out",
    "reduce": "reduce --data DIR to a graph snapshot and report in --out",
    "train": "train on --graph (with --content) and write a checkpoint and log to --out",
    "evaluate": "score Recall@K of --checkpoint and write a report to --out",
    "embed": "export final embeddings of --checkpoint to --out",
    "grad-check": "finite-difference check of the full encoder and loss",
    "ablate": "run the ablation ladder and write a comparison table to --out",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    for name in KEYS:
        common.add_argument("--" + name.replace("_", "-"), dest=name, default=None, metavar="VALUE")
    parser = argparse.ArgumentParser(prog="waml", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    flags = {k: v for k, v in vars(args).items() if k in KEYS and v is not None}
    try:
        rc = resolve(read_config_file(args.config) if args.config else {}, flags)
        COMMANDS[args.command](rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
