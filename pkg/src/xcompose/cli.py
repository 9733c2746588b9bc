"""Operator entry point: ingestion, composition, curation, evaluation, serving.

Exit code 0 iff no error. Diagnostics go to stderr as {"error": {...}} JSON;
data goes to stdout or files.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluation, pipeline, server
from .backends import (
    BackendSuite,
    DemoGenerator,
    EmbedRequest,
    HttpEmbedder,
    HttpGenerator,
    StubEmbedder,
)
from .config import ConfigError, RunConfig, load_config
from .errors import XComposeError
from .evaluation import AgreementInput, selection_agreement
from .model import deserialize_article, serialize_article
from .pipeline import PipelineConfig, SelectionMode
from .repository import EmbeddingIndex


def _fail(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"code": code, "message": message}}) + "\n")
    return 1


def _build_config(args) -> RunConfig:
    flag_values = {
        "gen_url": getattr(args, "gen_url", None),
        "embed_url": getattr(args, "embed_url", None),
        "judge_url": getattr(args, "judge_url", None),
        "dim": getattr(args, "dim", None),
        "m": getattr(args, "m", None),
        "seed": getattr(args, "seed", None),
        "selection": getattr(args, "selection", None),
        "runs": getattr(args, "runs", None),
        "jobs": getattr(args, "jobs", None),
        "stub": True if getattr(args, "stub", False) else None,
        "allow_partial": True if getattr(args, "allow_partial", False) else None,
        "allow_no_images": True if getattr(args, "allow_no_images", False) else None,
    }
    return load_config(flag_values, config_path=getattr(args, "config", None))


def _embedder(config: RunConfig):
    if config.stub or not config.embed_url:
        return StubEmbedder(config.dim, salt=config.stub_salt)
    return HttpEmbedder(config.embed_url, config.dim, timeout=config.timeout_embed, token=config.token or None)


def _generator(config: RunConfig):
    if config.stub or not config.gen_url:
        return DemoGenerator(salt=config.stub_salt)
    return HttpGenerator(config.gen_url, timeout=config.timeout_generate, token=config.token or None)


def _judge(config: RunConfig):
    if config.stub or not config.judge_url:
        return DemoGenerator(salt=config.stub_salt)
    return HttpGenerator(config.judge_url, timeout=config.timeout_generate, token=config.token or None)


def cmd_ingest(args) -> int:
    config = _build_config(args)
    uris = [line.strip() for line in Path(args.images).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not uris:
        return _fail("EmptyInput", f"no image URIs in {args.images}")
    embedder = _embedder(config)
    index = EmbeddingIndex(embedder.dimension)
    for uri in uris:
        vector = embedder.embed(EmbedRequest(kind="image", payload=uri))
        index.ingest(uri, vector, metadata={"source": "ingest"})
    index.save(args.index_dir)
    print(json.dumps({"count": len(index), "dimension": index.dimension}))
    return 0


def cmd_compose(args) -> int:
    config = _build_config(args)
    index = EmbeddingIndex.load(args.index_dir)
    pipe_config = PipelineConfig(
        m=config.m, max_tokens=config.max_tokens, temperature=config.temperature,
        seed=config.seed,
        selection_mode=SelectionMode.TOP1_BASELINE if config.selection == "top1" else SelectionMode.MODEL_SELECT,
        allow_partial=config.allow_partial, allow_no_images=config.allow_no_images,
    )
    backends = BackendSuite(generator=_generator(config), embedder=_embedder(config))
    article, trace = pipeline.compose(args.instruction, pipe_config, backends, index)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "article.json").write_bytes(serialize_article(article))
    (out / "trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")
    print(json.dumps({"article": str(out / "article.json"), "slots": len(article.slots)}))
    return 0


def cmd_evaluate(args) -> int:
    config = _build_config(args)
    judge = _judge(config)
    article_paths = sorted(Path(args.articles).glob("*.json"))
    if not article_paths:
        return _fail("EmptyInput", f"no article JSON files in {args.articles}")

    def evaluate_one(path: Path) -> dict:
        article = deserialize_article(path.read_bytes())
        row = {"article": article.id, "method": args.method, "rater": "judge"}
        try:
            outcome = evaluation.run_judge(article, article.instruction, judge,
                                           runs=config.runs, seed=config.seed)
        except evaluation.AllRunsInvalid:
            row.update({"runs_valid": 0, "runs_invalid": config.runs, "error": "AllRunsInvalid"})
            return row
        valid = [r for r in outcome.runs if r.valid]
        dims = [sum(r.score.as_tuple()[i] for r in valid) / len(valid) for i in range(8)]
        row.update({"runs_valid": len(valid), "runs_invalid": outcome.invalid_count, "error": ""})
        row.update(dict(zip(evaluation.RUBRIC_DIMENSIONS, dims)))
        row.update({
            "text_score": outcome.mean.text_score, "image_score": outcome.mean.image_score,
            "pref_score": outcome.mean.pref_score, "overall": outcome.mean.overall,
        })
        return row

    jobs = config.jobs or None
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        rows = list(pool.map(evaluate_one, article_paths))

    header = ["article", "method", "rater", "runs_valid", "runs_invalid", "error",
              *evaluation.RUBRIC_DIMENSIONS, "text_score", "image_score", "pref_score", "overall"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row.get(col, "")) for col in header))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(json.dumps({"articles": len(rows), "out": args.out}))
    return 0


def cmd_curate(args) -> int:
    from . import curation

    config = _build_config(args)
    judge = _judge(config)
    article_paths = sorted(Path(args.articles).glob("*.json"))
    if not article_paths:
        return _fail("EmptyInput", f"no article JSON files in {args.articles}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_lines = []
    kept = 0
    for path in article_paths:
        article = deserialize_article(path.read_bytes())
        labels = curation.classify_sentences(article, judge).labels
        verdict = curation.filter_article(article, labels)
        report_lines.append(json.dumps(verdict.report_row(article.id), ensure_ascii=False))
        if verdict.retained:
            (out_dir / path.name).write_bytes(serialize_article(verdict.cleaned))
            kept += 1
    (out_dir / "curation_report.jsonl").write_text("\n".join(report_lines) + "\n", encoding="utf-8")
    print(json.dumps({"articles": len(article_paths), "retained": kept}))
    return 0


def cmd_agreement(args) -> int:
    pairs = []
    for line in Path(args.choices).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        pairs.append((obj["choice"], obj["truth"]))
    if not pairs:
        return _fail("EmptyInput", f"no choice pairs in {args.choices}")
    print(f"{selection_agreement(AgreementInput(pairs)):.1f}")
    return 0


def cmd_serve(args) -> int:
    api = server.GradingApi()
    httpd = server.serve(server.make_grading_handler(api), args.port, host=args.host)
    sys.stderr.write(f"grading API listening on {args.host}:{httpd.server_address[1]}\n")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_serve_stub(args) -> int:
    handler = server.make_stub_backend_handler(args.dim, salt=args.salt)
    httpd = server.serve(handler, args.port, host=args.host)
    sys.stderr.write(f"stub backend listening on {args.host}:{httpd.server_address[1]}\n")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xcompose",
                                     description="Interleaved image-text composition toolkit")
    parser.add_argument("--config", help=f"config file (default ./xcompose.toml when present)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="embed a list of image URIs into an index")
    p.add_argument("--images", required=True, help="newline-delimited image URI file")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--embed-url", dest="embed_url")
    p.add_argument("--stub", action="store_true", help="use the deterministic stub embedder")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("compose", help="compose an interleaved article")
    p.add_argument("--instruction", required=True)
    p.add_argument("--index-dir", required=True)
    p.add_argument("--out", required=True, help="output directory for article.json and trace.jsonl")
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--selection", choices=["model", "top1"])
    p.add_argument("--gen-url", dest="gen_url")
    p.add_argument("--embed-url", dest="embed_url")
    p.add_argument("--stub", action="store_true", help="use deterministic stub backends")
    p.add_argument("--allow-partial", action="store_true", dest="allow_partial")
    p.add_argument("--allow-no-images", action="store_true", dest="allow_no_images")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("evaluate", help="score composed articles with the judge")
    p.add_argument("--articles", required=True, help="directory of article JSON files")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", default="-", help="method label for the CSV rows")
    p.add_argument("--jobs", type=int)
    p.add_argument("--judge-url", dest="judge_url")
    p.add_argument("--stub", action="store_true", help="use the deterministic stub judge")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curate", help="noise-filter a directory of articles")
    p.add_argument("--articles", required=True, help="directory of article JSON files")
    p.add_argument("--out", required=True, help="output directory for cleaned articles and report")
    p.add_argument("--judge-url", dest="judge_url")
    p.add_argument("--stub", action="store_true", help="use the deterministic stub judge")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("agreement", help="selection agreement over a choices file")
    p.add_argument("--choices", required=True,
                   help='JSONL of {"choice": image_id, "truth": image_id}')
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("serve", help="run the grading API server")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("serve-stub", help="run the stub backend server")
    p.add_argument("--port", type=int, default=8788)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--salt", type=int, default=0)
    p.set_defaults(func=cmd_serve_stub)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        return _fail("ConfigError", str(e))
    except FileNotFoundError as e:
        return _fail("FileNotFound", str(e))
    except XComposeError as e:
        return _fail(type(e).__name__, str(e))


if __name__ == "__main__":
    sys.exit(main())
