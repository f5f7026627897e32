"""Command-line entry point binding configuration, gateways, pipeline, and
evaluation into user-invocable commands.

Commands: check, benchmark, sweep, eval-qa, and data {summarize, standardize,
balance, curate}. Configuration precedence is flags > config file >
environment > defaults. Every run writes a manifest (resolved config, seed,
prompt-asset hashes, backend identity) next to its main output, sufficient to
reproduce mock runs byte-for-byte.

Environment variables:
  URFACT_LLM_ENDPOINT / URFACT_LLM_API_KEY        live chat-completion access
  URFACT_SEARCH_ENDPOINT / URFACT_SEARCH_API_KEY  live SERP access
  URFACT_MODEL_ID, URFACT_CACHE, URFACT_PRICING   optional setting overrides
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__, datasets, evaluation, prompts
from .curation import CurationError, ExemplarPool, curate_records
from .llm import (
    GatewayError,
    HttpChatBackend,
    LLMGateway,
    PricingTable,
    TranscriptChatBackend,
)
from .pipeline import (
    DEFAULT_TAU,
    DEFAULT_WORKERS,
    FactCheckPipeline,
    PipelineError,
    RetrievalConfig,
    STRATEGIES,
    THRESHOLDED,
)
from .search import (
    DEFAULT_REQUESTED_RESULTS,
    DEFAULT_SEARCH_UNIT_COST,
    DiskSearchCache,
    FixtureSearchBackend,
    HttpSearchBackend,
    MemorySearchCache,
    SearchError,
    SearchGateway,
)
from .translation import Translator

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
DEFAULT_TAUS = (1, 3, 5, 7, 9)


class CliError(Exception):
    """User-facing command failure; printed to stderr with exit code 1."""


@dataclass
class RunConfig:
    """Resolved run configuration, validated before any network call."""

    backend: str = "live"
    model_id: str = "gpt-4o-mini"
    strategy: str = THRESHOLDED
    tau: int = DEFAULT_TAU
    workers: int = DEFAULT_WORKERS
    requested_results: int = DEFAULT_REQUESTED_RESULTS
    seed: int | None = None
    cache_path: str | None = None
    pricing_path: str | None = None
    search_unit_cost: float = DEFAULT_SEARCH_UNIT_COST
    bypass_cache: bool = False
    llm_transcript: str | None = None
    search_fixture: str | None = None

    def validate(self, needs_llm: bool = False, needs_search: bool = False) -> None:
        if self.backend not in ("live", "mock"):
            raise CliError(f"backend must be 'live' or 'mock', got {self.backend!r}")
        if self.strategy not in STRATEGIES:
            raise CliError(f"strategy must be one of {STRATEGIES}")
        if self.strategy == THRESHOLDED and self.tau < 1:
            raise CliError("tau must be >= 1")
        if self.workers < 1:
            raise CliError("workers must be >= 1")
        if not 1 <= self.requested_results <= 20:
            raise CliError("requested-results must be in [1, 20]")
        if self.backend == "mock":
            if self.seed is None:
                raise CliError("--seed is mandatory for mock runs")
            if needs_llm and not self.llm_transcript:
                raise CliError("mock runs need --llm-transcript")
            if needs_search and not self.search_fixture:
                raise CliError("mock runs need --search-fixture")
        else:
            if needs_llm and not os.environ.get("URFACT_LLM_ENDPOINT"):
                raise CliError("live runs need URFACT_LLM_ENDPOINT (and URFACT_LLM_API_KEY)")
            if needs_search and not os.environ.get("URFACT_SEARCH_ENDPOINT"):
                raise CliError("live runs need URFACT_SEARCH_ENDPOINT (and URFACT_SEARCH_API_KEY)")


_ENV_OVERRIDES = {
    "model_id": "URFACT_MODEL_ID",
    "cache_path": "URFACT_CACHE",
    "pricing_path": "URFACT_PRICING",
}

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, environment, config file, and flags (in that order)."""
    values: dict = {}
    for field_name, env_name in _ENV_OVERRIDES.items():
        if os.environ.get(env_name):
            values[field_name] = os.environ[env_name]
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read config file {config_path}: {exc}") from exc
        unknown = set(loaded) - _CONFIG_FIELDS
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(loaded)
    for field_name in _CONFIG_FIELDS:
        flag_value = getattr(args, field_name, None)
        if flag_value is not None:
            values[field_name] = flag_value
    if getattr(args, "mock", False):
        values["backend"] = "mock"
    if getattr(args, "no_cache", False):
        values["bypass_cache"] = True
    config = RunConfig(**{k: v for k, v in values.items() if k in _CONFIG_FIELDS})
    config.tau = int(config.tau)
    config.workers = int(config.workers)
    config.requested_results = int(config.requested_results)
    config.seed = int(config.seed) if config.seed is not None else None
    config.search_unit_cost = float(config.search_unit_cost)
    return config


@dataclass
class Runtime:
    """Gateways and pipeline assembled for one command invocation."""

    llm: LLMGateway
    search: SearchGateway | None
    translator: Translator | None
    pipeline: FactCheckPipeline | None
    backend_identity: dict


def build_runtime(config: RunConfig, needs_search: bool = True) -> Runtime:
    """Assemble gateways per the resolved configuration."""
    pricing = PricingTable.from_file(config.pricing_path) if config.pricing_path else PricingTable()
    if config.backend == "mock":
        chat_backend = TranscriptChatBackend.from_file(config.llm_transcript)
        llm_identity = f"mock:{config.llm_transcript}"
        clock = lambda: 0.0  # noqa: E731 - deterministic timings for mock runs
    else:
        chat_backend = HttpChatBackend(
            endpoint=os.environ["URFACT_LLM_ENDPOINT"],
            api_key=os.environ.get("URFACT_LLM_API_KEY", ""),
        )
        llm_identity = f"live:{os.environ['URFACT_LLM_ENDPOINT']}"
        clock = None
    llm = LLMGateway(chat_backend, pricing=pricing)

    search = None
    translator = None
    pipeline = None
    search_identity = None
    if needs_search:
        if config.backend == "mock":
            search_backend = FixtureSearchBackend.from_file(config.search_fixture)
            search_identity = f"mock:{config.search_fixture}"
        else:
            search_backend = HttpSearchBackend(
                endpoint=os.environ["URFACT_SEARCH_ENDPOINT"],
                api_key=os.environ.get("URFACT_SEARCH_API_KEY", ""),
            )
            search_identity = f"live:{os.environ['URFACT_SEARCH_ENDPOINT']}"
        cache = DiskSearchCache(config.cache_path) if config.cache_path else MemorySearchCache()
        search = SearchGateway(
            search_backend,
            cache=cache,
            unit_cost=config.search_unit_cost,
            bypass_cache=config.bypass_cache,
        )
        translator = Translator(llm, model_id=config.model_id)
        pipeline_kwargs = dict(
            model_id=config.model_id,
            config=RetrievalConfig(
                strategy=config.strategy,
                tau=config.tau,
                requested_results=config.requested_results,
            ),
            workers=config.workers,
        )
        if clock is not None:
            pipeline_kwargs["clock"] = clock
        pipeline = FactCheckPipeline(llm, search, translator, **pipeline_kwargs)
    return Runtime(
        llm=llm,
        search=search,
        translator=translator,
        pipeline=pipeline,
        backend_identity={"llm": llm_identity, "search": search_identity},
    )


def write_manifest(
    out_path: Path,
    command: str,
    config: RunConfig | None,
    runtime: Runtime | None,
    extra: dict | None = None,
) -> Path:
    """Write the reproducibility manifest next to the command's main output.

    Gateway-less commands pass no runtime; their backend identity is empty.
    """
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "package_version": __version__,
        "command": command,
        "config": dataclasses.asdict(config) if config else (extra or {}),
        "seed": config.seed if config else (extra or {}).get("seed"),
        "prompt_assets": prompts.asset_hashes(),
        "backend": runtime.backend_identity if runtime else {"llm": None, "search": None},
    }
    manifest_path = Path(str(out_path) + ".manifest.json")
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return manifest_path


def _read_input_text(args: argparse.Namespace) -> str:
    if args.text is not None:
        return args.text
    if args.input is not None:
        try:
            return Path(args.input).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read input file: {exc}") from exc
    raise CliError("provide --text or --input")


def cmd_check(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config.validate(needs_llm=True, needs_search=True)
    runtime = build_runtime(config)
    text = _read_input_text(args)
    report = runtime.pipeline.run(text, benchmark_mode=args.single_claim)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report.to_json(), encoding="utf-8")
    write_manifest(out_path, "check", config, runtime)
    verified = sum(1 for c in report.claims if c.verdict is not None)
    true_count = sum(1 for c in report.claims if c.verdict and c.verdict.label)
    print(f"claims: {len(report.claims)}  verified: {verified}  true: {true_count}")
    for check in report.claims:
        if check.verdict is None:
            status = "unverifiable"
        else:
            status = "true" if check.verdict.label else "false"
        print(f"  [{check.claim.index}] {status}: {check.claim.text}")
    print(f"cost: {report.ledger.total:.5f}  report: {out_path}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config.validate(needs_llm=True, needs_search=True)
    runtime = build_runtime(config)
    records = datasets.load_claims(args.dataset)
    try:
        report = evaluation.run_benchmark(records, runtime.pipeline)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.baselines:
        report.baselines = evaluation.baselines([r.label for r in records], seed=config.seed)
    out_path = Path(args.out)
    evaluation.write_report(report.to_dict(), out_path)
    write_manifest(out_path, "benchmark", config, runtime)
    print(evaluation.format_metrics_table(report))
    print(f"report: {out_path}")
    return 0


def _parse_taus(raw: str) -> list[int]:
    try:
        taus = sorted({int(part) for part in raw.split(",") if part.strip()})
    except ValueError as exc:
        raise CliError(f"invalid --taus value {raw!r}") from exc
    if not taus:
        raise CliError("taus must be non-empty")
    return taus


def cmd_sweep(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config.validate(needs_llm=True, needs_search=True)
    records = datasets.load_claims(args.dataset)
    taus = _parse_taus(args.taus)

    last_runtime: list[Runtime] = []

    def factory(tau: int) -> FactCheckPipeline:
        # Fresh gateways, caches, and ledgers per point keep costs comparable.
        point_config = dataclasses.replace(config, strategy=THRESHOLDED, tau=tau)
        runtime = build_runtime(point_config)
        last_runtime.append(runtime)
        return runtime.pipeline

    try:
        points = evaluation.sweep_threshold(records, factory, taus)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "sweep.json"
    evaluation.write_report(
        {"schema_version": 1, "points": [p.to_dict() for p in points]}, data_path
    )
    chart_path = out_dir / "sweep.png"
    evaluation.render_sweep_chart(points, chart_path)
    write_manifest(data_path, "sweep", config, last_runtime[-1])
    for point in points:
        print(
            f"tau={point.tau}  f1_true={point.f1_true:.3f}  "
            f"cost={point.total_cost:.5f}  fallback_rate={point.fallback_rate:.2f}"
        )
    print(f"report: {data_path}  chart: {chart_path}")
    return 0


def load_responses(path: str | Path) -> dict[str, str]:
    """Load a JSONL responses file of {"id": ..., "response": ...} lines."""
    path = Path(path)
    responses: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                responses[str(row["id"])] = str(row["response"])
            except (ValueError, KeyError) as exc:
                raise CliError(f"{path}:{line_no}: bad response row: {exc}") from exc
    return responses


def cmd_eval_qa(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config.validate(needs_llm=True, needs_search=True)
    runtime = build_runtime(config)
    qa_records = datasets.load_qa(args.qa)
    responses = load_responses(args.responses)
    try:
        report = evaluation.evaluate_llm_factuality(
            qa_records, responses, runtime.pipeline, model_id=args.model_id or config.model_id
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out_path = Path(args.out)
    evaluation.write_report(report.to_dict(), out_path)
    write_manifest(out_path, "eval-qa", config, runtime)
    print(
        f"model={report.model_id}  claims={report.total_claims}  "
        f"true={report.percent_true_claims:.1%}  false={report.false_claim_count}  "
        f"unverifiable={report.unverifiable_claims}  cost={report.cost:.5f}"
    )
    print(f"report: {out_path}")
    return 0


def cmd_data_summarize(args: argparse.Namespace) -> int:
    if args.qa:
        summary = datasets.summarize_qa(args.files)
        print(datasets.format_qa_summary(summary))
    else:
        summary = datasets.summarize_claims(args.files)
        print(datasets.format_claim_summary(summary))
    if args.out:
        evaluation.write_report(summary.to_dict(), args.out)
        write_manifest(Path(args.out), "data summarize", None, None, extra={"files": args.files})
        print(f"report: {args.out}")
    return 0


def cmd_data_standardize(args: argparse.Namespace) -> int:
    kept, dropped = datasets.standardize_file(args.input, args.output)
    write_manifest(Path(args.output), "data standardize", None, None, extra={"input": args.input})
    print(f"kept {kept} records, dropped {dropped} not-supported records -> {args.output}")
    return 0


def cmd_data_balance(args: argparse.Namespace) -> int:
    records = datasets.load_claims(args.input)
    balanced = datasets.balance_sample(
        records,
        majority_label=args.majority == "true",
        cap=args.cap,
        seed=args.seed,
    )
    datasets.save_records(balanced, args.output)
    write_manifest(
        Path(args.output),
        "data balance",
        None,
        None,
        extra={"input": args.input, "majority": args.majority, "cap": args.cap, "seed": args.seed},
    )
    true_count = sum(1 for r in balanced if r.label)
    print(
        f"kept {len(balanced)} records ({true_count} true / {len(balanced) - true_count} false) "
        f"-> {args.output}"
    )
    return 0


def cmd_data_curate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config.validate(needs_llm=True, needs_search=False)
    runtime = build_runtime(config, needs_search=False)
    pool = ExemplarPool.from_file(args.pool)
    records = []
    with Path(args.records).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append({"id": str(row["id"]), "text": str(row["text"])})
            except (ValueError, KeyError) as exc:
                raise CliError(f"{args.records}:{line_no}: bad record: {exc}") from exc
    drafts = curate_records(
        records, pool, runtime.llm, config.model_id, k=args.k, lambda_=args.mmr_lambda
    )
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as handle:
        for draft in drafts:
            handle.write(json.dumps(draft, ensure_ascii=False) + "\n")
    write_manifest(out_path, "data curate", config, runtime)
    print(f"drafted {len(drafts)} translations for review -> {out_path}")
    return 0


def _add_config_flags(parser: argparse.ArgumentParser, gateways: bool = True) -> None:
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--backend", choices=("live", "mock"), default=None)
    parser.add_argument("--mock", action="store_true", help="shorthand for --backend mock")
    parser.add_argument("--model-id", dest="model_id", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--pricing", dest="pricing_path", default=None, help="pricing table JSON")
    parser.add_argument("--llm-transcript", dest="llm_transcript", default=None)
    if gateways:
        parser.add_argument("--strategy", choices=STRATEGIES, default=None)
        parser.add_argument("--tau", type=int, default=None)
        parser.add_argument("--workers", type=int, default=None)
        parser.add_argument(
            "--requested-results", dest="requested_results", type=int, default=None
        )
        parser.add_argument("--cache", dest="cache_path", default=None, help="disk cache path")
        parser.add_argument(
            "--no-cache",
            dest="no_cache",
            action="store_true",
            help="bypass the search cache (freshness-sensitive runs)",
        )
        parser.add_argument("--search-fixture", dest="search_fixture", default=None)
        parser.add_argument(
            "--search-unit-cost", dest="search_unit_cost", type=float, default=None
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urfact",
        description="Fact-check Urdu text and benchmark fact-checkers and LLM factuality.",
    )
    parser.add_argument("--version", action="version", version=f"urfact {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", help="fact-check a text end to end")
    check.add_argument("--text", help="inline input text")
    check.add_argument("--input", help="input text file")
    check.add_argument("--single-claim", action="store_true", help="skip claim extraction")
    check.add_argument("--out", default="factcheck_report.json")
    _add_config_flags(check)
    check.set_defaults(handler=cmd_check)

    benchmark = commands.add_parser("benchmark", help="score a fact-checker on a claim dataset")
    benchmark.add_argument("dataset", help="claims JSONL file")
    benchmark.add_argument("--baselines", action="store_true", help="add trivial baseline rows")
    benchmark.add_argument("--out", default="metrics_report.json")
    _add_config_flags(benchmark)
    benchmark.set_defaults(handler=cmd_benchmark)

    sweep = commands.add_parser("sweep", help="sweep the evidence threshold")
    sweep.add_argument("dataset", help="claims JSONL file")
    sweep.add_argument("--taus", default=",".join(str(t) for t in DEFAULT_TAUS))
    sweep.add_argument("--out-dir", dest="out_dir", default="sweep_out")
    _add_config_flags(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    eval_qa = commands.add_parser("eval-qa", help="evaluate LLM factuality over QA responses")
    eval_qa.add_argument("qa", help="QA JSONL file")
    eval_qa.add_argument("responses", help="responses JSONL file (id -> response)")
    eval_qa.add_argument("--out", default="factuality_report.json")
    _add_config_flags(eval_qa)
    eval_qa.set_defaults(handler=cmd_eval_qa)

    data = commands.add_parser("data", help="dataset utilities")
    data_commands = data.add_subparsers(dest="data_command", required=True)

    summarize = data_commands.add_parser("summarize", help="per-source dataset statistics")
    summarize.add_argument("files", nargs="+")
    summarize.add_argument("--qa", action="store_true", help="files are QA datasets")
    summarize.add_argument("--out", default=None, help="also write a JSON report")
    summarize.set_defaults(handler=cmd_data_summarize)

    standardize = data_commands.add_parser(
        "standardize", help="map four-way labels to binary, dropping not-supported"
    )
    standardize.add_argument("input")
    standardize.add_argument("output")
    standardize.set_defaults(handler=cmd_data_standardize)

    balance = data_commands.add_parser("balance", help="downsample the majority label")
    balance.add_argument("input")
    balance.add_argument("output")
    balance.add_argument("--majority", choices=("true", "false"), required=True)
    balance.add_argument("--cap", type=int, required=True)
    balance.add_argument("--seed", type=int, required=True)
    balance.set_defaults(handler=cmd_data_balance)

    curate = data_commands.add_parser("curate", help="draft Urdu translations for review")
    curate.add_argument("pool", help="exemplar pool JSONL file")
    curate.add_argument("records", help="records JSONL file (id, text)")
    curate.add_argument("output", help="drafts JSONL file")
    curate.add_argument("--k", type=int, default=5, help="exemplars per prompt")
    curate.add_argument("--mmr-lambda", dest="mmr_lambda", type=float, default=0.5)
    _add_config_flags(curate, gateways=False)
    curate.set_defaults(handler=cmd_data_curate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (
        CliError,
        datasets.DatasetError,
        PipelineError,
        GatewayError,
        SearchError,
        CurationError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
