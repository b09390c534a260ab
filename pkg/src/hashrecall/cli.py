"""Command-line front end: generate, build, search, eval.

Exit codes: 0 success, 1 usage error (bad flags or parameter values),
2 data/format error (missing or malformed files), 3 internal invariant
violation.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import PipelineConfig, load_config
from .engine import load_index, search
from .errors import FormatError, InvariantError
from .evalbench import AblationVariant, evaluate
from .pipeline import build_pipeline, load_split, save_build
from .store import (
    PairedCorpus,
    SyntheticSpec,
    generate_synthetic,
    read_embeddings,
    write_embeddings,
)

VARIANT_NAMES = {
    "full": AblationVariant.FULL,
    "without": AblationVariant.WITHOUT_CLASSIFICATION,
    "one": AblationVariant.ONE_CLASSIFICATION,
    "ideal": AblationVariant.IDEAL_CLASSIFICATION,
}


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="TOML or JSON config file used by subcommands.")
@click.option("--seed", type=int, default=None, help="Default seed for subcommands.")
@click.option("--quiet", is_flag=True, default=False, help="Suppress progress output.")
@click.pass_context
def cli(ctx, config_path, seed, quiet):
    """Two-stage embedding search: clustered binary-hash recall + cosine re-rank."""
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed


def _say(ctx, message: str) -> None:
    if not ctx.obj.get("quiet"):
        click.echo(message)


@cli.command()
@click.option("--n", "n_pairs", type=int, required=True, help="Number of pairs.")
@click.option("--dim", type=int, required=True, help="Embedding dimension.")
@click.option("--clusters", type=int, default=10, show_default=True)
@click.option("--sigma", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=None, help="Generator seed [default: 0].")
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("."))
@click.pass_context
def generate(ctx, n_pairs, dim, clusters, sigma, seed, out_dir):
    """Write a synthetic paired corpus: code.cosh, desc.cosh, pairs.json."""
    if seed is None:
        seed = ctx.obj.get("seed")
    if seed is None:
        seed = 0
    spec = SyntheticSpec(
        n_pairs=n_pairs, dim=dim, n_latent_clusters=clusters,
        noise_sigma=sigma, seed=seed,
    )
    corpus = generate_synthetic(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_embeddings(corpus.code, out_dir / "code.cosh")
    write_embeddings(corpus.desc, out_dir / "desc.cosh")
    with open(out_dir / "pairs.json", "w") as fh:
        json.dump(
            {
                "n_pairs": n_pairs,
                "dim": dim,
                "n_latent_clusters": clusters,
                "noise_sigma": sigma,
                "seed": seed,
                "code": "code.cosh",
                "desc": "desc.cosh",
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _say(ctx, f"wrote {n_pairs} pairs of dim {dim} to {out_dir}")


def _load_corpus(code_path: Path, desc_path: Path) -> PairedCorpus:
    for p in (code_path, desc_path):
        if not Path(p).exists():
            raise FormatError(f"missing corpus file: {p}")
    return PairedCorpus(code=read_embeddings(code_path), desc=read_embeddings(desc_path))


@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="TOML or JSON config file (overrides the global --config).")
@click.option("--code", "code_path", type=click.Path(path_type=Path), default=None)
@click.option("--desc", "desc_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--epochs", type=int, default=None, help="Override training epochs.")
@click.pass_context
def build(ctx, config_path, code_path, desc_path, out_dir, seed, epochs):
    """Run the offline stage and persist the search index."""
    if config_path is None:
        config_path = ctx.obj.get("config_path")
    if seed is None:
        seed = ctx.obj.get("seed")
    cfg = load_config(config_path) if config_path else PipelineConfig()
    overrides = {}
    if code_path is not None:
        overrides["code_path"] = str(code_path)
    if desc_path is not None:
        overrides["desc_path"] = str(desc_path)
    if out_dir is not None:
        overrides["index_dir"] = str(out_dir)
    if seed is not None:
        overrides["seed"] = seed
    if epochs is not None:
        overrides["epochs"] = epochs
    if overrides:
        cfg = cfg.replace(**overrides)
    if not cfg.code_path or not cfg.desc_path or not cfg.index_dir:
        raise click.UsageError("build needs --code, --desc and --out (or a config with paths)")

    corpus = _load_corpus(Path(cfg.code_path), Path(cfg.desc_path))
    artifacts = build_pipeline(corpus, cfg)
    save_build(artifacts, cfg, cfg.index_dir)
    _say(
        ctx,
        f"built index over {corpus.count} items (k={cfg.k}, bits={cfg.bits}) "
        f"at {cfg.index_dir}",
    )


@cli.command()
@click.option("--index", "index_dir", type=click.Path(path_type=Path), required=True)
@click.option("--query", "query_path", type=click.Path(path_type=Path), required=True,
              help="Embedding file holding the query vector(s).")
@click.option("--row", type=int, default=0, show_default=True,
              help="Which row of the query file to search.")
@click.option("--n", "top_n", type=int, default=10, show_default=True,
              help="Maximum number of results to print.")
@click.option("--recall", "n_recall", type=int, default=None,
              help="Total recall budget (default: the index's).")
@click.pass_context
def search_cmd(ctx, index_dir, query_path, row, top_n, n_recall):
    """Search the index with a query embedding; prints rank, id, score."""
    if not Path(index_dir).exists():
        raise FormatError(f"missing index directory: {index_dir}")
    if not Path(query_path).exists():
        raise FormatError(f"missing query file: {query_path}")
    index = load_index(index_dir)
    queries = read_embeddings(query_path)
    if not 0 <= row < queries.count:
        raise click.UsageError(f"--row {row} out of range for {queries.count} rows")
    result = search(index, queries.data[row], n_recall)
    for rank, (item, score) in enumerate(
        zip(result.item_ids[:top_n], result.scores[:top_n]), start=1
    ):
        click.echo(f"{rank}\t{item}\t{score:.6f}")


cli.add_command(search_cmd, name="search")


@cli.command(name="eval")
@click.option("--index", "index_dir", type=click.Path(path_type=Path), required=True)
@click.option("--queries", "queries_path", type=click.Path(path_type=Path), required=True,
              help="Description embedding file; rows are query vectors.")
@click.option("--split", "split_path", type=click.Path(path_type=Path), default=None,
              help="split.json naming the test ids (default: <index>/split.json).")
@click.option("--variant", type=click.Choice([*VARIANT_NAMES, "all"]), default="full",
              show_default=True)
@click.option("--timing", is_flag=True, default=False, help="Also measure stage timings.")
@click.option("--recall", "n_recall", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Directory for report.json / report.csv (default: the index dir).")
@click.pass_context
def eval_cmd(ctx, index_dir, queries_path, split_path, variant, timing, n_recall, out_dir):
    """Evaluate retrieval accuracy (and optionally timing) on the test split."""
    index_dir = Path(index_dir)
    if not index_dir.exists():
        raise FormatError(f"missing index directory: {index_dir}")
    if not Path(queries_path).exists():
        raise FormatError(f"missing queries file: {queries_path}")
    split_path = Path(split_path) if split_path else index_dir / "split.json"
    if not split_path.exists():
        raise FormatError(f"missing split file: {split_path}")

    index = load_index(index_dir)
    desc = read_embeddings(queries_path)
    split = load_split(split_path)
    if split.test.size == 0:
        raise FormatError(f"split file {split_path} has no test ids")
    if split.test.max() >= desc.count:
        raise FormatError("split test ids exceed the query file's row count")

    variants = list(VARIANT_NAMES.values()) if variant == "all" else [VARIANT_NAMES[variant]]
    report = evaluate(
        index,
        desc.data[split.test],
        split.test,
        variants,
        n_recall=n_recall,
        timing=timing,
    )
    out_dir = Path(out_dir) if out_dir else index_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_json(out_dir / "report.json")
    report.write_csv(out_dir / "report.csv")
    for system, metric, value in report.csv_rows():
        _say(ctx, f"{system:24s} {metric:14s} {value:.6f}")
    _say(ctx, f"report written to {out_dir}/report.json")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (FormatError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except InvariantError as exc:
        click.echo(f"internal error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
