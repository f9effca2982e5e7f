"""Command-line entry points.

Every subcommand is a thin client of the HTTP service: commands spin up the
FastAPI app in-process and talk to it over an ASGI transport, so the CLI and
a running server exercise exactly the same code paths.  Provider credentials
and replay archives come from the environment, never from flags.
"""

from __future__ import annotations

import json
import sys
import warnings

import click

with warnings.catch_warnings():
    # starlette warns about its own httpx usage; not actionable here
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from .service import create_app

KIND_TO_STAGE = {
    "vacuous": 1,
    "situational": 2,
    "insufficiency": 3,
    "restrictiveness": 3,
    "redundancy": 4,
}
KIND_TO_NAME = {
    "vacuous": "vacuousConflict",
    "situational": "situationalConflict",
    "insufficiency": "insufficiency",
    "restrictiveness": "overRestrictiveness",
    "redundancy": "redundancy",
}


def _client(project: str | None = None) -> TestClient:
    # in-process ASGI client: the CLI exercises the same endpoints a
    # running server would expose
    return TestClient(create_app(project_path=project))


def _post_document(client: httpx.Client, path: str):
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    response = client.post("/document", json={"text": text})
    if response.status_code == 422:
        for item in response.json()["detail"]:
            click.echo(
                f"{path}:{item['line']}:{item['column']}: {item['message']} "
                f"[bytes {item['span'][0]}..{item['span'][1]}]",
                err=True,
            )
        sys.exit(1)
    response.raise_for_status()
    return response.json()


@click.group()
def main():
    """Analyze SLEEC normative-requirement documents."""


@main.command()
@click.argument("document", type=click.Path(exists=True, dir_okay=False))
def parse(document):
    """Parse a document and report its symbols and rules."""
    with _client() as client:
        info = _post_document(client, document)
    click.echo(f"events: {len(info['events'])}  measures: {len(info['measures'])}")
    click.echo(f"rules: {len(info['rules'])}  facts: {len(info['facts'])}  relations: {len(info['relations'])}")
    for rule in info["rules"]:
        click.echo(f"  {rule['text']}")


@main.command()
@click.argument("document", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), help="write to a file instead of stdout")
def normalize(document, out):
    """Rewrite a document into the canonical normalized form."""
    with _client() as client:
        info = _post_document(client, document)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(info["normalized"])
    else:
        click.echo(info["normalized"], nl=False)


@main.command()
@click.argument("document", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), help="write candidates to a file")
def sanitize(document, out):
    """Extract candidate capability relations and filter them for
    consistency.  Needs SLEECKIT_REPLAY_ARCHIVE or SLEECKIT_LLM_BASE_URL."""
    with _client() as client:
        _post_document(client, document)
        response = client.post("/extract")
        if response.status_code == 400:
            click.echo(f"error: {response.json()['detail']}", err=True)
            sys.exit(1)
        if response.status_code == 502:
            click.echo(f"provider error: {response.json()['detail']}", err=True)
            sys.exit(1)
        response.raise_for_status()
        payload = response.json()
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("document", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--kind",
    type=click.Choice(sorted(KIND_TO_STAGE)),
    default=None,
    help="run a single check kind (standalone, bypassing the stage gate)",
)
@click.option("--bound", default=None, help="K,T override, e.g. 6,108002")
@click.option("--format", "fmt", type=click.Choice(["text", "machine"]), default="text")
@click.option("--force", is_flag=True, help="run every stage even when earlier stages report issues")
def check(document, kind, bound, fmt, force):
    """Run the staged well-formedness analysis.

    Exit status: 0 all clean, 2 issues found, 1 usage or parse errors.
    """
    body = {"force": force or kind is not None}
    if kind is not None:
        body["stage"] = KIND_TO_STAGE[kind]
    if bound:
        try:
            k, t = bound.split(",")
            body["bound"] = [int(k), int(t)]
        except ValueError:
            click.echo("error: --bound expects K,T integers", err=True)
            sys.exit(1)
    with _client() as client:
        _post_document(client, document)
        response = client.post("/analyze", json=body)
        if response.status_code == 409:
            click.echo(f"error: {response.json()['detail']}", err=True)
            sys.exit(1)
        response.raise_for_status()
        entry = response.json()
    diagnoses = entry["diagnoses"]
    if kind is not None:
        diagnoses = [d for d in diagnoses if d["kind"] == KIND_TO_NAME[kind]]
    if fmt == "machine":
        click.echo(json.dumps({**entry, "diagnoses": diagnoses}, indent=2, sort_keys=True))
    else:
        for diag in diagnoses:
            line = f"[stage {diag['stage']}] {diag['kind']} {diag['subject']}: {diag['verdict']}"
            if diag["narrative"]:
                line += f" — {diag['narrative']}"
            click.echo(line)
    sys.exit(2 if any(d["verdict"] == "issueFound" for d in diagnoses) else 0)


@main.command()
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--project", type=click.Path(dir_okay=False), default="project.sleecproj",
              show_default=True, help="project file to persist state into")
@click.option("--document", type=click.Path(exists=True, dir_okay=False), default=None,
              help="preload a document into the project")
def serve(port, host, project, document):
    """Run the review service until interrupted."""
    import uvicorn

    app = create_app(project_path=project)
    if document:
        with TestClient(app) as client:
            text = open(document, encoding="utf-8").read()
            response = client.post("/document", json={"text": text})
            if response.status_code == 422:
                for item in response.json()["detail"]:
                    click.echo(f"{document}:{item['line']}:{item['column']}: {item['message']}", err=True)
                sys.exit(1)
    try:
        uvicorn.run(app, host=host, port=port)
    except OSError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
