"""Record API fixtures for the review-UI contract tests.

Drives the real service end to end and captures the JSON payloads the
browser client consumes: the conflicted three-rule project with its stage-1
diagnoses and stage-4 refusal, then the repaired document with every stage
clean.  Run from the repository root:

    python3 scripts/record_ui_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from sleeckit.extract import CallableProvider, RecordingProvider, extract
from sleeckit.service import create_app
from sleeckit.surface import parse

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"

VC_DOC = """\
def_start
  event A
  event B
  event C
def_end
rule_start
  R1 when A then B within 5 hours
  R2 when B then C within 5 hours
  R3 when A then not C within 10 hours
rule_end
"""

FIXED_DOC = """\
def_start
  event A
  event B
  event C
def_end
rule_start
  R1 when A then B within 5 hours
  R2 when B then C within 5 hours
rule_end
"""


def scripted(prompt: str) -> str:
    if "Relation to assess (isContradictoryWith)" in prompt:
        return json.dumps(
            {
                "kind": "isContradictoryWith",
                "source": "B",
                "target": "C",
                "justification": "the two responses cannot take effect together",
                "verdict": "positive",
            }
        )
    if "Relation to assess (hypernym)" in prompt:
        return json.dumps(
            {
                "kind": "hypernym",
                "source": "A",
                "target": "B",
                "justification": "",
                "verdict": "negative",
            }
        )
    return "no relations found"


def main(out_dir: Path = FIXTURES) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    archive = out_dir / "session.jsonl"
    archive.unlink(missing_ok=True)
    extract(parse(VC_DOC).signature, RecordingProvider(CallableProvider(scripted), str(archive)))

    import os

    os.environ["SLEECKIT_REPLAY_ARCHIVE"] = str(archive)
    client = TestClient(create_app())
    client.post("/document", json={"text": VC_DOC}).raise_for_status()
    client.post("/extract").raise_for_status()

    fixtures: dict[str, object] = {}
    fixtures["document"] = client.get("/document").json()
    fixtures["relations"] = client.get("/relations").json()
    fixtures["analysis_issues"] = client.post("/analyze", json={}).json()
    refusal = client.post("/analyze", json={"stage": 4})
    fixtures["gate_refusal"] = {"status": refusal.status_code, "detail": refusal.json()["detail"]}

    client.post("/document", json={"text": FIXED_DOC}).raise_for_status()
    fixtures["document_fixed"] = client.get("/document").json()
    fixtures["analysis_resolved"] = client.post("/analyze", json={}).json()
    allowed = client.post("/analyze", json={"stage": 4})
    fixtures["gate_allowed"] = {"status": allowed.status_code, "entry": allowed.json()}

    for name, payload in fixtures.items():
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
