"""LLM-backed proposer: prompt assembly, chat-completions client, parsing.

Each iteration sends one stateless request whose user message concatenates
three sections: a *description* of the plan and task, a *knowledge* text of
planning rules of thumb, and a *perception* log of the last few attempts
with their coverage feedback. The reply must contain a JSON block
``{"aps": [{"x": ..., "y": ...}, ...]}``.

Wire format (OpenAI-compatible subset), ``POST {base_url}/chat/completions``::

    {"model": str, "temperature": float,
     "messages": [{"role": "system", "content": str},
                  {"role": "user", "content": str}]}

Only ``choices[0].message.content`` of the reply is read. The API key is
taken from the environment variable named in the endpoint config and sent
as ``Authorization: Bearer <key>`` when nonempty.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .geometry import Point2D
from .optimizers import PlanningTask, ProposalRejected, TraceStep
from .propagation import Deployment, deployment_problems

log = logging.getLogger(__name__)

SYSTEM_PREAMBLE = (
    "You are an indoor wireless network planner. You place Wi-Fi access points "
    "in a 2D floor plan so that radio coverage meets a target. Coordinates are "
    "metres. Think about walls and materials between access points and the "
    "areas they must serve. Always finish your answer with one JSON object of "
    'the form {"aps": [{"x": <metres>, "y": <metres>}, ...]}.'
)


class ParseFailure(ProposalRejected):
    """The reply held no usable proposal; ``reason`` is fed back in-prompt."""


class LlmError(RuntimeError):
    pass


class EndpointUnreachable(LlmError):
    pass


class AuthFailure(LlmError):
    pass


class RateLimited(LlmError):
    pass


class BadResponse(LlmError):
    pass


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str = "http://127.0.0.1:8000/v1"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.2
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0  # seconds; doubles after each failed attempt

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class PromptBundle:
    description: str
    knowledge: str
    perception: str
    system_preamble: str = SYSTEM_PREAMBLE

    def user_message(self) -> str:
        return (
            f"## Description\n{self.description}\n\n"
            f"## Knowledge\n{self.knowledge}\n\n"
            f"## Perception\n{self.perception}\n"
        )

    def render(self) -> str:
        return f"{self.system_preamble}\n\n{self.user_message()}"


def default_knowledge() -> str:
    return resources.files("iwnplan").joinpath("data/knowledge.txt").read_text()


def _n(v: float) -> str:
    return f"{v:.6g}"


def _pt(p: Point2D) -> str:
    return f"({_n(p.x)}, {_n(p.y)})"


def describe_task(task: PlanningTask) -> str:
    """Compact, deterministic text rendering of the plan and objectives."""
    plan = task.plan
    b = plan.boundary
    lines = [
        f"Building boundary: rectangle from {_pt(b.origin)} to {_pt(Point2D(b.x1, b.y1))} "
        f"({_n(b.width)} m x {_n(b.depth)} m).",
        "Materials (dB loss per crossing): "
        + ", ".join(f"{m.name} {_n(m.attenuation)}" for m in plan.materials.values())
        + ".",
        "Walls (index: from -> to, material):",
    ]
    for i, w in enumerate(plan.walls):
        ops = [
            f"{o.kind} {o.material} {_n(o.width)} m at offset {_n(o.offset)}"
            for o in plan.openings_on(i)
        ]
        extra = f"; openings: {', '.join(ops)}" if ops else ""
        lines.append(f"  {i}: {_pt(w.start)} -> {_pt(w.end)}, {w.material}{extra}")
    if plan.rooms:
        lines.append("Rooms (label: lower-left corner, width x depth):")
        for r in plan.rooms:
            lines.append(f"  {r.label}: {_pt(r.origin)}, {_n(r.width)} x {_n(r.depth)}")
    rc = task.radio
    lines += [
        f"Radio: {_n(rc.frequency)} MHz, pathloss {_n(rc.reference_pathloss)} dB at "
        f"{_n(rc.reference_distance)} m, exponent {_n(rc.pathloss_exponent)}, "
        "plus the material loss of every wall crossed on the straight path.",
        f"Task: place between 1 and {task.max_aps} access points strictly inside the boundary "
        f"and not on a wall so that at least {_n(100 * task.coverage_target)}% of the "
        f"{_n(task.cell_size)} m grid cells have pathloss below {_n(task.threshold)} dB "
        "to their best access point.",
        'Answer format: {"aps": [{"x": 1.0, "y": 2.0}]}',
    ]
    return "\n".join(lines)


def render_step(step: TraceStep) -> str:
    fb = step.feedback
    aps = "[" + ", ".join(_pt(p) for p in step.deployment.aps) + "]"
    if fb.violation is not None:
        return f"iteration {fb.iteration}: APs {aps} → rejected: {fb.violation}"
    regions = "[" + ", ".join(
        f"{_pt(g.centroid)} {g.pathloss:.1f} dB {g.cells} cells" for g in fb.regions
    ) + "]"
    return f"iteration {fb.iteration}: APs {aps} → coverage {100 * fb.coverage:.2f}%, worst regions {regions}"


def build_prompt(
    task: PlanningTask,
    history: Sequence[TraceStep],
    knowledge: str,
    window: int = 5,
    notes: Sequence[str] = (),
    char_cap: int = 32000,
) -> PromptBundle:
    """Assemble the three prompt sections for one request.

    ``notes`` are reasons earlier replies in this iteration were rejected.
    Oldest perception lines are dropped first if the prompt exceeds
    ``char_cap`` characters.
    """
    description = describe_task(task)
    recent = list(history)[-window:] if window > 0 else []
    lines = [render_step(s) for s in recent]
    tail = [f"note: your previous reply was rejected: {n}" for n in notes]

    def perception(ls: list[str]) -> str:
        body = ls if ls else ["no prior attempts"]
        return "\n".join(body + tail)

    bundle = PromptBundle(description, knowledge.strip(), perception(lines))
    while len(bundle.render()) > char_cap and lines:
        lines = lines[1:]
        bundle = PromptBundle(description, knowledge.strip(), perception(lines))
    if len(bundle.render()) > char_cap:
        raise ValueError(f"prompt exceeds {char_cap} characters even without history")
    return bundle


# ---------------------------------------------------------------------------
# parsing


def serialize_proposal(deployment: Deployment) -> str:
    return json.dumps({"aps": [{"x": p.x, "y": p.y} for p in deployment.aps]})


def extract_json_object(text: str, key: str) -> dict | None:
    """First JSON object in ``text`` that has ``key``, ignoring prose and fences."""
    decoder = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict) and key in obj:
            return obj
        i = text.find("{", i + 1)
    return None


def parse_proposal(response_text: str, task: PlanningTask) -> Deployment:
    doc = extract_json_object(response_text, "aps")
    if doc is None:
        raise ParseFailure('no JSON object with an "aps" list found')
    aps = doc["aps"]
    if not isinstance(aps, list) or not aps:
        raise ParseFailure('"aps" must be a nonempty list')
    pts = []
    for k, a in enumerate(aps):
        if not isinstance(a, dict) or "x" not in a or "y" not in a:
            raise ParseFailure(f'ap {k} must be an object with "x" and "y"')
        x, y = a["x"], a["y"]
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in (x, y)):
            raise ParseFailure(f"ap {k} coordinates must be numbers")
        pts.append(Point2D(float(x), float(y)))
    d = Deployment(tuple(pts), task.radio)
    problems = deployment_problems(task.plan, d, task.max_aps)
    if problems:
        raise ParseFailure(problems[0])
    return d


# ---------------------------------------------------------------------------
# client


class LlmClient:
    """Chat-completions client with retry and exponential backoff.

    ``calls`` counts HTTP requests issued. ``log_path``, when set, receives
    one JSON line per request with the payload and reply (never the key).
    """

    def __init__(
        self,
        endpoint: LlmEndpointConfig,
        sleep: Callable[[float], None] = time.sleep,
        log_path: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.sleep = sleep
        self.log_path = Path(log_path) if log_path else None
        self.transport = transport
        self.calls = 0

    def _log(self, record: dict) -> None:
        if self.log_path is not None:
            with self.log_path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def complete(self, bundle: PromptBundle, max_attempts: int | None = None) -> str:
        ep = self.endpoint
        attempts = ep.max_retries + 1 if max_attempts is None else max(1, max_attempts)
        payload = {
            "model": ep.model,
            "temperature": ep.temperature,
            "messages": [
                {"role": "system", "content": bundle.system_preamble},
                {"role": "user", "content": bundle.user_message()},
            ],
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(ep.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = ep.base_url.rstrip("/") + "/chat/completions"
        last = "no attempt made"
        rate_limited = False
        with httpx.Client(timeout=ep.timeout, transport=self.transport) as http:
            for attempt in range(attempts):
                if attempt:
                    self.sleep(ep.backoff_base * 2 ** (attempt - 1))
                self.calls += 1
                try:
                    resp = http.post(url, json=payload, headers=headers)
                except httpx.TimeoutException as exc:
                    last, rate_limited = f"timeout: {exc}", False
                    self._log({"attempt": attempt, "request": payload, "error": last})
                    continue
                except httpx.TransportError as exc:
                    last, rate_limited = f"transport error: {exc}", False
                    self._log({"attempt": attempt, "request": payload, "error": last})
                    continue
                self._log({"attempt": attempt, "request": payload, "status": resp.status_code, "response": resp.text})
                if resp.status_code in (401, 403):
                    raise AuthFailure(f"endpoint rejected credentials from ${ep.api_key_env} ({resp.status_code})")
                if resp.status_code == 429:
                    last, rate_limited = "HTTP 429", True
                    continue
                if resp.status_code >= 500:
                    last, rate_limited = f"HTTP {resp.status_code}", False
                    continue
                if resp.status_code >= 400:
                    raise BadResponse(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    return resp.json()["choices"][0]["message"]["content"] or ""
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise BadResponse(f"malformed chat-completion reply: {exc}") from exc
        if rate_limited:
            raise RateLimited(f"rate limited after {attempts} attempts")
        raise EndpointUnreachable(f"{url} failed after {attempts} attempts ({last})")


def llm_propose(bundle: PromptBundle, endpoint: LlmEndpointConfig, client: LlmClient | None = None) -> str:
    return (client or LlmClient(endpoint)).complete(bundle)


class LlmProposer:
    """Proposer backed by a chat endpoint.

    Within one iteration, network retries and re-asks after a ParseFailure
    share a budget of ``max_retries + 1`` requests. If the budget runs out
    on parse failures the iteration is rejected with the last reason.
    """

    name = "llm"

    def __init__(
        self,
        endpoint: LlmEndpointConfig,
        knowledge: str | None = None,
        window: int = 5,
        client: LlmClient | None = None,
    ):
        self.endpoint = endpoint
        self.knowledge = default_knowledge() if knowledge is None else knowledge
        self.window = window
        self.client = client or LlmClient(endpoint)

    def __call__(self, task: PlanningTask, history: Sequence[TraceStep]) -> Deployment:
        budget = self.endpoint.max_retries + 1
        notes: list[str] = []
        while True:
            bundle = build_prompt(task, history, self.knowledge, self.window, notes)
            before = self.client.calls
            text = self.client.complete(bundle, max_attempts=budget)
            budget -= self.client.calls - before
            try:
                return parse_proposal(text, task)
            except ParseFailure as exc:
                log.info("rejected reply: %s", exc)
                notes.append(str(exc))
                if budget <= 0:
                    raise


class ScriptedProposer:
    """Replays a fixed list of deployments; the last one repeats forever."""

    name = "scripted"

    def __init__(self, script: Sequence[Deployment]):
        if not script:
            raise ValueError("script must be nonempty")
        self.script = list(script)

    def __call__(self, task: PlanningTask, history: Sequence[TraceStep]) -> Deployment:
        return self.script[min(len(history), len(self.script) - 1)]


def scripted_proposer(script: Sequence[Deployment]) -> ScriptedProposer:
    return ScriptedProposer(script)
