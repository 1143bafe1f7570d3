"""Text, JSON, Graphviz and PNG renderings of a verdict."""

from __future__ import annotations

import json
import os
import re
from typing import List, Optional

from .confluence import CornerReport, JoinProof, ObjectJoin, SplitTree, Verdict
from .meta import MetaState, constraint_text
from .syntax import Program

SCHEMA = "chrconf-report/1"


# -- JSON --------------------------------------------------------------------------------------

def _state(s) -> str:
    return s.template_text() if isinstance(s, MetaState) else str(s)


def _proof(p: JoinProof, prog: Program) -> dict:
    def steps(path):
        return [{"step": t.label.text(prog), "state": _state(t.to)} for t in path]
    return {"left": steps(p.left_path), "right": steps(p.right_path), "closing": p.closing}


def _tree(t: SplitTree, prog: Program) -> dict:
    out = {
        "status": t.status,
        "where": [str(c) for c in t.corner.where],
        "reason": t.reason or None,
        "proof": _proof(t.proof, prog) if t.proof else None,
        "case": [str(c) for c in t.case] if t.case else None,
        "cover_probe": ({"samples": t.probe.samples, "passed": t.probe.passed, "detail": t.probe.detail}
                        if t.probe else None),
        "children": [_tree(c, prog) for c in t.children],
    }
    return out


def _object_join(j: ObjectJoin) -> dict:
    return {
        "status": j.status,
        "left_path": [str(s) for s in j.left_path],
        "right_path": [str(s) for s in j.right_path],
        "left_reachable": j.left_reach,
        "right_reachable": j.right_reach,
        "reason": j.reason or None,
    }


def corner_status(c: CornerReport) -> str:
    if c.tree is not None:
        return "split-joinable" if c.tree.ok else "not-shown-joinable"
    return c.join.status


def _corner(i: int, c: CornerReport, prog: Program) -> dict:
    if c.classical is not None:
        pc = c.classical
        return {
            "id": i, "kind": "alpha", "provenance": pc.describe(prog),
            "rules": [prog.rule_label(k) for k in pc.rules],
            "ancestor": str(pc.ancestor), "left": str(pc.left), "right": str(pc.right), "where": [],
            "status": corner_status(c), "join": _object_join(c.join), "tree": None,
        }
    m = c.meta
    return {
        "id": i, "kind": m.kind, "provenance": m.provenance, "rules": [],
        "ancestor": m.ancestor.template_text(), "left": m.left.template_text(), "right": m.right.template_text(),
        "where": [str(x) for x in m.where], "status": corner_status(c), "join": None,
        "tree": _tree(c.tree, prog),
    }


_FRESH = re.compile(r"\b_([A-BD-Z][A-Za-z]*)(\d+)\b")


def _stable_names(obj: dict) -> dict:
    """Renumber generated variable names by first appearance, so reports do not
    depend on how many fresh names were drawn earlier in the process."""
    seen: dict = {}
    counts: dict = {}

    def sub(m):
        if m.group(0) not in seen:
            counts[m.group(1)] = counts.get(m.group(1), 0) + 1
            seen[m.group(0)] = f"_{m.group(1)}{counts[m.group(1)]}"
        return seen[m.group(0)]
    return json.loads(_FRESH.sub(sub, json.dumps(obj)))


def to_json(v: Verdict, prog: Program, config: Optional[dict] = None, probes: Optional[dict] = None) -> dict:
    return {
        "schema": SCHEMA,
        "program": prog.path,
        "config": config or {},
        "mode": v.mode,
        "verdict": v.verdict,
        "exit_code": v.exit_code,
        "seconds": round(v.seconds, 6),
        "corners": [_stable_names(_corner(i, c, prog)) for i, c in enumerate(v.corners, 1)],
        "rejected": [{"provenance": r.provenance, "reason": r.reason} for r in v.rejected],
        "witness": ({"ancestor": str(v.witness.ancestor), "left": str(v.witness.left),
                     "right": str(v.witness.right), "source": v.witness.source} if v.witness else None),
        "notes": list(v.notes),
        "probes": probes,
    }


def dumps(v: Verdict, prog: Program, config: Optional[dict] = None, probes: Optional[dict] = None) -> str:
    return json.dumps(to_json(v, prog, config, probes), indent=2)


# -- text ----------------------------------------------------------------------------------------

def _tree_lines(t: dict, indent: str) -> List[str]:
    lines = [f"{indent}- {t['status']}" + (f": {t['reason']}" if t["reason"] else "")]
    if t["proof"]:
        p = t["proof"]
        for side in ("left", "right"):
            steps = " ; ".join(f"{s['step']} => {s['state']}" for s in p[side]) or "(no steps)"
            lines.append(f"{indent}    {side}: {steps}")
        lines.append(f"{indent}    closed by {p['closing']}")
    if t["case"]:
        probe = t["cover_probe"]
        lines.append(f"{indent}    split on {t['case'][0]} | {t['case'][1]}"
                     + (f" (cover probe {'passed' if probe['passed'] else 'FAILED'}, {probe['samples']} samples)"
                        if probe else ""))
        for c in t["children"]:
            lines.extend(_tree_lines(c, indent + "    "))
    return lines


def to_text(data: dict) -> str:
    out = [f"program: {data['program']}", f"mode: {data['mode']}", f"verdict: {data['verdict']}",
           f"critical corners: {len(data['corners'])}"]
    for c in data["corners"]:
        out.append("")
        out.append(f"corner {c['id']} [{c['kind']}] {c['status']}")
        out.append(f"  from: {c['provenance']}")
        out.append(f"  ancestor: {c['ancestor']}")
        out.append(f"  left:     {c['left']}")
        out.append(f"  right:    {c['right']}")
        if c["where"]:
            out.append(f"  where:    {_and(c['where'])}")
        if c["join"]:
            j = c["join"]
            if j["status"] == "joinable":
                out.append(f"  left path:  {' -> '.join(j['left_path'])}")
                out.append(f"  right path: {' -> '.join(j['right_path'])}")
            else:
                out.append(f"  {j['reason']} ({j['left_reachable']} and {j['right_reachable']} states)")
        if c["tree"]:
            out.extend(_tree_lines(c["tree"], "  "))
    if data["rejected"]:
        out.append("")
        out.append("pre-corners without a critical corner:")
        for r in data["rejected"]:
            out.append(f"  {r['provenance']}: {r['reason']}")
    if data["witness"]:
        w = data["witness"]
        out.append("")
        out.append(f"witness ({w['source']}): {w['left']} <- {w['ancestor']} -> {w['right']}")
    for n in data["notes"]:
        out.append(f"note: {n}")
    if data.get("probes"):
        out.append("")
        for k, val in data["probes"].items():
            out.append(f"probe {k}: {val}")
    out.append(f"time: {data['seconds']:.3f}s")
    return "\n".join(out) + "\n"


def _and(items: List[str]) -> str:
    return constraint_text(items) if items else "true"


# -- Graphviz ----------------------------------------------------------------------------------------

def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def corner_dot(c: dict) -> str:
    lines = [f"digraph corner{c['id']} {{", "  node [shape=box, fontname=monospace];"]
    lines.append(f"  a [label={_q(c['ancestor'])}];")
    lines.append(f"  l [label={_q(c['left'])}];")
    lines.append(f"  r [label={_q(c['right'])}];")
    if c["kind"] == "alpha":
        lines.append("  a -> l; a -> r;")
    else:
        lines.append("  a -> l [style=dashed, arrowhead=none, label=equiv]; a -> r;")
    if c["join"] and c["join"]["status"] == "joinable":
        for side, path in (("l", c["join"]["left_path"]), ("r", c["join"]["right_path"])):
            prev = side
            for k, s in enumerate(path[1:], 1):
                node = f"{side}{k}"
                lines.append(f"  {node} [label={_q(s)}];")
                lines.append(f"  {prev} -> {node} [style=dotted];")
                prev = node
    if c["tree"]:
        counter = [0]

        def emit(t: dict, parent: Optional[str], edge: str):
            counter[0] += 1
            node = f"t{counter[0]}"
            color = {"joinable": "green", "inconsistent": "gray", "split": "blue"}.get(t["status"], "red")
            label = t["status"]
            if t["proof"]:
                p = t["proof"]
                label += "\\nleft: " + (", ".join(s["step"] for s in p["left"]) or "-")
                label += "\\nright: " + (", ".join(s["step"] for s in p["right"]) or "-")
            lines.append(f"  {node} [label=\"{label}\", color={color}];")
            if parent:
                lines.append(f"  {parent} -> {node} [label={_q(edge)}];")
            else:
                lines.append(f"  a -> {node} [style=dashed];")
            for child, case in zip(t["children"], t["case"] or []):
                emit(child, node, case)

        emit(c["tree"], None, "")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- matplotlib ----------------------------------------------------------------------------------------

_COLORS = {"joinable": "#4caf50", "inconsistent": "#9e9e9e", "split": "#2196f3", "stuck": "#f44336",
           "non-joinable": "#f44336", "unknown": "#ff9800"}


def _layout(t: dict, depth: int, x0: float, out: list) -> float:
    """Place tree nodes left to right; returns the next free x."""
    if not t["children"]:
        out.append((x0, -depth, t))
        return x0 + 1
    x = x0
    xs = []
    for c in t["children"]:
        xs.append(x)
        x = _layout(c, depth + 1, x, out)
    out.append(((xs[0] + x - 1) / 2, -depth, t))
    return x


def render_png(data: dict, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.ticker import MaxNLocator

    corners = data["corners"]
    n = max(1, len(corners))
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.2 * n + 0.8), squeeze=False)
    fig.suptitle(f"{os.path.basename(data['program'])} [{data['mode']}]: {data['verdict']}")
    for ax, c in zip(axes[:, 0], corners or [None]):
        ax.axis("off")
        if c is None:
            ax.text(0.5, 0.5, "no critical corners", ha="center", va="center")
            continue
        ax.set_title(f"corner {c['id']} ({c['kind']}): {c['status']}", fontsize=9, loc="left")
        if c["tree"]:
            placed: list = []
            _layout(c["tree"], 0, 0, placed)
            pos = {id(t): (x, y) for x, y, t in placed}
            for x, y, t in placed:
                for child, case in zip(t["children"], t["case"] or []):
                    cx, cy = pos[id(child)]
                    ax.plot([x, cx], [y, cy], color="#555555", lw=1)
                    ax.text((x + cx) / 2, (y + cy) / 2, case, fontsize=7, ha="center", color="#333333")
            for x, y, t in placed:
                label = t["status"]
                if t["proof"]:
                    label += f"\n{len(t['proof']['left'])}+{len(t['proof']['right'])} steps"
                ax.text(x, y, label, ha="center", va="center", fontsize=8,
                        bbox=dict(boxstyle="round", fc=_COLORS.get(t["status"], "#ffffff"), alpha=0.6))
            xs = [p[0] for p in placed]
            ys = [p[1] for p in placed]
            ax.set_xlim(min(xs) - 1, max(xs) + 1)
            ax.set_ylim(min(ys) - 0.6, 0.6)
        else:
            j = c["join"]
            counts = [j["left_reachable"], j["right_reachable"]]
            ax.axis("on")
            ax.barh(["left wing", "right wing"], counts, color=_COLORS.get(j["status"], "#999999"))
            ax.set_xlabel("reachable states explored", fontsize=8)
            ax.xaxis.set_major_locator(MaxNLocator(integer=True))
            ax.tick_params(labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def export(data: dict, directory: str) -> List[str]:
    """Write per-corner .dot files, the JSON and text reports, and a PNG overview."""
    os.makedirs(directory, exist_ok=True)
    written = []
    for c in data["corners"]:
        p = os.path.join(directory, f"corner{c['id']}.dot")
        with open(p, "w", encoding="utf-8") as f:
            f.write(corner_dot(c))
        written.append(p)
    p = os.path.join(directory, "report.json")
    with open(p, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
    written.append(p)
    p = os.path.join(directory, "report.txt")
    with open(p, "w", encoding="utf-8") as f:
        f.write(to_text(data))
    written.append(p)
    p = os.path.join(directory, "corners.png")
    render_png(data, p)
    written.append(p)
    return written
