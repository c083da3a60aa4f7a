"""Static SVG reconstructions: ground truth on the left, a method's explanation on the right."""

import logging
import xml.etree.ElementTree as ET
from pathlib import Path

from .datasets import read_dataset, read_outcomes
from .exceptions import CapsuleError
from .geometry import Pose, default_library
from .pipeline import MethodSpec, format_number

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
PANEL = 240.0
MARGIN = 20.0
EXTENT = 1.25
POINT_RADIUS = 4.0
VERTEX_HALF = 3.0
PALETTE = {0: "#9e9e9e", 1: "#d62728", 2: "#1f77b4", 3: "#2ca02c", 4: "#9467bd", 5: "#ff7f0e"}


def _colour(label):
    return PALETTE.get(int(label), "#000000")


def _to_panel(x, y, offset):
    scale = (PANEL - 2 * MARGIN) / (2 * EXTENT)
    return offset + MARGIN + (x + EXTENT) * scale, MARGIN + (EXTENT - y) * scale


def _path(vertices, offset):
    coords = [_to_panel(x, y, offset) for x, y in vertices]
    return "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in coords) + " Z"


def _outline(parent, template, pose, label, offset, dashed=False):
    vertices = template.posed(pose)
    attrs = {
        "d": _path(vertices, offset),
        "fill": "none",
        "stroke": _colour(label),
        "stroke-width": "1.5",
    }
    if dashed:
        attrs["stroke-dasharray"] = "4 3"
    ET.SubElement(parent, "path", attrs)
    for x, y in vertices:
        px, py = _to_panel(x, y, offset)
        ET.SubElement(
            parent,
            "rect",
            {
                "x": f"{px - VERTEX_HALF:.2f}",
                "y": f"{py - VERTEX_HALF:.2f}",
                "width": f"{2 * VERTEX_HALF:.2f}",
                "height": f"{2 * VERTEX_HALF:.2f}",
                "fill": "none",
                "stroke": _colour(label),
            },
        )


def _points(parent, points, labels, offset):
    for (x, y), label in zip(points, labels):
        px, py = _to_panel(x, y, offset)
        ET.SubElement(
            parent,
            "circle",
            {"cx": f"{px:.2f}", "cy": f"{py:.2f}", "r": f"{POINT_RADIUS:.2f}", "fill": _colour(label)},
        )


def _caption(parent, text, offset):
    node = ET.SubElement(
        parent,
        "text",
        {"x": f"{offset + MARGIN:.2f}", "y": f"{MARGIN - 6:.2f}", "font-size": "11", "fill": "#000000"},
    )
    node.text = text


def render_scene_svg(scene, outcome, library=None):
    library = library or default_library()
    root = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "width": f"{2 * PANEL:.0f}",
            "height": f"{PANEL:.0f}",
            "viewBox": f"0 0 {2 * PANEL:.0f} {PANEL:.0f}",
        },
    )
    truth = ET.SubElement(root, "g", {"id": "truth"})
    _caption(truth, f"scene {scene.index} ground truth", 0.0)
    for k, pose in enumerate(scene.poses):
        if pose is not None:
            _outline(truth, library[k], pose, k + 1, 0.0, dashed=True)
    _points(truth, scene.points, scene.labels, 0.0)

    lam = outcome.get("lambda_init")
    title = outcome["method"] if lam is None else f"{outcome['method']} lambda={format_number(lam)}"
    reconstruction = ET.SubElement(root, "g", {"id": "reconstruction"})
    _caption(reconstruction, title, PANEL)
    for obj in outcome["objects"]:
        k = obj["template"]
        _outline(reconstruction, library[k - 1], Pose(obj["pose"]), k, PANEL)
    _points(reconstruction, scene.points, outcome["labels"], PANEL)
    return ET.tostring(root, encoding="unicode") + "\n"


def plot_scenes(run_dir, scene_ids, method, sigma, lambda_init=None):
    """Write one SVG per requested scene id; returns the written paths."""
    run_dir = Path(run_dir)
    spec = MethodSpec(method, None if method == "ransac" else lambda_init)
    outcome_path = run_dir / "outcomes" / spec.outcome_name(sigma)
    dataset_path = run_dir / f"dataset_sigma{format_number(sigma)}.jsonl"
    if not scene_ids:
        return []
    for path in (outcome_path, dataset_path):
        if not path.exists():
            raise CapsuleError(f"Missing run output {path}")

    library = default_library()
    scenes = {scene.index: scene for scene in read_dataset(dataset_path, library=library)}
    outcomes = {record["scene"]: record for record in read_outcomes(outcome_path)}
    unknown = [i for i in scene_ids if i not in scenes or i not in outcomes]
    if unknown:
        raise CapsuleError(f"Unknown scene id(s): {', '.join(map(str, unknown))}")

    plot_dir = run_dir / "plots"
    plot_dir.mkdir(parents=True, exist_ok=True)
    written = []
    stem = spec.outcome_name(sigma).removesuffix(".jsonl")
    for index in scene_ids:
        path = plot_dir / f"{stem}_scene{index}.svg"
        path.write_text(render_scene_svg(scenes[index], outcomes[index], library), encoding="utf-8")
        written.append(path)
        logger.debug("Wrote %s", path)
    return written
