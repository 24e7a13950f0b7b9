import json
import math
import re

import pytest


def make_report(blind, coupled, decoupled, transfer, name="data.csv"):
    """A minimal report.json payload with the given mean losses."""

    def agg(v):
        return {
            "mean_loss": v,
            "std_loss": 0.01,
            "n_folds": 5,
            "log_ratio_vs_blind": math.log(v / blind),
        }

    return {
        "config": {
            "input_path": name,
            "label_column": "y",
            "sensitive_column": None,
            "mode": "regression",
            "loss": "balanced",
            "outer_folds": 5,
            "inner_folds": 5,
            "theta_grid": [0.0, 1.0],
            "seed": 0,
            "baselines": ["blind", "coupled", "decoupled", "decoupled_transfer"],
        },
        "dataset": {
            "path": name,
            "sensitive_column": "g",
            "n_rows": 100,
            "group_sizes": {"1": 60, "2": 40},
            "preprocessing_log": [],
            "discarded": False,
            "discard_reason": None,
        },
        "folds": [],
        "aggregates": {
            "blind": agg(blind),
            "coupled": agg(coupled),
            "decoupled": agg(decoupled),
            "decoupled_transfer": agg(transfer),
        },
        "degenerate_folds": [],
        "fit_counts": {},
        "version": "0.1.0",
    }


def write_reports(tmp_path, specs):
    paths = []
    for i, spec in enumerate(specs):
        p = tmp_path / f"report_{i}.json"
        p.write_text(json.dumps(make_report(*spec)), encoding="utf-8")
        paths.append(str(p))
    return paths


def parse_svg_points(svg_text):
    """Display coordinates of the scatter markers, in input order."""
    block = re.search(r'<g id="ratio-points">(.*?)</g>', svg_text, re.S)
    assert block is not None, "scatter group missing from SVG"
    return [
        (float(x), float(y))
        for x, y in re.findall(r'<use [^>]*x="([-\d.eE+]+)" y="([-\d.eE+]+)"', block.group(1))
    ]


def parse_svg_line(svg_text, gid):
    """Endpoints of a reference line drawn as 'M x y L x y'."""
    block = re.search(rf'<g id="{gid}">(.*?)</g>', svg_text, re.S)
    assert block is not None, f"{gid} missing from SVG"
    coords = re.search(
        r'd="M\s+([-\d.eE+]+)\s+([-\d.eE+]+)\s*\n?L\s+([-\d.eE+]+)\s+([-\d.eE+]+)', block.group(1)
    )
    assert coords is not None, f"{gid} path not parseable"
    x1, y1, x2, y2 = (float(v) for v in coords.groups())
    return (x1, y1), (x2, y2)


@pytest.fixture
def three_reports(tmp_path):
    # known mean losses -> known ratios
    specs = [
        (0.10, 0.08, 0.05, 0.04, "a.csv"),
        (0.20, 0.22, 0.10, 0.10, "b.csv"),
        (0.05, 0.05, 0.05, 0.05, "c.csv"),
    ]
    return write_reports(tmp_path, specs), specs
