"""Part-level text-guided grasp synthesis."""

import json as _json

from ._core import (
    GRASP_DIM,
    OPTIMIZED_DIM,
    Model,
    Object,
    T2GError,
    assignment_entropy,
    categories,
    generate_grasp,
    generate_object,
    hand_vertices,
    intersection_volume,
    label_grasp_part,
    load_checkpoint,
    nearest_distances,
    penetration_depth,
    refine,
    run_cli,
    sample,
    schedule,
    simulate_displacement,
    template_text,
)
from ._core import evaluate as _evaluate


def evaluate(grasps, texts, object_index, objects, restarts=50):
    """Metrics report for grasps against their objects, as a dict."""
    return _json.loads(_evaluate(list(grasps), list(texts), list(object_index), list(objects), restarts))


def main(argv=None):
    import sys

    code, out, err = run_cli(sys.argv[1:] if argv is None else list(argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
