"""Regenerate the checked-in synthetic dataset.

Run from the repository root::

    python3 tests/data/generate.py

Writes ten 64x64 scenes, their sample boxes and ground-truth leaf boxes.
The output is deterministic, so rerunning leaves the files unchanged.
"""

import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from synth import scene_boxes, tea_scene  # noqa: E402
from teapluck.imaging import format_annotations, save_image  # noqa: E402

N_SCENES = 10


def main():
    scenes = HERE / "scenes"
    scenes.mkdir(exist_ok=True)
    boxes, truth = [], ["# image_id x0 y0 w h"]
    for i in range(N_SCENES):
        image_id = f"scene{i:02d}"
        image, leaves, background = tea_scene(100 + i)
        save_image(image, scenes / f"{image_id}.ppm")
        boxes += scene_boxes(image_id, leaves, background)
        truth += [f"{image_id} {x0} {y0} {w} {h}" for x0, y0, w, h in leaves]
    (HERE / "annotations.txt").write_text(
        "# image_id label x0 y0 w h\n" + format_annotations(boxes))
    (HERE / "truth.txt").write_text("\n".join(truth) + "\n")


if __name__ == "__main__":
    main()
