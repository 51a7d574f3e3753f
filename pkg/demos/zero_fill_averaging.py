"""Evaluation conventions: per-class IoU and the zero-fill averaging rule.

A model that cannot predict some classes is often scored only on the
classes it knows. The zero-fill convention instead counts every missing
class as IoU 0, which rescales a 16-class mean into a comparable
19-class mean: mean_19 = mean_16 * 16 / 19.
"""

import numpy as np

from taxrelabel import (
    ConfusionMatrix,
    LabelRaster,
    MIoUSpec,
    accumulate_confusion,
    format_iou_table,
    iou_per_class,
    mean_iou,
)
from taxrelabel.sim import presets


def main():
    target = presets.demo_target_taxonomy()
    rng = np.random.default_rng(0)

    # a synthetic "legacy model": predicts only source classes, so the three
    # new classes never appear in its output
    matrix = ConfusionMatrix.zeros(8)
    for _ in range(10):
        gt = LabelRaster(rng.integers(0, 8, size=(32, 32), dtype=np.uint8))
        pred = gt.data.copy()
        pred[pred == presets.TERRAIN] = presets.VEGETATION
        pred[pred == presets.TRUCK] = presets.CAR
        pred[pred == presets.TRAIN] = presets.BUS
        flip = rng.random(pred.shape) < 0.05
        source_ids = np.array(sorted(presets.demo_source_taxonomy().ids), dtype=np.uint8)
        pred[flip] = rng.choice(source_ids, size=int(flip.sum()))
        accumulate_confusion(LabelRaster(pred), gt, matrix)

    ious = iou_per_class(matrix)
    print(format_iou_table(ious, target))

    common = tuple(sorted(presets.demo_source_taxonomy().ids))
    new = tuple(sorted(set(target.ids) - set(common)))
    subset_only = mean_iou(ious, MIoUSpec(class_subset=common))
    zero_filled = mean_iou(ious, MIoUSpec(class_subset=common, zero_fill=new))
    print(f"\nmean over the {len(common)} known classes:        {subset_only:.4f}")
    print(f"zero-filling the {len(new)} never-predicted classes: {zero_filled:.4f}")
    print(f"consistency: {subset_only:.4f} * {len(common)}/{len(common) + len(new)} "
          f"= {subset_only * len(common) / (len(common) + len(new)):.4f}")

    # the published-style arithmetic: a 16-class mean of 67.3 with three
    # zero-filled classes reads as 56.7 over 19 classes
    sixteen = np.full(16, 0.673)
    spec = MIoUSpec(class_subset=tuple(range(16)), zero_fill=(16, 17, 18))
    print(f"\n16-class mean 67.3 -> 19-class mean "
          f"{mean_iou(np.concatenate([sixteen, [np.nan] * 3]), spec) * 100:.1f}")


if __name__ == "__main__":
    main()
