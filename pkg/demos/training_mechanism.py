"""Self-training with and without relabeling, side by side.

Runs the same fixed-seed experiment twice and prints the IoU trajectory of
the three new classes. Without relabeling they never leave zero; with it
they converge shortly after the relabel start step.
"""

from taxrelabel.sim import presets, run_experiment


def main():
    kwargs = dict(seed=7, total_steps=2000, relabel_start_step=600, collect_start_step=400)
    print("training twice (about 15 s total)...")
    with_csi = run_experiment(presets.demo_experiment_config(csi_enabled=True, **kwargs))
    without_csi = run_experiment(presets.demo_experiment_config(csi_enabled=False, **kwargs))

    names = with_csi.class_names
    new_ids = with_csi.new_class_ids
    header = "step  " + "  ".join(f"{names[c]:>10}" for c in new_ids)
    print("\nnew-class IoU with relabeling (starts at step 600):")
    print(header)
    for step, ious in with_csi.iou_trajectory:
        print(f"{step:>4}  " + "  ".join(f"{ious[c]:>10.3f}" for c in new_ids))

    print("\nsame seed, relabeling disabled:")
    print(header)
    for step, ious in without_csi.iou_trajectory:
        print(f"{step:>4}  " + "  ".join(f"{ious[c]:>10.3f}" for c in new_ids))

    print(f"\nauto-configured map entries: "
          f"{[(names[f], names[t]) for f, t in with_csi.auto_map_entries]}")
    print(f"common-class mIoU: {with_csi.common_miou():.3f} with relabeling, "
          f"{without_csi.common_miou():.3f} without")


if __name__ == "__main__":
    main()
