#!/usr/bin/env python3
"""Convert a DiLiGenT-MV style capture into the splatir dataset layout.

This is a standalone preprocessing utility, not part of the library API.
It expects one object directory of the DiLiGenT-MV release, i.e.

    <root>/
        Calib_Results.txt          MATLAB-style export with "KK = [...]",
                                   "Rc_<i> = [...]" (world-to-camera rotation)
                                   and "Tc_<i> = [...]" per view
        view_01/ .. view_NN/
            001.png .. MMM.png     16-bit linear PNG, one image per light
            mask.png               8-bit foreground mask
            light_directions.txt   one "x y z" row per image, camera frame,
                                   pointing from the surface toward the light
            light_intensities.txt  one "r g b" row per image
            normal.png             optional camera-frame normal map encoded
                                   as (n + 1) / 2; copied to normal_ups.png

If Calib_Results.txt is missing, a PS-NeRF style params.json next to it is
accepted instead: {"K": 3x3 row-major, "pose_c2w": [4x4 row-major per view]}.

Output is the splatir layout: cameras.json, lights.json, view_NNN/ with
light_NNN.png (16-bit linear), mask.png, and optional normal_ups.png.
Light directions are rotated into the world frame with the per-view pose.

Example:
    python3 tools/convert_diligent.py --root mvpmsData/bearPNG \\
        --out data/bear --normalize-intensity
"""

import argparse
import json
import re
import sys
from pathlib import Path

import cv2
import numpy as np


def fail(msg: str) -> None:
    print(f"convert_diligent: {msg}", file=sys.stderr)
    sys.exit(2)


def parse_matlab_matrix(text: str, name: str, rows: int, cols: int) -> np.ndarray:
    """Extracts `name = [ ... ]` (semicolon or newline separated rows)."""
    m = re.search(rf"{name}\s*=\s*\[([^\]]*)\]", text, re.S)
    if m is None:
        raise KeyError(name)
    values = [float(tok) for tok in re.split(r"[\s,;]+", m.group(1).strip()) if tok]
    if len(values) != rows * cols:
        raise ValueError(f"{name}: expected {rows * cols} numbers, found {len(values)}")
    return np.asarray(values, dtype=np.float64).reshape(rows, cols)


def load_calibration(root: Path, n_views: int):
    """Returns (K, [world_to_cam 4x4 per view])."""
    calib = root / "Calib_Results.txt"
    if calib.exists():
        text = calib.read_text()
        K = parse_matlab_matrix(text, "KK", 3, 3)
        poses = []
        for i in range(1, n_views + 1):
            R = parse_matlab_matrix(text, f"Rc_{i}", 3, 3)
            t = parse_matlab_matrix(text, f"Tc_{i}", 3, 1).reshape(3)
            W = np.eye(4)
            W[:3, :3] = R
            W[:3, 3] = t
            poses.append(W)
        return K, poses
    params = root / "params.json"
    if params.exists():
        blob = json.loads(params.read_text())
        K = np.asarray(blob["K"], dtype=np.float64).reshape(3, 3)
        poses = []
        for c2w in blob["pose_c2w"][:n_views]:
            c2w = np.asarray(c2w, dtype=np.float64).reshape(4, 4)
            poses.append(np.linalg.inv(c2w))
        if len(poses) < n_views:
            fail(f"params.json lists {len(poses)} poses but {n_views} views were found")
        return K, poses
    fail(f"no Calib_Results.txt or params.json under {root}")


def read_rows(path: Path, cols: int) -> np.ndarray:
    if not path.exists():
        fail(f"missing {path}")
    rows = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if rows.shape[1] != cols:
        fail(f"{path}: expected {cols} columns, found {rows.shape[1]}")
    return rows


def read_image_linear(path: Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        fail(f"unreadable image {path}")
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    img = raw.astype(np.float64) / scale
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img[:, :, 2::-1]  # BGR(A) -> RGB


def write_png16(path: Path, rgb: np.ndarray) -> None:
    q = np.rint(np.clip(rgb, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), q[:, :, ::-1]):
        fail(f"could not write {path}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", type=Path, required=True, help="DiLiGenT-MV object directory")
    ap.add_argument("--out", type=Path, required=True, help="output dataset directory")
    ap.add_argument("--normalize-intensity", action="store_true",
                    help="divide each image by its calibrated light intensity and "
                         "record unit intensities")
    ap.add_argument("--max-views", type=int, default=0, help="limit the number of views (0 = all)")
    ap.add_argument("--max-lights", type=int, default=0,
                    help="limit the number of lights per view (0 = all)")
    args = ap.parse_args()

    view_dirs = sorted(p for p in args.root.glob("view_*") if p.is_dir())
    if not view_dirs:
        fail(f"no view_* directories under {args.root}")
    if args.max_views > 0:
        view_dirs = view_dirs[: args.max_views]

    K, poses = load_calibration(args.root, len(view_dirs))
    args.out.mkdir(parents=True, exist_ok=True)
    cameras = {"format": "splatir-dataset", "srgb_encoded": False, "views": []}
    lights = {"views": []}

    for vi, vdir in enumerate(view_dirs):
        mask_path = vdir / "mask.png"
        if not mask_path.exists():
            fail(f"missing {mask_path}")
        mask = cv2.imread(str(mask_path), cv2.IMREAD_GRAYSCALE)
        h, w = mask.shape
        W = poses[vi]
        cameras["views"].append({
            "width": int(w), "height": int(h),
            "intrinsics": [float(x) for x in K.reshape(-1)],
            "world_to_cam": [float(x) for x in W.reshape(-1)],
        })

        dirs_cam = read_rows(vdir / "light_directions.txt", 3)
        intens = read_rows(vdir / "light_intensities.txt", 3)
        if len(dirs_cam) != len(intens):
            fail(f"{vdir}: {len(dirs_cam)} directions vs {len(intens)} intensities")
        images = sorted(p for p in vdir.glob("[0-9]*.png"))
        if len(images) != len(dirs_cam):
            fail(f"{vdir}: {len(images)} images vs {len(dirs_cam)} light rows")
        if args.max_lights > 0:
            images = images[: args.max_lights]

        out_view = args.out / f"view_{vi:03d}"
        out_view.mkdir(parents=True, exist_ok=True)
        cv2.imwrite(str(out_view / "mask.png"), mask)
        normal_src = vdir / "normal.png"
        if normal_src.exists():
            enc = read_image_linear(normal_src)
            write_png16(out_view / "normal_ups.png", enc)

        R_wc = W[:3, :3]
        entries = []
        for li, img_path in enumerate(images):
            img = read_image_linear(img_path)
            if img.shape[:2] != (h, w):
                fail(f"{img_path}: image is {img.shape[1]}x{img.shape[0]}, mask is {w}x{h}")
            d_world = R_wc.T @ dirs_cam[li]
            norm = np.linalg.norm(d_world)
            if norm < 1e-6:
                fail(f"{vdir} light {li}: zero light direction")
            intensity = intens[li].copy()
            if args.normalize_intensity:
                safe = np.maximum(intensity, 1e-8)
                img = img / safe[None, None, :]
                intensity = np.ones(3)
            entries.append({
                "direction": [float(x) for x in d_world / norm],
                "intensity": [float(x) for x in intensity],
            })
            write_png16(out_view / f"light_{li:03d}.png", img)
        lights["views"].append(entries)
        print(f"view {vi:03d}: {len(images)} lights, {w}x{h}")

    (args.out / "cameras.json").write_text(json.dumps(cameras, indent=2) + "\n")
    (args.out / "lights.json").write_text(json.dumps(lights, indent=2) + "\n")
    print(f"wrote {len(view_dirs)} views to {args.out}")


if __name__ == "__main__":
    main()
