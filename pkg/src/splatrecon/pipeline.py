"""Batch pipeline stages over a working directory.

Each stage reads only declared inputs, writes its outputs plus a stage
manifest with wall time and the effective parameter snapshot, and fails
with a named error when a prerequisite is missing.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import fileio
from .edgemask import extract_masks
from .graphcut import (
    accumulate_ray_costs,
    add_geometric_costs,
    extract_surface,
    geometric_costs,
    postfilter_edges,
    solve_mincut,
)
from .delaunay import tetrahedralize
from .losses import depth_to_normals, total_loss
from .mesheval import append_csv_row, rmse
from .pruning import prune, score_all
from .render import render_maps
from .scene import PipelineConfig
from .synthetic import (
    BuildingSpec,
    TrajectorySpec,
    building_center,
    building_circumradius,
    generate_building,
    render_ground_truth,
    sample_counts,
    sample_primitives,
    spiral_trajectory,
)
from .visibility import VisibilityRecord, save_records, validate_visibility


@dataclass
class StageManifest:
    stage: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    params: dict = field(default_factory=dict)

    def save(self, workdir):
        path = os.path.join(workdir, f"{self.stage}.stage")
        with open(path, "w") as fh:
            fh.write(f"stage {self.stage}\n")
            fh.write(f"wall_time {self.wall_time!r}\n")
            for p in self.inputs:
                fh.write(f"input {p}\n")
            for p in self.outputs:
                fh.write(f"output {p}\n")
            for k, v in self.params.items():
                fh.write(f"param {k}={v}\n")
        return path


def _config_params(config):
    out = {}
    for f in fields(config):
        v = getattr(config, f.name)
        out[f.name] = ",".join(repr(x) for x in v) if f.name == "loss_weights" else repr(v)
    return out


def _need(workdir, relpath, stage_hint):
    path = os.path.join(workdir, relpath)
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing prerequisite {relpath} (run {stage_hint} first)")
    return path


# ---------------------------------------------------------------------------
# scene specification for gen

SCENE_DEFAULTS = {
    "building_width": 4.0,
    "building_depth": 3.0,
    "wall_height": 2.5,
    "roof": "gable",
    "ridge_height": 1.0,
    "seed": 0,
    "view_count": 40,
    "resolution": 256,
    "radius": 0.0,          # 0 -> 2.5 x footprint diagonal
    "turns": 1.5,
    "elev_lo": 0.0,         # 0 with elev_hi 0 -> (0.5, 2.0) x wall height
    "elev_hi": 0.0,
    "density": 200.0,
    "edge_bias": 0.0,
    "clutter_fraction": 0.2,
}


def load_scene_spec(path):
    spec = dict(SCENE_DEFAULTS)
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, val = line.split("=", 1)
            key = key.strip()
            if key not in spec:
                raise ValueError(f"unknown scene key {key!r}")
            if key == "roof":
                spec[key] = val.strip()
            elif key in ("seed", "view_count", "resolution"):
                spec[key] = int(val)
            else:
                spec[key] = float(val)
    return spec


def scene_objects(spec):
    building = BuildingSpec(width=spec["building_width"], depth=spec["building_depth"],
                            wall_height=spec["wall_height"], roof=spec["roof"],
                            ridge_height=spec["ridge_height"], seed=spec["seed"])
    radius = spec["radius"]
    if radius <= 0:
        radius = 2.5 * float(np.hypot(spec["building_width"], spec["building_depth"]))
    elev = (spec["elev_lo"], spec["elev_hi"])
    if elev[0] == 0.0 and elev[1] == 0.0:
        elev = (0.5 * spec["wall_height"], 2.0 * spec["wall_height"])
    traj = TrajectorySpec(view_count=spec["view_count"], radius=radius,
                          elevation=elev, turns=spec["turns"],
                          resolution=spec["resolution"])
    return building, traj


# ---------------------------------------------------------------------------
# stages

def run_gen(spec_path, workdir, config: PipelineConfig):
    start = time.perf_counter()
    os.makedirs(workdir, exist_ok=True)
    spec = load_scene_spec(spec_path) if isinstance(spec_path, (str, os.PathLike)) else dict(spec_path)
    building, traj = scene_objects(spec)
    circum = building_circumradius(building)
    if traj.radius <= circum:
        raise ValueError("trajectory radius must exceed the building circumradius")

    mesh = generate_building(building)
    views = spiral_trajectory(traj, building_center(building), fit_radius=circum * 1.05)
    prims = sample_primitives(mesh, spec["density"], spec["edge_bias"],
                              spec["clutter_fraction"], spec["seed"])
    n_base, n_edge, n_clutter = sample_counts(mesh, spec["density"], spec["edge_bias"],
                                              spec["clutter_fraction"])

    artifacts = {}
    fileio.save_obj(os.path.join(workdir, "gt_mesh.obj"), mesh)
    artifacts["gt_mesh"] = "gt_mesh.obj"
    fileio.save_cameras(os.path.join(workdir, "cameras.txt"), views)
    artifacts["cameras"] = "cameras.txt"
    fileio.save_primitives(os.path.join(workdir, "primitives.txt"), prims)
    artifacts["primitives"] = "primitives.txt"
    for view in views:
        depth, normal = render_ground_truth(mesh, view)
        dname = f"gt_depth_{view.view_id:03d}.sfr"
        nname = f"gt_normal_{view.view_id:03d}.sfr"
        fileio.save_raster(os.path.join(workdir, dname), depth)
        fileio.save_raster(os.path.join(workdir, nname), normal)
        artifacts[f"gt_depth_{view.view_id:03d}"] = dname
        artifacts[f"gt_normal_{view.view_id:03d}"] = nname

    manifest_path = os.path.join(workdir, "scene.manifest")
    with open(manifest_path, "w") as fh:
        for key, rel in artifacts.items():
            fh.write(f"artifact {key} {rel}\n")
        for key in sorted(spec):
            fh.write(f"meta {key} {spec[key]}\n")
        fh.write(f"meta surface_count {n_base}\n")
        fh.write(f"meta edge_count {n_edge}\n")
        fh.write(f"meta clutter_count {n_clutter}\n")
        fh.write(f"meta clutter_start {n_base + n_edge}\n")

    StageManifest("gen", inputs=[str(spec_path)], outputs=sorted(artifacts.values()),
                  wall_time=time.perf_counter() - start,
                  params=_config_params(config)).save(workdir)
    return manifest_path


def read_manifest(workdir):
    path = _need(workdir, "scene.manifest", "gen")
    artifacts, meta = {}, {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "artifact":
                artifacts[parts[1]] = parts[2]
            elif parts[0] == "meta":
                meta[parts[1]] = parts[2]
    return artifacts, meta


def _load_scene(workdir):
    prims = fileio.load_primitives(_need(workdir, "primitives.txt", "gen"))
    views = fileio.load_cameras(_need(workdir, "cameras.txt", "gen"))
    return prims, views


def run_masks(workdir, config: PipelineConfig):
    start = time.perf_counter()
    prims, views = _load_scene(workdir)
    outputs = []
    renders = []
    for view in views:
        maps = render_maps(prims, view, config)
        renders.append(maps)
        for tag, buf in (("render_normal", maps.normal), ("render_depth", maps.depth)):
            name = f"{tag}_{view.view_id:03d}.sfr"
            fileio.save_raster(os.path.join(workdir, name), buf)
            outputs.append(name)
    masks = extract_masks(prims, views, config, renders=renders)
    for m in masks:
        name = f"mask_{m.view_id:03d}.sfr"
        fileio.save_raster(os.path.join(workdir, name), m.mask)
        outputs.append(name)
    StageManifest("masks", inputs=["primitives.txt", "cameras.txt"], outputs=outputs,
                  wall_time=time.perf_counter() - start,
                  params=_config_params(config)).save(workdir)
    return masks


def _load_view_rasters(workdir, views, tag, stage_hint):
    out = []
    for view in views:
        path = _need(workdir, f"{tag}_{view.view_id:03d}.sfr", stage_hint)
        out.append(fileio.load_raster(path))
    return out


def _load_masks(workdir, views):
    from .edgemask import EdgeMask
    bufs = _load_view_rasters(workdir, views, "mask", "masks")
    return [EdgeMask(view_id=v.view_id, mask=b, threshold_used=-1.0)
            for v, b in zip(views, bufs)]


def run_score(workdir, config: PipelineConfig):
    start = time.perf_counter()
    prims, views = _load_scene(workdir)
    masks = _load_masks(workdir, views)
    depths = _load_view_rasters(workdir, views, "render_depth", "masks")
    table = score_all(prims, views, masks, depths, config)
    table.save(os.path.join(workdir, "scores.txt"))
    StageManifest("score", inputs=["primitives.txt", "cameras.txt", "mask_*.sfr", "render_depth_*.sfr"],
                  outputs=["scores.txt"], wall_time=time.perf_counter() - start,
                  params=_config_params(config)).save(workdir)
    return table


def load_scores(workdir):
    from .pruning import EdgeScoreTable
    path = _need(workdir, "scores.txt", "score")
    scores, hits = {}, {}
    view_count = 0
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            pid, e, hit, total = line.split()
            scores[int(pid)] = float(e)
            hits[int(pid)] = []
            view_count = int(total)
    return EdgeScoreTable(scores=scores, per_view_hits=hits, view_count=view_count)


def run_prune(workdir, config: PipelineConfig, passes=1, reextract=False):
    start = time.perf_counter()
    prims, views = _load_scene(workdir)
    table = load_scores(workdir)
    kept, pruned = prune(prims, table, config.prune_tau)
    for _ in range(1, passes):
        if reextract:
            renders = [render_maps(kept, v, config) for v in views]
            masks = extract_masks(kept, views, config, renders=renders)
            depths = [r.depth for r in renders]
        else:
            masks = _load_masks(workdir, views)
            depths = _load_view_rasters(workdir, views, "render_depth", "masks")
        table = score_all(kept, views, masks, depths, config)
        kept, newly = prune(kept, table, config.prune_tau)
        pruned.extend(newly)
    fileio.save_primitives(os.path.join(workdir, "kept.txt"), kept)
    fileio.save_primitives(os.path.join(workdir, "pruned.txt"), pruned)
    StageManifest("prune", inputs=["primitives.txt", "scores.txt"],
                  outputs=["kept.txt", "pruned.txt"],
                  wall_time=time.perf_counter() - start,
                  params={**_config_params(config), "passes": passes, "reextract": reextract}).save(workdir)
    return kept, pruned


def run_visibility(workdir, config: PipelineConfig):
    start = time.perf_counter()
    kept = fileio.load_primitives(_need(workdir, "kept.txt", "prune"))
    views = fileio.load_cameras(_need(workdir, "cameras.txt", "gen"))
    depths = _load_view_rasters(workdir, views, "render_depth", "masks")
    records = validate_visibility([p.center for p in kept], views, depths, config)
    save_records(os.path.join(workdir, "visibility.txt"), records)
    StageManifest("visibility", inputs=["kept.txt", "cameras.txt", "render_depth_*.sfr"],
                  outputs=["visibility.txt"], wall_time=time.perf_counter() - start,
                  params=_config_params(config)).save(workdir)
    return records


def load_visibility(workdir, point_count):
    path = _need(workdir, "visibility.txt", "visibility")
    records = [VisibilityRecord(point_id=i) for i in range(point_count)]
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            pid, vid, px, py, de, di = line.split()
            records[int(pid)].visible_views.append(
                (int(vid), np.array([float(px), float(py)]), float(de), float(di)))
    return records


def run_mesh(workdir, config: PipelineConfig, dump_graph=False):
    start = time.perf_counter()
    kept = fileio.load_primitives(_need(workdir, "kept.txt", "prune"))
    views = fileio.load_cameras(_need(workdir, "cameras.txt", "gen"))
    if len(kept) < 4:
        raise ValueError("insufficient points: meshing needs at least 4 kept primitives")
    records = load_visibility(workdir, len(kept))
    points = np.array([p.center for p in kept])
    tets = tetrahedralize(points)
    graph = accumulate_ray_costs(tets, records, views, config)
    add_geometric_costs(graph, geometric_costs(tets), config.graphcut_beta)
    outputs = ["mesh_raw.obj", "mesh.obj"]
    if dump_graph:
        graph.save(os.path.join(workdir, "dualgraph.txt"))
        outputs.append("dualgraph.txt")
    labeled = solve_mincut(graph)
    raw = extract_surface(labeled)
    fileio.save_obj(os.path.join(workdir, "mesh_raw.obj"), raw)
    final = postfilter_edges(raw, config.postfilter_edge_factor)
    fileio.save_obj(os.path.join(workdir, "mesh.obj"), final)
    StageManifest("mesh", inputs=["kept.txt", "visibility.txt", "cameras.txt"],
                  outputs=outputs, wall_time=time.perf_counter() - start,
                  params=_config_params(config)).save(workdir)
    return final


def run_eval(workdir, config: PipelineConfig, rec_path=None, method="splatrecon", time_s=None):
    start = time.perf_counter()
    gt = fileio.load_obj(_need(workdir, "gt_mesh.obj", "gen"))
    rec_rel = rec_path if rec_path else "mesh.obj"
    rec = fileio.load_obj(_need(workdir, rec_rel, "mesh") if not os.path.isabs(rec_rel) else rec_rel)
    report = rmse(rec, gt)
    scene = os.path.basename(os.path.abspath(workdir))
    append_csv_row(os.path.join(workdir, "results.csv"), scene, method, report, time_s=time_s)
    StageManifest("eval", inputs=[rec_rel, "gt_mesh.obj"], outputs=["results.csv"],
                  wall_time=time.perf_counter() - start,
                  params=_config_params(config)).save(workdir)
    return report


def run_losses(workdir, config: PipelineConfig, out_path=None):
    """Per-view structural loss reports on the splat renders vs GT rasters.

    The synthetic dataset carries no textures, so the photometric pair is
    the rendered vs ground-truth normal map and the normal term compares
    rendered normals against normals derived from the rendered depth.
    """
    start = time.perf_counter()
    prims, views = _load_scene(workdir)
    masks = _load_masks(workdir, views)
    lines = []
    reports = []
    for view, mask in zip(views, masks):
        gt_normal = fileio.load_raster(_need(workdir, f"gt_normal_{view.view_id:03d}.sfr", "gen"))
        rn = fileio.load_raster(_need(workdir, f"render_normal_{view.view_id:03d}.sfr", "masks"))
        rd = fileio.load_raster(_need(workdir, f"render_depth_{view.view_id:03d}.sfr", "masks"))
        depth_n = depth_to_normals(rd, view)
        report = total_loss(rn, gt_normal, rn, depth_n, mask, config)
        reports.append(report)
        lines.append(f"view={view.view_id}\n{report.as_text()}\n")
    text = "\n".join(lines)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        print(text)
    StageManifest("losses", inputs=["cameras.txt", "mask_*.sfr", "render_*.sfr", "gt_normal_*.sfr"],
                  outputs=[out_path] if out_path else [], wall_time=time.perf_counter() - start,
                  params=_config_params(config)).save(workdir)
    return reports


def run_pipeline(spec_path, workdir, config: PipelineConfig, dump_graph=False):
    """gen -> masks -> score -> prune -> visibility -> mesh -> eval."""
    start = time.perf_counter()
    run_gen(spec_path, workdir, config)
    run_masks(workdir, config)
    run_score(workdir, config)
    run_prune(workdir, config)
    run_visibility(workdir, config)
    run_mesh(workdir, config, dump_graph=dump_graph)
    total = time.perf_counter() - start
    report = run_eval(workdir, config, time_s=total)
    StageManifest("pipeline", inputs=[str(spec_path)], outputs=["results.csv", "mesh.obj"],
                  wall_time=total, params=_config_params(config)).save(workdir)
    return report
