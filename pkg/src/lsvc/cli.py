"""Command-line surface: synthesis, encode/decode, detection, metrics,
sweeps over the quality/QP grid, and report generation.

Config files are flat key=value text (one pair per line, `#` comments,
repeated `object` keys accumulate). Exit codes: 0 success, 2 usage error,
3 data error, 4 internal invariant violation.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import sys
from pathlib import Path

import click
import numpy as np

from . import bitstream as bs_mod
from . import inter as inter_mod
from . import metrics as metrics_mod
from . import vision as vision_mod
from .errors import CodecError
from .frames import (
    MovingObject,
    SceneSpec,
    Sequence,
    generate_synthetic,
    load_boxes_csv,
    load_raw,
    save_boxes_csv,
    save_raw,
)
EXIT_DATA_ERROR = 3
EXIT_INTERNAL = 4

# random-access pairing of intra model index with inter QP
DEFAULT_RA_PAIRS = ((6, 18), (6, 22), (5, 26), (5, 30), (4, 34), (4, 38))


def parse_kv_file(path) -> dict:
    """Flat key=value config; repeated keys collect into a list."""
    out: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CodecError(f"{path}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            prev = out[key]
            out[key] = prev + [value] if isinstance(prev, list) else [prev, value]
        else:
            out[key] = value
    return out


def guarded(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except click.ClickException:
            raise
        except (CodecError, ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA_ERROR)
        except Exception as exc:  # pragma: no cover - invariant violations
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)
    return wrapper


@click.group()
def cli():
    """Layered scalable video codec and its evaluation stack."""


@cli.command("synth")
@click.argument("spec_file", type=click.Path(exists=True))
@click.argument("out", type=click.Path())
@guarded
def cmd_synth(spec_file, out):
    """Render a synthetic scene to OUT (.raw) plus ground truth (.gt.csv)."""
    kv = parse_kv_file(spec_file)
    objects = []
    entries = kv.get("object", [])
    for entry in entries if isinstance(entries, list) else [entries]:
        parts = entry.replace(",", " ").split()
        if len(parts) != 8:
            raise CodecError(
                "object must be: shape width height intensity x0 y0 vx vy"
            )
        objects.append(MovingObject(
            shape=parts[0], width=int(parts[1]), height=int(parts[2]),
            intensity=int(parts[3]), x0=float(parts[4]), y0=float(parts[5]),
            vx=float(parts[6]), vy=float(parts[7]),
        ))
    spec = SceneSpec(
        width=int(kv["width"]), height=int(kv["height"]),
        frame_count=int(kv["frames"]), objects=tuple(objects),
        background_level=int(kv.get("background", 96)),
        noise_sigma=float(kv.get("noise_sigma", 0.0)),
        seed=int(kv.get("seed", 0)),
        name=Path(out).stem,
    )
    seq, boxes = generate_synthetic(spec)
    save_raw(seq, out)
    gt_path = Path(out).with_suffix("").with_suffix(".gt.csv")
    save_boxes_csv(boxes, gt_path)
    click.echo(f"wrote {len(seq)} frames to {out}, {len(boxes)} boxes to {gt_path}")


def _load_input(path, width, height) -> Sequence:
    if width is None or height is None:
        raise CodecError("--width and --height are required for raw input")
    return load_raw(path, width, height)


@cli.command("encode")
@click.argument("infile", type=click.Path(exists=True))
@click.argument("out", type=click.Path())
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--quality", "-q", type=click.IntRange(1, 6), default=4)
@click.option("--qp", type=click.IntRange(0, 51), default=30)
@click.option("--mode", type=click.Choice(["all_intra", "random_access"]),
              default="all_intra")
@click.option("--period", type=int, default=8, help="intra period (random access)")
@click.option("--interp/--no-interp", default=True,
              help="frame-interpolation prediction (random access)")
@click.option("--base-split", type=int, default=128)
@guarded
def cmd_encode(infile, out, width, height, quality, qp, mode, period, interp,
               base_split):
    """Encode a raw video into a layered .lsvc bitstream."""
    seq = _load_input(infile, width, height)
    if mode == "all_intra":
        stream = inter_mod.encode_all_intra(seq, quality, base_split=base_split)
        stats = {}
    else:
        cfg = inter_mod.GopConfig(intra_period=period)
        stats = {}
        stream = inter_mod.encode_sequence(seq, quality, qp, cfg,
                                           use_interp=interp,
                                           base_split=base_split, stats=stats)
    data = bs_mod.mux(stream.header, stream.units)
    Path(out).write_bytes(data)
    bpp = 8 * len(data) / (len(seq) * seq.width * seq.height)
    click.echo(f"encoded {len(seq)} frames -> {len(data)} bytes ({bpp:.4f} bpp)")
    if stats:
        inter_frames = stats.get("frames_inter", 0)
        blocks = sum(stats.get(k, 0) for k in
                     ("SKIP", "INTER", "DIRECT_INTERP", "INTRA_DC"))
        if blocks:
            parts = ", ".join(
                f"{k}={100.0 * stats.get(k, 0) / blocks:.1f}%"
                for k in ("SKIP", "INTER", "DIRECT_INTERP", "INTRA_DC")
            )
            click.echo(f"inter mode usage over {inter_frames} frames: {parts}")


@cli.command("decode")
@click.argument("infile", type=click.Path(exists=True))
@click.argument("out", type=click.Path())
@click.option("--layers", type=click.Choice(["base", "all"]), default="all")
@guarded
def cmd_decode(infile, out, layers):
    """Decode a .lsvc stream: --layers all -> raw video, base -> latent dump."""
    stream = bs_mod.demux(Path(infile).read_bytes())
    if layers == "all":
        seq = inter_mod.decode_sequence(stream, max_layer=1)
        save_raw(seq, out)
        click.echo(f"decoded {len(seq)} frames to {out}")
    else:
        stream = bs_mod.extract_layers(stream, 0)
        bands = inter_mod.decode_sequence(stream, max_layer=0)
        pocs = np.array([poc for poc, _ in bands], dtype=np.int64)
        coeffs = np.stack([band.coeffs for _, band in bands])
        np.savez(out, pocs=pocs, coeffs=coeffs,
                 step_table=bands[0][1].step_table if bands else np.zeros(0),
                 width=stream.header.width, height=stream.header.height)
        click.echo(f"decoded {len(bands)} base latents to {out}")


def _base_detections(stream, params):
    header = stream.header
    detections = []
    pocs = []
    for poc, band in inter_mod.decode_sequence(stream, max_layer=0):
        feature = vision_mod.lst(band, header)
        detections.extend(vision_mod.detect_frame(feature, poc, params))
        pocs.append(poc)
    return detections, pocs


@cli.command("detect")
@click.argument("in_bitstream", type=click.Path(exists=True))
@click.argument("gt_csv", type=click.Path(exists=True))
@click.argument("out_csv", type=click.Path())
@click.option("--threshold", type=float, default=10.0)
@click.option("--min-area", type=int, default=4)
@guarded
def cmd_detect(in_bitstream, gt_csv, out_csv, threshold, min_area):
    """Run base-layer detection against ground truth; writes detections CSV."""
    stream = bs_mod.extract_layers(bs_mod.demux(Path(in_bitstream).read_bytes()), 0)
    params = vision_mod.DetectParams(threshold=threshold, min_area=min_area)
    detections, pocs = _base_detections(stream, params)
    vision_mod.save_detections_csv(detections, out_csv)
    gt = [b for b in load_boxes_csv(gt_csv) if b.poc in set(pocs)]
    if gt:
        result = vision_mod.evaluate_map(detections, gt)
        click.echo(f"mAP@{result.iou_threshold}: {result.map:.4f} "
                   f"({len(detections)} detections, {len(gt)} boxes)")
    else:
        click.echo(f"{len(detections)} detections (no ground truth on decoded POCs)")


@cli.command("metrics")
@click.argument("orig", type=click.Path(exists=True))
@click.argument("recon", type=click.Path(exists=True))
@click.argument("out_csv", type=click.Path())
@click.option("--width", type=int, required=True)
@click.option("--height", type=int, required=True)
@guarded
def cmd_metrics(orig, recon, out_csv, width, height):
    """Per-frame PSNR and MS-SSIM between two raw videos."""
    a = load_raw(orig, width, height)
    b = load_raw(recon, width, height)
    if len(a) != len(b):
        raise CodecError(f"frame counts differ: {len(a)} vs {len(b)}")
    can_msssim = min(width, height) >= metrics_mod.MSSSIM_MIN_DIM
    rows = []
    for fa, fb in zip(a.frames, b.frames):
        p = metrics_mod.psnr(fa, fb)
        m = metrics_mod.ms_ssim(fa, fb) if can_msssim else ""
        rows.append([fa.poc, f"{p:.4f}",
                     f"{m:.6f}" if m != "" else ""])
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["poc", "psnr", "ms_ssim"])
        writer.writerows(rows)
    finite = [float(r[1]) for r in rows if float(r[1]) != float("inf")]
    mean_p = sum(finite) / len(finite) if finite else float("inf")
    click.echo(f"mean PSNR {mean_p:.3f} dB over {len(rows)} frames")


def _sweep_points(kv) -> list[dict]:
    mode = kv.get("mode", "all_intra")
    period = int(kv.get("period", 8))
    interp = kv.get("interp", "true").lower() in ("1", "true", "yes", "on")
    points = []
    if mode == "all_intra":
        qualities = [int(q) for q in str(kv.get("qualities", "1,2,3,4,5,6")).split(",")]
        for q in qualities:
            points.append(dict(mode=mode, quality=q, qp=0, period=1, interp=False))
    elif mode == "random_access":
        pairs = []
        if "pairs" in kv:
            for part in str(kv["pairs"]).split(","):
                q, qp = part.split(":")
                pairs.append((int(q), int(qp)))
        else:
            pairs = list(DEFAULT_RA_PAIRS)
        for q, qp in pairs:
            points.append(dict(mode=mode, quality=q, qp=qp, period=period,
                               interp=interp))
    else:
        raise CodecError(f"unknown sweep mode {mode!r}")
    return points


def _point_id(seq_name: str, point: dict) -> str:
    key = f"{seq_name}|{point['mode']}|{point['quality']}|{point['qp']}" \
          f"|{point['period']}|{point['interp']}"
    return hashlib.sha256(key.encode()).hexdigest()[:12]


SWEEP_FIELDS = ("point_id", "sequence", "mode", "quality", "qp", "period",
                "interp", "rate_bpp", "rate_base_bpp", "psnr", "ms_ssim", "map")


def _evaluate_point(seq: Sequence, gt, point, detect_params):
    if point["mode"] == "all_intra":
        stream = inter_mod.encode_all_intra(seq, point["quality"])
    else:
        cfg = inter_mod.GopConfig(intra_period=point["period"])
        stream = inter_mod.encode_sequence(seq, point["quality"], point["qp"],
                                           cfg, use_interp=point["interp"])
    data = bs_mod.mux(stream.header, stream.units)
    base_data = bs_mod.mux(stream.header,
                           bs_mod.extract_layers(stream, 0).units)
    denom = len(seq) * seq.width * seq.height
    decoded = inter_mod.decode_sequence(stream, max_layer=1)
    psnrs = [metrics_mod.psnr(a, b) for a, b in zip(seq.frames, decoded.frames)]
    finite = [p for p in psnrs if p != float("inf")]
    mean_psnr = sum(finite) / len(finite) if finite else 99.0
    if min(seq.width, seq.height) >= metrics_mod.MSSSIM_MIN_DIM:
        mean_msssim = float(np.mean([
            metrics_mod.ms_ssim(a, b) for a, b in zip(seq.frames, decoded.frames)
        ]))
    else:
        mean_msssim = ""
    detections, pocs = _base_detections(stream, detect_params)
    gt_vis = [b for b in gt if b.poc in set(pocs)]
    ap = vision_mod.evaluate_map(detections, gt_vis).map if gt_vis else ""
    return {
        "rate_bpp": 8 * len(data) / denom,
        "rate_base_bpp": 8 * len(base_data) / denom,
        "psnr": mean_psnr,
        "ms_ssim": mean_msssim,
        "map": ap,
    }


@cli.command("sweep")
@click.argument("config", type=click.Path(exists=True))
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@guarded
def cmd_sweep(config, corpus_dir, out_dir):
    """Encode/measure every (sequence, config point); resumes existing rows.

    The corpus directory holds <name>.raw files with matching <name>.gt.csv;
    frame dimensions come from the sweep config (width/height keys).
    """
    kv = parse_kv_file(config)
    width, height = int(kv["width"]), int(kv["height"])
    detect_params = vision_mod.DetectParams(
        threshold=float(kv.get("detect_threshold", 10.0)),
        min_area=int(kv.get("detect_min_area", 4)),
    )
    points = _sweep_points(kv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    done = set()
    if csv_path.exists():
        with open(csv_path, newline="") as fh:
            done = {row["point_id"] for row in csv.DictReader(fh)}
    new_file = not csv_path.exists()
    raws = sorted(Path(corpus_dir).glob("*.raw"))
    if not raws:
        raise CodecError(f"no .raw sequences in {corpus_dir}")
    with open(csv_path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        if new_file:
            writer.writeheader()
        for raw in raws:
            seq = load_raw(raw, width, height)
            gt_path = raw.with_suffix("").with_suffix(".gt.csv")
            gt = load_boxes_csv(gt_path) if gt_path.exists() else []
            for point in points:
                pid = _point_id(seq.name, point)
                if pid in done:
                    continue
                row = _evaluate_point(seq, gt, point, detect_params)
                row.update(point_id=pid, sequence=seq.name, mode=point["mode"],
                           quality=point["quality"], qp=point["qp"],
                           period=point["period"], interp=point["interp"])
                writer.writerow(row)
                fh.flush()
                click.echo(f"{seq.name} {point['mode']} q={point['quality']} "
                           f"qp={point['qp']}: {row['rate_bpp']:.4f} bpp")
    click.echo(f"sweep results in {csv_path}")


@cli.command("report")
@click.argument("sweep_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--break-even", "break_even_pair", nargs=2, type=float,
              default=None, help="machine_bd human_bd (fractions, e.g. -0.1345)")
@guarded
def cmd_report(sweep_dir, break_even_pair):
    """Assemble RD curves from a sweep, validate them, compute BD between
    modes, and report break-even points."""
    csv_path = Path(sweep_dir) / "sweep.csv"
    if not csv_path.exists():
        raise CodecError(f"{csv_path} not found; run sweep first")
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    by_seq_mode: dict = {}
    for row in rows:
        by_seq_mode.setdefault((row["sequence"], row["mode"]), []).append(row)

    report_path = Path(sweep_dir) / "bd_report.csv"
    with open(report_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "metric", "anchor_mode", "test_mode",
                         "bd_rate_percent", "note"])
        sequences = sorted({s for s, _ in by_seq_mode})
        for seq_name in sequences:
            modes = sorted(m for s, m in by_seq_mode if s == seq_name)
            for metric, column, rate_col in (
                ("PSNR", "psnr", "rate_bpp"),
                ("MS_SSIM", "ms_ssim", "rate_bpp"),
                ("MAP", "map", "rate_base_bpp"),
            ):
                curves = {}
                for mode in modes:
                    pts = [(float(r[rate_col]), float(r[column]))
                           for r in by_seq_mode[(seq_name, mode)]
                           if r[column] not in ("", "inf")]
                    if len(pts) >= 4:
                        try:
                            curves[mode] = metrics_mod.RDCurve(metric, tuple(pts))
                        except ValueError as exc:
                            writer.writerow([seq_name, metric, mode, "",
                                             "", f"curve invalid: {exc}"])
                for mode, curve in curves.items():
                    diag = metrics_mod.validate_curve(curve)
                    if not diag.monotonic or not diag.concave_in_log_rate:
                        writer.writerow([
                            seq_name, metric, mode, "", "",
                            f"monotonic={diag.monotonic} "
                            f"concave={diag.concave_in_log_rate}",
                        ])
                if len(curves) == 2:
                    (m1, c1), (m2, c2) = sorted(curves.items())
                    try:
                        bd = metrics_mod.bd_rate(c1, c2)
                        writer.writerow([seq_name, metric, m1, m2,
                                         f"{bd.percent:.4f}", ""])
                    except CodecError as exc:
                        writer.writerow([seq_name, metric, m1, m2, "",
                                         f"rejected: {exc}"])
    click.echo(f"BD report in {report_path}")
    if break_even_pair is not None:
        machine_bd, human_bd = break_even_pair
        t_h = metrics_mod.break_even(
            metrics_mod.BreakEvenInput(machine_bd=machine_bd, human_bd=human_bd)
        )
        click.echo(f"break-even t_h = {t_h:.4f}")


def main():
    cli()


if __name__ == "__main__":
    main()
