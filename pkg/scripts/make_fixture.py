"""Generate and vet the committed fixture artifact set.

Trains the exporter's fixture CNN, then checks every property the test
suite relies on before anything is written into fixtures/: accuracy floor,
cross-engine probe agreement, no-repair collapse at high sparsity, repair
ordering, clip-bound insensitivity, variance contraction, and the identity
limit. Pass --scan to hunt for a seed that satisfies all of them; the
chosen seed is recorded in fixture_meta.json.

Usage:
    python3 scripts/make_fixture.py --out fixtures [--seed 0] [--scan 8]
"""

from __future__ import annotations

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

import sparserepair as sr

GRID_ARGS = ["--sparsities", "0.9,0.95", "--allocs", "erk,lamp"]
CHANCE = 10.0


def run_cli(module: str, *args: str) -> str:
    proc = subprocess.run([sys.executable, "-m", module, *args],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{module} {' '.join(args)} failed:\n{proc.stderr}")
    return proc.stdout


def rows_of(csv_text: str) -> list[dict]:
    lines = csv_text.strip().split("\n")
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def check(label: str, ok: bool, detail: str, failures: list) -> None:
    print(f"  {'ok' if ok else 'FAIL'}: {label} ({detail})")
    if not ok:
        failures.append(label)


def vet(fix: Path) -> tuple[list, dict]:
    failures: list = []
    meta: dict = {}
    spm = str(fix / "fixture_cnn.spm")
    calib_f, imgs_f = str(fix / "calib.tns"), str(fix / "test_images.tns")
    labels_f = str(fix / "test_labels.tns")
    sidecar = json.loads((fix / "sidecar.json").read_text())
    data = [spm, calib_f, imgs_f, labels_f]

    dense = sr.load_model(spm)
    calib = sr.load_tns(calib_f)
    images = sr.load_tns(imgs_f)
    labels = sr.load_tns(labels_f).astype(np.int64)

    check("training accuracy floor", sidecar["accuracy"] >= 95.0,
          f"{sidecar['accuracy']:.2f}%", failures)

    acc = sr.evaluate(dense, images, labels)
    meta["dense_accuracy"] = acc
    check("cross-engine accuracy", abs(acc - sidecar["accuracy"]) <= 0.2,
          f"replay {acc:.2f} vs recorded {sidecar['accuracy']:.2f}", failures)

    probes = sr.load_tns(str(fix / "probe_inputs.tns"))
    logits, _ = sr.forward(dense, probes)
    probe_err = float(np.abs(logits - np.array(sidecar["probes"]["logits"])).max())
    meta["probe_logit_max_abs_err"] = probe_err
    check("cross-engine probe logits", probe_err <= 1e-3, f"max abs {probe_err:.2e}",
          failures)

    grid_csv = run_cli("sparserepair", "grid", "--dense", spm, "--calib", calib_f,
                       "--images", imgs_f, "--labels", labels_f, *GRID_ARGS)
    grid = rows_of(grid_csv)
    check("grid is 12 populated rows",
          len(grid) == 12 and all(r["accuracy"] != "error" for r in grid),
          f"{len(grid)} rows", failures)
    by_cell = {(r["alloc"], r["sparsity"], r["variant"]): float(r["accuracy"])
               for r in grid}
    worst = min(by_cell[a, s, "asr_q50"] - by_cell[a, s, "bn_only"]
                for a in ("erk", "lamp") for s in ("0.9", "0.95"))
    meta["min_asr_minus_bn"] = worst
    check("asr_q50 >= bn_only in every grid cell", worst >= 0.0,
          f"worst margin {worst:+.2f} pts", failures)

    none_csv = run_cli("sparserepair", "grid", "--dense", spm, "--calib", calib_f,
                       "--images", imgs_f, "--labels", labels_f, *GRID_ARGS,
                       "--variants", "none")
    none_acc = {(r["alloc"], r["sparsity"]): float(r["accuracy"])
                for r in rows_of(none_csv)}
    collapsed = [s for s in ("0.9", "0.95")
                 if all(none_acc[a, s] <= CHANCE + 5.0 for a in ("erk", "lamp"))]
    meta["collapsed_sparsities"] = [float(s) for s in collapsed]
    meta["no_repair_accuracy"] = {f"{a}/{s}": v for (a, s), v in none_acc.items()}
    check("no-repair collapses to chance+5 somewhere", bool(collapsed),
          f"{meta['no_repair_accuracy']}", failures)
    ordering_ok = all(
        by_cell[a, s, "asr_q50"] >= by_cell[a, s, "bn_only"] >= none_acc[a, s]
        for s in collapsed for a in ("erk", "lamp"))
    check("repair ordering at collapsed sparsity", ordering_ok,
          f"sparsities {collapsed}", failures)
    recovery = min((by_cell[a, s, "bn_only"] - none_acc[a, s]
                    for s in collapsed for a in ("erk", "lamp")), default=0.0)
    meta["min_bn_recovery_pts"] = recovery
    check("recalibration recovers visibly", recovery >= 10.0,
          f"min recovery {recovery:.2f} pts", failures)

    clip_csv = run_cli("sparserepair", "sweep-clip", "--dense", spm, "--calib",
                       calib_f, "--images", imgs_f, "--labels", labels_f,
                       *GRID_ARGS)
    clip = rows_of(clip_csv)
    wide = {(r["alloc"], r["sparsity"], r["clip_lo"]): float(r["accuracy"])
            for r in clip if r["clip_lo"] in ("0.25", "0.5")}
    spread = max(abs(wide[a, s, "0.25"] - wide[a, s, "0.5"])
                 for a in ("erk", "lamp") for s in ("0.9", "0.95"))
    meta["widest_clip_spread_pts"] = spread
    check("two widest clip settings agree", spread <= 2.0,
          f"max spread {spread:.2f} pts", failures)

    pruned = sr.prune_model(dense, sr.ERK, 0.9)
    stats = sr.paired_stats(dense, pruned, calib)
    vp = np.concatenate([ns.var_pruned for ns in stats.nodes.values()])
    vd = np.concatenate([ns.var_dense for ns in stats.nodes.values()])
    share = float((vp <= vd).mean())
    meta["variance_contraction_share"] = share
    check("pruning contracts channel variance", share >= 0.8,
          f"{share:.1%} of channels", failures)

    undamaged = dense.copy()
    for node in dense.graph.conv_nodes() + [dense.graph.node("fc")]:
        wname = node.weight_refs["weight"]
        undamaged.weights[wname + ".mask"] = np.ones_like(dense.weights[wname])
    repaired, _ = sr.repair(dense, undamaged, calib,
                            sr.RepairConfig(variant="asr_q50"))
    wdiff = max(
        float(np.max(np.abs(repaired.weights[n] - dense.weights[n])
                     / (np.abs(dense.weights[n]) + 1e-6)))
        for n in dense.weights if not n.endswith(".mask"))
    acc_id = sr.evaluate(repaired, images, labels)
    meta["identity_limit_weight_rel_err"] = wdiff
    meta["identity_limit_accuracy_delta"] = abs(acc_id - acc)
    check("identity limit leaves weights alone", wdiff <= 1e-5,
          f"max rel {wdiff:.2e}", failures)
    check("identity limit leaves accuracy alone", abs(acc_id - acc) <= 0.2,
          f"delta {abs(acc_id - acc):.2f} pts", failures)

    recal = sr.bn_recalibrate(dense, calib)
    acc_recal = sr.evaluate(recal, images, labels)
    meta["bn_consistency_delta"] = abs(acc_recal - acc)
    check("unpruned model already BN-consistent", abs(acc_recal - acc) <= 0.5,
          f"delta {abs(acc_recal - acc):.2f} pts", failures)

    return failures, {"meta": meta, "grid_csv": grid_csv, "clip_csv": clip_csv}


def export(out_dir: Path, seed: int, epochs: int) -> None:
    run_cli("spmexport.cli", "fixture", "--out-dir", str(out_dir),
            "--seed", str(seed), "--epochs", str(epochs))


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="fixtures")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--scan", type=int, default=0,
                    help="try seeds seed..seed+N-1, keep the first that passes")
    args = ap.parse_args()

    seeds = range(args.seed, args.seed + args.scan) if args.scan else [args.seed]
    for seed in seeds:
        print(f"== seed {seed}")
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            export(tmp, seed, args.epochs)
            failures, result = vet(tmp)
            if failures:
                print(f"seed {seed} rejected: {failures}")
                continue
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            for f in tmp.iterdir():
                shutil.copy2(f, out / f.name)
            (out / "expected_grid.csv").write_text(result["grid_csv"])
            (out / "expected_clip.csv").write_text(result["clip_csv"])
            meta = dict(result["meta"], seed=seed, epochs=args.epochs)
            (out / "fixture_meta.json").write_text(
                json.dumps(meta, indent=1, sort_keys=True) + "\n")
            print(f"fixture committed from seed {seed} -> {out}/")
            return 0
    print("no seed satisfied every fixture property", file=sys.stderr)
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
