"""Batch experiment CLI.

Subcommands: train-vae, train, attack, eval, corrupt-eval, sweep, report.
Each run writes into an exclusively locked output directory: a RunRecord
(config echo + content hash + artifact registry + headline metrics), JSON
reports validated against the packaged schemas, CSV tables, and PNG plots.
"""

import argparse
import importlib.resources
import json
import os
import sys

import jsonschema
import numpy as np
import torch

from . import runio
from .attacks import EVAL_PROFILES, AttackBudget, pgd
from .corruptions import SEVERITY_TABLES
from .data import load_cifar10, load_mnist, subsample, synthetic_dataset
from .inference import InferencePolicy
from .metrics import (confidences_from_outputs, corruption_eval, ece,
                      local_linearity_curve, oblivious_eval)
from .models import ModelConfig, build_model, load_model
from .plots import line_plot
from .seeding import derive_seed
from .training import BASE_EPOCHS, TrainConfig, train
from .vae import VaeConfig, load_vae, train_vae, train_vae_adversarial
from .vicinal import MixupConfig

PRESETS = {
    "erm": {"trainer": "erm"},
    "mixup": {"trainer": "mixup", "eta": 1.0},
    "manifold_mixup": {"trainer": "manifold_mixup", "eta": 1.0},
    "varerm": {"trainer": "varerm"},
    "varmixup": {"trainer": "varmixup", "eta": 1.0},
    "at": {"trainer": "at", "attack": {"epsilon": 8 / 255, "alpha": 2 / 255, "steps": 10}},
    "iat": {"trainer": "iat", "eta": 1.0,
            "attack": {"epsilon": 8 / 255, "alpha": 2 / 255, "steps": 10}},
}


def _schema(name):
    ref = importlib.resources.files("robustmix") / "schemas" / name
    return json.loads(ref.read_text())


def load_config(path) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise SystemExit(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise SystemExit(f"config {path} is not valid JSON: {e}")
    try:
        jsonschema.validate(cfg, _schema("experiment.schema.json"))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SystemExit(f"config {path}: invalid field '{where}': {e.message}")
    return cfg


def resolve_dataset(cfg, seed):
    d = cfg["dataset"]
    name = d["name"]
    if name == "synthetic":
        train_ds, test_ds = synthetic_dataset(d.get("n_train", 10000), d.get("n_test", 2000),
                                              seed=d.get("seed", derive_seed(seed, "dataset")))
    elif name == "cifar10":
        train_ds, test_ds = load_cifar10(d["path"])
    else:
        train_ds, test_ds = load_mnist(d["path"])
    if d.get("n_per_class"):
        train_ds = subsample(train_ds, d["n_per_class"], seed=derive_seed(seed, "subsample"))
    if d.get("n_test") and name != "synthetic" and d["n_test"] < len(test_ds):
        test_ds = test_ds.take(np.arange(d["n_test"]))
    return train_ds, test_ds


def _model_config(cfg, seed) -> ModelConfig:
    m = dict(cfg.get("model", {}))
    m.setdefault("seed", seed)
    return ModelConfig(**m)


def _vae_config(cfg, seed) -> VaeConfig:
    v = {k: v for k, v in cfg.get("vae", {}).items() if k != "adversarial"}
    v.setdefault("seed", seed)
    return VaeConfig(**v)


def _budget_from(d) -> AttackBudget:
    return AttackBudget(d.get("epsilon", 8 / 255), d.get("alpha", 2 / 255), d.get("steps", 10))


def _profiles(cfg, names=None):
    """Named attack budgets: built-in eval profiles plus config-defined ones."""
    table = {k: (v, "pgd" if k != "fgsm" else "fgsm") for k, v in EVAL_PROFILES.items()}
    for p in cfg.get("attack_profiles", []):
        table[p["name"]] = (_budget_from(p), p.get("attack", "pgd"))
    if names:
        unknown = [n for n in names if n not in table]
        if unknown:
            raise SystemExit(f"unknown attack profile(s) {unknown}; available: {sorted(table)}")
        return {n: table[n] for n in names}
    return table


def _policies(cfg, args, pool):
    """Inference policies from config plus CLI overrides."""
    specs = cfg.get("inference")
    if getattr(args, "inference", None):
        specs = [{"variant": v.replace("-", "_"),
                  "lambda_mi": args.lambda_mi, "n_mi": args.n_mi}
                 for v in args.inference.split(",")]
    if not specs:
        specs = [{"variant": "plain"}]
    out = {}
    for s in specs:
        variant = s.get("variant", "plain")
        name = s.get("name", variant)
        out[name] = InferencePolicy(
            variant=variant,
            lambda_mi=s.get("lambda_mi", 0.5),
            n_mi=s.get("n_mi", 30),
            pool=None if variant == "plain" else pool,
            seed=s.get("seed", 0),
            average=s.get("average", "probs"),
        )
    return out


def _out_dir(args, cfg, suffix):
    out = args.out or cfg.get("out_dir")
    if not out:
        raise SystemExit("no output directory: pass --out or set out_dir in the config")
    return os.path.join(out, suffix) if args.out is None and cfg.get("out_dir") else out


def cmd_train_vae(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(args, cfg, "vae")
    train_ds, _ = resolve_dataset(cfg, seed)
    vcfg = _vae_config(cfg, seed)
    if args.epochs:
        vcfg.epochs = args.epochs
    adversarial = args.adversarial or cfg.get("vae", {}).get("adversarial", False)
    with runio.run_lock(out):
        rec = runio.RunRecord(out, {**cfg, "seed": seed, "resolved_vae": vars(vcfg)}, "train-vae")
        if adversarial:
            budget = _budget_from(cfg.get("train", {}).get("attack", {"steps": 5}))
            vae = train_vae_adversarial(train_ds, vcfg, budget, out_dir=out)
        else:
            vae = train_vae(train_ds, vcfg, out_dir=out)
        rec.add_artifact(os.path.join(out, "vae.ckpt.npz"))
        rec.add_artifact(os.path.join(out, "vae_curve.json"))
        rec.set_headline(final_vae_loss=vae.history[-1], gamma=vae.gamma,
                         adversarial=adversarial)
        rec.save()
    print(f"vae checkpoint: {os.path.join(out, 'vae.ckpt.npz')} "
          f"(final loss {vae.history[-1]:.5f}, gamma {vae.gamma:.4g})")
    return 0


def _train_config(cfg, args, seed) -> TrainConfig:
    t = dict(cfg.get("train", {}))
    if args.preset:
        if args.preset not in PRESETS:
            raise SystemExit(f"unknown preset {args.preset!r}; available: {sorted(PRESETS)}")
        t = {**PRESETS[args.preset], **{k: v for k, v in t.items() if k not in ("trainer", "attack", "eta")}}
    trainer = t.get("trainer", "erm")
    scale = args.epoch_scale if args.epoch_scale is not None else t.get("epoch_scale", 0.2)
    epochs = t.get("epochs") or max(1, round(BASE_EPOCHS[trainer] * scale))
    mix = MixupConfig(eta=t.get("eta", 1.0), force_lambda=t.get("force_lambda"))
    attack = _budget_from(t["attack"]) if t.get("attack") else None
    return TrainConfig(trainer=trainer, epochs=epochs, batch_size=t.get("batch_size", 128),
                       lr=t.get("lr", 1e-3), mixup=mix, attack=attack,
                       vae_checkpoint=args.vae or t.get("vae_checkpoint"),
                       seed=seed, dtype=t.get("dtype", "float32"))


def cmd_train(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(args, cfg, "train")
    train_ds, test_ds = resolve_dataset(cfg, seed)
    tcfg = _train_config(cfg, args, seed)
    mcfg = _model_config(cfg, seed)
    mcfg.in_channels = train_ds.image_shape[0]
    with runio.run_lock(out):
        rec = runio.RunRecord(out, {**cfg, "seed": seed, "resolved_train": _safe_dict(tcfg)}, "train")
        model = build_model(mcfg)
        vae = load_vae(tcfg.vae_checkpoint) if tcfg.trainer in ("varerm", "varmixup") and tcfg.vae_checkpoint else None
        model, record = train(train_ds, model, tcfg, vae=vae, out_dir=out)
        rec.add_artifact(record["checkpoint"])
        rec.add_artifact(os.path.join(out, f"run_{tcfg.trainer}.json"))
        # quick clean test accuracy for the record
        acc = oblivious_eval(model, InferencePolicy(), test_ds,
                             AttackBudget(0.0, 1.0, 0), attack="none")
        rec.set_headline(trainer=tcfg.trainer, final_loss=record["history"]["loss"][-1],
                         clean_test_accuracy=acc)
        rec.save()
    print(f"trained {tcfg.trainer} for {tcfg.epochs} epochs; "
          f"clean test accuracy {acc:.4f}; checkpoint {record['checkpoint']}")
    return 0


def _safe_dict(cfg_obj):
    d = dict(vars(cfg_obj))
    for k, v in list(d.items()):
        if hasattr(v, "__dict__") and not isinstance(v, (int, float, str, bool)):
            d[k] = vars(v) if v is not None else None
    return d


def cmd_attack(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(args, cfg, "attack")
    _, test_ds = resolve_dataset(cfg, seed)
    model = load_model(args.model)
    profiles = _profiles(cfg, [args.attack_profile])
    budget, kind = profiles[args.attack_profile]
    limit = args.limit or len(test_ds)
    images = test_ds.images[:limit]
    labels = test_ds.labels[:limit]
    with runio.run_lock(out):
        rec = runio.RunRecord(out, {**cfg, "seed": seed, "profile": args.attack_profile}, "attack")
        dtype = next(model.parameters()).dtype
        adv, success = [], []
        for start in range(0, len(images), 64):
            xb = torch.as_tensor(images[start:start + 64], dtype=dtype)
            yb = torch.as_tensor(labels[start:start + 64])
            x_adv = pgd(model, xb, yb, budget, seed=derive_seed(seed, "attack", start))
            with torch.no_grad():
                pred = model(x_adv).argmax(dim=1)
            adv.append(x_adv.cpu().numpy())
            success.append((pred != yb).cpu().numpy())
        adv = np.concatenate(adv).astype(np.float32)
        success = np.concatenate(success)
        tensor_path = os.path.join(out, "adversarial.npz")
        np.savez_compressed(tensor_path, x_adv=adv, x=images, y=labels, success=success)
        manifest = {"attack": kind, "profile": args.attack_profile,
                    "budget": {"epsilon": budget.epsilon, "alpha": budget.alpha, "steps": budget.steps},
                    "seed": seed, "n": int(len(images)), "success_rate": float(success.mean())}
        runio.write_json(os.path.join(out, "attack_manifest.json"), manifest)
        rec.add_artifact(tensor_path)
        rec.add_artifact(os.path.join(out, "attack_manifest.json"))
        rec.set_headline(success_rate=manifest["success_rate"])
        rec.save()
    print(f"attack {args.attack_profile}: success rate {manifest['success_rate']:.4f} "
          f"over {len(images)} examples -> {tensor_path}")
    return 0


def _eval_one(model, vae, policy, test_ds, profiles, metrics_cfg, seed):
    limit = metrics_cfg.get("eval_limit", 1000)
    res = {"policy": {"variant": policy.variant, "lambda_mi": policy.lambda_mi,
                      "n_mi": policy.n_mi, "average": policy.average},
           "attacks": {}}
    zero = AttackBudget(0.0, 1.0, 0)
    res["clean_accuracy"] = oblivious_eval(model, policy, test_ds, zero,
                                           vae=vae, attack="none", limit=limit)
    for name, (budget, kind) in profiles.items():
        res["attacks"][name] = oblivious_eval(model, policy, test_ds, budget, vae=vae,
                                              attack=kind, seed=seed, limit=limit)
    if metrics_cfg.get("ece", True):
        from .inference import predict
        dtype = next(model.parameters()).dtype
        n = min(limit, len(test_ds))
        outs = predict(model, torch.as_tensor(test_ds.images[:n], dtype=dtype), policy, vae=vae)
        conf, pred, lab = confidences_from_outputs(outs, test_ds.labels[:n])
        res["ece"] = ece(conf, pred, lab, M=metrics_cfg.get("ece_bins", 15)).ece
    else:
        res["ece"] = None
    return res


def cmd_eval(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(args, cfg, "eval")
    train_ds, test_ds = resolve_dataset(cfg, seed)
    model = load_model(args.model)
    vae = load_vae(args.vae) if args.vae else None
    profile_names = (args.attack_profile.split(",") if args.attack_profile
                     else [p["name"] for p in cfg.get("attack_profiles", [])] or ["pgd10"])
    profiles = _profiles(cfg, profile_names)
    policies = _policies(cfg, args, pool=train_ds)
    metrics_cfg = cfg.get("metrics", {})
    with runio.run_lock(out):
        rec = runio.RunRecord(out, {**cfg, "seed": seed}, "eval")
        report = {"config_hash": rec.data["config_hash"], "seed": seed,
                  "dataset": cfg["dataset"], "corruption_tables": SEVERITY_TABLES,
                  "attack_profiles": [{"name": n, "attack": k, "epsilon": b.epsilon,
                                       "alpha": b.alpha, "steps": b.steps}
                                      for n, (b, k) in profiles.items()],
                  "results": {}, "linearity": None, "corruptions": None,
                  "notes": {"latent_stat_distance_is_substitute": True,
                            "mi_average_space": "probs"}}
        for name, policy in policies.items():
            if policy.variant == "var_mi" and vae is None:
                raise SystemExit(f"policy {name!r} needs --vae")
            report["results"][name] = _eval_one(model, vae, policy, test_ds, profiles,
                                                metrics_cfg, seed)
        if metrics_cfg.get("linearity", False):
            n = min(metrics_cfg.get("eval_limit", 1000), 200, len(test_ds))
            dtype = next(model.parameters()).dtype
            x = torch.as_tensor(test_ds.images[:n], dtype=dtype)
            y = torch.as_tensor(test_ds.labels[:n])
            grid = metrics_cfg.get("linearity_eps", [e / 255 for e in (1, 2, 4, 8, 16)])
            curve = local_linearity_curve(model, x, y, grid, seed=seed)
            report["linearity"] = {str(k): v for k, v in curve.items()}
            plot = line_plot(os.path.join(out, "linearity.png"), list(curve.keys()),
                             {"mean gamma": list(curve.values())},
                             xlabel="epsilon", ylabel="mean local-linearity gap")
            rec.add_artifact(plot)
        if metrics_cfg.get("corruptions", False):
            matrix, mean = corruption_eval(model, test_ds, seed=seed,
                                           limit=metrics_cfg.get("eval_limit", 1000))
            report["corruptions"] = {"matrix": matrix, "mean": mean}
        jsonschema.validate(report, _schema("report.schema.json"))
        report_path = runio.write_json(os.path.join(out, "report.json"), report)
        rows = []
        for pname, r in sorted(report["results"].items()):
            rows.append([pname, "clean", f"{r['clean_accuracy']:.4f}"])
            for aname, acc in sorted(r["attacks"].items()):
                rows.append([pname, aname, f"{acc:.4f}"])
            if r["ece"] is not None:
                rows.append([pname, "ece", f"{r['ece']:.4f}"])
        csv_path = runio.write_csv(os.path.join(out, "report.csv"),
                                   ["policy", "metric", "value"], rows)
        rec.add_artifact(report_path)
        rec.add_artifact(csv_path)
        headline = {f"{p}/{m}": v for p, r in report["results"].items()
                    for m, v in [("clean", r["clean_accuracy"]), *r["attacks"].items()]}
        rec.set_headline(**headline)
        rec.save()
    for pname, r in sorted(report["results"].items()):
        attacks = ", ".join(f"{a}={v:.4f}" for a, v in sorted(r["attacks"].items()))
        print(f"{pname}: clean={r['clean_accuracy']:.4f} {attacks}")
    return 0


def cmd_corrupt_eval(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(args, cfg, "corrupt-eval")
    _, test_ds = resolve_dataset(cfg, seed)
    model = load_model(args.model)
    limit = cfg.get("metrics", {}).get("eval_limit", 1000)
    with runio.run_lock(out):
        rec = runio.RunRecord(out, {**cfg, "seed": seed, "corruption_tables": SEVERITY_TABLES},
                              "corrupt-eval")
        matrix, mean = corruption_eval(model, test_ds, seed=seed, limit=limit)
        out_json = runio.write_json(os.path.join(out, "corruptions.json"),
                                    {"matrix": matrix, "mean": mean,
                                     "severity_tables": SEVERITY_TABLES})
        rows = [[kind, sev + 1, f"{acc:.4f}"] for kind, row in sorted(matrix.items())
                for sev, acc in enumerate(row)]
        out_csv = runio.write_csv(os.path.join(out, "corruptions.csv"),
                                  ["kind", "severity", "accuracy"], rows)
        rec.add_artifact(out_json)
        rec.add_artifact(out_csv)
        rec.set_headline(corruption_mean=mean)
        rec.save()
    print(f"corruption mean accuracy {mean:.4f} over {len(matrix)} kinds x 5 severities")
    return 0


def _parse_sweep(spec):
    try:
        name, rng = spec.split("=")
        lo, hi, step = (float(v) for v in rng.split(":"))
    except ValueError:
        raise SystemExit(f"bad sweep spec {spec!r}; expected name=start:stop:step")
    if name not in ("lambda-mi", "eta"):
        raise SystemExit(f"sweepable parameters: lambda-mi, eta (got {name!r})")
    grid = np.arange(lo, hi + step / 2, step)
    return name, [round(float(v), 10) for v in grid]


def cmd_sweep(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(args, cfg, "sweep")
    train_ds, test_ds = resolve_dataset(cfg, seed)
    model = load_model(args.model)
    vae = load_vae(args.vae) if args.vae else None
    name, grid = _parse_sweep(args.sweep)
    if name == "eta":
        raise SystemExit("eta sweeps require retraining; only lambda-mi sweeps are supported here")
    profiles = _profiles(cfg, [args.attack_profile or "pgd10"])
    pname, (budget, kind) = next(iter(profiles.items()))
    variant = "var_mi" if vae is not None else "mi_ol"
    limit = cfg.get("metrics", {}).get("eval_limit", 500)
    with runio.run_lock(out):
        rec = runio.RunRecord(out, {**cfg, "seed": seed, "sweep": args.sweep}, "sweep")
        rows, clean_curve, adv_curve = [], [], []
        for lam in grid:
            policy = InferencePolicy(variant=variant, lambda_mi=lam,
                                     n_mi=args.n_mi, pool=train_ds, seed=seed)
            clean = oblivious_eval(model, policy, test_ds, AttackBudget(0.0, 1.0, 0),
                                   vae=vae, attack="none", limit=limit)
            adv = oblivious_eval(model, policy, test_ds, budget, vae=vae,
                                 attack=kind, seed=seed, limit=limit)
            rows.append([lam, f"{clean:.4f}", f"{adv:.4f}"])
            clean_curve.append(clean)
            adv_curve.append(adv)
        csv_path = runio.write_csv(os.path.join(out, "sweep.csv"),
                                   ["lambda_mi", "clean_accuracy", f"{pname}_accuracy"], rows)
        plot = line_plot(os.path.join(out, "sweep.png"), grid,
                         {"clean": clean_curve, pname: adv_curve},
                         xlabel="lambda_MI", ylabel="accuracy",
                         title=f"{variant} sweep")
        rec.add_artifact(csv_path)
        rec.add_artifact(plot)
        rec.set_headline(best_adv=max(adv_curve), best_lambda=grid[int(np.argmax(adv_curve))])
        rec.save()
    print(f"sweep over {len(grid)} values of {name}: best {pname} accuracy "
          f"{max(adv_curve):.4f} at lambda_mi={grid[int(np.argmax(adv_curve))]}")
    return 0


def cmd_report(args):
    rows, attack_names = [], set()
    reports = []
    for run_dir in args.run_dirs:
        path = os.path.join(run_dir, "report.json")
        if not os.path.isfile(path):
            raise SystemExit(f"missing report.json in run dir: {run_dir}")
        rep = runio.read_json(path)
        reports.append((os.path.basename(os.path.normpath(run_dir)), rep))
        for r in rep["results"].values():
            attack_names.update(r["attacks"].keys())
    attack_names = sorted(attack_names)
    header = ["run", "policy", "clean"] + attack_names
    text_lines = ["  ".join(f"{h:>18}" for h in header)]
    for run_name, rep in reports:
        for pname, r in sorted(rep["results"].items()):
            row = [run_name, pname, f"{r['clean_accuracy'] * 100:.2f}"]
            cells = [f"{run_name:>18}", f"{pname:>18}"]
            for a in attack_names:
                acc = r["attacks"].get(a)
                row.append("" if acc is None else f"{acc * 100:.2f}")
                shown = "-" if acc is None else f"{acc * 100:.2f} ({r['clean_accuracy'] * 100:.2f})"
                cells.append(f"{shown:>18}")
            cells.insert(2, f"{r['clean_accuracy'] * 100:>18.2f}")
            rows.append(row)
            text_lines.append("  ".join(cells))
    table = "\n".join(text_lines)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        runio.write_csv(os.path.join(args.out, "comparison.csv"), header, rows)
        with open(os.path.join(args.out, "comparison.txt"), "w") as f:
            f.write(table + "\n")
    print(table)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="robustmix",
                                description="Batch experiments for latent-space mixup robustness.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment config JSON")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output run directory")

    sp = sub.add_parser("train-vae", help="train the MMD-VAE")
    common(sp)
    sp.add_argument("--adversarial", action="store_true", help="train on PGD-perturbed batches")
    sp.add_argument("--epochs", type=int, default=None)
    sp.set_defaults(func=cmd_train_vae)

    sp = sub.add_parser("train", help="train a classifier")
    common(sp)
    sp.add_argument("--preset", default=None, help=f"trainer preset: {sorted(PRESETS)}")
    sp.add_argument("--epoch-scale", type=float, default=None,
                    help="scale factor on the preset epoch budgets (default 0.2)")
    sp.add_argument("--vae", default=None, help="VAE checkpoint (latent trainers)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("attack", help="generate and persist adversarial tensors")
    common(sp)
    sp.add_argument("--model", required=True, help="model checkpoint")
    sp.add_argument("--attack-profile", default="pgd10")
    sp.add_argument("--limit", type=int, default=None)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("eval", help="robustness + calibration evaluation")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--vae", default=None)
    sp.add_argument("--inference", default=None,
                    help="comma list: plain,mi-ol,var-mi (overrides config)")
    sp.add_argument("--lambda-mi", type=float, default=0.5)
    sp.add_argument("--n-mi", type=int, default=30)
    sp.add_argument("--attack-profile", default=None, help="comma list of profile names")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("corrupt-eval", help="common-corruption robustness")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_corrupt_eval)

    sp = sub.add_parser("sweep", help="parameter sweep, e.g. lambda-mi=0:1:0.1")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--vae", default=None)
    sp.add_argument("--sweep", required=True)
    sp.add_argument("--attack-profile", default=None)
    sp.add_argument("--n-mi", type=int, default=30)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="comparison table across run dirs")
    sp.add_argument("run_dirs", nargs="+")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, runio.RunDirError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
