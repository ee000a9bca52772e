"""Pipeline orchestration: dataset synthesis, dual-branch fitting with flow
rectification and adversarial alternation, novel view-pose rendering, and
evaluation/ablation reports.

Config files are flat UTF-8 ``key=value`` text (one pair per line, ``#``
comments); unknown keys are errors.  All learnable state, optimizer moments
and the RNG stream live in single-file checkpoint bundles that round-trip
bitwise, so identical (config, seed, thread count) runs produce identical
logs and checkpoints, and resuming equals uninterrupted training.

Per iteration: one source pose (from the full pose set) supervises the
reconstruction branch on source frames; one subsampled target pose supervises
the try-on branch on rectified degraded frames; both branches back-propagate
into the shared offset network.  Flows are refined by a short inner loop
against the current render before the branch update, and the discriminator
takes one step per iteration on unrectified-real vs rendered-fake patches.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import synthdata
from .deformer import (BranchField, OffsetNetwork, OffsetRanges, build_avatar,
                       build_avatar_backward)
from .flow import FlowBank, flow_regularizer, warp, warp_backward
from .losses import (LossWeights, PatchDiscriminator, adversarial_losses,
                     extract_patches, l1_loss, perceptual_proxy, reg_loss,
                     sample_patch_coords, scatter_patch_grads)
from .metrics import (MetricReport, consistency_score, flow_recovery_error,
                      psnr, ssim)
from .optim import ParamGroup
from .renderer import render, render_backward
from .skeleton import position_map
from .tensorio import load_bundle, save_bundle, save_png

VARIANTS = ("full", "no_nld", "no_rfr", "no_adv")
LOG_HEADER = "iter,l1,lp,lreg,ladv_gen,ladv_dis,flow_reg,total"


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Config:
    # reproducibility
    seed: int = 0
    # dataset
    views: int = 4
    poses: int = 40
    resolution: int = 128
    subsample: int = 20
    jitter_px: float = 2.0
    color_jitter: bool = True
    background: tuple = (0.84, 0.84, 0.88)
    # model
    uv_grid: int = 64
    nld_hidden: int = 64
    range_pos: float = 0.05
    range_rot: float = 0.2
    range_scale: float = 0.5
    range_color: float = 0.25
    # loss weights
    lam_p: float = 0.1
    lam_reg: float = 1e-3
    lam_adv: float = 0.05
    lam_tv: float = 1e-3
    lam_mag: float = 1e-4
    # optimizer
    lr_branch: float = 5e-3
    lr_nld: float = 1e-3
    lr_flows: float = 1e-2
    lr_dis: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # training
    iterations: int = 500
    flow_steps: int = 12
    dis_patches: int = 8
    checkpoint_every: int = 0
    # feature toggles
    enable_nld: bool = True
    enable_rfr: bool = True
    enable_adv: bool = True

    def validate(self):
        checks = [
            (self.seed >= 0, "seed must be >= 0"),
            (self.views >= 1, "views must be >= 1"),
            (self.poses >= 1, "poses must be >= 1"),
            (self.resolution >= 48, "resolution must be >= 48"),
            (1 <= self.subsample <= self.poses,
             "subsample must lie in [1, poses]"),
            (self.jitter_px >= 0, "jitter_px must be >= 0"),
            (16 <= self.uv_grid <= 256, "uv_grid must lie in [16, 256]"),
            (self.nld_hidden >= 1, "nld_hidden must be >= 1"),
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.flow_steps >= 1, "flow_steps must be >= 1"),
            (self.dis_patches >= 1, "dis_patches must be >= 1"),
            (self.checkpoint_every >= 0, "checkpoint_every must be >= 0"),
            (len(self.background) == 3, "background needs 3 channels"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name in ("range_pos", "range_rot", "range_scale", "range_color",
                     "jitter_px"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("lam_p", "lam_reg", "lam_adv", "lam_tv", "lam_mag"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("lr_branch", "lr_nld", "lr_flows", "lr_dis"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if any(not 0 <= b <= 1 for b in self.background):
            raise ConfigError("background channels must lie in [0, 1]")
        return self

    def ranges(self):
        return OffsetRanges(pos=self.range_pos, rot=self.range_rot,
                            scale=self.range_scale, color=self.range_color)

    def loss_weights(self):
        return LossWeights(lam_p=self.lam_p, lam_reg=self.lam_reg,
                           lam_adv=self.lam_adv, lam_tv=self.lam_tv,
                           lam_mag=self.lam_mag).validate()


def _coerce(name, raw, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"bad boolean for {name}: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.split(","))
    return raw


def parse_config(text) -> Config:
    cfg = Config()
    fields = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        setattr(cfg, key, _coerce(key, raw, fields[key]))
    return cfg.validate()


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: Config) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = ",".join(f"{x:.17g}" for x in v)
        elif isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: Config) -> str:
    return hashlib.sha256(format_config(cfg).encode("utf-8")).hexdigest()


def apply_variant(cfg: Config, variant: str) -> Config:
    """Map an ablation name onto the three feature toggles."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant '{variant}' (choose from {VARIANTS})")
    out = dataclasses.replace(cfg)
    if variant == "no_nld":
        out.enable_nld = False
    elif variant == "no_rfr":
        out.enable_rfr = False
    elif variant == "no_adv":
        out.enable_adv = False
    return out


# ---------------------------------------------------------------------------
# training state


@dataclass
class TrainState:
    cfg: Config
    variant: str
    dataset: synthdata.Dataset
    branch_src: BranchField
    branch_tar: BranchField
    net: OffsetNetwork
    dis: PatchDiscriminator
    flows: FlowBank
    groups: dict
    rng: np.random.Generator
    iteration: int = 0
    lbs_cache: dict = field(default_factory=dict)
    src_images: dict = field(default_factory=dict)
    tar_images: dict = field(default_factory=dict)

    def lbs(self, pose_index):
        if pose_index not in self.lbs_cache:
            ds = self.dataset
            self.lbs_cache[pose_index] = position_map(
                ds.subject.template, ds.subject.skeleton, ds.subject.weights,
                ds.poses[pose_index])
        return self.lbs_cache[pose_index]

    def source_image(self, view, pose_index):
        key = (view, pose_index)
        if key not in self.src_images:
            self.src_images[key] = self.dataset.source_image(view, pose_index)
        return self.src_images[key]

    def degraded_image(self, view, pose_index):
        key = (view, pose_index)
        if key not in self.tar_images:
            self.tar_images[key] = self.dataset.degraded_image(view, pose_index)
        return self.tar_images[key]


def init_state(cfg: Config, dataset: synthdata.Dataset, variant="full") -> TrainState:
    cfg = apply_variant(cfg, variant)
    subject = dataset.subject
    grid = subject.template.valid.shape
    rng = np.random.default_rng(cfg.seed)

    init_scale = subject.mean_spacing() * 0.75
    branch_src = BranchField.init("src", grid, init_scale)
    branch_tar = BranchField.init("tar", grid, init_scale)
    net = OffsetNetwork(rng, grid, hidden=cfg.nld_hidden)
    dis = PatchDiscriminator(rng)

    frame_ids = [dataset.frame_id(v, p) for p in dataset.sub_idx
                 for v in range(cfg.views)]
    flows = FlowBank.zeros(frame_ids, cfg.resolution, cfg.resolution)

    groups = {
        "branch_src": ParamGroup("branch_src", branch_src.params(),
                                 cfg.lr_branch, cfg.beta1, cfg.beta2, cfg.eps),
        "branch_tar": ParamGroup("branch_tar", branch_tar.params(),
                                 cfg.lr_branch, cfg.beta1, cfg.beta2, cfg.eps),
        "nld": ParamGroup("nld", net.params, cfg.lr_nld, cfg.beta1, cfg.beta2,
                          cfg.eps),
        "flows": ParamGroup("flows", flows.fields, cfg.lr_flows, cfg.beta1,
                            cfg.beta2, cfg.eps),
        "discriminator": ParamGroup("discriminator", dis.params, cfg.lr_dis,
                                    cfg.beta1, cfg.beta2, cfg.eps),
    }
    if not cfg.enable_nld:
        groups["nld"].freeze()
    if not cfg.enable_rfr:
        groups["flows"].freeze()
    if not cfg.enable_adv:
        groups["discriminator"].freeze()
    return TrainState(cfg=cfg, variant=variant, dataset=dataset,
                      branch_src=branch_src, branch_tar=branch_tar, net=net,
                      dis=dis, flows=flows, groups=groups, rng=rng)


def _accumulate(acc, grads):
    for k, v in grads.items():
        if k in acc:
            acc[k] += v
        else:
            acc[k] = v.copy()
    return acc


def _scale(acc, factor):
    for k in acc:
        acc[k] *= factor
    return acc


def _render_views(state: TrainState, branch, pose_index):
    """Forward renders of one branch for the whole view batch; returns a list
    of (RenderOutput, projection ctx, avatar ctx)."""
    cfg = state.cfg
    ds = state.dataset
    subject = ds.subject
    lbs = state.lbs(pose_index)
    rendered = []
    for v in range(cfg.views):
        cam = ds.cameras[v]
        cloud, actx = build_avatar(branch, state.net, subject.skeleton,
                                   subject.weights, subject.template,
                                   ds.poses[pose_index], cam, lbs=lbs,
                                   ranges=cfg.ranges())
        out, pctx = render(cloud, cam, ds.background)
        rendered.append((out, pctx, actx))
    return rendered


def _branch_pass(state: TrainState, rendered, targets, weights, adversarial):
    """Losses and backward for one branch over pre-rendered views.

    targets[v] is the supervision image for view v.  Returns (loss terms
    dict, branch grads, net grads, dis grads or None).
    """
    cfg = state.cfg
    V = cfg.views

    acc_branch, acc_net, acc_dis = {}, {}, {}
    terms = {"l1": 0.0, "lp": 0.0, "lreg": 0.0, "ladv_gen": 0.0,
             "ladv_dis": 0.0}
    for v in range(V):
        out, pctx, actx = rendered[v]
        target = targets[v]

        l1, g1 = l1_loss(out.image, target)
        lp, gp = perceptual_proxy(out.image, target)
        lreg, greg = reg_loss(actx.avatar.raw_map)
        d_image = g1 + weights.lam_p * gp
        terms["l1"] += l1 / V
        terms["lp"] += lp / V
        terms["lreg"] += lreg / V

        if adversarial:
            coords_r = sample_patch_coords(state.rng, cfg.resolution,
                                           cfg.resolution, cfg.dis_patches)
            coords_f = sample_patch_coords(state.rng, cfg.resolution,
                                           cfg.resolution, cfg.dis_patches)
            real = extract_patches(target, coords_r)
            fake = extract_patches(out.image, coords_f)
            adv = adversarial_losses(state.dis, real, fake)
            d_image += weights.lam_adv * scatter_patch_grads(
                adv.d_fake, coords_f, out.image.shape)
            _accumulate(acc_dis, adv.dis_grads)
            terms["ladv_gen"] += adv.l_gen / V
            terms["ladv_dis"] += adv.l_dis / V

        cloud_grads = render_backward(out, pctx, d_image)
        b_grads, n_grads = build_avatar_backward(
            actx, state.net, cloud_grads, d_raw_map=weights.lam_reg * greg)
        _accumulate(acc_branch, b_grads)
        _accumulate(acc_net, n_grads)

    _scale(acc_branch, 1.0 / V)
    _scale(acc_net, 1.0 / V)
    if acc_dis:
        _scale(acc_dis, 1.0 / V)
    return terms, acc_branch, acc_net, (acc_dis if adversarial else None)


def _refine_flows(state: TrainState, pose_index, renders, weights):
    """Inner alignment loop: step each frame's flow against the fixed render.

    Returns the mean final flow-regularizer value over the view batch.
    """
    cfg = state.cfg
    ds = state.dataset
    reg_total = 0.0
    for v in range(cfg.views):
        fid = ds.frame_id(v, pose_index)
        D = state.degraded_image(v, pose_index)
        fixed = renders[v]
        for _ in range(cfg.flow_steps):
            F = state.flows.get(fid)
            D_rec = warp(D, F)
            _, g1 = l1_loss(fixed, D_rec)
            _, gp = perceptual_proxy(fixed, D_rec)
            d_target = -(g1 + weights.lam_p * gp)
            _, d_flow = warp_backward(D, F, d_target, need_image_grad=False)
            _, d_reg = flow_regularizer(F, weights.lam_tv, weights.lam_mag)
            state.groups["flows"].step({fid: d_flow + d_reg})
        reg_val, _ = flow_regularizer(state.flows.get(fid), weights.lam_tv,
                                      weights.lam_mag)
        reg_total += reg_val
    return reg_total / cfg.views


def train_iteration(state: TrainState):
    """One full iteration; returns the logged loss breakdown (try-on side)."""
    cfg = state.cfg
    ds = state.dataset
    weights = cfg.loss_weights()

    src_pose = int(state.rng.integers(cfg.poses))
    tar_pose = int(ds.sub_idx[int(state.rng.integers(len(ds.sub_idx)))])

    # reconstruction branch on source frames
    src_targets = [state.source_image(v, src_pose) for v in range(cfg.views)]
    src_rendered = _render_views(state, state.branch_src, src_pose)
    _, g_src, g_net_src, _ = _branch_pass(
        state, src_rendered, src_targets, weights, adversarial=False)

    # the try-on renders serve both the flow refinement and the branch update
    # (flow steps change the supervision, not the render)
    tar_rendered = _render_views(state, state.branch_tar, tar_pose)

    flow_reg_val = 0.0
    if cfg.enable_rfr:
        flow_reg_val = _refine_flows(
            state, tar_pose, [r[0].image for r in tar_rendered], weights)

    # try-on branch on rectified supervision
    tar_targets = []
    for v in range(cfg.views):
        D = state.degraded_image(v, tar_pose)
        if cfg.enable_rfr:
            tar_targets.append(warp(D, state.flows.get(ds.frame_id(v, tar_pose))))
        else:
            tar_targets.append(D)
    terms, g_tar, g_net_tar, g_dis = _branch_pass(
        state, tar_rendered, tar_targets, weights, adversarial=cfg.enable_adv)

    state.groups["branch_src"].step(g_src)
    state.groups["branch_tar"].step(g_tar)
    state.groups["nld"].step(_accumulate(g_net_src, g_net_tar))
    if g_dis:
        state.groups["discriminator"].step(g_dis)

    terms["flow_reg"] = flow_reg_val
    terms["total"] = (terms["l1"] + weights.lam_p * terms["lp"]
                      + weights.lam_reg * terms["lreg"]
                      + weights.lam_adv * terms["ladv_gen"] + flow_reg_val)
    state.iteration += 1

    if not np.isfinite(terms["total"]):
        raise TrainingDiverged(
            f"non-finite loss at iteration {state.iteration}: "
            + json.dumps({k: repr(v) for k, v in terms.items()}))
    return terms


def _log_row(iteration, terms):
    cols = [str(iteration)] + [
        f"{terms[k]:.17g}" for k in
        ("l1", "lp", "lreg", "ladv_gen", "ladv_dis", "flow_reg", "total")]
    return ",".join(cols)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: TrainState):
    tensors = {}
    for name, group in state.groups.items():
        tensors.update(group.state_tensors(name))
    meta = {
        "config_hash": config_hash(state.cfg),
        "config_text": format_config(state.cfg),
        "variant": state.variant,
        "iteration": state.iteration,
        "rng_state": state.rng.bit_generator.state,
        "flow_frames": sorted(state.flows.fields.keys()),
    }
    save_bundle(path, tensors, meta)


def load_checkpoint(path, dataset: synthdata.Dataset) -> TrainState:
    tensors, meta = load_bundle(path)
    cfg = parse_config(meta["config_text"])
    state = init_state(cfg, dataset, variant=meta["variant"])
    for name, group in state.groups.items():
        group.load_state_tensors(name, tensors)
    state.rng.bit_generator.state = meta["rng_state"]
    state.iteration = int(meta["iteration"])
    return state


def fit(cfg: Config, dataset_dir, out_dir, variant="full", resume_from=None):
    """Train to cfg.iterations; writes checkpoint.tsb and train_log.csv.

    Returns (checkpoint path, log path).  With `resume_from`, training
    continues from the saved iteration and appends only the new log rows.
    """
    os.makedirs(out_dir, exist_ok=True)
    dataset = synthdata.load_dataset(dataset_dir)
    cfg = apply_variant(cfg, variant)

    if resume_from is not None:
        state = load_checkpoint(resume_from, dataset)
        if config_hash(state.cfg) != config_hash(apply_variant(cfg, variant)):
            raise ConfigError("resume config does not match checkpoint config")
        log_mode = "a"
    else:
        state = init_state(cfg, dataset, variant=variant)
        log_mode = "w"

    ckpt_path = os.path.join(out_dir, "checkpoint.tsb")
    log_path = os.path.join(out_dir, "train_log.csv")
    with open(log_path, log_mode, encoding="utf-8", newline="") as log:
        if log_mode == "w":
            log.write(LOG_HEADER + "\n")
        try:
            while state.iteration < state.cfg.iterations:
                terms = train_iteration(state)
                log.write(_log_row(state.iteration, terms) + "\n")
                if (state.cfg.checkpoint_every
                        and state.iteration % state.cfg.checkpoint_every == 0
                        and state.iteration < state.cfg.iterations):
                    save_checkpoint(
                        os.path.join(out_dir,
                                     f"checkpoint_{state.iteration:06d}.tsb"),
                        state)
        except TrainingDiverged as exc:
            dump = os.path.join(out_dir, "diagnostic.json")
            with open(dump, "w", encoding="utf-8") as fh:
                json.dump({"error": str(exc), "iteration": state.iteration},
                          fh, indent=1)
            raise
    save_checkpoint(ckpt_path, state)
    return ckpt_path, log_path


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: Config, out_dir):
    """Write the synthetic supervision set for this config."""
    cfg.validate()
    return synthdata.write_dataset(
        out_dir, seed=cfg.seed, views=cfg.views, poses=cfg.poses,
        resolution=cfg.resolution, subsample=cfg.subsample,
        jitter_px=cfg.jitter_px, background=np.asarray(cfg.background),
        color_jitter=cfg.color_jitter, uv_grid=cfg.uv_grid)


def cmd_fit(cfg: Config, dataset_dir, out_dir, variant="full", resume_from=None):
    return fit(cfg, dataset_dir, out_dir, variant=variant,
               resume_from=resume_from)


def _avatar_image(state: TrainState, branch, pose, camera, lbs=None):
    subject = state.dataset.subject
    cloud, _ = build_avatar(branch, state.net, subject.skeleton,
                            subject.weights, subject.template, pose, camera,
                            lbs=lbs, ranges=state.cfg.ranges())
    out, _ = render(cloud, camera, state.dataset.background)
    return out.image


def cmd_render(checkpoint_path, dataset_dir, out_dir, branch="tar",
               pose_indices=None, orbit_steps=0, orbit_pose=0):
    """Render PNG sequences from a checkpoint.

    pose_indices: dataset poses rendered from every dataset camera;
    orbit_steps > 0 instead renders a full camera orbit at `orbit_pose`.
    """
    if branch not in ("src", "tar"):
        raise ConfigError("branch must be 'src' or 'tar'")
    os.makedirs(out_dir, exist_ok=True)
    dataset = synthdata.load_dataset(dataset_dir)
    state = load_checkpoint(checkpoint_path, dataset)
    bf = state.branch_tar if branch == "tar" else state.branch_src

    written = []
    if orbit_steps > 0:
        pose = dataset.poses[orbit_pose]
        lbs = state.lbs(orbit_pose)
        for i in range(orbit_steps):
            cams = synthdata.ring_cameras(orbit_steps, state.cfg.resolution)
            img = _avatar_image(state, bf, pose, cams[i], lbs=lbs)
            rel = f"orbit_{i:03d}.png"
            save_png(os.path.join(out_dir, rel), img)
            written.append(rel)
    else:
        if pose_indices is None:
            pose_indices = list(range(len(dataset.poses)))
        for p in pose_indices:
            if not 0 <= p < len(dataset.poses):
                raise ConfigError(f"pose index {p} out of range")
            lbs = state.lbs(p)
            for v, cam in enumerate(dataset.cameras):
                img = _avatar_image(state, bf, dataset.poses[p], cam, lbs=lbs)
                rel = f"render_v{v:02d}_p{p:03d}.png"
                save_png(os.path.join(out_dir, rel), img)
                written.append(rel)
    return written


def evaluate_checkpoint(checkpoint_path, dataset_dir, sc_view=0) -> MetricReport:
    """Metrics for one checkpoint: PSNR/SSIM vs ideal try-on frames on the
    training and held-out pose splits, the consistency proxy over the full
    pose cycle at one camera, and flow recovery error when jitter records
    exist."""
    dataset = synthdata.load_dataset(dataset_dir)
    state = load_checkpoint(checkpoint_path, dataset)
    subject = dataset.subject
    report = MetricReport(variant=state.variant)

    sub = set(int(i) for i in dataset.sub_idx)
    for p in range(len(dataset.poses)):
        split = "train" if p in sub else "heldout"
        lbs = state.lbs(p)
        for v, cam in enumerate(dataset.cameras):
            img = _avatar_image(state, state.branch_tar, dataset.poses[p],
                                cam, lbs=lbs)
            ideal = dataset.ideal_image(v, p)
            report.add(dataset.frame_id(v, p), split, psnr(img, ideal),
                       ssim(img, ideal))

    cam = dataset.cameras[sc_view]
    renders, tracks = [], []
    for p in range(len(dataset.poses)):
        lbs = state.lbs(p)
        renders.append(_avatar_image(state, state.branch_tar,
                                     dataset.poses[p], cam, lbs=lbs))
        tracks.append(synthdata.texel_tracks(subject, dataset.poses[p], cam,
                                             lbs=lbs))
    report.sc_proxy = consistency_score(renders, tracks)

    jitter_dir = os.path.join(dataset_dir, "jitter")
    if os.path.isdir(jitter_dir) and len(state.flows.fields):
        records = {}
        for p in dataset.sub_idx:
            for v in range(len(dataset.cameras)):
                fid = dataset.frame_id(v, int(p))
                records[fid] = dataset.jitter_record(v, int(p))
        report.flow_epe = flow_recovery_error(state.flows.fields, records)
    return report


def gt_consistency_baseline(dataset_dir, sc_view=0, tryon=True):
    """Consistency proxy of the ground-truth subject's own renders (the
    reference upper bound for fitted models)."""
    dataset = synthdata.load_dataset(dataset_dir)
    subject = dataset.subject
    cam = dataset.cameras[sc_view]
    colors = synthdata.tryon_colors(subject, synthdata.target_garment_spec()) \
        if tryon else None
    renders, tracks = [], []
    for pose in dataset.poses:
        lbs = position_map(subject.template, subject.skeleton,
                           subject.weights, pose)
        out = synthdata.render_subject(subject, pose, cam, dataset.background,
                                       colors=colors, lbs=lbs)
        renders.append(out.image)
        tracks.append(synthdata.texel_tracks(subject, pose, cam, lbs=lbs))
    return consistency_score(renders, tracks)


def cmd_eval(checkpoint_paths, dataset_dir, out_path, sc_view=0):
    """Comparative metric table over one or more checkpoints (full +
    ablations); writes CSV plus a text summary and returns the reports."""
    reports = [evaluate_checkpoint(p, dataset_dir, sc_view=sc_view)
               for p in checkpoint_paths]
    baseline = gt_consistency_baseline(dataset_dir, sc_view=sc_view)
    lines = ["# ground-truth subject sc_proxy baseline: "
             f"{baseline if np.isfinite(baseline) else 'inf'}"]
    csv_chunks = []
    for rep in reports:
        csv_chunks.append(rep.to_csv())
        lines.append(rep.summary())
    body = csv_chunks[0]
    for chunk in csv_chunks[1:]:
        body += "".join(chunk.splitlines(keepends=True)[1:])  # drop header
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(body)
    summary_path = os.path.splitext(out_path)[0] + "_summary.txt"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return reports, baseline
