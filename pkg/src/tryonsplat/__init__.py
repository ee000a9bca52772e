"""tryonsplat: differentiable Gaussian-splat avatar fitting with garment
transfer from temporally inconsistent 2D supervision.

The library decomposes each branch's Gaussian map into a view-pose-invariant
learnable field plus view-pose-specific offsets from a shared network, fits
both branches through a tile-based differentiable rasterizer, and rectifies
inconsistent per-frame supervision with zero-initialized learnable flows.
"""

from .core import Camera, GaussianCloud, GaussianPrimitive, covariance3d, quat_to_rotmat
from .deformer import (BranchField, ComposedAvatar, OffsetNetwork,
                       OffsetRanges, branch_only_avatar, build_avatar, compose,
                       offsets)
from .flow import FlowBank, flow_regularizer, warp, warp_backward
from .losses import (LossWeights, PatchDiscriminator, adversarial_losses,
                     l1_loss, perceptual_proxy, reg_loss, total_loss)
from .metrics import MetricReport, consistency_score, flow_recovery_error, psnr, ssim
from .optim import ParamGroup
from .pipeline import (Config, apply_variant, cmd_eval, cmd_fit, cmd_render,
                       cmd_synth, fit, load_config, parse_config)
from .renderer import (RenderOutput, Splat2D, project_cloud, project_primitive,
                       rasterize, rasterize_backward, render, render_backward)
from .skeleton import (Pose, PositionMap, Skeleton, forward_kinematics,
                       lbs_transform, position_map)
from .synthdata import (GarmentSpec, JitterRecord, Subject, degrade,
                        generate_subject, load_dataset, render_dataset,
                        subsample_poses, write_dataset)

__version__ = "0.1.0"
