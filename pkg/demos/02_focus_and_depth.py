"""
From depth to defocus
=====================

A thin lens maps scene depth to a circle-of-confusion diameter, and the
diameter to the Gaussian sigma that renders it.  Objects on the focus
plane stay perfectly sharp; blur grows in both directions away from it
and saturates at the lens cap.
"""

from pathlib import Path

import numpy as np

from focalforge.image import DepthMap, save_image
from focalforge.optics import LensParams, coc_sigma_map
from focalforge.svblur import DegradeOpts, degrade
from focalforge.toydata import SceneSpec, two_plane_scene

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

lens = LensParams(focus_distance=2.0, sigma_max=5.0)
depths = np.array([0.8, 1.2, 1.6, 2.0, 2.5, 3.5, 6.0, 15.0, 60.0])
sigmas = coc_sigma_map(DepthMap(depths[None, :]), lens).data[0]

print(f"focus plane at {lens.focus_distance} m, sigma cap {lens.sigma_max}")
print("depth [m]  sigma [px]")
for z, s in zip(depths, sigmas):
    bar = "#" * int(round(8 * s / lens.sigma_max))
    print(f"  {z:6.1f}   {s:7.3f}  {bar}")

# Refocusing the same depth map moves the sharp band through the scene.
scan = np.broadcast_to(np.linspace(0.5, 8.0, 64), (1, 64))
for f in (1.0, 2.0, 4.0):
    s = coc_sigma_map(DepthMap(scan), LensParams(focus_distance=f, sigma_max=5.0)).data[0]
    sharp = scan[0, s.argmin()]
    print(f"focus {f:.1f} m -> sharpest rendered depth {sharp:.2f} m, "
          f"blur span [{s.min():.2f}, {s.max():.2f}]")

# Render one synthetic two-plane scene end to end: the near plane sits on
# the focus distance, the far plane picks up the defocus.
spec = SceneSpec(count=1, lr_size=96, seed=5)
rgb, depth, label, scene_lens = two_plane_scene(spec, 0)
blur = coc_sigma_map(depth, scene_lens)
lr = degrade(rgb, blur, DegradeOpts(scale_factor=2, mode="lut"))

near = blur.data[depth.data == depth.data.min()]
far = blur.data[depth.data == depth.data.max()]
print(f"two-plane scene: near sigma {near.max():.3f}, far sigma {far.min():.3f}")
save_image(rgb, out / "scene_sharp.png")
save_image(lr, out / "scene_observed.png")
print(f"wrote scene_sharp.png and scene_observed.png to {out}")
