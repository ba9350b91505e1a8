"""Train a small denoiser on synthetic cubes and watch held-out PSNR
improve over the noisy input.  A couple of minutes on CPU.
"""

from ssmdenoise.metrics import psnr
from ssmdenoise.model import ModelConfig, denoise_cube
from ssmdenoise.noise import NoiseSpec, degrade, synth_clean_cube
from ssmdenoise.train import TrainConfig, train

spec = NoiseSpec.gaussian_only(25.0)
cfg = TrainConfig(
    model=ModelConfig(base_channels=4, state_dim=4),
    noise=spec,
    epochs=1, steps_per_epoch=200, batch_size=4,
    patch=(8, 16, 16), seed=0,
)
cubes = [synth_clean_cube(8, 32, 32, 3, seed=100 + i) for i in range(4)]

mw, log = train(cfg, cubes)
print(f"{log.parameter_count} parameters, "
      f"loss {log.losses[0]:.3f} -> {log.losses[-1]:.3f}, "
      f"{log.wall_time:.0f}s")

clean = synth_clean_cube(8, 32, 32, 3, seed=999)
noisy, _ = degrade(clean, spec, seed=1000)
restored = denoise_cube(mw, noisy)
print(f"noisy    {psnr(clean, noisy):6.2f} dB")
print(f"restored {psnr(clean, restored):6.2f} dB")
