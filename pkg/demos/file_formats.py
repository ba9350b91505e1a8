"""Round-trip the two binary formats: .hsic cubes and .ssuw weight
checkpoints.  Both are bit-exact, and a checkpoint carries its model
hyperparameters so it can be loaded without a config file.
"""

import tempfile
from pathlib import Path

from ssmdenoise.hsio import load_checkpoint, load_cube, save_checkpoint, store_cube
from ssmdenoise.model import ModelConfig, init_model
from ssmdenoise.noise import synth_clean_cube

tmp = Path(tempfile.mkdtemp())

cube = synth_clean_cube(6, 16, 16, rank=2, seed=0).astype("float32")
store_cube(tmp / "cube.hsic", cube)
back = load_cube(tmp / "cube.hsic")
print("cube round-trip bitwise:", back.tobytes() == cube.tobytes())

mw = init_model(ModelConfig(base_channels=2, state_dim=2), seed=3)
save_checkpoint(tmp / "weights.ssuw", mw)
restored = load_checkpoint(tmp / "weights.ssuw")
print("checkpoint config restored:", restored.config == mw.config)
print("files:", sorted(p.name for p in tmp.iterdir()))
