"""Model hyperparameters and their validity rules."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    """Shape contract for the hierarchical encoder.

    Four stages halve the spatial grid each time, so ``input_size`` must be
    divisible by ``patch_size * 8``. Channel width per stage must be divisible
    by that stage's head count. ``map_dim`` is the width of the shared
    click-similarity mapping head.
    """

    input_size: int = 64
    patch_size: int = 4
    dims: tuple[int, int, int, int] = (16, 24, 32, 48)
    heads: tuple[int, int, int, int] = (1, 2, 2, 4)
    layers: tuple[int, int, int, int] = (1, 1, 2, 1)
    reduction: tuple[int, int, int, int] = (1, 1, 1, 1)
    ffn_ratio: int = 2
    map_dim: int = 32
    n_cls: int = 1
    use_click_attention: bool = True
    use_relevance_loss: bool = True
    click_radius: int = 3

    def __post_init__(self):
        if self.input_size <= 0 or self.patch_size <= 0:
            raise ValueError("input_size and patch_size must be positive")
        if self.input_size % (self.patch_size * 8) != 0:
            raise ValueError(
                f"input_size {self.input_size} must be divisible by "
                f"patch_size*8 = {self.patch_size * 8} so all four stage "
                f"grids are integral")
        for name in ("dims", "heads", "layers", "reduction"):
            v = getattr(self, name)
            if len(v) != 4:
                raise ValueError(f"{name} needs exactly 4 entries, got {len(v)}")
            if any(x <= 0 for x in v):
                raise ValueError(f"{name} entries must be positive: {v}")
        for i, (d, h) in enumerate(zip(self.dims, self.heads)):
            if d % h != 0:
                raise ValueError(
                    f"stage {i}: dim {d} not divisible by heads {h}")
        for i, r in enumerate(self.reduction):
            side = self.grid_side(i)
            if side % r != 0:
                raise ValueError(
                    f"stage {i}: grid side {side} not divisible by reduction {r}")
        if self.map_dim <= 0 or self.n_cls <= 0:
            raise ValueError("map_dim and n_cls must be positive")
        if self.ffn_ratio <= 0:
            raise ValueError("ffn_ratio must be positive")
        if self.click_radius < 0:
            raise ValueError("click_radius must be nonnegative")

    def grid_side(self, stage: int) -> int:
        """Patch-grid side length at a stage (stage 0 is 1/patch_size scale)."""
        return self.input_size // (self.patch_size * (1 << stage))

    def seq_len(self, stage: int) -> int:
        s = self.grid_side(stage)
        return s * s

    @property
    def in_channels(self) -> int:
        # RGB + positive map + negative map + previous mask
        return 6
