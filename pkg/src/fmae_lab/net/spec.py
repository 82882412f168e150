"""Network architecture descriptions and receptive-field bookkeeping."""
import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

LAYER_KINDS = ("strided_conv", "transposed_conv", "decim_conv", "interp_conv", "plain_conv")
ACTIVATIONS = ("tanh", "prelu", "linear")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: int
    in_ch: int
    out_ch: int
    factor: int = 1
    activation: str = "linear"
    bias: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kernel < 1 or self.factor < 1 or self.in_ch < 1 or self.out_ch < 1:
            raise ValueError(f"invalid layer {self}")
        if self.kind == "plain_conv" and self.factor != 1:
            raise ValueError("plain_conv does not resample")

    @property
    def downsamples(self):
        return self.kind in ("strided_conv", "decim_conv")

    @property
    def upsamples(self):
        return self.kind in ("transposed_conv", "interp_conv")

    @property
    def weight_shape(self):
        if self.kind == "transposed_conv":
            return (self.in_ch, self.out_ch, self.kernel)
        return (self.out_ch, self.in_ch, self.kernel)

    @property
    def fan_in(self):
        if self.kind == "transposed_conv":
            return max(1, self.in_ch * self.kernel // self.factor)
        return self.in_ch * self.kernel


@dataclass(frozen=True)
class NetworkSpec:
    """Encoder-decoder layout.

    With ``skips`` the decoder input at each resolution is the running
    activation concatenated (channel axis) with the encoder output of the
    same length, and the input signal itself is concatenated before the
    output projection.
    """

    encoder: Tuple[LayerSpec, ...]
    decoder: Tuple[LayerSpec, ...]
    output: LayerSpec
    embedding: Optional[LayerSpec] = None
    skips: bool = True
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "encoder", tuple(self.encoder))
        object.__setattr__(self, "decoder", tuple(self.decoder))
        if len(self.encoder) != len(self.decoder):
            raise ValueError("encoder and decoder need the same number of blocks")
        if not all(l.downsamples for l in self.encoder):
            raise ValueError("encoder layers must downsample")
        if not all(l.upsamples for l in self.decoder):
            raise ValueError("decoder layers must upsample")
        down = up = 1
        for l in self.encoder:
            down *= l.factor
        for l in self.decoder:
            up *= l.factor
        if down != up:
            raise ValueError(f"total downsampling {down} != total upsampling {up}")

    @property
    def out_channels(self):
        return self.output.out_ch

    @property
    def n_blocks(self):
        return len(self.encoder)

    @property
    def total_factor(self):
        f = 1
        for l in self.encoder:
            f *= l.factor
        return f

    def layers(self):
        out = list(self.encoder)
        if self.embedding is not None:
            out.append(self.embedding)
        return out + list(self.decoder) + [self.output]

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d):
        emb = d.get("embedding")
        return cls(
            encoder=tuple(LayerSpec(**l) for l in d["encoder"]),
            decoder=tuple(LayerSpec(**l) for l in d["decoder"]),
            output=LayerSpec(**d["output"]),
            embedding=LayerSpec(**emb) if emb else None,
            skips=d.get("skips", True),
            name=d.get("name", "custom"),
        )


def _decoder_in(depth, i, has_embedding, skips):
    if skips and (i > 0 or has_embedding):
        return 2 * depth
    return depth


def build_connear_spec(J, n_blocks=4, kernel=64, depth=128, factor=2, skips=True):
    """Strided-conv encoder / transposed-conv decoder, tanh throughout, no bias."""
    enc = tuple(
        LayerSpec("strided_conv", kernel, 1 if n == 0 else depth, depth, factor, "tanh")
        for n in range(n_blocks)
    )
    dec = tuple(
        LayerSpec("transposed_conv", kernel, _decoder_in(depth, i, False, skips), depth,
                  factor, "tanh")
        for i in range(n_blocks)
    )
    out = LayerSpec("plain_conv", 1, depth + (1 if skips else 0), J, 1, "linear")
    return NetworkSpec(enc, dec, out, None, skips, "connear")


def build_waveunet_spec(J, n_blocks=6, kernel=21, depth=128, factor=2, skips=True):
    """Decimating tanh encoder, embedding conv, interpolating PReLU decoder, no bias."""
    enc = tuple(
        LayerSpec("decim_conv", kernel, 1 if n == 0 else depth, depth, factor, "tanh")
        for n in range(n_blocks)
    )
    emb = LayerSpec("plain_conv", kernel, depth, depth, 1, "tanh")
    dec = tuple(
        LayerSpec("interp_conv", kernel, _decoder_in(depth, i, True, skips), depth,
                  factor, "prelu")
        for i in range(n_blocks)
    )
    out = LayerSpec("plain_conv", 1, depth + (1 if skips else 0), J, 1, "linear")
    return NetworkSpec(enc, dec, out, emb, skips, "waveunet")


def receptive_field(spec):
    """Input span seen by one sample of the deepest encoder output.

    ``sum_n (k_n - 1) * prod_{i<n} d_i + 1`` over the encoder blocks.
    """
    rf, stride = 1, 1
    for layer in spec.encoder:
        rf += (layer.kernel - 1) * stride
        stride *= layer.factor
    return rf
