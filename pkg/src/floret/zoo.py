"""Layer graphs for the CNNs used in the workloads.

Conventions (inference view):

* BatchNorm is folded into the preceding convolution; its two per-channel
  parameters are counted with the conv so totals match the usual
  framework parameter counts.
* ReLU and pooling are separate zero-weight layers.  The ReLU that follows
  a residual addition is fused into the ``add`` layer.
* A residual block's shortcut is a skip edge from the block input to its
  ``add`` layer.  Projection shortcuts store their weights on the ``add``
  layer.  Dense connectivity becomes one skip edge per earlier feature map.
* Inception modules are single layers; only the chain between modules is
  modelled.
"""
from __future__ import annotations

from dataclasses import dataclass, field


def conv_params(cin: int, cout: int, k: int, bias: bool = False, bn: bool = True) -> int:
    return cin * cout * k * k + (cout if bias else 0) + (2 * cout if bn else 0)


def fc_params(cin: int, cout: int) -> int:
    return cin * cout + cout


@dataclass
class NetBuilder:
    name: str
    layers: list[dict] = field(default_factory=list)
    skips: list[tuple[int, int, int]] = field(default_factory=list)

    def add(self, name: str, op: str, params: int, out: int) -> int:
        self.layers.append({"name": name, "op": op, "params": params, "out_activation": out})
        return len(self.layers) - 1

    def skip(self, src: int, dst: int) -> None:
        self.skips.append((src, dst, self.layers[src]["out_activation"]))

    @property
    def last(self) -> int:
        return len(self.layers) - 1

    @property
    def total_params(self) -> int:
        return sum(x["params"] for x in self.layers)


# -- ResNet ------------------------------------------------------------------

def _basic_block(net, tag, cin, cout, hw, stride, projection):
    src = net.last
    hw //= stride
    x = cout * hw * hw
    net.add(f"{tag}.conv1", "conv", conv_params(cin, cout, 3), x)
    net.add(f"{tag}.relu1", "relu", 0, x)
    net.add(f"{tag}.conv2", "conv", conv_params(cout, cout, 3), x)
    proj = conv_params(cin, cout, 1) if projection else 0
    dst = net.add(f"{tag}.add", "add", proj, x)
    net.skip(src, dst)
    return hw


def _bottleneck(net, tag, cin, width, hw, stride, projection):
    src = net.last
    cout = 4 * width
    net.add(f"{tag}.conv1", "conv", conv_params(cin, width, 1), width * hw * hw)
    net.add(f"{tag}.relu1", "relu", 0, width * hw * hw)
    hw //= stride
    net.add(f"{tag}.conv2", "conv", conv_params(width, width, 3), width * hw * hw)
    net.add(f"{tag}.relu2", "relu", 0, width * hw * hw)
    net.add(f"{tag}.conv3", "conv", conv_params(width, cout, 1), cout * hw * hw)
    proj = conv_params(cin, cout, 1) if projection else 0
    dst = net.add(f"{tag}.add", "add", proj, cout * hw * hw)
    net.skip(src, dst)
    return hw


def resnet_imagenet(name: str, depth: int, classes: int = 1000) -> NetBuilder:
    blocks = {18: [2, 2, 2, 2], 34: [3, 4, 6, 3], 50: [3, 4, 6, 3],
              101: [3, 4, 23, 3], 152: [3, 8, 36, 3]}[depth]
    bottleneck = depth >= 50
    net = NetBuilder(name)
    net.add("conv1", "conv", conv_params(3, 64, 7), 64 * 112 * 112)
    net.add("relu1", "relu", 0, 64 * 112 * 112)
    net.add("maxpool", "pool", 0, 64 * 56 * 56)
    hw, cin = 56, 64
    for s, n in enumerate(blocks):
        width = 64 << s
        for b in range(n):
            stride = 2 if s > 0 and b == 0 else 1
            tag = f"layer{s + 1}.{b}"
            if bottleneck:
                hw = _bottleneck(net, tag, cin, width, hw, stride, b == 0)
                cin = 4 * width
            else:
                hw = _basic_block(net, tag, cin, width, hw, stride, b == 0 and s > 0)
                cin = width
    net.add("avgpool", "pool", 0, cin)
    net.add("fc", "fc", fc_params(cin, classes), classes)
    return net


def resnet_cifar_kuangliu(name: str, depth: int, classes: int = 10) -> NetBuilder:
    """ResNet18/34 for 32x32 inputs (3x3 stem, no max-pool)."""
    blocks = {18: [2, 2, 2, 2], 34: [3, 4, 6, 3]}[depth]
    net = NetBuilder(name)
    net.add("conv1", "conv", conv_params(3, 64, 3), 64 * 32 * 32)
    net.add("relu1", "relu", 0, 64 * 32 * 32)
    hw, cin = 32, 64
    for s, n in enumerate(blocks):
        width = 64 << s
        for b in range(n):
            stride = 2 if s > 0 and b == 0 else 1
            hw = _basic_block(net, f"layer{s + 1}.{b}", cin, width, hw, stride, b == 0 and s > 0)
            cin = width
    net.add("avgpool", "pool", 0, cin)
    net.add("fc", "fc", fc_params(cin, classes), classes)
    return net


def resnet110(name: str, classes: int = 10) -> NetBuilder:
    """6n+2 CIFAR ResNet with n=18 and projection shortcuts."""
    net = NetBuilder(name)
    net.add("conv1", "conv", conv_params(3, 16, 3), 16 * 32 * 32)
    net.add("relu1", "relu", 0, 16 * 32 * 32)
    hw, cin = 32, 16
    for s, width in enumerate((16, 32, 64)):
        for b in range(18):
            stride = 2 if s > 0 and b == 0 else 1
            hw = _basic_block(net, f"stage{s + 1}.{b}", cin, width, hw, stride, b == 0 and s > 0)
            cin = width
    net.add("avgpool", "pool", 0, cin)
    net.add("fc", "fc", fc_params(cin, classes), classes)
    return net


# -- VGG ---------------------------------------------------------------------

VGG_CFG = {
    11: [64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"],
    19: [64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
         512, 512, 512, 512, "M", 512, 512, 512, 512, "M"],
}


def vgg_imagenet(name: str, depth: int, classes: int = 1000) -> NetBuilder:
    net = NetBuilder(name)
    cin, hw = 3, 224
    for i, v in enumerate(VGG_CFG[depth]):
        if v == "M":
            hw //= 2
            net.add(f"pool{i}", "pool", 0, cin * hw * hw)
        else:
            net.add(f"conv{i}", "conv", conv_params(cin, v, 3, bias=True, bn=False), v * hw * hw)
            net.add(f"relu{i}", "relu", 0, v * hw * hw)
            cin = v
    net.add("fc1", "fc", fc_params(512 * 7 * 7, 4096), 4096)
    net.add("fc1.relu", "relu", 0, 4096)
    net.add("fc2", "fc", fc_params(4096, 4096), 4096)
    net.add("fc2.relu", "relu", 0, 4096)
    net.add("fc3", "fc", fc_params(4096, classes), classes)
    return net


def vgg_cifar(name: str, depth: int, classes: int = 10) -> NetBuilder:
    net = NetBuilder(name)
    cin, hw = 3, 32
    for i, v in enumerate(VGG_CFG[depth]):
        if v == "M":
            hw //= 2
            net.add(f"pool{i}", "pool", 0, cin * hw * hw)
        else:
            net.add(f"conv{i}", "conv", conv_params(cin, v, 3, bias=True), v * hw * hw)
            net.add(f"relu{i}", "relu", 0, v * hw * hw)
            cin = v
    net.add("fc", "fc", fc_params(512, classes), classes)
    return net


# -- DenseNet ----------------------------------------------------------------

def densenet_imagenet(name: str, blocks=(6, 12, 32, 32), growth: int = 32,
                      bn_size: int = 4, init: int = 64, classes: int = 1000) -> NetBuilder:
    net = NetBuilder(name)
    net.add("conv0", "conv", conv_params(3, init, 7), init * 112 * 112)
    net.add("relu0", "relu", 0, init * 112 * 112)
    net.add("pool0", "pool", 0, init * 56 * 56)
    c, hw = init, 56
    for bi, n in enumerate(blocks):
        producers = [net.last]
        for li in range(n):
            params = 2 * c + c * bn_size * growth + 2 * bn_size * growth + bn_size * growth * growth * 9
            dst = net.add(f"block{bi + 1}.layer{li + 1}", "dense", params, growth * hw * hw)
            for src in producers[:-1]:
                net.skip(src, dst)
            producers.append(dst)
            c += growth
        if bi < len(blocks) - 1:
            hw //= 2
            dst = net.add(f"transition{bi + 1}", "transition", 2 * c + c * (c // 2), (c // 2) * hw * hw)
            for src in producers[:-1]:
                net.skip(src, dst)
            c //= 2
        else:
            dst = net.add("norm5.pool", "pool", 2 * c, c)
            for src in producers[:-1]:
                net.skip(src, dst)
    net.add("fc", "fc", fc_params(c, classes), classes)
    return net


# -- GoogLeNet ---------------------------------------------------------------

INCEPTION_CFG = [
    ("a3", 192, 64, 96, 128, 16, 32, 32),
    ("b3", 256, 128, 128, 192, 32, 96, 64),
    "M",
    ("a4", 480, 192, 96, 208, 16, 48, 64),
    ("b4", 512, 160, 112, 224, 24, 64, 64),
    ("c4", 512, 128, 128, 256, 24, 64, 64),
    ("d4", 512, 112, 144, 288, 32, 64, 64),
    ("e4", 528, 256, 160, 320, 32, 128, 128),
    "M",
    ("a5", 832, 256, 160, 320, 32, 128, 128),
    ("b5", 832, 384, 192, 384, 48, 128, 128),
]


def googlenet_cifar(name: str, classes: int = 10) -> NetBuilder:
    """CIFAR GoogLeNet; the 5x5 branch is two stacked 3x3 convs."""
    net = NetBuilder(name)
    net.add("pre", "conv", conv_params(3, 192, 3, bias=True), 192 * 32 * 32)
    net.add("pre.relu", "relu", 0, 192 * 32 * 32)
    hw, c = 32, 192
    for cfg in INCEPTION_CFG:
        if cfg == "M":
            hw //= 2
            net.add(f"pool{net.last}", "pool", 0, c * hw * hw)
            continue
        tag, cin, n1, n3r, n3, n5r, n5, pp = cfg
        params = (conv_params(cin, n1, 1, True)
                  + conv_params(cin, n3r, 1, True) + conv_params(n3r, n3, 3, True)
                  + conv_params(cin, n5r, 1, True) + conv_params(n5r, n5, 3, True)
                  + conv_params(n5, n5, 3, True) + conv_params(cin, pp, 1, True))
        c = n1 + n3 + n5 + pp
        net.add(f"inception_{tag}", "inception", params, c * hw * hw)
    net.add("avgpool", "pool", 0, c)
    net.add("fc", "fc", fc_params(c, classes), classes)
    return net


# Model catalogue: id -> (architecture label, dataset, builder, declared M params).
CATALOG = {
    "NN1": ("ResNet18", "imagenet", lambda: resnet_imagenet("NN1", 18), 24.76),
    "NN2": ("ResNet34", "imagenet", lambda: resnet_imagenet("NN2", 34), 36.5),
    "NN3": ("ResNet50", "imagenet", lambda: resnet_imagenet("NN3", 50), 25.94),
    "NN4": ("ResNet101", "imagenet", lambda: resnet_imagenet("NN4", 101), 9.42),
    "NN5": ("ResNet110", "imagenet", lambda: resnet110("NN5"), 43.6),
    "NN6": ("ResNet152", "imagenet", lambda: resnet_imagenet("NN6", 152), 54.84),
    "NN7": ("VGG19", "imagenet", lambda: vgg_imagenet("NN7", 19), 93.4),
    "NN8": ("DenseNet169", "imagenet", lambda: densenet_imagenet("NN8"), 54.84),
    "NN9": ("ResNet18", "cifar10", lambda: resnet_cifar_kuangliu("NN9", 18), 11.22),
    "NN10": ("ResNet34", "cifar10", lambda: resnet_cifar_kuangliu("NN10", 34), 21.34),
    "NN11": ("VGG11", "cifar10", lambda: vgg_cifar("NN11", 11), 9.62),
    "NN12": ("VGG19", "cifar10", lambda: vgg_cifar("NN12", 19), 20.42),
    "NN13": ("GoogLeNet", "cifar10", lambda: googlenet_cifar("NN13"), 6.16),
}
