#!/usr/bin/env python3
"""Layer-by-layer parameter count of the restoration network."""

import argparse


def conv(cin, cout, k):
    return cout * cin * k * k + cout


def count(depth, channels, noise_channels, output_channels=3):
    layers = []
    inputs = [noise_channels] + channels[:-1]
    for i in range(depth):
        layers.append((f"enc{i + 1}.down", conv(inputs[i], channels[i], 3)))
        layers.append((f"enc{i + 1}.conv", conv(channels[i], channels[i], 3)))
    below = channels[-1]
    for i in reversed(range(depth)):
        out = channels[i - 1] if i > 0 else channels[0]
        layers.append((f"dec{i + 1}.conv1", conv(below + inputs[i], out, 3)))
        layers.append((f"dec{i + 1}.conv2", conv(out, out, 3)))
        below = out
    layers.append(("out", conv(below, output_channels, 1)))
    return layers


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--depth", type=int, default=3)
    parser.add_argument("--channels", type=int, nargs="+", default=[16, 32, 64])
    parser.add_argument("--noise-channels", type=int, default=32)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()
    if len(args.channels) != args.depth:
        parser.error("need one channel count per level")
    layers = count(args.depth, args.channels, args.noise_channels)
    if args.verbose:
        for name, n in layers:
            print(f"{name:12s} {n}")
    print(sum(n for _, n in layers))


if __name__ == "__main__":
    main()
