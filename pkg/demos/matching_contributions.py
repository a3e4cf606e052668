"""How much each ingredient moves matches closer to the true location.

Every image is decomposed twice with different SLIC seeds; a superpixel of
one decomposition should match the superpixel of the other that sits at
the same place.  Lower mean barycenter displacement is better.

    python demos/matching_contributions.py --images astronaut,chelsea
"""
import argparse

from dspm.experiments import (SUITE_IMAGES, alpha_sweep, contribution_configs, double_decompositions,
                              suite_displacement)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--images", default=",".join(SUITE_IMAGES))
    p.add_argument("--radius", type=float, default=50.0)
    p.add_argument("--cache-dir", default=None)
    a = p.parse_args()

    suite = double_decompositions(a.images.split(","))
    print(f"radius {a.radius:g}, images: {a.images}")
    for name, fc, cfg in contribution_configs(a.radius):
        mean, per = suite_displacement(suite, fc, cfg, cache_dir=a.cache_dir)
        print(f"  {name:<34s} {mean:6.3f} px   per image " + " ".join(f"{v:.2f}" for v in per))

    print("alpha sweep (beta=1, symmetric region term)")
    for alpha, v in alpha_sweep(suite, alphas=(0.0, 0.25, 0.5, 0.75, 1.0), radius=a.radius, cache_dir=a.cache_dir):
        print(f"  alpha={alpha:<4g} {v:6.3f} px")


if __name__ == "__main__":
    main()
