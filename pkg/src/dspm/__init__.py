"""Superpixel-neighborhood matching with dual superpatches."""
