"""twinbench: quantitative evaluation of 3D reconstructions.

Generates camera rigs around a ground-truth mesh, renders synthetic frames
with an internal rasterizer, aligns reconstructed meshes via pose-based
similarity recovery plus ICP, and scores reconstructions with a
background-masked weighted SSIM.
"""

__version__ = "0.1.0"
