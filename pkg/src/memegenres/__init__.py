"""memegenres: discover families of remixed images in large corpora.

Pipeline: local features -> quantized inverted-file index -> sampled
object-to-object affinity graph -> spectral clustering, with perceptual-hash
and global-embedding baselines and an impostor-host evaluation harness.
"""

__version__ = "0.1.0"
