"""streamvsr: streaming autoregressive one-step-diffusion video super-resolution.

A self-contained, CPU-only reference implementation: causal 3D VAE, chunked
causal diffusion transformer with a rolling KV-cache and joint visual
guidance, crop-aligned patch supervision, cross-chunk distribution matching,
a constant-memory streaming inference engine, and an evaluation/ablation
harness — all on a small numpy-based autodiff kernel.
"""

__version__ = "0.1.0"
