"""Single-image super-resolution with learnable separable kernels.

Subpackages:

* tensor      -- NCHW float32 tensors and seeded randomness
* conv        -- direct 2-D / 1-D convolution with exact backward passes
* kernels     -- merge / SVD-factorize rank-1 kernel algebra
* complexity  -- exact parameter and FLOP accounting
* imaging     -- PNG I/O, bicubic resampling, PSNR/SSIM
* models      -- network construction, optimizers, training
* checkpoint  -- bit-exact LSKC checkpoint container
* cli         -- the `lsksr` command-line tool
"""

__version__ = "0.1.0"
