"""couettelab: numerical laboratory for enhanced dissipation around 2-D Couette flow.

Layers, bottom to top:

- kernel      exact shear-advected heat kernel, derivatives, time conventions
- norms       quadrature Lp norms of kernel slices, lemma-envelope checks, Young bound
- spectral    periodic-box fields, FFT pair, Biot-Savart, shearing-frame machinery
- solver      kernel-quadrature linear propagator and the pseudo-spectral stepper
- diagnostics decay fits, bootstrap audit, GN ratios, threshold scan
- cli         batch entry point (`couettelab <subcommand>`)
"""

from .kernel import (
    KernelParams,
    KernelPoint,
    enhancement_factor,
    eval_green,
    eval_green_grad,
    eval_heat,
    from_rescaled_time,
    to_rescaled_time,
)

__version__ = "0.1.0"
