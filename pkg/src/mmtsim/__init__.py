"""
Multi-mode transmission for the MIMO broadcast channel with delayed,
quantized CSI feedback.

Submodules
----------
numerics     special functions, integrals and chi-square-sum densities
channel      Gauss-Markov fading and random vector quantization
precoding    eigen-beamforming, zero-forcing and MMSE precoders
rates        closed-form per-mode achievable rates
montecarlo   deterministic Monte Carlo rate estimation
mode_policy  mode selection and operating regions
scheduler    round-robin multi-mode scheduling and the US-ZF baseline
cli          configuration-driven experiment runner
"""

__version__ = "0.1.0"
