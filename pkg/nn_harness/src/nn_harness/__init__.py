"""Two-stage image-to-CAD-sequence trainer.

Stage 1 learns a latent space of quantized CAD feature matrices with an
attention-based autoencoder (plain or variational); stage 2 regresses
that latent space from rendered images with a convolutional encoder.
The harness consumes datasets produced by the cadseq toolkit purely
through files and hands predictions back the same way.
"""

__version__ = "0.1.0"
