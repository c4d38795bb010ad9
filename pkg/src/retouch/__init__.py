"""retouch: learned photo enhancement via a differentiable-free filter pipeline.

An actor-critic agent picks discrete settings for twelve classic retouching
filters; a Wasserstein critic trained on unpaired "good" photos supplies the
reward.  Because the filters are resolution-independent, a policy trained on
64x64 thumbnails applies unchanged to full-size images, and every edit can be
exported as a human-readable list of filter settings.
"""

__version__ = "0.1.0"
