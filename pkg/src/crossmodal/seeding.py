"""Stable seed derivation for per-sample / per-batch random streams."""

import hashlib


def derive_seed(*parts) -> int:
    """Mix arbitrary labels into a 64-bit seed, stable across runs and platforms.

    Python's builtin ``hash`` is salted per process, so seeds fed to
    ``numpy.random.default_rng`` are derived from a keyed blake2b digest of
    the stringified parts instead.
    """
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
