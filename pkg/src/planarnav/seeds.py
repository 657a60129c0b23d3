import hashlib


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from any sequence of printable parts."""
    h = hashlib.blake2b(":".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")
