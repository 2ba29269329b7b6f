"""At-rest frame ciphers for the audit log.

A cipher is a byte-transform with authenticated integrity applied to
whole frame bodies. The null cipher ships for testing and for
deployments that push at-rest protection down to the volume layer.
"""

import os

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import ConfigError, CorruptLog

NONCE_LEN = 12
KEY_LEN = 32


class NullCipher:
    name = "none"

    def encrypt(self, data: bytes) -> bytes:
        return data

    def decrypt(self, data: bytes) -> bytes:
        return data


class AesGcmCipher:
    """AES-256-GCM per frame; output is nonce || ciphertext || tag."""

    name = "aes256gcm"

    def __init__(self, key: bytes):
        if len(key) != KEY_LEN:
            raise ConfigError(f"cipher key must be {KEY_LEN} bytes, got {len(key)}")
        self._aead = AESGCM(key)

    def encrypt(self, data: bytes) -> bytes:
        nonce = os.urandom(NONCE_LEN)
        return nonce + self._aead.encrypt(nonce, data, None)

    def decrypt(self, data: bytes) -> bytes:
        if len(data) < NONCE_LEN + 16:
            raise CorruptLog("ciphered frame too short")
        try:
            return self._aead.decrypt(data[:NONCE_LEN], data[NONCE_LEN:], None)
        except InvalidTag as exc:
            raise CorruptLog("cipher authentication failed") from exc


def load_key_file(path: str) -> bytes:
    with open(path, "rb") as f:
        key = f.read()
    if len(key) != KEY_LEN:
        raise ConfigError(f"key file {path} must hold exactly {KEY_LEN} raw bytes")
    return key


def make_cipher(name: str, key_file: str | None = None):
    """None for the null cipher so hot paths can skip the call entirely."""
    if name in ("", "none", None):
        return None
    if name == "aes256gcm":
        if not key_file:
            raise ConfigError("cipher=aes256gcm requires key_file")
        return AesGcmCipher(load_key_file(key_file))
    raise ConfigError(f"unknown cipher: {name}")
