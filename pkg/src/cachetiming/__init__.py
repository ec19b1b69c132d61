"""Remote cache-timing attack on AES-128 and constant-time padding countermeasures."""

from .aes import encrypt_block, encrypt_payload, expand_key, scrambled_zeros
from .attack import CandidateKeySpace, TimingProfile, brute_force, build_profile, correlate, keyspace_size, verify_key
from .cache import LAB_CACHE, CacheConfig, simulate_encryption
from .countermeasure import PaddingPolicy, apply_policy, pad_fixed, pad_running_average

__version__ = "0.1.0"
