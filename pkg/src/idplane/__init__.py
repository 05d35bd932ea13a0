"""idplane: an executable identity plane for permissioned-network interop.

A replicated identity registry (IIN) with trust anchors issues decentralized
identifiers and membership credentials to organizations; per-organization
agents discover, validate, and commit each other's membership and certificate
information through consensus on their local ledgers, enabling cross-network
proof-by-attestation. Everything runs on a deterministic simulated message
bus, so whole-protocol scenarios replay bit-identically from a seed.
"""

__version__ = "0.1.0"
