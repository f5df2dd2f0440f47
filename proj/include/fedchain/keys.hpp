#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedchain/common.hpp"

namespace fedchain::keys {

using PublicKey = std::array<std::uint8_t, 32>;
using SecretKey = std::array<std::uint8_t, 64>;
using Seed = std::array<std::uint8_t, 32>;

struct KeyPair {
    PublicKey public_key{};
    SecretKey secret_key{};
};

/// Ed25519 pair derived deterministically from a 32-byte seed.
KeyPair generate_keypair(const Seed& seed);

/// Detached Ed25519 signature (64 bytes, deterministic).
Signature sign(const Bytes& message, const SecretKey& secret);

bool verify(const Bytes& message, const Signature& signature, const PublicKey& public_key);

/// Length-tolerant variant: anything that is not exactly 64 bytes verifies
/// false instead of crashing.
bool verify(const Bytes& message, const Bytes& signature, const PublicKey& public_key);

Hash32 sha256(const std::uint8_t* data, std::size_t len);
Hash32 sha256(const Bytes& data);

/// 32-byte key seed derived from a root seed and a context label.
Seed derive_seed(std::uint64_t root_seed, std::string_view context);

/// 64-bit subseed for the same (root, context) scheme.
std::uint64_t derive_u64(std::uint64_t root_seed, std::string_view context);

enum class Role { Authority, Miner, Device, Coordinator };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

struct ParticipantRecord {
    std::string participant_id;
    Role role = Role::Device;
    PublicKey public_key{};
    Tick registered_at = 0;
};

/// Append-only participant registry; one public key per id.
class KeyServer {
public:
    void register_participant(ParticipantRecord record);
    const PublicKey& lookup(const std::string& participant_id) const;
    bool has(const std::string& participant_id) const;
    const std::vector<ParticipantRecord>& records() const { return records_; }

private:
    std::vector<ParticipantRecord> records_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace fedchain::keys
