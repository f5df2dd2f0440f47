#include "fedchain/keys.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

namespace fedchain::keys {

namespace {
void ensure_sodium() {
    static std::once_flag flag;
    std::call_once(flag, [] {
        if (sodium_init() < 0) {
            throw Error(Errc::RunFailure, "libsodium initialization failed");
        }
    });
}
}  // namespace

KeyPair generate_keypair(const Seed& seed) {
    ensure_sodium();
    KeyPair pair;
    crypto_sign_seed_keypair(pair.public_key.data(), pair.secret_key.data(), seed.data());
    return pair;
}

Signature sign(const Bytes& message, const SecretKey& secret) {
    ensure_sodium();
    Signature sig{};
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret.data());
    return sig;
}

bool verify(const Bytes& message, const Signature& signature, const PublicKey& public_key) {
    ensure_sodium();
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                       public_key.data()) == 0;
}

bool verify(const Bytes& message, const Bytes& signature, const PublicKey& public_key) {
    if (signature.size() != crypto_sign_BYTES) return false;
    Signature sig{};
    std::memcpy(sig.data(), signature.data(), sig.size());
    return verify(message, sig, public_key);
}

Hash32 sha256(const std::uint8_t* data, std::size_t len) {
    ensure_sodium();
    Hash32 digest{};
    crypto_hash_sha256(digest.data(), data, len);
    return digest;
}

Hash32 sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

Seed derive_seed(std::uint64_t root_seed, std::string_view context) {
    Bytes material;
    material.reserve(8 + context.size());
    for (int i = 0; i < 8; ++i) {
        material.push_back(static_cast<std::uint8_t>((root_seed >> (8 * i)) & 0xff));
    }
    material.insert(material.end(), context.begin(), context.end());
    Hash32 digest = sha256(material);
    Seed seed{};
    std::memcpy(seed.data(), digest.data(), seed.size());
    return seed;
}

std::uint64_t derive_u64(std::uint64_t root_seed, std::string_view context) {
    Seed seed = derive_seed(root_seed, context);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | seed[static_cast<std::size_t>(i)];
    }
    return v;
}

std::string_view role_name(Role role) {
    switch (role) {
        case Role::Authority: return "authority";
        case Role::Miner: return "miner";
        case Role::Device: return "device";
        case Role::Coordinator: return "coordinator";
    }
    return "device";
}

Role role_from_name(std::string_view name) {
    if (name == "authority") return Role::Authority;
    if (name == "miner") return Role::Miner;
    if (name == "device") return Role::Device;
    if (name == "coordinator") return Role::Coordinator;
    throw Error(Errc::ConfigError, "unknown participant role: " + std::string(name));
}

void KeyServer::register_participant(ParticipantRecord record) {
    if (record.participant_id.empty()) {
        throw Error(Errc::ConfigError, "participant id is empty");
    }
    if (index_.contains(record.participant_id)) {
        throw Error(Errc::DuplicateParticipant,
                    "participant already registered: " + record.participant_id);
    }
    index_[record.participant_id] = records_.size();
    records_.push_back(std::move(record));
}

const PublicKey& KeyServer::lookup(const std::string& participant_id) const {
    auto it = index_.find(participant_id);
    if (it == index_.end()) {
        throw Error(Errc::UnknownParticipant, "unknown participant: " + participant_id);
    }
    return records_[it->second].public_key;
}

bool KeyServer::has(const std::string& participant_id) const {
    return index_.contains(participant_id);
}

}  // namespace fedchain::keys
