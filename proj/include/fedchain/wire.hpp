#pragma once

#include <string>
#include <variant>

#include "fedchain/common.hpp"

namespace fedchain::wire {

/// The complete message schema carried over the simulated network. Model
/// parameters travel by param_hash through the content-addressed model
/// store and streams by stream_id through the scenario's stream table, so
/// no message type embeds raw traffic records or weight vectors.

struct RoundAnnounceMsg {
    std::uint64_t round_id = 0;
    std::uint64_t global_version = 0;
    std::string param_hash_hex;
};

struct ModelUpdateMsg {
    std::string miner_id;
    std::uint64_t round_id = 0;
    std::uint64_t base_version = 0;
    std::string param_hash_hex;
    std::uint64_t sample_count = 0;
    double local_loss = 0.0;
    std::string signature_hex;
};

struct StreamNotifyMsg {
    std::uint64_t stream_id = 0;
};

struct SessionNotifyMsg {
    std::uint64_t stream_id = 0;
    std::uint64_t session_id = 0;
};

using Message = std::variant<RoundAnnounceMsg, ModelUpdateMsg, StreamNotifyMsg, SessionNotifyMsg>;

enum class MessageKind { RoundAnnounce, ModelUpdate, StreamNotify, SessionNotify };

MessageKind kind_of(const Message& message);
std::string_view message_kind_name(MessageKind kind);

Bytes encode(const Message& message);
Message decode(const Bytes& bytes);

}  // namespace fedchain::wire
