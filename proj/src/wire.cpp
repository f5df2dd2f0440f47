#include "fedchain/wire.hpp"

#include <json.hpp>

namespace fedchain::wire {

using nlohmann::json;

MessageKind kind_of(const Message& message) {
    return static_cast<MessageKind>(message.index());
}

std::string_view message_kind_name(MessageKind kind) {
    switch (kind) {
        case MessageKind::RoundAnnounce: return "round_announce";
        case MessageKind::ModelUpdate: return "model_update";
        case MessageKind::StreamNotify: return "stream_notify";
        case MessageKind::SessionNotify: return "session_notify";
    }
    return "unknown";
}

Bytes encode(const Message& message) {
    json j;
    j["kind"] = std::string(message_kind_name(kind_of(message)));
    std::visit(
        [&j](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, RoundAnnounceMsg>) {
                j["round_id"] = m.round_id;
                j["global_version"] = m.global_version;
                j["param_hash"] = m.param_hash_hex;
            } else if constexpr (std::is_same_v<T, ModelUpdateMsg>) {
                j["miner_id"] = m.miner_id;
                j["round_id"] = m.round_id;
                j["base_version"] = m.base_version;
                j["param_hash"] = m.param_hash_hex;
                j["sample_count"] = m.sample_count;
                j["local_loss"] = m.local_loss;
                j["signature"] = m.signature_hex;
            } else if constexpr (std::is_same_v<T, StreamNotifyMsg>) {
                j["stream_id"] = m.stream_id;
            } else if constexpr (std::is_same_v<T, SessionNotifyMsg>) {
                j["stream_id"] = m.stream_id;
                j["session_id"] = m.session_id;
            }
        },
        message);
    return bytes_of(j.dump());
}

Message decode(const Bytes& bytes) {
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw Error(Errc::RunFailure, std::string("undecodable wire message: ") + e.what());
    }
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "round_announce") {
        RoundAnnounceMsg m;
        m.round_id = j.at("round_id").get<std::uint64_t>();
        m.global_version = j.at("global_version").get<std::uint64_t>();
        m.param_hash_hex = j.at("param_hash").get<std::string>();
        return m;
    }
    if (kind == "model_update") {
        ModelUpdateMsg m;
        m.miner_id = j.at("miner_id").get<std::string>();
        m.round_id = j.at("round_id").get<std::uint64_t>();
        m.base_version = j.at("base_version").get<std::uint64_t>();
        m.param_hash_hex = j.at("param_hash").get<std::string>();
        m.sample_count = j.at("sample_count").get<std::uint64_t>();
        m.local_loss = j.at("local_loss").get<double>();
        m.signature_hex = j.at("signature").get<std::string>();
        return m;
    }
    if (kind == "stream_notify") {
        StreamNotifyMsg m;
        m.stream_id = j.at("stream_id").get<std::uint64_t>();
        return m;
    }
    if (kind == "session_notify") {
        SessionNotifyMsg m;
        m.stream_id = j.at("stream_id").get<std::uint64_t>();
        m.session_id = j.at("session_id").get<std::uint64_t>();
        return m;
    }
    throw Error(Errc::RunFailure, "unknown wire message kind: " + kind);
}

}  // namespace fedchain::wire
