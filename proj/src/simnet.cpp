#include "fedchain/simnet.hpp"

#include <fstream>

#include <json.hpp>

#include "fedchain/rng.hpp"

namespace fedchain::simnet {

Network::Network(NetworkConfig config) : config_(std::move(config)) {
    if (config_.base_latency_ticks < 1) {
        throw Error(Errc::ConfigError, "base_latency_ticks must be at least 1");
    }
    if (config_.drop_probability < 0.0 || config_.drop_probability > 1.0) {
        throw Error(Errc::ConfigError, "drop_probability must lie in [0, 1]");
    }
}

void Network::register_node(const std::string& node_id) { nodes_.insert(node_id); }

bool Network::has_node(const std::string& node_id) const { return nodes_.contains(node_id); }

bool Network::partitioned(const std::string& src, const std::string& dst,
                          Tick deliver_tick) const {
    for (const Partition& p : config_.partitions) {
        if (deliver_tick < p.from_tick || deliver_tick > p.to_tick) continue;
        bool forward = p.group_a.contains(src) && p.group_b.contains(dst);
        bool backward = p.group_b.contains(src) && p.group_a.contains(dst);
        if (forward || backward) return true;
    }
    return false;
}

std::uint64_t Network::send(const std::string& src, const std::string& dst, Bytes payload) {
    if (!nodes_.contains(src)) {
        throw Error(Errc::UnknownNode, "unknown source node: " + src);
    }
    if (!nodes_.contains(dst)) {
        throw Error(Errc::UnknownNode, "unknown destination node: " + dst);
    }
    Envelope env;
    env.msg_id = envelopes_.size();
    env.src = src;
    env.dst = dst;
    env.payload = std::move(payload);
    env.send_tick = now_;

    auto rng = DeterministicRng::keyed(config_.seed, env.msg_id);
    double drop_draw = rng.next_unit();
    std::uint64_t jitter =
        config_.jitter_ticks > 0 ? rng.uniform_int(0, config_.jitter_ticks) : 0;
    if (drop_draw < config_.drop_probability) {
        env.deliver_tick = std::nullopt;
        ++dropped_;
    } else {
        Tick at = now_ + config_.base_latency_ticks + jitter;
        if (partitioned(src, dst, at)) {
            env.deliver_tick = std::nullopt;
            ++dropped_;
        } else {
            env.deliver_tick = at;
            schedule_[at].push_back(env.msg_id);
        }
    }
    envelopes_.push_back(std::move(env));
    return envelopes_.back().msg_id;
}

std::size_t Network::pending_deliveries() const {
    std::size_t total = 0;
    for (const auto& [tick, ids] : schedule_) {
        total += ids.size();
    }
    return total;
}

std::vector<Delivery> Network::step() {
    ++now_;
    std::vector<Delivery> out;
    auto it = schedule_.find(now_);
    if (it == schedule_.end()) {
        return out;
    }
    // msg ids were appended in send order, which is ascending id order
    for (std::uint64_t id : it->second) {
        const Envelope& env = envelopes_[id];
        out.push_back({env.msg_id, env.src, env.dst, env.payload});
        ++delivered_;
    }
    schedule_.erase(it);
    return out;
}

std::vector<std::pair<Tick, std::vector<Delivery>>> Network::run_until(Tick tick) {
    if (tick < now_) {
        throw Error(Errc::TimeTravel, "run_until target " + std::to_string(tick) +
                                          " is before now " + std::to_string(now_));
    }
    std::vector<std::pair<Tick, std::vector<Delivery>>> out;
    while (now_ < tick) {
        auto deliveries = step();
        if (!deliveries.empty()) {
            out.emplace_back(now_, std::move(deliveries));
        }
    }
    return out;
}

void Network::write_trace_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::IoError, "cannot open trace file: " + path.string());
    }
    for (const Envelope& env : envelopes_) {
        nlohmann::json j;
        j["msg_id"] = env.msg_id;
        j["src"] = env.src;
        j["dst"] = env.dst;
        j["send_tick"] = env.send_tick;
        if (env.deliver_tick) {
            j["deliver_tick"] = *env.deliver_tick;
        } else {
            j["deliver_tick"] = nullptr;
        }
        out << j.dump() << '\n';
    }
}

}  // namespace fedchain::simnet
