#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedchain/common.hpp"

namespace fedchain::simnet {

struct Partition {
    std::set<std::string> group_a;
    std::set<std::string> group_b;
    Tick from_tick = 0;
    Tick to_tick = 0;  // inclusive window
};

struct NetworkConfig {
    std::uint64_t seed = 0;
    std::uint32_t base_latency_ticks = 1;
    std::uint32_t jitter_ticks = 0;  // uniform in [0, jitter]
    double drop_probability = 0.0;
    std::vector<Partition> partitions;
};

struct Envelope {
    std::uint64_t msg_id = 0;
    std::string src;
    std::string dst;
    Bytes payload;
    Tick send_tick = 0;
    std::optional<Tick> deliver_tick;  // nullopt when dropped
};

struct Delivery {
    std::uint64_t msg_id = 0;
    std::string src;
    std::string dst;
    Bytes payload;
};

/// Discrete-event message fabric with a global virtual clock. A message's
/// fate (drop, or deliver at send + base + jitter) is fixed at send time
/// from a substream keyed by its msg_id, so unrelated sends never disturb
/// each other. Partition windows force a drop when the computed delivery
/// tick falls inside them.
class Network {
public:
    explicit Network(NetworkConfig config);

    void register_node(const std::string& node_id);
    bool has_node(const std::string& node_id) const;

    std::uint64_t send(const std::string& src, const std::string& dst, Bytes payload);

    /// Advances the clock one tick and returns that tick's deliveries in
    /// msg_id order.
    std::vector<Delivery> step();

    /// Repeated step() up to and including `tick`; deliveries grouped by the
    /// tick they arrived at (empty groups omitted).
    std::vector<std::pair<Tick, std::vector<Delivery>>> run_until(Tick tick);

    Tick now() const { return now_; }

    /// Envelopes scheduled but not yet delivered.
    std::size_t pending_deliveries() const;

    std::uint64_t sent_count() const { return envelopes_.size(); }
    std::uint64_t delivered_count() const { return delivered_; }
    std::uint64_t dropped_count() const { return dropped_; }

    const std::vector<Envelope>& trace() const { return envelopes_; }

    /// One JSON line per envelope fate.
    void write_trace_jsonl(const std::filesystem::path& path) const;

private:
    bool partitioned(const std::string& src, const std::string& dst, Tick deliver_tick) const;

    NetworkConfig config_;
    Tick now_ = 0;
    std::set<std::string> nodes_;
    std::vector<Envelope> envelopes_;
    std::map<Tick, std::vector<std::uint64_t>> schedule_;  // tick -> msg ids, send order
    std::uint64_t delivered_ = 0;
    std::uint64_t dropped_ = 0;
};

}  // namespace fedchain::simnet
