#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedchain/keys.hpp"
#include "fedchain/ledger.hpp"
#include "fedchain/ml.hpp"
#include "fedchain/simnet.hpp"
#include "fedchain/traffic.hpp"

namespace fedchain::federation {

/// A miner's signed local model submitted for aggregation. The signature
/// covers the canonical update bytes, which bind the weights through
/// their param_hash.
struct ModelUpdate {
    std::string miner_id;
    std::uint64_t base_version = 0;
    ml::ModelParameters params;
    std::uint64_t sample_count = 0;
    double local_loss = 0.0;
    Signature signature{};
};

Bytes update_signing_bytes(const ModelUpdate& update);
bool verify_update(const ModelUpdate& update, const keys::KeyServer& key_server);

/// On-chain rendering of an update: weights referenced by param_hash, the
/// miner's signature embedded so the record stays auditable offline.
ledger::ModelUpdatePayload to_payload(const ModelUpdate& update);

enum class SelectionPolicy { All, FreshOnly };

std::string_view selection_policy_name(SelectionPolicy policy);
SelectionPolicy selection_policy_from_name(std::string_view name);

struct RoundConfig {
    std::uint64_t round_id = 0;  // assigned by the coordinator at announce
    std::uint64_t min_participants = 1;
    Tick deadline_ticks = 1;
    SelectionPolicy selection_policy = SelectionPolicy::FreshOnly;
    double quantile_for_threshold = 0.95;
};

struct GlobalModel {
    ml::ModelParameters params;
    std::uint64_t round_id = 0;
    std::vector<std::string> contributor_ids;
    Hash32 publish_tx{};
};

/// Device-resident training agent. The shard is fixed at construction and
/// leaves the miner only as model weights.
class Miner {
public:
    Miner(std::string miner_id, keys::KeyPair keypair,
          std::vector<traffic::FeatureVector> shard);

    /// Local training from the downloaded global model; deterministic in
    /// (global, shard, config). Throws EmptyDataset when the shard is empty.
    ModelUpdate train(const GlobalModel& global, const ml::TrainingConfig& config) const;

    const std::string& id() const { return id_; }
    std::size_t shard_size() const { return shard_.size(); }

private:
    std::string id_;
    keys::KeyPair keypair_;
    std::vector<traffic::FeatureVector> shard_;
};

struct TimedUpdate {
    ModelUpdate update;
    Tick arrival_tick = 0;
};

/// Drops invalid signatures, stale bases (under FreshOnly) and late
/// arrivals, then returns the survivors sorted by miner_id. Throws
/// InsufficientParticipation when fewer than min_participants remain.
std::vector<ModelUpdate> select_updates(std::vector<TimedUpdate> updates,
                                        const RoundConfig& config,
                                        const keys::KeyServer& key_server,
                                        std::uint64_t current_version, Tick announce_tick);

/// Sample-count-weighted average of the accepted parameter vectors,
/// accumulated component-wise in miner_id order. Version advances past the
/// shared base.
ml::ModelParameters aggregate(const std::vector<ModelUpdate>& accepted);

struct RoundRecord {
    std::uint64_t round_id = 0;
    bool voided = false;
    std::vector<std::string> contributors;
    std::uint64_t published_version = 0;
    double validation_loss = 0.0;
    Tick announce_tick = 0;
    std::uint64_t updates_received = 0;
};

/// Round orchestration plus on-chain publication. Announce/publish
/// transactions go to the instance validating the "model" asset; that
/// authority's key seals them on demand.
class Coordinator {
public:
    Coordinator(std::string coordinator_id, keys::KeyPair keypair,
                ledger::LedgerInstance& model_ledger, const keys::KeyPair& model_authority_keys,
                ml::ModelStore& model_store, const keys::KeyServer& key_server,
                std::vector<traffic::FeatureVector> validation_set);

    /// Publishes the given parameters as version 0 so "latest" resolves
    /// before the first round.
    GlobalModel bootstrap(const ml::ModelParameters& initial, Tick now);

    ledger::Transaction announce_round(RoundConfig config, Tick now);
    void receive_update(ModelUpdate update, Tick arrival_tick);

    GlobalModel publish_model(const ml::ModelParameters& params,
                              std::vector<std::string> contributors, Tick now);

    /// Select + aggregate + publish, or a voided round on
    /// InsufficientParticipation; either way the round closes.
    RoundRecord close_round(Tick now);

    const GlobalModel& global() const;
    const std::string& id() const { return id_; }
    bool round_open() const { return open_round_.has_value(); }
    double validation_loss() const;
    const std::vector<RoundRecord>& history() const { return history_; }
    const std::vector<traffic::FeatureVector>& validation_set() const { return validation_set_; }

private:
    std::string id_;
    keys::KeyPair keypair_;
    ledger::LedgerInstance& model_ledger_;
    keys::KeyPair model_authority_keys_;
    ml::ModelStore& model_store_;
    const keys::KeyServer& key_server_;
    std::vector<traffic::FeatureVector> validation_set_;
    std::optional<GlobalModel> global_;
    std::uint64_t next_round_id_ = 1;

    struct OpenRound {
        RoundConfig config;
        Tick announce_tick = 0;
        std::vector<TimedUpdate> updates;
    };
    std::optional<OpenRound> open_round_;
    std::vector<RoundRecord> history_;
};

struct FederatedRunResult {
    std::vector<RoundRecord> rounds;
    std::vector<GlobalModel> published;
};

/// Drives announce -> train -> select -> aggregate -> publish over the
/// simulated network for each configured round. Announcements and updates
/// ride simnet and may drop or arrive late; model weights travel by hash
/// through the store.
FederatedRunResult run_federated_training(Coordinator& coordinator, std::vector<Miner>& miners,
                                          simnet::Network& net,
                                          const std::vector<RoundConfig>& round_configs,
                                          const std::vector<ml::TrainingConfig>& train_configs,
                                          ml::ModelStore& model_store);

}  // namespace fedchain::federation
