#include "fedchain/federation.hpp"

#include <algorithm>

#include <json.hpp>

#include "fedchain/wire.hpp"

namespace fedchain::federation {

using nlohmann::json;

Bytes update_signing_bytes(const ModelUpdate& update) {
    json j;
    j["miner_id"] = update.miner_id;
    j["base_version"] = update.base_version;
    j["param_hash"] = to_hex(update.params.param_hash);
    j["sample_count"] = update.sample_count;
    j["local_loss"] = update.local_loss;
    return bytes_of(j.dump());
}

bool verify_update(const ModelUpdate& update, const keys::KeyServer& key_server) {
    if (!key_server.has(update.miner_id)) return false;
    if (update.params.param_hash != ml::param_hash_of(update.params)) return false;
    return keys::verify(update_signing_bytes(update), update.signature,
                        key_server.lookup(update.miner_id));
}

ledger::ModelUpdatePayload to_payload(const ModelUpdate& update) {
    ledger::ModelUpdatePayload payload;
    payload.miner_id = update.miner_id;
    payload.base_version = update.base_version;
    payload.param_hash_hex = to_hex(update.params.param_hash);
    payload.sample_count = update.sample_count;
    payload.local_loss = update.local_loss;
    payload.miner_signature_hex = to_hex(update.signature);
    return payload;
}

std::string_view selection_policy_name(SelectionPolicy policy) {
    return policy == SelectionPolicy::All ? "all" : "fresh_only";
}

SelectionPolicy selection_policy_from_name(std::string_view name) {
    if (name == "all") return SelectionPolicy::All;
    if (name == "fresh_only") return SelectionPolicy::FreshOnly;
    throw Error(Errc::ConfigError, "unknown selection policy: " + std::string(name));
}

Miner::Miner(std::string miner_id, keys::KeyPair keypair,
             std::vector<traffic::FeatureVector> shard)
    : id_(std::move(miner_id)), keypair_(keypair), shard_(std::move(shard)) {}

ModelUpdate Miner::train(const GlobalModel& global, const ml::TrainingConfig& config) const {
    if (shard_.empty()) {
        throw Error(Errc::EmptyDataset, "miner " + id_ + " has no local data");
    }
    ml::TrainResult result = ml::train_local(global.params, shard_, config);
    ModelUpdate update;
    update.miner_id = id_;
    update.base_version = global.params.version;
    update.params = std::move(result.params);
    update.sample_count = result.sample_count;
    update.local_loss = result.final_loss;
    update.signature = keys::sign(update_signing_bytes(update), keypair_.secret_key);
    return update;
}

std::vector<ModelUpdate> select_updates(std::vector<TimedUpdate> updates,
                                        const RoundConfig& config,
                                        const keys::KeyServer& key_server,
                                        std::uint64_t current_version, Tick announce_tick) {
    std::vector<ModelUpdate> accepted;
    for (auto& timed : updates) {
        if (timed.arrival_tick > announce_tick + config.deadline_ticks) continue;
        if (config.selection_policy == SelectionPolicy::FreshOnly &&
            timed.update.base_version != current_version) {
            continue;
        }
        if (timed.update.sample_count < 1) continue;
        if (timed.update.params.version != timed.update.base_version + 1) continue;
        if (!verify_update(timed.update, key_server)) continue;
        accepted.push_back(std::move(timed.update));
    }
    std::sort(accepted.begin(), accepted.end(),
              [](const ModelUpdate& a, const ModelUpdate& b) { return a.miner_id < b.miner_id; });
    if (accepted.size() < config.min_participants) {
        throw Error(Errc::InsufficientParticipation,
                    std::to_string(accepted.size()) + " valid updates, need " +
                        std::to_string(config.min_participants));
    }
    return accepted;
}

ml::ModelParameters aggregate(const std::vector<ModelUpdate>& accepted) {
    if (accepted.empty()) {
        throw Error(Errc::EmptyDataset, "nothing to aggregate");
    }
    std::vector<const ModelUpdate*> ordered;
    ordered.reserve(accepted.size());
    for (const auto& u : accepted) ordered.push_back(&u);
    std::sort(ordered.begin(), ordered.end(), [](const ModelUpdate* a, const ModelUpdate* b) {
        return a->miner_id < b->miner_id;
    });

    const ModelUpdate& first = *ordered.front();
    std::uint64_t total = 0;
    for (const ModelUpdate* u : ordered) {
        if (u->params.layer_shapes != first.params.layer_shapes) {
            throw Error(Errc::IncompatibleTopology, "updates disagree on layer shapes");
        }
        if (u->base_version != first.base_version) {
            throw Error(Errc::MixedBaseVersion, "updates trained from different base versions");
        }
        total += u->sample_count;
    }

    ml::ModelParameters out;
    out.layer_shapes = first.params.layer_shapes;
    out.weights.assign(first.params.weights.size(), 0.0);
    for (const ModelUpdate* u : ordered) {
        double coefficient = static_cast<double>(u->sample_count) / static_cast<double>(total);
        for (std::size_t k = 0; k < out.weights.size(); ++k) {
            out.weights[k] += coefficient * u->params.weights[k];
        }
    }
    out.version = first.base_version + 1;
    out.param_hash = ml::param_hash_of(out);
    return out;
}

Coordinator::Coordinator(std::string coordinator_id, keys::KeyPair keypair,
                         ledger::LedgerInstance& model_ledger,
                         const keys::KeyPair& model_authority_keys, ml::ModelStore& model_store,
                         const keys::KeyServer& key_server,
                         std::vector<traffic::FeatureVector> validation_set)
    : id_(std::move(coordinator_id)),
      keypair_(keypair),
      model_ledger_(model_ledger),
      model_authority_keys_(model_authority_keys),
      model_store_(model_store),
      key_server_(key_server),
      validation_set_(std::move(validation_set)) {}

const GlobalModel& Coordinator::global() const {
    if (!global_) {
        throw Error(Errc::ModelUnavailable, "no global model published yet");
    }
    return *global_;
}

GlobalModel Coordinator::bootstrap(const ml::ModelParameters& initial, Tick now) {
    if (global_) {
        throw Error(Errc::RunFailure, "coordinator already bootstrapped");
    }
    return publish_model(initial, {}, now);
}

ledger::Transaction Coordinator::announce_round(RoundConfig config, Tick now) {
    if (open_round_) {
        throw Error(Errc::RoundInProgress,
                    "round " + std::to_string(open_round_->config.round_id) + " still open");
    }
    config.round_id = next_round_id_++;
    ledger::RoundAnnouncePayload payload;
    payload.round_id = config.round_id;
    payload.base_version = global().params.version;
    payload.min_participants = config.min_participants;
    payload.deadline_ticks = config.deadline_ticks;
    payload.selection_policy = std::string(selection_policy_name(config.selection_policy));
    payload.threshold_quantile = config.quantile_for_threshold;
    auto tx = ledger::make_transaction("model", payload, id_, keypair_);
    auto result = model_ledger_.submit(tx);
    if (!result.accepted()) {
        throw Error(Errc::RunFailure, "round announcement rejected: " +
                                          std::string(ledger::reject_reason_name(result.reason)));
    }
    model_ledger_.seal_block(model_authority_keys_, now);
    open_round_ = OpenRound{config, now, {}};
    return tx;
}

void Coordinator::receive_update(ModelUpdate update, Tick arrival_tick) {
    if (!open_round_) {
        return;  // late or stray update; nothing to attach it to
    }
    open_round_->updates.push_back({std::move(update), arrival_tick});
}

GlobalModel Coordinator::publish_model(const ml::ModelParameters& params,
                                       std::vector<std::string> contributors, Tick now) {
    Bytes bytes = ml::serialize(params);
    Hash32 hash = model_store_.put(std::move(bytes));

    ledger::ModelPublishPayload payload;
    payload.version = params.version;
    payload.param_hash_hex = to_hex(hash);
    auto tx = ledger::make_transaction("model", payload, id_, keypair_);
    auto result = model_ledger_.submit(tx);
    if (!result.accepted()) {
        throw Error(Errc::RunFailure, "model publication rejected: " +
                                          std::string(ledger::reject_reason_name(result.reason)));
    }
    model_ledger_.seal_block(model_authority_keys_, now);

    GlobalModel next;
    next.params = params;
    next.round_id = open_round_ ? open_round_->config.round_id : 0;
    next.contributor_ids = std::move(contributors);
    next.publish_tx = tx.tx_id;
    global_ = next;
    return *global_;
}

double Coordinator::validation_loss() const {
    if (validation_set_.empty()) {
        return 0.0;
    }
    return ml::loss(global().params, validation_set_);
}

RoundRecord Coordinator::close_round(Tick now) {
    if (!open_round_) {
        throw Error(Errc::RunFailure, "no round to close");
    }
    OpenRound round = std::move(*open_round_);

    RoundRecord record;
    record.round_id = round.config.round_id;
    record.announce_tick = round.announce_tick;
    record.updates_received = round.updates.size();

    try {
        auto accepted = select_updates(std::move(round.updates), round.config, key_server_,
                                       global().params.version, round.announce_tick);
        // the accepted contributions become part of the round's sealed record
        for (const auto& u : accepted) {
            record.contributors.push_back(u.miner_id);
            auto tx = ledger::make_transaction("model", to_payload(u), id_, keypair_);
            auto result = model_ledger_.submit(tx);
            if (!result.accepted()) {
                throw Error(Errc::RunFailure,
                            "update record rejected: " +
                                std::string(ledger::reject_reason_name(result.reason)));
            }
        }
        ml::ModelParameters merged = aggregate(accepted);
        open_round_.reset();
        GlobalModel published = publish_model(merged, record.contributors, now);
        record.published_version = published.params.version;
        global_->round_id = record.round_id;
    } catch (const Error& e) {
        if (e.code() != Errc::InsufficientParticipation) {
            open_round_.reset();
            throw;
        }
        open_round_.reset();
        record.voided = true;
        record.published_version = global().params.version;
    }
    record.validation_loss = validation_loss();
    history_.push_back(record);
    return record;
}

FederatedRunResult run_federated_training(Coordinator& coordinator, std::vector<Miner>& miners,
                                          simnet::Network& net,
                                          const std::vector<RoundConfig>& round_configs,
                                          const std::vector<ml::TrainingConfig>& train_configs,
                                          ml::ModelStore& model_store) {
    if (round_configs.size() != train_configs.size()) {
        throw Error(Errc::ConfigError, "one training config per round required");
    }
    FederatedRunResult result;
    const std::string& coordinator_node = coordinator.id();

    for (std::size_t r = 0; r < round_configs.size(); ++r) {
        Tick announce_tick = net.now();
        ledger::Transaction announce = coordinator.announce_round(round_configs[r], announce_tick);
        const auto& announce_payload = std::get<ledger::RoundAnnouncePayload>(announce.payload);
        std::uint64_t round_id = announce_payload.round_id;

        wire::RoundAnnounceMsg msg;
        msg.round_id = round_id;
        msg.global_version = coordinator.global().params.version;
        msg.param_hash_hex = to_hex(coordinator.global().params.param_hash);
        for (const Miner& miner : miners) {
            net.send(coordinator_node, miner.id(), wire::encode(msg));
        }

        Tick deadline = announce_tick + round_configs[r].deadline_ticks;
        while (net.now() < deadline) {
            for (const simnet::Delivery& delivery : net.step()) {
                wire::Message incoming = wire::decode(delivery.payload);
                if (auto* announce_msg = std::get_if<wire::RoundAnnounceMsg>(&incoming)) {
                    if (announce_msg->round_id != round_id) continue;
                    auto miner_it =
                        std::find_if(miners.begin(), miners.end(), [&](const Miner& m) {
                            return m.id() == delivery.dst;
                        });
                    if (miner_it == miners.end() || miner_it->shard_size() == 0) continue;
                    // the miner downloads the announced model by hash
                    Hash32 announced = from_hex_fixed<32>(announce_msg->param_hash_hex);
                    GlobalModel downloaded;
                    downloaded.params = ml::deserialize(model_store.get(announced));
                    downloaded.round_id = announce_msg->round_id;
                    ModelUpdate update = miner_it->train(downloaded, train_configs[r]);
                    model_store.put(ml::serialize(update.params));
                    wire::ModelUpdateMsg reply;
                    reply.miner_id = update.miner_id;
                    reply.round_id = round_id;
                    reply.base_version = update.base_version;
                    reply.param_hash_hex = to_hex(update.params.param_hash);
                    reply.sample_count = update.sample_count;
                    reply.local_loss = update.local_loss;
                    reply.signature_hex = to_hex(update.signature);
                    net.send(miner_it->id(), coordinator_node, wire::encode(reply));
                } else if (auto* update_msg = std::get_if<wire::ModelUpdateMsg>(&incoming)) {
                    if (update_msg->round_id != round_id) continue;
                    Hash32 hash = from_hex_fixed<32>(update_msg->param_hash_hex);
                    if (!model_store.has(hash)) continue;
                    ModelUpdate update;
                    update.miner_id = update_msg->miner_id;
                    update.base_version = update_msg->base_version;
                    update.params = ml::deserialize(model_store.get(hash));
                    update.sample_count = update_msg->sample_count;
                    update.local_loss = update_msg->local_loss;
                    update.signature = from_hex_fixed<64>(update_msg->signature_hex);
                    coordinator.receive_update(std::move(update), net.now());
                }
            }
        }
        RoundRecord record = coordinator.close_round(net.now());
        result.rounds.push_back(record);
        if (!record.voided) {
            result.published.push_back(coordinator.global());
        }
    }
    return result;
}

}  // namespace fedchain::federation
