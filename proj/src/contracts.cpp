#include "fedchain/contracts.hpp"

#include <algorithm>

namespace fedchain::contracts {

bool Matcher::matches(const traffic::DataStream& stream) const {
    if (sender_id && stream.sender_id != *sender_id) return false;
    if (receiver_id && stream.receiver_id != *receiver_id) return false;
    if (!stream_ids.empty() && !stream_ids.contains(stream.stream_id)) return false;
    return true;
}

std::string ModelRef::to_string() const {
    return latest ? "latest" : std::to_string(version);
}

ModelRef ModelRef::parse(const std::string& text) {
    if (text == "latest") {
        return ModelRef{true, 0};
    }
    ModelRef ref;
    ref.latest = false;
    try {
        ref.version = std::stoull(text);
    } catch (const std::exception&) {
        throw Error(Errc::ConfigError, "bad model_ref: " + text);
    }
    return ref;
}

ledger::ContractRegistrationPayload to_payload(const SmartContract& contract) {
    ledger::ContractRegistrationPayload p;
    p.contract_id = contract.contract_id;
    p.match_sender = contract.matcher.sender_id;
    p.match_receiver = contract.matcher.receiver_id;
    p.match_stream_ids.assign(contract.matcher.stream_ids.begin(),
                              contract.matcher.stream_ids.end());
    p.route_id = contract.route_id;
    p.model_ref = contract.model_ref.to_string();
    p.threshold_quantile = contract.threshold_quantile;
    return p;
}

SmartContract from_payload(const ledger::ContractRegistrationPayload& payload) {
    SmartContract contract;
    contract.contract_id = payload.contract_id;
    contract.matcher.sender_id = payload.match_sender;
    contract.matcher.receiver_id = payload.match_receiver;
    contract.matcher.stream_ids.insert(payload.match_stream_ids.begin(),
                                       payload.match_stream_ids.end());
    contract.route_id = payload.route_id;
    contract.model_ref = ModelRef::parse(payload.model_ref);
    contract.threshold_quantile = payload.threshold_quantile;
    contract.threshold_ref = ml::Threshold{0.0, payload.threshold_quantile, 0};
    return contract;
}

void ContractRegistry::add(SmartContract contract) {
    if (contract.contract_id == 0 || contract.route_id == 0) {
        throw Error(Errc::ConfigError, "contract_id and route_id must be positive");
    }
    auto pos = std::lower_bound(contracts_.begin(), contracts_.end(), contract.contract_id,
                                [](const SmartContract& c, std::uint64_t id) {
                                    return c.contract_id < id;
                                });
    if (pos != contracts_.end() && pos->contract_id == contract.contract_id) {
        throw Error(Errc::DuplicateContract,
                    "contract already registered: " + std::to_string(contract.contract_id));
    }
    contracts_.insert(pos, std::move(contract));
}

ContractRegistry ContractRegistry::from_chain(const ledger::LedgerInstance& instance) {
    ContractRegistry registry;
    ledger::QueryFilter filter;
    filter.kind = ledger::PayloadKind::ContractRegistration;
    for (const auto& tx : instance.query(filter)) {
        registry.add(from_payload(std::get<ledger::ContractRegistrationPayload>(tx.payload)));
    }
    return registry;
}

const SmartContract* ContractRegistry::match(const traffic::DataStream& stream) const {
    for (const SmartContract& contract : contracts_) {  // sorted: lowest id wins ties
        if (contract.matcher.matches(stream)) {
            return &contract;
        }
    }
    return nullptr;
}

ledger::Transaction register_contract(ledger::LedgerInstance& instance,
                                      const SmartContract& contract, const std::string& issuer_id,
                                      const keys::KeyPair& issuer_keys) {
    ledger::QueryFilter filter;
    filter.kind = ledger::PayloadKind::ContractRegistration;
    for (const auto& tx : instance.query(filter)) {
        if (std::get<ledger::ContractRegistrationPayload>(tx.payload).contract_id ==
            contract.contract_id) {
            throw Error(Errc::DuplicateContract,
                        "contract already on chain: " + std::to_string(contract.contract_id));
        }
    }
    for (const auto& tx : instance.pending()) {
        if (auto* p = std::get_if<ledger::ContractRegistrationPayload>(&tx.payload)) {
            if (p->contract_id == contract.contract_id) {
                throw Error(Errc::DuplicateContract,
                            "contract already pending: " + std::to_string(contract.contract_id));
            }
        }
    }
    auto tx = ledger::make_transaction("contract", to_payload(contract), issuer_id, issuer_keys);
    auto result = instance.submit(tx);
    if (!result.accepted()) {
        throw Error(Errc::RunFailure,
                    "contract registration not accepted: " +
                        std::string(ledger::reject_reason_name(result.reason)));
    }
    return tx;
}

DciEngine::DciEngine(std::string gateway_id, keys::KeyPair gateway_keys,
                     ledger::LedgerInstance& traffic_ledger,
                     const ledger::LedgerInstance& model_ledger,
                     const ml::ModelStore& model_store, traffic::NormalizerStats normalizer,
                     std::uint64_t first_session_id)
    : gateway_id_(std::move(gateway_id)),
      gateway_keys_(gateway_keys),
      traffic_ledger_(traffic_ledger),
      model_ledger_(model_ledger),
      model_store_(model_store),
      normalizer_(normalizer),
      next_session_id_(first_session_id) {}

void DciEngine::set_threshold(double quantile, ml::Threshold threshold) {
    thresholds_[quantile] = threshold;
}

const SmartContract* DciEngine::match(const traffic::DataStream& stream) const {
    if (!registry_) {
        throw Error(Errc::RunFailure, "engine has no contract registry");
    }
    return registry_->match(stream);
}

std::uint64_t DciEngine::route(const SmartContract& contract, const traffic::DataStream& stream) {
    (void)stream;
    return contract.route_id;
}

DciEngine::ResolvedModel DciEngine::resolve_model(const ModelRef& ref) const {
    ledger::QueryFilter filter;
    filter.kind = ledger::PayloadKind::ModelPublish;
    auto publishes = model_ledger_.query(filter);
    const ledger::ModelPublishPayload* chosen = nullptr;
    for (const auto& tx : publishes) {
        const auto& p = std::get<ledger::ModelPublishPayload>(tx.payload);
        if (ref.latest) {
            if (!chosen || p.version > chosen->version) chosen = &p;
        } else if (p.version == ref.version) {
            chosen = &p;
        }
    }
    if (!chosen) {
        throw Error(Errc::ModelUnavailable,
                    ref.latest ? "no published model on chain"
                               : "model version not published: " + std::to_string(ref.version));
    }
    if (auto it = model_cache_.find(chosen->version); it != model_cache_.end()) {
        return {chosen->version, it->second};
    }
    Hash32 hash = from_hex_fixed<32>(chosen->param_hash_hex);
    if (!model_store_.has(hash)) {
        throw Error(Errc::ModelUnavailable, "model bytes missing from store");
    }
    ml::ModelParameters params = ml::deserialize(model_store_.get(hash));
    model_cache_[chosen->version] = params;
    return {chosen->version, std::move(params)};
}

ml::Threshold DciEngine::resolve_threshold(const SmartContract& contract) const {
    if (contract.threshold_ref.calibration_count > 0) {
        return contract.threshold_ref;
    }
    auto it = thresholds_.find(contract.threshold_quantile);
    if (it == thresholds_.end()) {
        throw Error(Errc::ThresholdUnavailable,
                    "no calibrated threshold for quantile " +
                        format_double(contract.threshold_quantile));
    }
    return it->second;
}

ContractOutcome DciEngine::execute_dci(const SmartContract& contract,
                                       const traffic::DataStream& stream, Tick now) {
    ResolvedModel model = resolve_model(contract.model_ref);
    ml::Threshold threshold = resolve_threshold(contract);

    traffic::FeatureVector features = traffic::extract_features(stream.flow);
    traffic::FeatureVector normalized = traffic::normalize(features, normalizer_);
    ml::AnomalyScore anomaly = ml::score(model.params, normalized);
    ml::TrafficClass verdict = ml::classify(anomaly, threshold);

    ContractOutcome outcome;
    outcome.rmse = anomaly.rmse;
    outcome.model_version = model.version;
    outcome.tick = now;

    GateTraceEntry entry;
    entry.stream_id = stream.stream_id;
    entry.contract_id = contract.contract_id;
    entry.route_id = route(contract, stream);
    entry.model_version = model.version;
    entry.rmse = anomaly.rmse;
    entry.tau = threshold.tau;
    entry.tick = now;

    if (verdict == ml::TrafficClass::Normal) {
        ledger::StreamTransferPayload payload;
        payload.stream_id = stream.stream_id;
        payload.sender_id = stream.sender_id;
        payload.receiver_id = stream.receiver_id;
        payload.size_kb = stream.size_kb;
        payload.timestamp = stream.timestamp;
        payload.session_id = next_session_id_++;
        payload.rmse = anomaly.rmse;
        payload.model_version = model.version;
        auto tx = ledger::make_transaction("stream", payload, gateway_id_, gateway_keys_);
        auto result = traffic_ledger_.submit(tx);
        if (!result.accepted()) {
            throw Error(Errc::RunFailure,
                        "stream transfer not accepted: " +
                            std::string(ledger::reject_reason_name(result.reason)));
        }
        outcome.decision = SessionEstablished{payload.session_id};
        entry.session = true;
        entry.session_id = payload.session_id;
        entry.tx_id_hex = to_hex(tx.tx_id);
    } else {
        ledger::AlertPayload payload;
        payload.stream_id = stream.stream_id;
        payload.rmse = anomaly.rmse;
        payload.contract_id = contract.contract_id;
        auto tx = ledger::make_transaction("alert", payload, gateway_id_, gateway_keys_);
        auto result = traffic_ledger_.submit(tx);
        if (!result.accepted()) {
            throw Error(Errc::RunFailure,
                        "alert not accepted: " +
                            std::string(ledger::reject_reason_name(result.reason)));
        }
        outcome.decision = HiddenWithAlert{tx.tx_id};
        entry.session = false;
        entry.tx_id_hex = to_hex(tx.tx_id);
    }
    trace_.push_back(entry);
    return outcome;
}

}  // namespace fedchain::contracts
