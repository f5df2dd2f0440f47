#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "fedchain/ledger.hpp"
#include "fedchain/ml.hpp"
#include "fedchain/traffic.hpp"

namespace fedchain::contracts {

struct Matcher {
    std::optional<std::string> sender_id;
    std::optional<std::string> receiver_id;
    std::set<std::uint64_t> stream_ids;  // empty = any stream id

    bool matches(const traffic::DataStream& stream) const;
};

struct ModelRef {
    bool latest = true;
    std::uint64_t version = 0;

    std::string to_string() const;
    static ModelRef parse(const std::string& text);
};

/// On-chain rule binding a stream route to the anomaly gate. The threshold
/// is declared by quantile; its tau is resolved at execution time from the
/// engine's calibration store, the same way model_ref "latest" resolves
/// through the chain.
struct SmartContract {
    std::uint64_t contract_id = 0;
    Matcher matcher;
    std::uint64_t route_id = 0;
    ModelRef model_ref;
    double threshold_quantile = 0.95;
    ml::Threshold threshold_ref;  // tau filled once calibrated
};

ledger::ContractRegistrationPayload to_payload(const SmartContract& contract);
SmartContract from_payload(const ledger::ContractRegistrationPayload& payload);

class ContractRegistry {
public:
    void add(SmartContract contract);

    /// Rebuilds the registry from the ContractRegistration transactions on
    /// the given instance; the chain is the source of truth.
    static ContractRegistry from_chain(const ledger::LedgerInstance& instance);

    /// The unique matching contract, ties broken by lowest contract_id;
    /// nullptr when nothing matches.
    const SmartContract* match(const traffic::DataStream& stream) const;

    const std::vector<SmartContract>& contracts() const { return contracts_; }

private:
    std::vector<SmartContract> contracts_;  // kept sorted by contract_id
};

/// Submits a ContractRegistration under the "contract" asset. Throws
/// DuplicateContract when the id already exists on chain or in pending.
ledger::Transaction register_contract(ledger::LedgerInstance& instance,
                                      const SmartContract& contract, const std::string& issuer_id,
                                      const keys::KeyPair& issuer_keys);

struct SessionEstablished {
    std::uint64_t session_id = 0;
};

struct HiddenWithAlert {
    Hash32 alert_tx_id{};
};

struct ContractOutcome {
    std::variant<SessionEstablished, HiddenWithAlert> decision;
    double rmse = 0.0;
    std::uint64_t model_version = 0;
    Tick tick = 0;

    bool session() const { return std::holds_alternative<SessionEstablished>(decision); }
};

struct GateTraceEntry {
    std::uint64_t stream_id = 0;
    std::uint64_t contract_id = 0;
    std::uint64_t route_id = 0;
    std::uint64_t model_version = 0;
    double rmse = 0.0;
    double tau = 0.0;
    bool session = false;
    std::uint64_t session_id = 0;  // 0 when hidden
    std::string tx_id_hex;         // StreamTransfer or Alert transaction
    Tick tick = 0;
};

/// Executes the gate of the matched contract: feature extraction,
/// normalization, RMSE scoring, then either a session plus a StreamTransfer
/// transaction or a silent drop plus an AlertTx.
class DciEngine {
public:
    DciEngine(std::string gateway_id, keys::KeyPair gateway_keys,
              ledger::LedgerInstance& traffic_ledger, const ledger::LedgerInstance& model_ledger,
              const ml::ModelStore& model_store, traffic::NormalizerStats normalizer,
              std::uint64_t first_session_id);

    void set_registry(const ContractRegistry* registry) { registry_ = registry; }
    const ContractRegistry* registry() const { return registry_; }

    void set_threshold(double quantile, ml::Threshold threshold);

    const SmartContract* match(const traffic::DataStream& stream) const;

    /// Returns the contract's configured route channel and records the
    /// routing step in the trace.
    std::uint64_t route(const SmartContract& contract, const traffic::DataStream& stream);

    ContractOutcome execute_dci(const SmartContract& contract, const traffic::DataStream& stream,
                                Tick now);

    const std::vector<GateTraceEntry>& trace() const { return trace_; }

private:
    struct ResolvedModel {
        std::uint64_t version = 0;
        ml::ModelParameters params;
    };
    ResolvedModel resolve_model(const ModelRef& ref) const;
    ml::Threshold resolve_threshold(const SmartContract& contract) const;

    std::string gateway_id_;
    keys::KeyPair gateway_keys_;
    ledger::LedgerInstance& traffic_ledger_;
    const ledger::LedgerInstance& model_ledger_;
    const ml::ModelStore& model_store_;
    traffic::NormalizerStats normalizer_;
    const ContractRegistry* registry_ = nullptr;
    std::map<double, ml::Threshold> thresholds_;  // by declared quantile
    mutable std::map<std::uint64_t, ml::ModelParameters> model_cache_;
    std::uint64_t next_session_id_;
    std::vector<GateTraceEntry> trace_;
};

}  // namespace fedchain::contracts
