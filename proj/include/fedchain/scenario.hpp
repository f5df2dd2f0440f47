#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedchain/contracts.hpp"
#include "fedchain/federation.hpp"
#include "fedchain/simnet.hpp"

namespace fedchain::scenario {

struct AuthorityDef {
    std::string id;
    std::vector<std::string> assets;
};

struct RoundSpec {
    std::uint64_t count = 0;
    std::uint64_t min_participants = 1;
    Tick deadline_ticks = 20;
    federation::SelectionPolicy selection_policy = federation::SelectionPolicy::FreshOnly;
    double quantile_for_threshold = 0.95;
};

struct ModelSpec {
    std::vector<ml::LayerShape> layer_shapes{{18, 8}, {8, 18}};
    ml::TrainingConfig training;
};

struct AttackSpec {
    traffic::AttackProfile profile;
    std::uint64_t count = 0;
};

struct DataSpec {
    std::uint64_t n_normal = 0;  // split 70/15/15 into train/val/test by index striping
    std::vector<AttackSpec> attacks;  // anomalous test groups, gated in order
    std::uint64_t first_stream_id = 2000;
    std::string timestamp_token = "201802305221100";
    double stream_size_kb = 125.0;

    std::uint64_t anomalous_total() const;
};

struct ScenarioConfig {
    std::uint64_t seed = 0;
    std::vector<AuthorityDef> authorities;
    std::map<std::string, std::vector<std::string>> asset_issuers;
    std::vector<std::string> miner_ids;
    std::string coordinator_id = "coordinator";
    std::string gateway_id = "gateway";
    std::vector<traffic::MachineIdentity> devices;
    std::string sender_device;
    std::string receiver_device;
    std::vector<contracts::SmartContract> contract_defs;
    simnet::NetworkConfig network;
    RoundSpec rounds;
    ModelSpec model;
    DataSpec data;
    std::uint64_t seal_interval = 100;   // gate transactions per sealed block
    std::uint64_t first_session_id = 5000;
};

/// Throws ConfigError naming the offending field.
void validate(const ScenarioConfig& config);

ScenarioConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ScenarioConfig& config);
ScenarioConfig load_config(const std::filesystem::path& path);

struct LedgerStats {
    std::uint64_t blocks = 0;
    std::map<std::string, std::uint64_t> txs_per_asset;
    bool valid = false;
    std::string failure;  // empty when valid
};

struct MetricsReport {
    std::optional<double> detection_rate;
    std::optional<double> false_positive_rate;
    std::vector<federation::RoundRecord> rounds;
    std::map<std::string, LedgerStats> ledgers;
    std::uint64_t sessions = 0;
    std::uint64_t alerts = 0;
    std::uint64_t test_normal_total = 0;
    std::uint64_t test_anomalous_total = 0;
    std::uint64_t streams_gated = 0;
    std::uint64_t streams_unmatched = 0;
    std::uint64_t receiver_observed = 0;
    bool all_chains_valid = false;
    std::uint64_t final_model_version = 0;
    std::string final_param_hash_hex;
    std::vector<contracts::GateTraceEntry> gate_trace;
    nlohmann::json config_echo;
};

nlohmann::json report_to_json(const MetricsReport& report);
std::string metrics_csv(const MetricsReport& report);

/// Full deterministic pipeline: registration, genesis, contracts, data,
/// federated rounds over simnet, stream gating, sync, verification and
/// persistence. Writes ledger_<authority>.jsonl, report.json, metrics.csv,
/// data.csv(+.meta) and models/ under out_dir.
MetricsReport run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir);

/// Writes the flow-record CSV and its key=value sidecar for the config's
/// data section.
void gen_data(const ScenarioConfig& config, const std::filesystem::path& out_csv);

struct InspectOptions {
    ledger::QueryFilter filter;
    bool as_json = false;
};

/// Verifies then lists matching transactions; returns the process exit code
/// (0 ok, 3 integrity failure).
int inspect_ledger(const std::filesystem::path& path, const InspectOptions& options,
                   std::ostream& out);

}  // namespace fedchain::scenario
