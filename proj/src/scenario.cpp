#include "fedchain/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "fedchain/wire.hpp"

namespace fedchain::scenario {

using nlohmann::json;

// -- config <-> json -----------------------------------------------------------

namespace {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::IoError, "cannot open file: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::IoError, "cannot open for writing: " + path.string());
    }
    out << text;
    if (!out) {
        throw Error(Errc::IoError, "write failed: " + path.string());
    }
}

template <typename T>
T get_or(const json& j, const char* field, T fallback) {
    if (!j.contains(field)) return fallback;
    try {
        return j.at(field).get<T>();
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, std::string("field '") + field + "': " + e.what());
    }
}

template <typename T>
T get_required(const json& j, const char* field) {
    if (!j.contains(field)) {
        throw Error(Errc::ConfigError, std::string("missing required field '") + field + "'");
    }
    try {
        return j.at(field).get<T>();
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, std::string("field '") + field + "': " + e.what());
    }
}

traffic::MachineIdentity device_from_json(const json& j) {
    traffic::MachineIdentity device;
    device.account_id = get_required<std::string>(j, "account_id");
    device.address = get_required<std::string>(j, "address");
    std::string publish = get_or<std::string>(j, "publish_role", "publisher");
    if (publish == "publisher") {
        device.publish_role = traffic::PublishRole::Publisher;
    } else if (publish == "subscriber") {
        device.publish_role = traffic::PublishRole::Subscriber;
    } else {
        throw Error(Errc::ConfigError, "device publish_role must be publisher|subscriber");
    }
    std::string direction = get_or<std::string>(j, "direction_role", "sender");
    if (direction == "sender") {
        device.direction_role = traffic::DirectionRole::Sender;
    } else if (direction == "receiver") {
        device.direction_role = traffic::DirectionRole::Receiver;
    } else {
        throw Error(Errc::ConfigError, "device direction_role must be sender|receiver");
    }
    if (j.contains("internals")) {
        for (const auto& item : j.at("internals")) {
            device.internals.emplace_back(get_required<std::string>(item, "name"),
                                          get_required<std::string>(item, "value"));
        }
    }
    return device;
}

json device_to_json(const traffic::MachineIdentity& device) {
    json j;
    j["account_id"] = device.account_id;
    j["address"] = device.address;
    j["publish_role"] =
        device.publish_role == traffic::PublishRole::Publisher ? "publisher" : "subscriber";
    j["direction_role"] =
        device.direction_role == traffic::DirectionRole::Sender ? "sender" : "receiver";
    json internals = json::array();
    for (const auto& [name, value] : device.internals) {
        json item;
        item["name"] = name;
        item["value"] = value;
        internals.push_back(std::move(item));
    }
    j["internals"] = std::move(internals);
    return j;
}

contracts::SmartContract contract_from_json(const json& j) {
    contracts::SmartContract contract;
    contract.contract_id = get_required<std::uint64_t>(j, "contract_id");
    contract.route_id = get_required<std::uint64_t>(j, "route_id");
    if (j.contains("match")) {
        const json& m = j.at("match");
        if (m.contains("sender")) contract.matcher.sender_id = m.at("sender").get<std::string>();
        if (m.contains("receiver")) {
            contract.matcher.receiver_id = m.at("receiver").get<std::string>();
        }
        if (m.contains("stream_ids")) {
            for (const auto& id : m.at("stream_ids")) {
                contract.matcher.stream_ids.insert(id.get<std::uint64_t>());
            }
        }
    }
    contract.model_ref = contracts::ModelRef::parse(get_or<std::string>(j, "model_ref", "latest"));
    contract.threshold_quantile = get_or<double>(j, "threshold_quantile", 0.95);
    contract.threshold_ref = ml::Threshold{0.0, contract.threshold_quantile, 0};
    return contract;
}

json contract_to_json(const contracts::SmartContract& contract) {
    json j;
    j["contract_id"] = contract.contract_id;
    j["route_id"] = contract.route_id;
    json match = json::object();
    if (contract.matcher.sender_id) match["sender"] = *contract.matcher.sender_id;
    if (contract.matcher.receiver_id) match["receiver"] = *contract.matcher.receiver_id;
    json ids = json::array();
    for (std::uint64_t id : contract.matcher.stream_ids) ids.push_back(id);
    match["stream_ids"] = std::move(ids);
    j["match"] = std::move(match);
    j["model_ref"] = contract.model_ref.to_string();
    j["threshold_quantile"] = contract.threshold_quantile;
    return j;
}

}  // namespace

ScenarioConfig config_from_json(const json& j) {
    ScenarioConfig config;
    config.seed = get_required<std::uint64_t>(j, "seed");

    for (const auto& a : get_required<json>(j, "authorities")) {
        AuthorityDef def;
        def.id = get_required<std::string>(a, "id");
        def.assets = get_required<std::vector<std::string>>(a, "assets");
        config.authorities.push_back(std::move(def));
    }
    const json issuer_map = get_required<json>(j, "asset_issuers");
    for (const auto& [asset, issuers] : issuer_map.items()) {
        config.asset_issuers[asset] = issuers.get<std::vector<std::string>>();
    }
    config.miner_ids = get_required<std::vector<std::string>>(j, "miners");
    config.coordinator_id = get_or<std::string>(j, "coordinator", "coordinator");
    config.gateway_id = get_or<std::string>(j, "gateway", "gateway");
    for (const auto& d : get_required<json>(j, "devices")) {
        config.devices.push_back(device_from_json(d));
    }
    config.sender_device = get_required<std::string>(j, "sender_device");
    config.receiver_device = get_required<std::string>(j, "receiver_device");
    for (const auto& c : get_required<json>(j, "contracts")) {
        config.contract_defs.push_back(contract_from_json(c));
    }

    if (j.contains("network")) {
        const json& n = j.at("network");
        config.network.seed = get_or<std::uint64_t>(n, "seed", 0);
        config.network.base_latency_ticks = get_or<std::uint32_t>(n, "base_latency_ticks", 1);
        config.network.jitter_ticks = get_or<std::uint32_t>(n, "jitter_ticks", 0);
        config.network.drop_probability = get_or<double>(n, "drop_probability", 0.0);
        if (n.contains("partitions")) {
            for (const auto& p : n.at("partitions")) {
                simnet::Partition partition;
                for (const auto& id : get_required<json>(p, "group_a")) {
                    partition.group_a.insert(id.get<std::string>());
                }
                for (const auto& id : get_required<json>(p, "group_b")) {
                    partition.group_b.insert(id.get<std::string>());
                }
                partition.from_tick = get_required<std::uint64_t>(p, "from_tick");
                partition.to_tick = get_required<std::uint64_t>(p, "to_tick");
                config.network.partitions.push_back(std::move(partition));
            }
        }
    }

    if (j.contains("rounds")) {
        const json& r = j.at("rounds");
        config.rounds.count = get_or<std::uint64_t>(r, "count", 0);
        config.rounds.min_participants = get_or<std::uint64_t>(r, "min_participants", 1);
        config.rounds.deadline_ticks = get_or<std::uint64_t>(r, "deadline_ticks", 20);
        config.rounds.selection_policy = federation::selection_policy_from_name(
            get_or<std::string>(r, "selection_policy", "fresh_only"));
        config.rounds.quantile_for_threshold = get_or<double>(r, "quantile_for_threshold", 0.95);
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        if (m.contains("layer_shapes")) {
            config.model.layer_shapes.clear();
            for (const auto& shape : m.at("layer_shapes")) {
                if (!shape.is_array() || shape.size() != 2) {
                    throw Error(Errc::ConfigError, "layer_shapes entries must be [in, out]");
                }
                config.model.layer_shapes.emplace_back(shape[0].get<std::uint32_t>(),
                                                       shape[1].get<std::uint32_t>());
            }
        }
        if (m.contains("training")) {
            const json& t = m.at("training");
            config.model.training.learning_rate = get_or<double>(t, "learning_rate", 0.05);
            config.model.training.epochs = get_or<std::uint32_t>(t, "epochs", 1);
            config.model.training.batch_size = get_or<std::uint32_t>(t, "batch_size", 16);
            config.model.training.seed = get_or<std::uint64_t>(t, "seed", 0);
            config.model.training.weight_decay = get_or<double>(t, "weight_decay", 0.0);
        }
    }

    if (j.contains("data")) {
        const json& d = j.at("data");
        config.data.n_normal = get_or<std::uint64_t>(d, "n_normal", 0);
        if (d.contains("attacks")) {
            for (const auto& a : d.at("attacks")) {
                AttackSpec group;
                group.profile.kind =
                    traffic::attack_from_name(get_required<std::string>(a, "kind"));
                group.profile.intensity = get_or<double>(a, "intensity", 1.0);
                group.count = get_required<std::uint64_t>(a, "count");
                config.data.attacks.push_back(group);
            }
        } else if (std::uint64_t n_anomalous = get_or<std::uint64_t>(d, "n_anomalous", 0);
                   n_anomalous > 0) {
            // single-profile shorthand
            AttackSpec group;
            group.count = n_anomalous;
            if (d.contains("attack")) {
                const json& a = d.at("attack");
                group.profile.kind =
                    traffic::attack_from_name(get_or<std::string>(a, "kind", "dos"));
                group.profile.intensity = get_or<double>(a, "intensity", 1.0);
            }
            config.data.attacks.push_back(group);
        }
        config.data.first_stream_id = get_or<std::uint64_t>(d, "first_stream_id", 2000);
        config.data.timestamp_token =
            get_or<std::string>(d, "timestamp_token", "201802305221100");
        config.data.stream_size_kb = get_or<double>(d, "stream_size_kb", 125.0);
    }

    config.seal_interval = get_or<std::uint64_t>(j, "seal_interval", 100);
    config.first_session_id = get_or<std::uint64_t>(j, "first_session_id", 5000);
    return config;
}

json config_to_json(const ScenarioConfig& config) {
    json j;
    j["seed"] = config.seed;
    json authorities = json::array();
    for (const auto& a : config.authorities) {
        json def;
        def["id"] = a.id;
        def["assets"] = a.assets;
        authorities.push_back(std::move(def));
    }
    j["authorities"] = std::move(authorities);
    json issuers = json::object();
    for (const auto& [asset, ids] : config.asset_issuers) {
        issuers[asset] = ids;
    }
    j["asset_issuers"] = std::move(issuers);
    j["miners"] = config.miner_ids;
    j["coordinator"] = config.coordinator_id;
    j["gateway"] = config.gateway_id;
    json devices = json::array();
    for (const auto& d : config.devices) {
        devices.push_back(device_to_json(d));
    }
    j["devices"] = std::move(devices);
    j["sender_device"] = config.sender_device;
    j["receiver_device"] = config.receiver_device;
    json contract_list = json::array();
    for (const auto& c : config.contract_defs) {
        contract_list.push_back(contract_to_json(c));
    }
    j["contracts"] = std::move(contract_list);

    json network;
    network["seed"] = config.network.seed;
    network["base_latency_ticks"] = config.network.base_latency_ticks;
    network["jitter_ticks"] = config.network.jitter_ticks;
    network["drop_probability"] = config.network.drop_probability;
    json partitions = json::array();
    for (const auto& p : config.network.partitions) {
        json partition;
        partition["group_a"] = std::vector<std::string>(p.group_a.begin(), p.group_a.end());
        partition["group_b"] = std::vector<std::string>(p.group_b.begin(), p.group_b.end());
        partition["from_tick"] = p.from_tick;
        partition["to_tick"] = p.to_tick;
        partitions.push_back(std::move(partition));
    }
    network["partitions"] = std::move(partitions);
    j["network"] = std::move(network);

    json rounds;
    rounds["count"] = config.rounds.count;
    rounds["min_participants"] = config.rounds.min_participants;
    rounds["deadline_ticks"] = config.rounds.deadline_ticks;
    rounds["selection_policy"] =
        std::string(federation::selection_policy_name(config.rounds.selection_policy));
    rounds["quantile_for_threshold"] = config.rounds.quantile_for_threshold;
    j["rounds"] = std::move(rounds);

    json model;
    json shapes = json::array();
    for (const auto& [in, out] : config.model.layer_shapes) {
        shapes.push_back(json::array({in, out}));
    }
    model["layer_shapes"] = std::move(shapes);
    json training;
    training["learning_rate"] = config.model.training.learning_rate;
    training["epochs"] = config.model.training.epochs;
    training["batch_size"] = config.model.training.batch_size;
    training["seed"] = config.model.training.seed;
    training["weight_decay"] = config.model.training.weight_decay;
    model["training"] = std::move(training);
    j["model"] = std::move(model);

    json data;
    data["n_normal"] = config.data.n_normal;
    json attacks = json::array();
    for (const auto& group : config.data.attacks) {
        json a;
        a["kind"] = std::string(traffic::attack_name(group.profile.kind));
        a["intensity"] = group.profile.intensity;
        a["count"] = group.count;
        attacks.push_back(std::move(a));
    }
    data["attacks"] = std::move(attacks);
    data["first_stream_id"] = config.data.first_stream_id;
    data["timestamp_token"] = config.data.timestamp_token;
    data["stream_size_kb"] = config.data.stream_size_kb;
    j["data"] = std::move(data);

    j["seal_interval"] = config.seal_interval;
    j["first_session_id"] = config.first_session_id;
    return j;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path), nullptr, true, true);  // allow comments
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, path.string() + ": " + e.what());
    }
    ScenarioConfig config = config_from_json(j);
    validate(config);
    return config;
}

void validate(const ScenarioConfig& config) {
    if (config.authorities.empty()) {
        throw Error(Errc::ConfigError, "at least one authority required");
    }

    std::set<std::string> participant_ids;
    auto claim_id = [&participant_ids](const std::string& id, const char* what) {
        if (id.empty()) {
            throw Error(Errc::ConfigError, std::string(what) + " id is empty");
        }
        if (!participant_ids.insert(id).second) {
            throw Error(Errc::ConfigError, "duplicate participant id: " + id);
        }
    };
    for (const auto& a : config.authorities) claim_id(a.id, "authority");
    claim_id(config.coordinator_id, "coordinator");
    claim_id(config.gateway_id, "gateway");
    for (const auto& m : config.miner_ids) claim_id(m, "miner");
    for (const auto& d : config.devices) {
        claim_id(d.account_id, "device");
        traffic::validate(d);
    }

    std::map<std::string, std::string> asset_to_authority;
    for (const auto& a : config.authorities) {
        for (const auto& asset : a.assets) {
            auto [it, inserted] = asset_to_authority.emplace(asset, a.id);
            if (!inserted) {
                throw Error(Errc::ConfigError, "asset mapped to multiple authorities: " + asset);
            }
        }
    }
    for (const char* asset : {"stream", "alert", "model", "contract"}) {
        if (!asset_to_authority.contains(asset)) {
            throw Error(Errc::ConfigError, std::string("no authority issues asset: ") + asset);
        }
    }
    if (asset_to_authority.at("stream") != asset_to_authority.at("alert")) {
        throw Error(Errc::ConfigError, "stream and alert assets must share one authority");
    }
    for (const auto& [asset, issuers] : config.asset_issuers) {
        if (!asset_to_authority.contains(asset)) {
            throw Error(Errc::ConfigError, "asset_issuers names unknown asset: " + asset);
        }
        if (issuers.empty()) {
            throw Error(Errc::ConfigError, "asset has no issuer: " + asset);
        }
        for (const auto& issuer : issuers) {
            if (!participant_ids.contains(issuer)) {
                throw Error(Errc::ConfigError,
                            "asset " + asset + " issuer is not a participant: " + issuer);
            }
        }
    }
    for (const auto& [asset, authority] : asset_to_authority) {
        if (!config.asset_issuers.contains(asset)) {
            throw Error(Errc::ConfigError, "asset missing from asset_issuers: " + asset);
        }
    }

    auto device_exists = [&config](const std::string& id) {
        return std::any_of(config.devices.begin(), config.devices.end(),
                           [&id](const auto& d) { return d.account_id == id; });
    };
    if (!device_exists(config.sender_device)) {
        throw Error(Errc::ConfigError, "sender_device not declared: " + config.sender_device);
    }
    if (!device_exists(config.receiver_device)) {
        throw Error(Errc::ConfigError, "receiver_device not declared: " + config.receiver_device);
    }
    if (config.sender_device == config.receiver_device) {
        throw Error(Errc::ConfigError, "sender_device equals receiver_device");
    }

    std::set<std::uint64_t> contract_ids;
    for (const auto& c : config.contract_defs) {
        if (c.contract_id == 0 || c.route_id == 0) {
            throw Error(Errc::ConfigError, "contract_id and route_id must be positive");
        }
        if (!contract_ids.insert(c.contract_id).second) {
            throw Error(Errc::ConfigError,
                        "duplicate contract_id: " + std::to_string(c.contract_id));
        }
        if (!(c.threshold_quantile > 0.0 && c.threshold_quantile < 1.0)) {
            throw Error(Errc::ConfigError, "threshold_quantile must lie in (0, 1)");
        }
    }

    ml::validate_topology(config.model.layer_shapes);
    if (config.model.layer_shapes.front().first != traffic::feature_count ||
        config.model.layer_shapes.back().second != traffic::feature_count) {
        throw Error(Errc::ConfigError, "model must map 18 features onto 18 features");
    }
    for (const auto& group : config.data.attacks) {
        if (group.count == 0) {
            throw Error(Errc::ConfigError, "attack group with zero count");
        }
        if (!(group.profile.intensity > 0.0 && group.profile.intensity <= 1.0)) {
            throw Error(Errc::ConfigError, "attack intensity must lie in (0, 1]");
        }
    }
    if (config.data.first_stream_id == 0) {
        throw Error(Errc::ConfigError, "first_stream_id must be positive");
    }
    if (config.seal_interval == 0) {
        throw Error(Errc::ConfigError, "seal_interval must be positive");
    }
    if (config.network.base_latency_ticks < 1) {
        throw Error(Errc::ConfigError, "base_latency_ticks must be at least 1");
    }
    if (config.network.drop_probability < 0.0 || config.network.drop_probability > 1.0) {
        throw Error(Errc::ConfigError, "drop_probability must lie in [0, 1]");
    }
    if (config.rounds.count > 0 && config.rounds.deadline_ticks == 0) {
        throw Error(Errc::ConfigError, "deadline_ticks must be positive");
    }
}

std::uint64_t DataSpec::anomalous_total() const {
    std::uint64_t total = 0;
    for (const auto& group : attacks) total += group.count;
    return total;
}

// -- the run --------------------------------------------------------------------

namespace {

// normals first, then each attack group from its own derived substream
std::vector<traffic::TrafficFlowRecord> generate_dataset(const ScenarioConfig& config,
                                                         std::uint64_t data_seed) {
    std::vector<traffic::TrafficFlowRecord> records;
    if (config.data.n_normal > 0) {
        records = traffic::generate_traffic(data_seed, config.data.n_normal, 0, {});
    }
    for (std::size_t i = 0; i < config.data.attacks.size(); ++i) {
        const auto& group = config.data.attacks[i];
        auto part = traffic::generate_traffic(
            keys::derive_u64(data_seed, "attack-" + std::to_string(i)), 0, group.count,
            group.profile);
        records.insert(records.end(), part.begin(), part.end());
    }
    return records;
}

std::vector<std::pair<traffic::AttackProfile, std::size_t>> attack_groups_of(
    const ScenarioConfig& config) {
    std::vector<std::pair<traffic::AttackProfile, std::size_t>> groups;
    for (const auto& group : config.data.attacks) {
        groups.emplace_back(group.profile, group.count);
    }
    return groups;
}

enum class SplitSlot { Train, Val, Test };

// 70/15/15 by index striping with period 20: 14 train, 3 val, 3 test
SplitSlot split_slot(std::size_t index) {
    std::size_t stripe = index % 20;
    if (stripe < 14) return SplitSlot::Train;
    if (stripe < 17) return SplitSlot::Val;
    return SplitSlot::Test;
}

struct Participants {
    keys::KeyServer server;
    std::map<std::string, keys::KeyPair> keypairs;
};

Participants register_participants(const ScenarioConfig& config) {
    Participants out;
    auto enroll = [&](const std::string& id, keys::Role role) {
        keys::KeyPair pair = keys::generate_keypair(keys::derive_seed(config.seed, "key:" + id));
        out.keypairs[id] = pair;
        out.server.register_participant({id, role, pair.public_key, 0});
    };
    for (const auto& a : config.authorities) enroll(a.id, keys::Role::Authority);
    enroll(config.coordinator_id, keys::Role::Coordinator);
    enroll(config.gateway_id, keys::Role::Device);
    for (const auto& m : config.miner_ids) enroll(m, keys::Role::Miner);
    for (const auto& d : config.devices) enroll(d.account_id, keys::Role::Device);
    return out;
}

ledger::VerifyContext build_context(const ScenarioConfig& config,
                                    const Participants& participants) {
    ledger::VerifyContext context;
    for (const auto& record : participants.server.records()) {
        context.participant_keys[record.participant_id] = record.public_key;
    }
    for (const auto& a : config.authorities) {
        for (const auto& asset : a.assets) {
            ledger::AssetRule rule;
            rule.authority_id = a.id;
            rule.issuer_ids = config.asset_issuers.at(asset);
            context.assets[asset] = std::move(rule);
        }
    }
    return context;
}

std::string authority_for_asset(const ScenarioConfig& config, const std::string& asset) {
    for (const auto& a : config.authorities) {
        for (const auto& known : a.assets) {
            if (known == asset) return a.id;
        }
    }
    throw Error(Errc::ConfigError, "no authority issues asset: " + asset);
}

}  // namespace

void gen_data(const ScenarioConfig& config, const std::filesystem::path& out_csv) {
    std::uint64_t data_seed = keys::derive_u64(config.seed, "data");
    auto records = generate_dataset(config, data_seed);
    write_text_file(out_csv, traffic::to_csv(records));
    std::filesystem::path meta = out_csv;
    meta += ".meta";
    write_text_file(meta, traffic::generator_metadata(data_seed, config.data.n_normal,
                                                      attack_groups_of(config)));
}

namespace {

void execute_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                      MetricsReport& report) {
    // participants, keys, per-authority ledgers
    Participants participants = register_participants(config);
    ledger::VerifyContext context = build_context(config, participants);

    std::map<std::string, ledger::LedgerInstance> instances;
    for (const auto& a : config.authorities) {
        std::set<std::string> assets(a.assets.begin(), a.assets.end());
        std::set<std::string> peers;
        for (const auto& other : config.authorities) {
            if (other.id != a.id) peers.insert(other.id);
        }
        instances.emplace(a.id, ledger::LedgerInstance(a.id, assets, peers, context,
                                                       participants.keypairs.at(a.id), 0));
    }
    const std::string contract_authority = authority_for_asset(config, "contract");
    const std::string model_authority = authority_for_asset(config, "model");
    const std::string traffic_authority = authority_for_asset(config, "stream");
    ledger::LedgerInstance& contract_ledger = instances.at(contract_authority);
    ledger::LedgerInstance& model_ledger = instances.at(model_authority);
    ledger::LedgerInstance& traffic_ledger = instances.at(traffic_authority);

    // contracts go on chain before any traffic flows
    const std::string contract_issuer = config.asset_issuers.at("contract").front();
    for (const auto& contract : config.contract_defs) {
        contracts::register_contract(contract_ledger, contract, contract_issuer,
                                     participants.keypairs.at(contract_issuer));
    }
    if (!config.contract_defs.empty()) {
        contract_ledger.seal_block(participants.keypairs.at(contract_authority), 0);
    }

    // data generation, split and shard assignment
    std::uint64_t data_seed = keys::derive_u64(config.seed, "data");
    auto records = generate_dataset(config, data_seed);
    write_text_file(out_dir / "data.csv", traffic::to_csv(records));
    write_text_file(out_dir / "data.csv.meta",
                    traffic::generator_metadata(data_seed, config.data.n_normal,
                                                attack_groups_of(config)));

    std::vector<traffic::TrafficFlowRecord> train_records;
    std::vector<traffic::TrafficFlowRecord> val_records;
    std::vector<traffic::TrafficFlowRecord> test_records;  // normal test + all anomalous
    for (std::size_t i = 0; i < config.data.n_normal; ++i) {
        switch (split_slot(i)) {
            case SplitSlot::Train: train_records.push_back(records[i]); break;
            case SplitSlot::Val: val_records.push_back(records[i]); break;
            case SplitSlot::Test: test_records.push_back(records[i]); break;
        }
    }
    report.test_normal_total = test_records.size();
    for (std::size_t i = config.data.n_normal; i < records.size(); ++i) {
        test_records.push_back(records[i]);
    }
    report.test_anomalous_total = config.data.anomalous_total();

    traffic::NormalizerStats normalizer{};
    bool have_normalizer = false;
    if (!train_records.empty()) {
        normalizer = traffic::fit_normalizer(train_records);
        have_normalizer = true;
    }
    auto normalize_all = [&](const std::vector<traffic::TrafficFlowRecord>& src) {
        std::vector<traffic::FeatureVector> out;
        out.reserve(src.size());
        for (const auto& r : src) {
            out.push_back(traffic::normalize(traffic::extract_features(r), normalizer));
        }
        return out;
    };

    std::vector<traffic::FeatureVector> validation_set;
    if (have_normalizer) {
        validation_set = normalize_all(val_records);
    }

    // the simulated network
    simnet::Network net(config.network);
    net.register_node(config.coordinator_id);
    net.register_node(config.gateway_id);
    for (const auto& m : config.miner_ids) net.register_node(m);
    for (const auto& d : config.devices) net.register_node(d.account_id);

    // miners with disjoint shards (round-robin striping over train records)
    std::vector<federation::Miner> miners;
    {
        std::vector<std::vector<traffic::FeatureVector>> shards(config.miner_ids.size());
        if (have_normalizer && !config.miner_ids.empty()) {
            auto train_vectors = normalize_all(train_records);
            for (std::size_t i = 0; i < train_vectors.size(); ++i) {
                shards[i % shards.size()].push_back(train_vectors[i]);
            }
        }
        for (std::size_t m = 0; m < config.miner_ids.size(); ++m) {
            miners.emplace_back(config.miner_ids[m],
                                participants.keypairs.at(config.miner_ids[m]),
                                std::move(shards[m]));
        }
    }

    // federated training
    ml::ModelStore model_store;
    federation::Coordinator coordinator(
        config.coordinator_id, participants.keypairs.at(config.coordinator_id), model_ledger,
        participants.keypairs.at(model_authority), model_store, participants.server,
        validation_set);
    ml::ModelParameters initial =
        ml::init_model(config.model.layer_shapes, keys::derive_u64(config.seed, "model-init"));
    coordinator.bootstrap(initial, net.now());

    std::vector<federation::RoundConfig> round_configs;
    std::vector<ml::TrainingConfig> train_configs;
    for (std::uint64_t r = 0; r < config.rounds.count; ++r) {
        federation::RoundConfig rc;
        rc.min_participants = config.rounds.min_participants;
        rc.deadline_ticks = config.rounds.deadline_ticks;
        rc.selection_policy = config.rounds.selection_policy;
        rc.quantile_for_threshold = config.rounds.quantile_for_threshold;
        round_configs.push_back(rc);
        ml::TrainingConfig tc = config.model.training;
        tc.seed = keys::derive_u64(config.seed, "train-round-" + std::to_string(r));
        train_configs.push_back(tc);
    }
    federation::FederatedRunResult fed_result = federation::run_federated_training(
        coordinator, miners, net, round_configs, train_configs, model_store);
    report.rounds = fed_result.rounds;
    report.final_model_version = coordinator.global().params.version;
    report.final_param_hash_hex = to_hex(coordinator.global().params.param_hash);

    // threshold calibration on the coordinator's held-out normal shard
    contracts::DciEngine engine(config.gateway_id, participants.keypairs.at(config.gateway_id),
                                traffic_ledger, model_ledger, model_store, normalizer,
                                config.first_session_id);
    contracts::ContractRegistry registry = contracts::ContractRegistry::from_chain(contract_ledger);
    engine.set_registry(&registry);

    if (!test_records.empty()) {
        if (validation_set.empty()) {
            throw Error(Errc::RunFailure,
                        "test streams configured but the validation split is empty");
        }
        std::set<double> quantiles;
        for (const auto& c : config.contract_defs) quantiles.insert(c.threshold_quantile);
        for (double q : quantiles) {
            engine.set_threshold(
                q, ml::calibrate_threshold(coordinator.global().params, validation_set, q));
        }
    }

    // gating phase: every test stream notifies the gateway through simnet
    std::map<std::uint64_t, traffic::DataStream> stream_table;
    std::map<std::uint64_t, bool> stream_is_anomalous;
    {
        std::uint64_t next_stream_id = config.data.first_stream_id;
        for (const auto& record : test_records) {
            traffic::DataStream stream;
            stream.stream_id = next_stream_id++;
            stream.size_kb = config.data.stream_size_kb;
            stream.timestamp = config.data.timestamp_token;
            stream.sender_id = config.sender_device;
            stream.receiver_id = config.receiver_device;
            stream.flow = record;
            stream_is_anomalous[stream.stream_id] =
                record.label && *record.label != traffic::FlowLabel::Normal;
            stream_table.emplace(stream.stream_id, std::move(stream));
        }
    }
    for (const auto& [stream_id, stream] : stream_table) {
        net.send(config.sender_device, config.gateway_id,
                 wire::encode(wire::StreamNotifyMsg{stream_id}));
    }

    std::set<std::uint64_t> receiver_observed;
    std::uint64_t unsealed_gate_txs = 0;
    const keys::KeyPair& traffic_authority_keys = participants.keypairs.at(traffic_authority);
    while (net.pending_deliveries() > 0) {
        for (const simnet::Delivery& delivery : net.step()) {
            wire::Message incoming = wire::decode(delivery.payload);
            if (auto* notify = std::get_if<wire::StreamNotifyMsg>(&incoming)) {
                if (delivery.dst != config.gateway_id) continue;
                const traffic::DataStream& stream = stream_table.at(notify->stream_id);
                const contracts::SmartContract* contract = engine.match(stream);
                if (!contract) {
                    ++report.streams_unmatched;
                    continue;
                }
                contracts::ContractOutcome outcome =
                    engine.execute_dci(*contract, stream, net.now());
                ++report.streams_gated;
                ++unsealed_gate_txs;
                if (outcome.session()) {
                    ++report.sessions;
                    net.send(config.gateway_id, stream.receiver_id,
                             wire::encode(wire::SessionNotifyMsg{
                                 stream.stream_id,
                                 std::get<contracts::SessionEstablished>(outcome.decision)
                                     .session_id}));
                } else {
                    ++report.alerts;
                }
                if (unsealed_gate_txs >= config.seal_interval) {
                    traffic_ledger.seal_block(traffic_authority_keys, net.now());
                    unsealed_gate_txs = 0;
                }
            } else if (auto* session = std::get_if<wire::SessionNotifyMsg>(&incoming)) {
                if (delivery.dst == config.receiver_device) {
                    receiver_observed.insert(session->stream_id);
                }
            }
        }
    }
    if (unsealed_gate_txs > 0) {
        traffic_ledger.seal_block(traffic_authority_keys, net.now());
    }
    report.receiver_observed = receiver_observed.size();
    report.gate_trace = engine.trace();

    // cross-check: alert transactions on chain match hidden outcomes
    {
        ledger::QueryFilter filter;
        filter.kind = ledger::PayloadKind::Alert;
        filter.include_foreign = false;
        std::uint64_t chain_alerts = traffic_ledger.query(filter).size();
        if (chain_alerts != report.alerts) {
            throw Error(Errc::RunFailure,
                        "alert count mismatch: chain " + std::to_string(chain_alerts) +
                            " vs outcomes " + std::to_string(report.alerts));
        }
    }

    // detection metrics over the labeled test streams
    {
        std::map<std::uint64_t, const contracts::GateTraceEntry*> by_stream;
        for (const auto& entry : report.gate_trace) {
            by_stream[entry.stream_id] = &entry;
        }
        std::uint64_t anomalous_hidden = 0;
        std::uint64_t normal_hidden = 0;
        for (const auto& [stream_id, anomalous] : stream_is_anomalous) {
            auto it = by_stream.find(stream_id);
            bool hidden = it != by_stream.end() && !it->second->session;
            if (anomalous && hidden) ++anomalous_hidden;
            if (!anomalous && hidden) ++normal_hidden;
        }
        if (report.test_anomalous_total > 0) {
            report.detection_rate = static_cast<double>(anomalous_hidden) /
                                    static_cast<double>(report.test_anomalous_total);
        }
        if (report.test_normal_total > 0) {
            report.false_positive_rate = static_cast<double>(normal_hidden) /
                                         static_cast<double>(report.test_normal_total);
        }
    }

    // replicate everything everywhere, then audit
    {
        std::vector<std::string> ids;
        for (const auto& [id, instance] : instances) ids.push_back(id);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t k = i + 1; k < ids.size(); ++k) {
                ledger::LedgerInstance::sync(instances.at(ids[i]), instances.at(ids[k]));
            }
        }
    }
    report.all_chains_valid = true;
    for (const auto& [id, instance] : instances) {
        LedgerStats stats;
        stats.blocks = instance.chain().size();
        for (const auto& block : instance.chain()) {
            for (const auto& tx : block.txs) {
                ++stats.txs_per_asset[tx.asset_id];
            }
        }
        ledger::VerifyResult verdict = instance.verify_chain();
        stats.valid = verdict.valid;
        if (!verdict.valid) {
            stats.failure = std::string(ledger::verify_failure_name(verdict.reason)) +
                            " at height " + std::to_string(verdict.height);
            report.all_chains_valid = false;
        }
        report.ledgers[id] = std::move(stats);
    }

    // persistence
    for (const auto& [id, instance] : instances) {
        instance.save_jsonl(out_dir / ("ledger_" + id + ".jsonl"));
    }
    std::filesystem::create_directories(out_dir / "models");
    for (const auto& [hash, bytes] : model_store.entries()) {
        std::ofstream out(out_dir / "models" / (to_hex(hash) + ".fcm"),
                          std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    net.write_trace_jsonl(out_dir / "net_trace.jsonl");
    write_text_file(out_dir / "report.json", report_to_json(report).dump() + "\n");
    write_text_file(out_dir / "metrics.csv", metrics_csv(report));

    if (!report.all_chains_valid) {
        throw Error(Errc::RunFailure, "chain verification failed; see report.json");
    }
}

}  // namespace

MetricsReport run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
    validate(config);
    std::filesystem::create_directories(out_dir);

    MetricsReport report;
    report.config_echo = config_to_json(config);
    try {
        execute_scenario(config, out_dir, report);
    } catch (const Error& e) {
        // leave a structured record of the partial progress behind
        json partial = report_to_json(report);
        partial["error"] = e.what();
        write_text_file(out_dir / "report.json", partial.dump() + "\n");
        throw;
    }
    return report;
}

// -- report output -----------------------------------------------------------------

json report_to_json(const MetricsReport& report) {
    json j;
    j["config"] = report.config_echo;
    j["detection_rate"] =
        report.detection_rate ? json(*report.detection_rate) : json(nullptr);
    j["false_positive_rate"] =
        report.false_positive_rate ? json(*report.false_positive_rate) : json(nullptr);
    json rounds = json::array();
    for (const auto& r : report.rounds) {
        json round;
        round["round_id"] = r.round_id;
        round["voided"] = r.voided;
        round["contributors"] = r.contributors;
        round["published_version"] = r.published_version;
        round["validation_loss"] = r.validation_loss;
        round["announce_tick"] = r.announce_tick;
        round["updates_received"] = r.updates_received;
        rounds.push_back(std::move(round));
    }
    j["rounds"] = std::move(rounds);
    json ledgers = json::object();
    for (const auto& [id, stats] : report.ledgers) {
        json s;
        s["blocks"] = stats.blocks;
        json per_asset = json::object();
        for (const auto& [asset, count] : stats.txs_per_asset) {
            per_asset[asset] = count;
        }
        s["txs_per_asset"] = std::move(per_asset);
        s["valid"] = stats.valid;
        if (!stats.failure.empty()) s["failure"] = stats.failure;
        ledgers[id] = std::move(s);
    }
    j["ledgers"] = std::move(ledgers);
    j["sessions"] = report.sessions;
    j["alerts"] = report.alerts;
    j["test_normal_total"] = report.test_normal_total;
    j["test_anomalous_total"] = report.test_anomalous_total;
    j["streams_gated"] = report.streams_gated;
    j["streams_unmatched"] = report.streams_unmatched;
    j["receiver_observed"] = report.receiver_observed;
    j["all_chains_valid"] = report.all_chains_valid;
    j["final_model_version"] = report.final_model_version;
    j["final_param_hash"] = report.final_param_hash_hex;
    json trace = json::array();
    for (const auto& entry : report.gate_trace) {
        json t;
        t["stream_id"] = entry.stream_id;
        t["contract_id"] = entry.contract_id;
        t["route_id"] = entry.route_id;
        t["model_version"] = entry.model_version;
        t["rmse"] = entry.rmse;
        t["tau"] = entry.tau;
        t["decision"] = entry.session ? "session_established" : "hidden_with_alert";
        if (entry.session) t["session_id"] = entry.session_id;
        t["tx_id"] = entry.tx_id_hex;
        t["tick"] = entry.tick;
        trace.push_back(std::move(t));
    }
    j["gate_trace"] = std::move(trace);
    return j;
}

std::string metrics_csv(const MetricsReport& report) {
    std::string out =
        "row_type,round_id,participants,voided,published_version,validation_loss,"
        "detection_rate,false_positive_rate,sessions,alerts,blocks_total,txs_total\n";
    for (const auto& r : report.rounds) {
        out += "round," + std::to_string(r.round_id) + "," +
               std::to_string(r.contributors.size()) + "," + (r.voided ? "1" : "0") + "," +
               std::to_string(r.published_version) + "," + format_double(r.validation_loss) +
               ",,,,,,\n";
    }
    std::uint64_t blocks_total = 0;
    std::uint64_t txs_total = 0;
    for (const auto& [id, stats] : report.ledgers) {
        blocks_total += stats.blocks;
        for (const auto& [asset, count] : stats.txs_per_asset) txs_total += count;
    }
    out += "summary,,,,,,";
    out += report.detection_rate ? format_double(*report.detection_rate) : std::string("na");
    out += ",";
    out += report.false_positive_rate ? format_double(*report.false_positive_rate)
                                      : std::string("na");
    out += "," + std::to_string(report.sessions) + "," + std::to_string(report.alerts) + "," +
           std::to_string(blocks_total) + "," + std::to_string(txs_total) + "\n";
    return out;
}

// -- ledger inspection ----------------------------------------------------------------

int inspect_ledger(const std::filesystem::path& path, const InspectOptions& options,
                   std::ostream& out) {
    std::optional<ledger::LedgerInstance> loaded;
    try {
        loaded = ledger::LedgerInstance::load_jsonl(path);
    } catch (const Error& e) {
        out << "INVALID: " << e.what() << "\n";
        return 3;
    }
    const ledger::LedgerInstance& instance = *loaded;
    ledger::VerifyResult verdict = instance.verify_chain();
    if (!verdict.valid) {
        out << "INVALID: " << ledger::verify_failure_name(verdict.reason) << " at height "
            << verdict.height;
        if (!verdict.section.empty()) out << " in section " << verdict.section;
        out << "\n";
        return 3;
    }
    out << "VALID: authority " << instance.authority_id() << ", " << instance.chain().size()
        << " local blocks, " << instance.foreign_sections().size() << " foreign sections\n";
    auto txs = instance.query(options.filter);
    for (const auto& tx : txs) {
        if (options.as_json) {
            json j;
            j["asset_id"] = tx.asset_id;
            j["issuer_id"] = tx.issuer_id;
            j["kind"] = std::string(
                ledger::payload_kind_name(ledger::kind_of(tx.payload)));
            j["payload"] = ledger::payload_to_json(tx.payload);
            j["tx_id"] = to_hex(tx.tx_id);
            out << j.dump() << "\n";
        } else {
            out << "tx " << to_hex(tx.tx_id).substr(0, 16) << "  asset=" << tx.asset_id
                << "  kind=" << ledger::payload_kind_name(ledger::kind_of(tx.payload))
                << "  issuer=" << tx.issuer_id << "\n";
        }
    }
    out << txs.size() << " matching transactions\n";
    return 0;
}

}  // namespace fedchain::scenario
