#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fedchain/scenario.hpp"

namespace {

// exit codes: 0 success, 1 config error, 2 run failure, 3 integrity failure
int exit_code_for(const fedchain::Error& e) {
    switch (e.code()) {
        case fedchain::Errc::ConfigError:
        case fedchain::Errc::IoError:
            return 1;
        case fedchain::Errc::CorruptLedger:
        case fedchain::Errc::CorruptModel:
        case fedchain::Errc::SyncRejected:
            return 3;
        default:
            return 2;
    }
}

fedchain::Bytes read_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw fedchain::Error(fedchain::Errc::IoError, "cannot open file: " + path.string());
    }
    return fedchain::Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedchain: federated-learning anomaly gate on per-authority ledgers"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed_override = -1;
    bool verbose = false;

    auto* run = app.add_subcommand("run", "execute a scenario end to end");
    run->add_option("--config", config_path, "scenario config JSON")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed_override, "override the config seed");
    run->add_flag("--verbose", verbose, "print per-round progress");

    auto* gen = app.add_subcommand("gen-data", "write the flow-record CSV for a config");
    std::string gen_out = "flows.csv";
    gen->add_option("--config", config_path, "scenario config JSON")->required();
    gen->add_option("--out", gen_out, "output CSV path");
    gen->add_option("--seed", seed_override, "override the config seed");

    auto* inspect = app.add_subcommand("inspect-ledger", "verify and list a persisted ledger");
    std::string ledger_path;
    std::string asset_filter;
    std::string kind_filter;
    bool inspect_json = false;
    inspect->add_option("--ledger", ledger_path, "ledger .jsonl file")->required();
    inspect->add_option("--asset", asset_filter, "only transactions of this asset");
    inspect->add_option("--kind", kind_filter,
                        "only this payload kind (stream_transfer, model_update, model_publish, "
                        "contract_registration, alert, round_announce)");
    inspect->add_flag("--json", inspect_json, "print matching transactions as JSON lines");

    auto* verify_model = app.add_subcommand("verify-model", "recompute a model file's hash");
    std::string model_path;
    std::string expected_hash;
    std::string ledger_for_model;
    verify_model->add_option("--model", model_path, "serialized model (.fcm)")->required();
    verify_model->add_option("--expect", expected_hash, "expected hash (lowercase hex)");
    verify_model->add_option("--ledger", ledger_for_model,
                             "check that this ledger carries a matching model_publish");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            fedchain::scenario::ScenarioConfig config =
                fedchain::scenario::load_config(config_path);
            if (seed_override >= 0) {
                config.seed = static_cast<std::uint64_t>(seed_override);
            }
            auto report = fedchain::scenario::run_scenario(config, out_dir);
            if (verbose) {
                for (const auto& r : report.rounds) {
                    std::cout << "round " << r.round_id << ": "
                              << (r.voided ? "void" : "published v" +
                                                          std::to_string(r.published_version))
                              << ", " << r.contributors.size() << " contributors"
                              << ", val_loss=" << r.validation_loss << "\n";
                }
            }
            std::cout << "sessions=" << report.sessions << " alerts=" << report.alerts;
            if (report.detection_rate) {
                std::cout << " detection_rate=" << *report.detection_rate;
            }
            if (report.false_positive_rate) {
                std::cout << " false_positive_rate=" << *report.false_positive_rate;
            }
            std::cout << " chains_valid=" << (report.all_chains_valid ? "yes" : "no") << "\n";
            std::cout << "artifacts written to " << out_dir << "\n";
            return 0;
        }
        if (gen->parsed()) {
            fedchain::scenario::ScenarioConfig config =
                fedchain::scenario::load_config(config_path);
            if (seed_override >= 0) {
                config.seed = static_cast<std::uint64_t>(seed_override);
            }
            fedchain::scenario::gen_data(config, gen_out);
            std::cout << "wrote " << gen_out << " and " << gen_out << ".meta\n";
            return 0;
        }
        if (inspect->parsed()) {
            fedchain::scenario::InspectOptions options;
            options.as_json = inspect_json;
            if (!asset_filter.empty()) options.filter.asset_id = asset_filter;
            if (!kind_filter.empty()) {
                using fedchain::ledger::PayloadKind;
                if (kind_filter == "stream_transfer") options.filter.kind = PayloadKind::StreamTransfer;
                else if (kind_filter == "model_update") options.filter.kind = PayloadKind::ModelUpdate;
                else if (kind_filter == "model_publish") options.filter.kind = PayloadKind::ModelPublish;
                else if (kind_filter == "contract_registration")
                    options.filter.kind = PayloadKind::ContractRegistration;
                else if (kind_filter == "alert") options.filter.kind = PayloadKind::Alert;
                else if (kind_filter == "round_announce") options.filter.kind = PayloadKind::RoundAnnounce;
                else {
                    std::cerr << "unknown payload kind: " << kind_filter << "\n";
                    return 1;
                }
            }
            return fedchain::scenario::inspect_ledger(ledger_path, options, std::cout);
        }
        if (verify_model->parsed()) {
            fedchain::Bytes bytes = read_binary(model_path);
            fedchain::Hash32 hash = fedchain::keys::sha256(bytes);
            // also prove the bytes decode as a model
            fedchain::ml::ModelParameters params = fedchain::ml::deserialize(bytes);
            std::cout << "param_hash=" << fedchain::to_hex(hash)
                      << " version=" << params.version << "\n";
            if (!expected_hash.empty() && fedchain::to_hex(hash) != expected_hash) {
                std::cerr << "hash mismatch: expected " << expected_hash << "\n";
                return 3;
            }
            if (!ledger_for_model.empty()) {
                auto instance = fedchain::ledger::LedgerInstance::load_jsonl(ledger_for_model);
                fedchain::ledger::QueryFilter filter;
                filter.kind = fedchain::ledger::PayloadKind::ModelPublish;
                bool found = false;
                for (const auto& tx : instance.query(filter)) {
                    const auto& p =
                        std::get<fedchain::ledger::ModelPublishPayload>(tx.payload);
                    if (p.param_hash_hex == fedchain::to_hex(hash)) {
                        found = true;
                        std::cout << "published as version " << p.version << "\n";
                        break;
                    }
                }
                if (!found) {
                    std::cerr << "no model_publish with this hash on the given ledger\n";
                    return 3;
                }
            }
            return 0;
        }
    } catch (const fedchain::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
