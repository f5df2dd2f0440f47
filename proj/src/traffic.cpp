#include "fedchain/traffic.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fedchain/rng.hpp"

namespace fedchain::traffic {

const std::array<std::string_view, feature_count>& feature_names() {
    static const std::array<std::string_view, feature_count> names = {
        "command_address",
        "response_address",
        "command_memory",
        "response_memory",
        "command_memory_count",
        "response_memory_count",
        "comm_read_function",
        "comm_write_fun",
        "resp_read_fun",
        "resp_write_fun",
        "sub_function",
        "command_length",
        "resp_length",
        "control_mode",
        "control_scheme",
        "pump",
        "crc_rate",
        "measurement",
    };
    return names;
}

bool is_valid_ipv6(const std::string& address) {
    unsigned char buf[sizeof(struct in6_addr)];
    return inet_pton(AF_INET6, address.c_str(), buf) == 1;
}

void validate(const MachineIdentity& identity) {
    if (identity.account_id.empty()) {
        throw Error(Errc::InvalidRecord, "machine account_id is empty");
    }
    if (!is_valid_ipv6(identity.address)) {
        throw Error(Errc::InvalidRecord, "machine address is not valid IPv6: " + identity.address);
    }
}

std::string_view label_name(FlowLabel label) {
    switch (label) {
        case FlowLabel::Normal: return "normal";
        case FlowLabel::CommandInjection: return "command_injection";
        case FlowLabel::ResponseInjection: return "response_injection";
        case FlowLabel::DenialOfService: return "dos";
    }
    return "normal";
}

FlowLabel label_from_name(std::string_view name) {
    if (name == "normal") return FlowLabel::Normal;
    if (name == "command_injection") return FlowLabel::CommandInjection;
    if (name == "response_injection") return FlowLabel::ResponseInjection;
    if (name == "dos") return FlowLabel::DenialOfService;
    throw Error(Errc::InvalidRecord, "unknown flow label: " + std::string(name));
}

std::string_view attack_name(AttackKind kind) {
    switch (kind) {
        case AttackKind::CommandInjection: return "command_injection";
        case AttackKind::ResponseInjection: return "response_injection";
        case AttackKind::DenialOfService: return "dos";
    }
    return "dos";
}

AttackKind attack_from_name(std::string_view name) {
    if (name == "command_injection") return AttackKind::CommandInjection;
    if (name == "response_injection") return AttackKind::ResponseInjection;
    if (name == "dos") return AttackKind::DenialOfService;
    throw Error(Errc::ConfigError, "unknown attack kind: " + std::string(name));
}

void validate(const DataStream& stream) {
    if (stream.stream_id == 0) {
        throw Error(Errc::InvalidRecord, "stream_id must be positive");
    }
    if (stream.size_kb < 0.0 || !std::isfinite(stream.size_kb)) {
        throw Error(Errc::InvalidRecord, "size_kb must be non-negative");
    }
    if (stream.sender_id == stream.receiver_id) {
        throw Error(Errc::InvalidRecord, "stream sender equals receiver");
    }
}

FeatureVector extract_features(const TrafficFlowRecord& record) {
    for (std::size_t i = 0; i < feature_count; ++i) {
        if (!std::isfinite(record.features[i])) {
            throw Error(Errc::InvalidRecord,
                        "non-finite value for feature " + std::string(feature_names()[i]));
        }
    }
    FeatureVector out;
    out.values = record.features;
    out.normalized = false;
    return out;
}

NormalizerStats fit_normalizer(const std::vector<TrafficFlowRecord>& records) {
    if (records.empty()) {
        throw Error(Errc::EmptyDataset, "cannot fit normalizer on empty record set");
    }
    NormalizerStats stats;
    stats.min = records.front().features;
    stats.max = records.front().features;
    for (const auto& record : records) {
        for (std::size_t i = 0; i < feature_count; ++i) {
            stats.min[i] = std::min(stats.min[i], record.features[i]);
            stats.max[i] = std::max(stats.max[i], record.features[i]);
        }
    }
    stats.fitted_on = records.size();
    return stats;
}

FeatureVector normalize(const FeatureVector& vector, const NormalizerStats& stats) {
    if (vector.normalized) {
        throw Error(Errc::DoubleNormalize, "feature vector is already normalized");
    }
    FeatureVector out;
    for (std::size_t i = 0; i < feature_count; ++i) {
        double range = stats.max[i] - stats.min[i];
        if (range == 0.0) {
            out.values[i] = 0.0;
        } else {
            out.values[i] = std::clamp((vector.values[i] - stats.min[i]) / range, 0.0, 1.0);
        }
    }
    out.normalized = true;
    return out;
}

namespace {

TrafficFlowRecord draw_normal_record(DeterministicRng& rng) {
    TrafficFlowRecord r;
    auto& f = r.features;
    f[command_address] = static_cast<double>(
        rng.uniform_int(baseline::address_min, baseline::address_max));
    f[response_address] = f[command_address];  // the responder echoes the unit
    f[command_memory] =
        std::round(rng.gaussian(baseline::command_memory_mean, baseline::command_memory_sd));
    f[response_memory] = std::round(f[command_memory] - baseline::response_memory_offset +
                                    rng.gaussian(0.0, baseline::response_memory_jitter_sd));
    f[command_memory_count] = static_cast<double>(
        rng.uniform_int(baseline::memory_count_min, baseline::memory_count_max));
    f[response_memory_count] = f[command_memory_count];
    f[comm_read_function] =
        baseline::read_function_codes[rng.uniform_int(0, baseline::read_function_codes.size() - 1)];
    f[comm_write_fun] = baseline::write_function_codes[rng.uniform_int(
        0, baseline::write_function_codes.size() - 1)];
    f[resp_read_fun] = f[comm_read_function];
    f[resp_write_fun] = f[comm_write_fun];
    f[sub_function] = static_cast<double>(
        rng.uniform_int(baseline::sub_function_min, baseline::sub_function_max));
    f[command_length] =
        static_cast<double>(rng.uniform_int(baseline::length_min, baseline::length_max));
    f[resp_length] = f[command_length];
    f[control_mode] = static_cast<double>(rng.uniform_int(0, baseline::control_mode_max));
    f[control_scheme] = static_cast<double>(rng.uniform_int(0, baseline::control_scheme_max));
    f[pump] = static_cast<double>(rng.uniform_int(0, baseline::pump_max));
    f[crc_rate] = static_cast<double>(rng.poisson(baseline::crc_rate_lambda));
    f[measurement] = baseline::measurement_setpoint +
                     baseline::measurement_mode_gain * f[control_mode] +
                     rng.gaussian(0.0, baseline::measurement_sd);
    r.label = FlowLabel::Normal;
    return r;
}

void perturb(TrafficFlowRecord& r, const AttackProfile& profile, DeterministicRng& rng) {
    const double s = profile.intensity;
    auto& f = r.features;
    switch (profile.kind) {
        case AttackKind::CommandInjection:
            f[command_memory] += s * attack::command_memory_shift;
            f[comm_write_fun] += s * attack::write_fun_shift;
            f[sub_function] += s * attack::sub_function_shift;
            f[measurement] += s * attack::measurement_shift;
            r.label = FlowLabel::CommandInjection;
            break;
        case AttackKind::ResponseInjection:
            f[response_memory] += s * attack::response_memory_shift;
            // decouple the measurement from the control mode
            f[measurement] = (1.0 - s) * f[measurement] +
                             s * rng.uniform(attack::decoupled_measurement_min,
                                             attack::decoupled_measurement_max);
            r.label = FlowLabel::ResponseInjection;
            break;
        case AttackKind::DenialOfService:
            f[crc_rate] += s * attack::crc_rate_surge;
            for (auto idx : {response_address, response_memory, response_memory_count,
                             resp_read_fun, resp_write_fun, resp_length}) {
                f[idx] *= (1.0 - s);
            }
            r.label = FlowLabel::DenialOfService;
            break;
    }
}

}  // namespace

std::vector<TrafficFlowRecord> generate_traffic(std::uint64_t seed, std::size_t n_normal,
                                                std::size_t n_anomalous,
                                                const AttackProfile& profile) {
    if (n_normal + n_anomalous == 0) {
        throw Error(Errc::EmptyDataset, "requested zero traffic records");
    }
    if (!(profile.intensity > 0.0 && profile.intensity <= 1.0) && n_anomalous > 0) {
        throw Error(Errc::ConfigError, "attack intensity must lie in (0, 1]");
    }
    std::vector<TrafficFlowRecord> out;
    out.reserve(n_normal + n_anomalous);
    // Each record draws from its own keyed substream, so the i-th record is
    // a pure function of (seed, i) regardless of the other counts.
    for (std::size_t i = 0; i < n_normal; ++i) {
        auto rng = DeterministicRng::keyed(seed, i);
        out.push_back(draw_normal_record(rng));
    }
    for (std::size_t i = 0; i < n_anomalous; ++i) {
        auto rng = DeterministicRng::keyed(seed, n_normal + i);
        TrafficFlowRecord r = draw_normal_record(rng);
        perturb(r, profile, rng);
        out.push_back(r);
    }
    return out;
}

std::string to_csv(const std::vector<TrafficFlowRecord>& records) {
    std::string out;
    for (std::size_t i = 0; i < feature_count; ++i) {
        out += feature_names()[i];
        out += ',';
    }
    out += "label\n";
    for (const auto& record : records) {
        if (!record.label) {
            throw Error(Errc::InvalidRecord, "CSV output requires labeled records");
        }
        for (std::size_t i = 0; i < feature_count; ++i) {
            if (!std::isfinite(record.features[i])) {
                throw Error(Errc::InvalidRecord, "non-finite feature value");
            }
            out += format_double(record.features[i]);
            out += ',';
        }
        out += label_name(*record.label);
        out += '\n';
    }
    return out;
}

std::vector<TrafficFlowRecord> from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(Errc::InvalidRecord, "empty CSV input");
    }
    std::string expected_header;
    for (std::size_t i = 0; i < feature_count; ++i) {
        expected_header += feature_names()[i];
        expected_header += ',';
    }
    expected_header += "label";
    if (line != expected_header) {
        throw Error(Errc::InvalidRecord, "unexpected CSV header");
    }
    std::vector<TrafficFlowRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string cell;
        TrafficFlowRecord record;
        for (std::size_t i = 0; i < feature_count; ++i) {
            if (!std::getline(cells, cell, ',')) {
                throw Error(Errc::InvalidRecord,
                            "line " + std::to_string(line_no) + ": too few columns");
            }
            try {
                record.features[i] = std::stod(cell);
            } catch (const std::exception&) {
                throw Error(Errc::InvalidRecord,
                            "line " + std::to_string(line_no) + ": bad numeric value");
            }
            if (!std::isfinite(record.features[i])) {
                throw Error(Errc::InvalidRecord,
                            "line " + std::to_string(line_no) + ": non-finite value");
            }
        }
        if (!std::getline(cells, cell, ',')) {
            throw Error(Errc::InvalidRecord, "line " + std::to_string(line_no) + ": missing label");
        }
        record.label = label_from_name(cell);
        records.push_back(record);
    }
    return records;
}

std::string generator_metadata(std::uint64_t seed, std::size_t n_normal, std::size_t n_anomalous,
                               const AttackProfile& profile) {
    std::vector<std::pair<AttackProfile, std::size_t>> groups;
    if (n_anomalous > 0) {
        groups.emplace_back(profile, n_anomalous);
    }
    return generator_metadata(seed, n_normal, groups);
}

std::string generator_metadata(
    std::uint64_t seed, std::size_t n_normal,
    const std::vector<std::pair<AttackProfile, std::size_t>>& attack_groups) {
    std::string out;
    auto kv = [&out](std::string_view key, const std::string& value) {
        out += key;
        out += '=';
        out += value;
        out += '\n';
    };
    std::size_t n_anomalous = 0;
    for (const auto& [profile, count] : attack_groups) n_anomalous += count;
    kv("seed", std::to_string(seed));
    kv("n_normal", std::to_string(n_normal));
    kv("n_anomalous", std::to_string(n_anomalous));
    for (std::size_t i = 0; i < attack_groups.size(); ++i) {
        const auto& [profile, count] = attack_groups[i];
        std::string prefix = "attack." + std::to_string(i) + ".";
        kv(prefix + "kind", std::string(attack_name(profile.kind)));
        kv(prefix + "intensity", format_double(profile.intensity));
        kv(prefix + "count", std::to_string(count));
    }
    kv("baseline.address_range",
       std::to_string(baseline::address_min) + ".." + std::to_string(baseline::address_max));
    kv("baseline.command_memory", format_double(baseline::command_memory_mean) + "+-" +
                                      format_double(baseline::command_memory_sd));
    kv("baseline.response_memory_offset", format_double(baseline::response_memory_offset));
    kv("baseline.response_memory_jitter_sd",
       format_double(baseline::response_memory_jitter_sd));
    kv("baseline.crc_rate_lambda", format_double(baseline::crc_rate_lambda));
    kv("baseline.measurement_setpoint", format_double(baseline::measurement_setpoint));
    kv("baseline.measurement_mode_gain", format_double(baseline::measurement_mode_gain));
    kv("baseline.measurement_sd", format_double(baseline::measurement_sd));
    return out;
}

}  // namespace fedchain::traffic
