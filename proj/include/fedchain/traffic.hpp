#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedchain/common.hpp"

namespace fedchain::traffic {

inline constexpr std::size_t feature_count = 18;

/// Canonical feature order of the flow schema. Index into feature vectors
/// with these values; the order is load-bearing for every downstream module
/// and for the CSV format.
enum Feature : std::size_t {
    command_address = 0,
    response_address,
    command_memory,
    response_memory,
    command_memory_count,
    response_memory_count,
    comm_read_function,
    comm_write_fun,
    resp_read_fun,
    resp_write_fun,
    sub_function,
    command_length,
    resp_length,
    control_mode,
    control_scheme,
    pump,
    crc_rate,
    measurement,
};

const std::array<std::string_view, feature_count>& feature_names();

enum class PublishRole { Publisher, Subscriber };
enum class DirectionRole { Sender, Receiver };

struct MachineIdentity {
    std::string account_id;
    std::string address;  // IPv6 textual form
    PublishRole publish_role = PublishRole::Publisher;
    DirectionRole direction_role = DirectionRole::Sender;
    std::vector<std::pair<std::string, std::string>> internals;
};

bool is_valid_ipv6(const std::string& address);

/// Throws InvalidRecord when an identity violates its invariants.
void validate(const MachineIdentity& identity);

enum class FlowLabel { Normal, CommandInjection, ResponseInjection, DenialOfService };

std::string_view label_name(FlowLabel label);
FlowLabel label_from_name(std::string_view name);

struct TrafficFlowRecord {
    std::array<double, feature_count> features{};
    std::optional<FlowLabel> label;
};

struct DataStream {
    std::uint64_t stream_id = 0;
    double size_kb = 0.0;
    std::string timestamp;  // opaque token, stored verbatim
    std::string sender_id;
    std::string receiver_id;
    TrafficFlowRecord flow;
};

void validate(const DataStream& stream);

struct FeatureVector {
    std::array<double, feature_count> values{};
    bool normalized = false;
};

struct NormalizerStats {
    std::array<double, feature_count> min{};
    std::array<double, feature_count> max{};
    std::uint64_t fitted_on = 0;
};

enum class AttackKind { CommandInjection, ResponseInjection, DenialOfService };

struct AttackProfile {
    AttackKind kind = AttackKind::DenialOfService;
    double intensity = 1.0;  // in (0, 1]
};

std::string_view attack_name(AttackKind kind);
AttackKind attack_from_name(std::string_view name);

/// Parameters of the synthetic generator's baseline distributions. Normal
/// traffic models a command/response exchange, so the response side echoes
/// the command side: response_address, response_memory_count, resp_read_fun,
/// resp_write_fun and resp_length repeat their command counterparts, and
/// response_memory sits a fixed offset below command_memory plus jitter.
/// The attack profiles perturb individual features after the draw, which
/// breaks exactly these couplings. Tests derive expected moments from the
/// constants here.
namespace baseline {
inline constexpr std::uint64_t address_min = 1, address_max = 4;
inline constexpr double command_memory_mean = 30000.0, command_memory_sd = 500.0;
inline constexpr double response_memory_offset = 10000.0;  // below command_memory
inline constexpr double response_memory_jitter_sd = 50.0;
inline constexpr std::uint64_t memory_count_min = 4, memory_count_max = 16;
inline constexpr std::array<double, 4> read_function_codes{1, 2, 3, 4};
inline constexpr std::array<double, 3> write_function_codes{5, 6, 16};
inline constexpr std::uint64_t sub_function_min = 0, sub_function_max = 4;
inline constexpr std::uint64_t length_min = 12, length_max = 20;
inline constexpr std::uint64_t control_mode_max = 2;   // {0, 1, 2}
inline constexpr std::uint64_t control_scheme_max = 1; // {0, 1}
inline constexpr std::uint64_t pump_max = 1;           // {0, 1}
inline constexpr double crc_rate_lambda = 2.0;
inline constexpr double measurement_setpoint = 50.0;
inline constexpr double measurement_mode_gain = 5.0;  // measurement tracks control_mode
inline constexpr double measurement_sd = 1.5;
}  // namespace baseline

/// Attack perturbation magnitudes at intensity 1.0; scaled linearly by the
/// profile's intensity.
namespace attack {
inline constexpr double command_memory_shift = 3000.0;
inline constexpr double write_fun_shift = 20.0;
inline constexpr double sub_function_shift = 10.0;
inline constexpr double measurement_shift = 15.0;
inline constexpr double response_memory_shift = 3000.0;
inline constexpr double decoupled_measurement_min = 20.0;
inline constexpr double decoupled_measurement_max = 80.0;
inline constexpr double crc_rate_surge = 40.0;
}  // namespace attack

FeatureVector extract_features(const TrafficFlowRecord& record);

NormalizerStats fit_normalizer(const std::vector<TrafficFlowRecord>& records);

FeatureVector normalize(const FeatureVector& vector, const NormalizerStats& stats);

std::vector<TrafficFlowRecord> generate_traffic(std::uint64_t seed, std::size_t n_normal,
                                                std::size_t n_anomalous,
                                                const AttackProfile& profile);

/// CSV flow-record format: header row of the 18 canonical names plus
/// `label`, one record per line. All records must carry a label.
std::string to_csv(const std::vector<TrafficFlowRecord>& records);
std::vector<TrafficFlowRecord> from_csv(const std::string& csv);

/// key=value sidecar echoing the generator arguments and baseline constants.
std::string generator_metadata(std::uint64_t seed, std::size_t n_normal, std::size_t n_anomalous,
                               const AttackProfile& profile);
std::string generator_metadata(
    std::uint64_t seed, std::size_t n_normal,
    const std::vector<std::pair<AttackProfile, std::size_t>>& attack_groups);

}  // namespace fedchain::traffic
