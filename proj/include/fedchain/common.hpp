#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedchain {

using Tick = std::uint64_t;
using Bytes = std::vector<std::uint8_t>;
using Hash32 = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

/// Failure categories surfaced by the library. Each operation documents
/// which codes it can raise.
enum class Errc {
    InvalidRecord,
    EmptyDataset,
    DoubleNormalize,
    BadTopology,
    UnnormalizedInput,
    CorruptModel,
    DuplicateParticipant,
    UnknownParticipant,
    NothingToSeal,
    NotPeers,
    SyncRejected,
    CorruptLedger,
    DuplicateContract,
    ModelUnavailable,
    ThresholdUnavailable,
    RoundInProgress,
    InsufficientParticipation,
    IncompatibleTopology,
    MixedBaseVersion,
    UnknownNode,
    TimeTravel,
    ConfigError,
    RunFailure,
    IoError,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Lowercase hex, two chars per byte. This is the only byte rendering used
/// in persisted JSON.
std::string to_hex(const std::uint8_t* data, std::size_t len);
std::string to_hex(const Bytes& bytes);

template <std::size_t N>
std::string to_hex(const std::array<std::uint8_t, N>& a) {
    return to_hex(a.data(), a.size());
}

/// Strict inverse of to_hex: rejects odd length, uppercase and non-hex
/// characters so a persisted byte field has exactly one valid encoding.
Bytes from_hex(std::string_view hex);

template <std::size_t N>
std::array<std::uint8_t, N> from_hex_fixed(std::string_view hex) {
    Bytes raw = from_hex(hex);
    if (raw.size() != N) {
        throw Error(Errc::CorruptLedger, "expected " + std::to_string(N) + " bytes, got " +
                                             std::to_string(raw.size()));
    }
    std::array<std::uint8_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = raw[i];
    return out;
}

Bytes bytes_of(std::string_view s);

/// Shortest round-trip decimal rendering of a double, used for CSV output.
std::string format_double(double v);

}  // namespace fedchain
