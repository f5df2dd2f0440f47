#include "fedchain/common.hpp"

#include <charconv>

namespace fedchain {

std::string_view errc_name(Errc code) {
    switch (code) {
        case Errc::InvalidRecord: return "InvalidRecord";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::DoubleNormalize: return "DoubleNormalize";
        case Errc::BadTopology: return "BadTopology";
        case Errc::UnnormalizedInput: return "UnnormalizedInput";
        case Errc::CorruptModel: return "CorruptModel";
        case Errc::DuplicateParticipant: return "DuplicateParticipant";
        case Errc::UnknownParticipant: return "UnknownParticipant";
        case Errc::NothingToSeal: return "NothingToSeal";
        case Errc::NotPeers: return "NotPeers";
        case Errc::SyncRejected: return "SyncRejected";
        case Errc::CorruptLedger: return "CorruptLedger";
        case Errc::DuplicateContract: return "DuplicateContract";
        case Errc::ModelUnavailable: return "ModelUnavailable";
        case Errc::ThresholdUnavailable: return "ThresholdUnavailable";
        case Errc::RoundInProgress: return "RoundInProgress";
        case Errc::InsufficientParticipation: return "InsufficientParticipation";
        case Errc::IncompatibleTopology: return "IncompatibleTopology";
        case Errc::MixedBaseVersion: return "MixedBaseVersion";
        case Errc::UnknownNode: return "UnknownNode";
        case Errc::TimeTravel: return "TimeTravel";
        case Errc::ConfigError: return "ConfigError";
        case Errc::RunFailure: return "RunFailure";
        case Errc::IoError: return "IoError";
    }
    return "UnknownError";
}

namespace {
constexpr char hex_digits[] = "0123456789abcdef";
}

std::string to_hex(const std::uint8_t* data, std::size_t len) {
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(hex_digits[data[i] >> 4]);
        out.push_back(hex_digits[data[i] & 0x0f]);
    }
    return out;
}

std::string to_hex(const Bytes& bytes) { return to_hex(bytes.data(), bytes.size()); }

namespace {
int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;  // uppercase intentionally rejected
}
}  // namespace

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) {
        throw Error(Errc::CorruptLedger, "odd-length hex string");
    }
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_value(hex[i]);
        int lo = hex_value(hex[i + 1]);
        if (hi < 0 || lo < 0) {
            throw Error(Errc::CorruptLedger, "invalid hex character");
        }
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

Bytes bytes_of(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw Error(Errc::IoError, "double formatting failed");
    }
    return std::string(buf, ptr);
}

}  // namespace fedchain
