#include "fedchain/ledger.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fedchain::ledger {

using nlohmann::json;

Hash32 canonical_hash(const Bytes& bytes) { return keys::sha256(bytes); }

Bytes canonical_bytes(const json& value) { return bytes_of(value.dump()); }

// -- payload serialization ----------------------------------------------------

PayloadKind kind_of(const Payload& payload) {
    return static_cast<PayloadKind>(payload.index());
}

std::string_view payload_kind_name(PayloadKind kind) {
    switch (kind) {
        case PayloadKind::StreamTransfer: return "stream_transfer";
        case PayloadKind::ModelUpdate: return "model_update";
        case PayloadKind::ModelPublish: return "model_publish";
        case PayloadKind::ContractRegistration: return "contract_registration";
        case PayloadKind::Alert: return "alert";
        case PayloadKind::RoundAnnounce: return "round_announce";
    }
    return "unknown";
}

namespace {

PayloadKind payload_kind_from_name(const std::string& name) {
    if (name == "stream_transfer") return PayloadKind::StreamTransfer;
    if (name == "model_update") return PayloadKind::ModelUpdate;
    if (name == "model_publish") return PayloadKind::ModelPublish;
    if (name == "contract_registration") return PayloadKind::ContractRegistration;
    if (name == "alert") return PayloadKind::Alert;
    if (name == "round_announce") return PayloadKind::RoundAnnounce;
    throw Error(Errc::CorruptLedger, "unknown payload kind: " + name);
}

double finite_number(const json& j, const char* field) {
    if (!j.is_number()) {
        throw Error(Errc::CorruptLedger, std::string("field is not a number: ") + field);
    }
    double v = j.get<double>();
    if (!std::isfinite(v)) {
        throw Error(Errc::CorruptLedger, std::string("non-finite number: ") + field);
    }
    return v;
}

std::uint64_t unsigned_number(const json& j, const char* field) {
    if (!j.is_number_unsigned()) {
        throw Error(Errc::CorruptLedger, std::string("field is not an unsigned integer: ") + field);
    }
    return j.get<std::uint64_t>();
}

std::string string_field(const json& j, const char* field) {
    if (!j.is_string()) {
        throw Error(Errc::CorruptLedger, std::string("field is not a string: ") + field);
    }
    return j.get<std::string>();
}

const json& require(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) {
        throw Error(Errc::CorruptLedger, std::string("missing field: ") + field);
    }
    return *it;
}

}  // namespace

json payload_to_json(const Payload& payload) {
    json j;
    j["kind"] = std::string(payload_kind_name(kind_of(payload)));
    std::visit(
        [&j](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, StreamTransferPayload>) {
                j["stream_id"] = p.stream_id;
                j["sender_id"] = p.sender_id;
                j["receiver_id"] = p.receiver_id;
                j["size_kb"] = p.size_kb;
                j["timestamp"] = p.timestamp;
                j["session_id"] = p.session_id;
                j["rmse"] = p.rmse;
                j["model_version"] = p.model_version;
            } else if constexpr (std::is_same_v<T, ModelUpdatePayload>) {
                j["miner_id"] = p.miner_id;
                j["base_version"] = p.base_version;
                j["param_hash"] = p.param_hash_hex;
                j["sample_count"] = p.sample_count;
                j["local_loss"] = p.local_loss;
                j["miner_signature"] = p.miner_signature_hex;
            } else if constexpr (std::is_same_v<T, ModelPublishPayload>) {
                j["version"] = p.version;
                j["param_hash"] = p.param_hash_hex;
            } else if constexpr (std::is_same_v<T, ContractRegistrationPayload>) {
                j["contract_id"] = p.contract_id;
                if (p.match_sender) j["match_sender"] = *p.match_sender;
                if (p.match_receiver) j["match_receiver"] = *p.match_receiver;
                j["match_stream_ids"] = p.match_stream_ids;
                j["route_id"] = p.route_id;
                j["model_ref"] = p.model_ref;
                j["threshold_quantile"] = p.threshold_quantile;
            } else if constexpr (std::is_same_v<T, AlertPayload>) {
                j["stream_id"] = p.stream_id;
                j["rmse"] = p.rmse;
                j["contract_id"] = p.contract_id;
            } else if constexpr (std::is_same_v<T, RoundAnnouncePayload>) {
                j["round_id"] = p.round_id;
                j["base_version"] = p.base_version;
                j["min_participants"] = p.min_participants;
                j["deadline_ticks"] = p.deadline_ticks;
                j["selection_policy"] = p.selection_policy;
                j["threshold_quantile"] = p.threshold_quantile;
            }
        },
        payload);
    return j;
}

Payload payload_from_json(const json& j) {
    PayloadKind kind = payload_kind_from_name(string_field(require(j, "kind"), "kind"));
    switch (kind) {
        case PayloadKind::StreamTransfer: {
            StreamTransferPayload p;
            p.stream_id = unsigned_number(require(j, "stream_id"), "stream_id");
            p.sender_id = string_field(require(j, "sender_id"), "sender_id");
            p.receiver_id = string_field(require(j, "receiver_id"), "receiver_id");
            p.size_kb = finite_number(require(j, "size_kb"), "size_kb");
            p.timestamp = string_field(require(j, "timestamp"), "timestamp");
            p.session_id = unsigned_number(require(j, "session_id"), "session_id");
            p.rmse = finite_number(require(j, "rmse"), "rmse");
            p.model_version = unsigned_number(require(j, "model_version"), "model_version");
            return p;
        }
        case PayloadKind::ModelUpdate: {
            ModelUpdatePayload p;
            p.miner_id = string_field(require(j, "miner_id"), "miner_id");
            p.base_version = unsigned_number(require(j, "base_version"), "base_version");
            p.param_hash_hex = string_field(require(j, "param_hash"), "param_hash");
            p.sample_count = unsigned_number(require(j, "sample_count"), "sample_count");
            p.local_loss = finite_number(require(j, "local_loss"), "local_loss");
            p.miner_signature_hex =
                string_field(require(j, "miner_signature"), "miner_signature");
            return p;
        }
        case PayloadKind::ModelPublish: {
            ModelPublishPayload p;
            p.version = unsigned_number(require(j, "version"), "version");
            p.param_hash_hex = string_field(require(j, "param_hash"), "param_hash");
            return p;
        }
        case PayloadKind::ContractRegistration: {
            ContractRegistrationPayload p;
            p.contract_id = unsigned_number(require(j, "contract_id"), "contract_id");
            if (j.contains("match_sender")) {
                p.match_sender = string_field(j.at("match_sender"), "match_sender");
            }
            if (j.contains("match_receiver")) {
                p.match_receiver = string_field(j.at("match_receiver"), "match_receiver");
            }
            for (const auto& id : require(j, "match_stream_ids")) {
                p.match_stream_ids.push_back(unsigned_number(id, "match_stream_ids"));
            }
            p.route_id = unsigned_number(require(j, "route_id"), "route_id");
            p.model_ref = string_field(require(j, "model_ref"), "model_ref");
            p.threshold_quantile =
                finite_number(require(j, "threshold_quantile"), "threshold_quantile");
            return p;
        }
        case PayloadKind::Alert: {
            AlertPayload p;
            p.stream_id = unsigned_number(require(j, "stream_id"), "stream_id");
            p.rmse = finite_number(require(j, "rmse"), "rmse");
            p.contract_id = unsigned_number(require(j, "contract_id"), "contract_id");
            return p;
        }
        case PayloadKind::RoundAnnounce: {
            RoundAnnouncePayload p;
            p.round_id = unsigned_number(require(j, "round_id"), "round_id");
            p.base_version = unsigned_number(require(j, "base_version"), "base_version");
            p.min_participants =
                unsigned_number(require(j, "min_participants"), "min_participants");
            p.deadline_ticks = unsigned_number(require(j, "deadline_ticks"), "deadline_ticks");
            p.selection_policy = string_field(require(j, "selection_policy"), "selection_policy");
            p.threshold_quantile =
                finite_number(require(j, "threshold_quantile"), "threshold_quantile");
            return p;
        }
    }
    throw Error(Errc::CorruptLedger, "unreachable payload kind");
}

Bytes canonical_payload_bytes(const Payload& payload) {
    return canonical_bytes(payload_to_json(payload));
}

// -- transactions ---------------------------------------------------------------

Hash32 compute_tx_id(const Payload& payload, const std::string& issuer_id,
                     const std::string& asset_id) {
    Bytes material = canonical_payload_bytes(payload);
    material.insert(material.end(), issuer_id.begin(), issuer_id.end());
    material.insert(material.end(), asset_id.begin(), asset_id.end());
    return canonical_hash(material);
}

Transaction make_transaction(const std::string& asset_id, Payload payload,
                             const std::string& issuer_id, const keys::KeyPair& issuer_keys) {
    Transaction tx;
    tx.asset_id = asset_id;
    tx.issuer_id = issuer_id;
    tx.payload = std::move(payload);
    tx.signature = keys::sign(canonical_payload_bytes(tx.payload), issuer_keys.secret_key);
    tx.tx_id = compute_tx_id(tx.payload, issuer_id, asset_id);
    return tx;
}

namespace {

json tx_to_json(const Transaction& tx) {
    json j;
    j["asset_id"] = tx.asset_id;
    j["issuer_id"] = tx.issuer_id;
    j["payload"] = payload_to_json(tx.payload);
    j["signature"] = to_hex(tx.signature);
    j["tx_id"] = to_hex(tx.tx_id);
    return j;
}

Transaction tx_from_json(const json& j) {
    Transaction tx;
    tx.asset_id = string_field(require(j, "asset_id"), "asset_id");
    tx.issuer_id = string_field(require(j, "issuer_id"), "issuer_id");
    tx.payload = payload_from_json(require(j, "payload"));
    tx.signature = from_hex_fixed<64>(string_field(require(j, "signature"), "signature"));
    tx.tx_id = from_hex_fixed<32>(string_field(require(j, "tx_id"), "tx_id"));
    return tx;
}

}  // namespace

// -- blocks ----------------------------------------------------------------------

Bytes block_header_bytes(const Block& block) {
    json j;
    j["height"] = block.height;
    j["prev_hash"] = to_hex(block.prev_hash);
    j["tick"] = block.tick;
    j["tx_root"] = to_hex(block.tx_root);
    j["validator_id"] = block.validator_id;
    return canonical_bytes(j);
}

Hash32 block_hash(const Block& block) { return canonical_hash(block_header_bytes(block)); }

Hash32 compute_tx_root(const std::vector<Transaction>& txs) {
    Bytes concat;
    concat.reserve(txs.size() * 32);
    for (const auto& tx : txs) {
        concat.insert(concat.end(), tx.tx_id.begin(), tx.tx_id.end());
    }
    return canonical_hash(concat);
}

json block_to_json(const Block& block) {
    json j;
    j["height"] = block.height;
    j["prev_hash"] = to_hex(block.prev_hash);
    j["tick"] = block.tick;
    j["tx_root"] = to_hex(block.tx_root);
    json txs = json::array();
    for (const auto& tx : block.txs) {
        txs.push_back(tx_to_json(tx));
    }
    j["txs"] = std::move(txs);
    j["validator_id"] = block.validator_id;
    j["validator_signature"] = to_hex(block.validator_signature);
    return j;
}

Block block_from_json(const json& j) {
    Block block;
    block.height = unsigned_number(require(j, "height"), "height");
    block.prev_hash = from_hex_fixed<32>(string_field(require(j, "prev_hash"), "prev_hash"));
    block.tick = unsigned_number(require(j, "tick"), "tick");
    block.tx_root = from_hex_fixed<32>(string_field(require(j, "tx_root"), "tx_root"));
    const json& txs = require(j, "txs");
    if (!txs.is_array()) {
        throw Error(Errc::CorruptLedger, "txs is not an array");
    }
    for (const auto& tx : txs) {
        block.txs.push_back(tx_from_json(tx));
    }
    block.validator_id = string_field(require(j, "validator_id"), "validator_id");
    block.validator_signature =
        from_hex_fixed<64>(string_field(require(j, "validator_signature"), "validator_signature"));
    return block;
}

std::string_view reject_reason_name(RejectReason reason) {
    switch (reason) {
        case RejectReason::None: return "none";
        case RejectReason::UnknownAsset: return "unknown_asset";
        case RejectReason::UnknownIssuer: return "unknown_issuer";
        case RejectReason::BadSignature: return "bad_signature";
        case RejectReason::NotAssetIssuer: return "not_asset_issuer";
        case RejectReason::TxIdMismatch: return "tx_id_mismatch";
    }
    return "none";
}

std::string_view verify_failure_name(VerifyFailure failure) {
    switch (failure) {
        case VerifyFailure::None: return "none";
        case VerifyFailure::BadGenesis: return "bad_genesis";
        case VerifyFailure::BadHeight: return "bad_height";
        case VerifyFailure::BrokenLink: return "broken_link";
        case VerifyFailure::TxRootMismatch: return "tx_root_mismatch";
        case VerifyFailure::TxIdMismatch: return "tx_id_mismatch";
        case VerifyFailure::BadTxSignature: return "bad_tx_signature";
        case VerifyFailure::BadValidatorSignature: return "bad_validator_signature";
        case VerifyFailure::WrongValidator: return "wrong_validator";
        case VerifyFailure::AssetNotIssued: return "asset_not_issued";
        case VerifyFailure::UnknownIssuer: return "unknown_issuer";
        case VerifyFailure::ForkDetected: return "fork_detected";
    }
    return "none";
}

// -- instance ----------------------------------------------------------------------

LedgerInstance::LedgerInstance(std::string authority_id, std::set<std::string> issued_assets,
                               std::set<std::string> peers, VerifyContext context,
                               const keys::KeyPair& authority_keys, Tick genesis_tick)
    : authority_id_(std::move(authority_id)),
      issued_assets_(std::move(issued_assets)),
      peers_(std::move(peers)),
      context_(std::move(context)) {
    auto key_it = context_.participant_keys.find(authority_id_);
    if (key_it == context_.participant_keys.end() ||
        key_it->second != authority_keys.public_key) {
        throw Error(Errc::ConfigError, "authority key not registered for " + authority_id_);
    }
    Block genesis;
    genesis.height = 0;
    genesis.prev_hash = Hash32{};  // 32 zero bytes
    genesis.tx_root = compute_tx_root({});
    genesis.validator_id = authority_id_;
    genesis.tick = genesis_tick;
    genesis.validator_signature =
        keys::sign(block_header_bytes(genesis), authority_keys.secret_key);
    chain_.push_back(std::move(genesis));
}

SubmitResult LedgerInstance::submit(const Transaction& tx) {
    auto asset_it = context_.assets.find(tx.asset_id);
    if (asset_it == context_.assets.end()) {
        return {SubmitResult::Kind::Rejected, RejectReason::UnknownAsset, {}};
    }
    if (compute_tx_id(tx.payload, tx.issuer_id, tx.asset_id) != tx.tx_id) {
        return {SubmitResult::Kind::Rejected, RejectReason::TxIdMismatch, {}};
    }
    auto key_it = context_.participant_keys.find(tx.issuer_id);
    if (key_it == context_.participant_keys.end()) {
        return {SubmitResult::Kind::Rejected, RejectReason::UnknownIssuer, {}};
    }
    if (!keys::verify(canonical_payload_bytes(tx.payload), tx.signature, key_it->second)) {
        return {SubmitResult::Kind::Rejected, RejectReason::BadSignature, {}};
    }
    const auto& issuers = asset_it->second.issuer_ids;
    if (std::find(issuers.begin(), issuers.end(), tx.issuer_id) == issuers.end()) {
        return {SubmitResult::Kind::Rejected, RejectReason::NotAssetIssuer, {}};
    }
    if (issued_assets_.contains(tx.asset_id)) {
        pending_.push_back(tx);
        return {SubmitResult::Kind::Accepted, RejectReason::None, {}};
    }
    return {SubmitResult::Kind::Forwarded, RejectReason::None, asset_it->second.authority_id};
}

const Block& LedgerInstance::seal_block(const keys::KeyPair& authority_keys, Tick now) {
    if (pending_.empty()) {
        throw Error(Errc::NothingToSeal, "no pending transactions on " + authority_id_);
    }
    Block block;
    block.height = chain_.back().height + 1;
    block.prev_hash = block_hash(chain_.back());
    block.txs.assign(pending_.begin(), pending_.end());
    pending_.clear();
    block.tx_root = compute_tx_root(block.txs);
    block.validator_id = authority_id_;
    block.tick = now;
    block.validator_signature = keys::sign(block_header_bytes(block), authority_keys.secret_key);
    chain_.push_back(std::move(block));
    return chain_.back();
}

VerifyResult LedgerInstance::verify_section(const std::vector<Block>& section,
                                            const std::string& expected_validator) const {
    auto key_it = context_.participant_keys.find(expected_validator);
    if (key_it == context_.participant_keys.end()) {
        return VerifyResult::bad(0, VerifyFailure::UnknownIssuer, expected_validator);
    }
    const keys::PublicKey& validator_key = key_it->second;

    for (std::size_t h = 0; h < section.size(); ++h) {
        const Block& block = section[h];
        if (block.height != h) {
            return VerifyResult::bad(h, VerifyFailure::BadHeight, expected_validator);
        }
        if (h == 0) {
            if (block.prev_hash != Hash32{}) {
                return VerifyResult::bad(0, VerifyFailure::BadGenesis, expected_validator);
            }
        } else if (block.prev_hash != block_hash(section[h - 1])) {
            return VerifyResult::bad(h, VerifyFailure::BrokenLink, expected_validator);
        }
        if (block.validator_id != expected_validator) {
            return VerifyResult::bad(h, VerifyFailure::WrongValidator, expected_validator);
        }
        if (block.tx_root != compute_tx_root(block.txs)) {
            return VerifyResult::bad(h, VerifyFailure::TxRootMismatch, expected_validator);
        }
        if (!keys::verify(block_header_bytes(block), block.validator_signature, validator_key)) {
            return VerifyResult::bad(h, VerifyFailure::BadValidatorSignature, expected_validator);
        }
        for (const Transaction& tx : block.txs) {
            if (compute_tx_id(tx.payload, tx.issuer_id, tx.asset_id) != tx.tx_id) {
                return VerifyResult::bad(h, VerifyFailure::TxIdMismatch, expected_validator);
            }
            auto issuer_it = context_.participant_keys.find(tx.issuer_id);
            if (issuer_it == context_.participant_keys.end()) {
                return VerifyResult::bad(h, VerifyFailure::UnknownIssuer, expected_validator);
            }
            if (!keys::verify(canonical_payload_bytes(tx.payload), tx.signature,
                              issuer_it->second)) {
                return VerifyResult::bad(h, VerifyFailure::BadTxSignature, expected_validator);
            }
            auto asset_it = context_.assets.find(tx.asset_id);
            if (asset_it == context_.assets.end() ||
                asset_it->second.authority_id != expected_validator) {
                return VerifyResult::bad(h, VerifyFailure::AssetNotIssued, expected_validator);
            }
        }
    }
    return VerifyResult::ok();
}

VerifyResult LedgerInstance::verify_chain() const {
    if (chain_.empty()) {
        return VerifyResult::bad(0, VerifyFailure::BadGenesis);
    }
    VerifyResult local = verify_section(chain_, authority_id_);
    if (!local.valid) {
        local.section.clear();  // local chain
        return local;
    }
    for (const auto& [authority, section] : foreign_) {
        VerifyResult result = verify_section(section, authority);
        if (!result.valid) {
            return result;
        }
    }
    return VerifyResult::ok();
}

std::size_t LedgerInstance::sync(LedgerInstance& a, LedgerInstance& b) {
    if (!a.peers_.contains(b.authority_id_) || !b.peers_.contains(a.authority_id_)) {
        throw Error(Errc::NotPeers,
                    a.authority_id_ + " and " + b.authority_id_ + " are not peers");
    }
    struct Plan {
        std::vector<Block> candidate;
        std::size_t incoming = 0;
    };
    auto plan_pull = [](const LedgerInstance& dst, const LedgerInstance& src) -> Plan {
        Plan plan;
        if (auto it = dst.foreign_.find(src.authority_id_); it != dst.foreign_.end()) {
            plan.candidate = it->second;
        }
        const std::vector<Block>& source = src.chain_;
        if (plan.candidate.size() > source.size()) {
            throw SyncRejectedError(source.size(), VerifyFailure::ForkDetected);
        }
        // the overlapping prefix must be the same chain
        for (std::size_t h = 0; h < plan.candidate.size(); ++h) {
            if (block_hash(plan.candidate[h]) != block_hash(source[h])) {
                throw SyncRejectedError(h, VerifyFailure::ForkDetected);
            }
        }
        plan.incoming = source.size() - plan.candidate.size();
        if (plan.incoming > 0) {
            plan.candidate.insert(plan.candidate.end(), source.begin() + plan.candidate.size(),
                                  source.end());
            VerifyResult verdict = dst.verify_section(plan.candidate, src.authority_id_);
            if (!verdict.valid) {
                throw SyncRejectedError(verdict.height, verdict.reason);
            }
        }
        return plan;
    };
    // both directions are verified before either is committed, so a rejected
    // sync leaves both instances byte-identical
    Plan for_a = plan_pull(a, b);
    Plan for_b = plan_pull(b, a);
    if (for_a.incoming > 0) a.foreign_[b.authority_id_] = std::move(for_a.candidate);
    if (for_b.incoming > 0) b.foreign_[a.authority_id_] = std::move(for_b.candidate);
    return for_a.incoming + for_b.incoming;
}

namespace {

bool filter_matches(const QueryFilter& filter, const Transaction& tx, std::uint64_t height) {
    if (filter.asset_id && tx.asset_id != *filter.asset_id) return false;
    if (filter.kind && kind_of(tx.payload) != *filter.kind) return false;
    if (filter.min_height && height < *filter.min_height) return false;
    if (filter.max_height && height > *filter.max_height) return false;
    return true;
}

}  // namespace

std::vector<Transaction> LedgerInstance::query(const QueryFilter& filter) const {
    std::vector<Transaction> out;
    for (const Block& block : chain_) {
        for (const Transaction& tx : block.txs) {
            if (filter_matches(filter, tx, block.height)) {
                out.push_back(tx);
            }
        }
    }
    if (filter.include_foreign) {
        for (const auto& [authority, section] : foreign_) {
            for (const Block& block : section) {
                for (const Transaction& tx : block.txs) {
                    if (filter_matches(filter, tx, block.height)) {
                        out.push_back(tx);
                    }
                }
            }
        }
    }
    return out;
}

// -- persistence ----------------------------------------------------------------------

namespace {

constexpr std::string_view ledger_format = "fedchain-ledger-v1";

json header_without_checksum(const LedgerInstance& instance) {
    json j;
    j["authority_id"] = instance.authority_id();
    j["format"] = std::string(ledger_format);
    j["issued_assets"] = json::array();
    for (const auto& asset : instance.issued_assets()) {
        j["issued_assets"].push_back(asset);
    }
    j["peers"] = json::array();
    for (const auto& peer : instance.peers()) {
        j["peers"].push_back(peer);
    }
    json participants = json::object();
    for (const auto& [id, key] : instance.context().participant_keys) {
        participants[id] = to_hex(key);
    }
    j["participants"] = std::move(participants);
    json assets = json::object();
    for (const auto& [asset, rule] : instance.context().assets) {
        json r;
        r["authority"] = rule.authority_id;
        r["issuers"] = rule.issuer_ids;
        assets[asset] = std::move(r);
    }
    j["asset_rules"] = std::move(assets);
    return j;
}

}  // namespace

void LedgerInstance::save_jsonl(const std::filesystem::path& path) const {
    json header = header_without_checksum(*this);
    header["checksum"] = to_hex(canonical_hash(canonical_bytes(header)));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::IoError, "cannot open for writing: " + path.string());
    }
    out << header.dump() << '\n';
    for (const Block& block : chain_) {
        out << block_to_json(block).dump() << '\n';
    }
    for (const auto& [authority, section] : foreign_) {
        for (const Block& block : section) {
            out << block_to_json(block).dump() << '\n';
        }
    }
    if (!out) {
        throw Error(Errc::IoError, "write failed: " + path.string());
    }
}

LedgerInstance LedgerInstance::load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::IoError, "cannot open ledger file: " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;

    auto parse_canonical = [&line, &line_no](const std::string& text) -> json {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw Error(Errc::CorruptLedger,
                        "line " + std::to_string(line_no) + ": " + e.what());
        }
        // a canonical file has exactly one valid byte encoding per line
        if (j.dump() != text) {
            throw Error(Errc::CorruptLedger,
                        "line " + std::to_string(line_no) + ": non-canonical encoding");
        }
        return j;
    };

    if (!std::getline(in, line)) {
        throw Error(Errc::CorruptLedger, "empty ledger file");
    }
    ++line_no;
    json header = parse_canonical(line);

    if (!header.contains("checksum")) {
        throw Error(Errc::CorruptLedger, "header missing checksum");
    }
    std::string checksum = string_field(header.at("checksum"), "checksum");
    json unchecked = header;
    unchecked.erase("checksum");
    if (to_hex(canonical_hash(canonical_bytes(unchecked))) != checksum) {
        throw Error(Errc::CorruptLedger, "header checksum mismatch");
    }
    if (string_field(require(header, "format"), "format") != ledger_format) {
        throw Error(Errc::CorruptLedger, "unsupported ledger format");
    }

    LedgerInstance instance;
    instance.authority_id_ = string_field(require(header, "authority_id"), "authority_id");
    for (const auto& asset : require(header, "issued_assets")) {
        instance.issued_assets_.insert(string_field(asset, "issued_assets"));
    }
    for (const auto& peer : require(header, "peers")) {
        instance.peers_.insert(string_field(peer, "peers"));
    }
    for (const auto& [id, hex] : require(header, "participants").items()) {
        instance.context_.participant_keys[id] =
            from_hex_fixed<32>(string_field(hex, "participants"));
    }
    for (const auto& [asset, rule] : require(header, "asset_rules").items()) {
        AssetRule r;
        r.authority_id = string_field(require(rule, "authority"), "authority");
        for (const auto& issuer : require(rule, "issuers")) {
            r.issuer_ids.push_back(string_field(issuer, "issuers"));
        }
        instance.context_.assets[asset] = std::move(r);
    }

    std::string current_section;
    bool in_foreign = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            throw Error(Errc::CorruptLedger, "line " + std::to_string(line_no) + ": empty line");
        }
        Block block = block_from_json(parse_canonical(line));
        if (block.validator_id == instance.authority_id_) {
            if (in_foreign) {
                throw Error(Errc::CorruptLedger,
                            "line " + std::to_string(line_no) + ": local block after foreign");
            }
            if (block.height != instance.chain_.size()) {
                throw Error(Errc::CorruptLedger,
                            "line " + std::to_string(line_no) + ": out-of-order local block");
            }
            instance.chain_.push_back(std::move(block));
        } else {
            if (!in_foreign || block.validator_id != current_section) {
                // sections must appear in ascending authority order, each once
                if (in_foreign && block.validator_id <= current_section) {
                    throw Error(Errc::CorruptLedger,
                                "line " + std::to_string(line_no) + ": out-of-order section");
                }
                current_section = block.validator_id;
                in_foreign = true;
            }
            auto& section = instance.foreign_[current_section];
            if (block.height != section.size()) {
                throw Error(Errc::CorruptLedger,
                            "line " + std::to_string(line_no) + ": out-of-order foreign block");
            }
            section.push_back(std::move(block));
        }
    }
    if (instance.chain_.empty()) {
        throw Error(Errc::CorruptLedger, "ledger has no local genesis block");
    }
    return instance;
}

}  // namespace fedchain::ledger
