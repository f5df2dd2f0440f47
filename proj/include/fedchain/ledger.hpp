#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fedchain/common.hpp"
#include "fedchain/keys.hpp"

namespace fedchain::ledger {

/// SHA-256 of the input bytes; the digest used for every tx id, root and
/// block hash in the chain.
Hash32 canonical_hash(const Bytes& bytes);

/// Canonical JSON: lexicographically sorted keys, no insignificant
/// whitespace, shortest round-trip numbers, byte fields as lowercase hex.
Bytes canonical_bytes(const nlohmann::json& value);

// -- transaction payloads ----------------------------------------------------

struct StreamTransferPayload {
    std::uint64_t stream_id = 0;
    std::string sender_id;
    std::string receiver_id;
    double size_kb = 0.0;
    std::string timestamp;
    std::uint64_t session_id = 0;
    double rmse = 0.0;
    std::uint64_t model_version = 0;
};

struct ModelUpdatePayload {
    std::string miner_id;
    std::uint64_t base_version = 0;
    std::string param_hash_hex;
    std::uint64_t sample_count = 0;
    double local_loss = 0.0;
    std::string miner_signature_hex;  // the miner's own signature over the update
};

struct ModelPublishPayload {
    std::uint64_t version = 0;
    std::string param_hash_hex;
};

struct ContractRegistrationPayload {
    std::uint64_t contract_id = 0;
    std::optional<std::string> match_sender;
    std::optional<std::string> match_receiver;
    std::vector<std::uint64_t> match_stream_ids;  // empty = any stream id
    std::uint64_t route_id = 0;
    std::string model_ref;  // "latest" or a decimal version
    double threshold_quantile = 0.95;
};

struct AlertPayload {
    std::uint64_t stream_id = 0;
    double rmse = 0.0;
    std::uint64_t contract_id = 0;
};

struct RoundAnnouncePayload {
    std::uint64_t round_id = 0;
    std::uint64_t base_version = 0;
    std::uint64_t min_participants = 1;
    std::uint64_t deadline_ticks = 0;
    std::string selection_policy;  // "all" | "fresh_only"
    double threshold_quantile = 0.95;
};

using Payload = std::variant<StreamTransferPayload, ModelUpdatePayload, ModelPublishPayload,
                             ContractRegistrationPayload, AlertPayload, RoundAnnouncePayload>;

enum class PayloadKind {
    StreamTransfer,
    ModelUpdate,
    ModelPublish,
    ContractRegistration,
    Alert,
    RoundAnnounce,
};

PayloadKind kind_of(const Payload& payload);
std::string_view payload_kind_name(PayloadKind kind);

nlohmann::json payload_to_json(const Payload& payload);
Payload payload_from_json(const nlohmann::json& j);

/// The exact bytes that are signed and hashed for a transaction.
Bytes canonical_payload_bytes(const Payload& payload);

// -- transactions and blocks --------------------------------------------------

struct Transaction {
    Hash32 tx_id{};
    std::string asset_id;
    Payload payload;
    std::string issuer_id;
    Signature signature{};
};

Hash32 compute_tx_id(const Payload& payload, const std::string& issuer_id,
                     const std::string& asset_id);

Transaction make_transaction(const std::string& asset_id, Payload payload,
                             const std::string& issuer_id, const keys::KeyPair& issuer_keys);

struct Block {
    std::uint64_t height = 0;
    Hash32 prev_hash{};
    Hash32 tx_root{};
    std::string validator_id;
    Signature validator_signature{};
    Tick tick = 0;
    std::vector<Transaction> txs;
};

/// Signable header bytes (everything except the signature and the txs, which
/// are bound through tx_root).
Bytes block_header_bytes(const Block& block);
Hash32 block_hash(const Block& block);
Hash32 compute_tx_root(const std::vector<Transaction>& txs);

nlohmann::json block_to_json(const Block& block);
Block block_from_json(const nlohmann::json& j);

// -- validation context -------------------------------------------------------

struct AssetRule {
    std::string authority_id;              // the single validating authority
    std::vector<std::string> issuer_ids;   // registered issuer plus delegates
};

struct VerifyContext {
    std::map<std::string, keys::PublicKey> participant_keys;
    std::map<std::string, AssetRule> assets;
};

// -- results -------------------------------------------------------------------

enum class RejectReason {
    None,
    UnknownAsset,
    UnknownIssuer,
    BadSignature,
    NotAssetIssuer,
    TxIdMismatch,
};

std::string_view reject_reason_name(RejectReason reason);

struct SubmitResult {
    enum class Kind { Accepted, Rejected, Forwarded };
    Kind kind = Kind::Rejected;
    RejectReason reason = RejectReason::None;
    std::string target_authority;  // set when Forwarded

    bool accepted() const { return kind == Kind::Accepted; }
};

enum class VerifyFailure {
    None,
    BadGenesis,
    BadHeight,
    BrokenLink,
    TxRootMismatch,
    TxIdMismatch,
    BadTxSignature,
    BadValidatorSignature,
    WrongValidator,
    AssetNotIssued,
    UnknownIssuer,
    ForkDetected,
};

std::string_view verify_failure_name(VerifyFailure failure);

struct VerifyResult {
    bool valid = true;
    std::uint64_t height = 0;
    VerifyFailure reason = VerifyFailure::None;
    std::string section;  // authority id of the failing section; empty = local

    static VerifyResult ok() { return {}; }
    static VerifyResult bad(std::uint64_t h, VerifyFailure r, std::string section = {}) {
        return {false, h, r, std::move(section)};
    }
};

class SyncRejectedError : public Error {
public:
    SyncRejectedError(std::uint64_t height, VerifyFailure reason)
        : Error(Errc::SyncRejected, "foreign block " + std::to_string(height) + ": " +
                                        std::string(verify_failure_name(reason))),
          height_(height),
          reason_(reason) {}

    std::uint64_t height() const { return height_; }
    VerifyFailure reason() const { return reason_; }

private:
    std::uint64_t height_;
    VerifyFailure reason_;
};

struct QueryFilter {
    std::optional<std::string> asset_id;
    std::optional<PayloadKind> kind;
    std::optional<std::uint64_t> min_height;
    std::optional<std::uint64_t> max_height;
    bool include_foreign = true;
};

// -- the per-authority instance -------------------------------------------------

/// One proof-of-authority ledger instance: a single sealing authority, the
/// set of assets it validates, its hash-linked chain, plus verified replicas
/// of peer chains kept as read-only foreign sections.
class LedgerInstance {
public:
    LedgerInstance(std::string authority_id, std::set<std::string> issued_assets,
                   std::set<std::string> peers, VerifyContext context,
                   const keys::KeyPair& authority_keys, Tick genesis_tick);

    /// Routes by asset: accepted into pending when this instance validates
    /// the asset and the transaction checks out, forwarded when a known peer
    /// authority owns it, rejected otherwise.
    SubmitResult submit(const Transaction& tx);

    /// Drains pending FIFO into a new signed block. Throws NothingToSeal.
    const Block& seal_block(const keys::KeyPair& authority_keys, Tick now);

    /// Recomputes every hash, link, root, tx id and signature over the local
    /// chain and all foreign sections.
    VerifyResult verify_chain() const;

    /// Bidirectional replication of missing suffixes between peers; verified
    /// before storing; idempotent. Throws SyncRejectedError, leaving both
    /// instances untouched.
    static std::size_t sync(LedgerInstance& a, LedgerInstance& b);

    /// Matching transactions in chain order: local chain first, then foreign
    /// sections ordered by authority id.
    std::vector<Transaction> query(const QueryFilter& filter) const;

    void save_jsonl(const std::filesystem::path& path) const;
    static LedgerInstance load_jsonl(const std::filesystem::path& path);

    const std::string& authority_id() const { return authority_id_; }
    const std::set<std::string>& issued_assets() const { return issued_assets_; }
    const std::set<std::string>& peers() const { return peers_; }
    const std::vector<Block>& chain() const { return chain_; }
    const std::map<std::string, std::vector<Block>>& foreign_sections() const { return foreign_; }
    const std::deque<Transaction>& pending() const { return pending_; }
    const VerifyContext& context() const { return context_; }

private:
    LedgerInstance() = default;

    VerifyResult verify_section(const std::vector<Block>& section,
                                const std::string& expected_validator) const;

    std::string authority_id_;
    std::set<std::string> issued_assets_;
    std::set<std::string> peers_;
    VerifyContext context_;
    std::vector<Block> chain_;
    std::map<std::string, std::vector<Block>> foreign_;
    std::deque<Transaction> pending_;
};

}  // namespace fedchain::ledger
