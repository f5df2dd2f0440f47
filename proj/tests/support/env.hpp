#pragma once

// Small shared fixture for tests that need participants, keys and ledger
// instances wired together.

#include <map>
#include <set>
#include <string>

#include "fedchain/keys.hpp"
#include "fedchain/ledger.hpp"

namespace fedchain::testsupport {

struct TestEnv {
    keys::KeyServer server;
    std::map<std::string, keys::KeyPair> keypairs;
    ledger::VerifyContext context;

    void add_participant(const std::string& id, keys::Role role) {
        keys::KeyPair pair = keys::generate_keypair(keys::derive_seed(1000, "env:" + id));
        keypairs[id] = pair;
        server.register_participant({id, role, pair.public_key, 0});
        context.participant_keys[id] = pair.public_key;
    }

    void add_asset(const std::string& asset, const std::string& authority,
                   std::vector<std::string> issuers) {
        context.assets[asset] = ledger::AssetRule{authority, std::move(issuers)};
    }

    ledger::LedgerInstance make_instance(const std::string& authority,
                                         std::set<std::string> assets,
                                         std::set<std::string> peers, Tick genesis_tick = 0) {
        return ledger::LedgerInstance(authority, std::move(assets), std::move(peers), context,
                                      keypairs.at(authority), genesis_tick);
    }
};

}  // namespace fedchain::testsupport
