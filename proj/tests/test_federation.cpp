#include <doctest.h>

#include "fedchain/federation.hpp"
#include "fedchain/rng.hpp"
#include "fedchain/wire.hpp"
#include "support/env.hpp"
#include "support/schema_check.hpp"

using namespace fedchain;
using namespace fedchain::federation;
using fedchain::testsupport::TestEnv;

// the whole-schema privacy assertion: no wire message can embed flow data
static_assert(!testsupport::variant_carries_flow_data<wire::Message>::value,
              "a simnet payload type carries traffic flow data");
static_assert(testsupport::carries_flow_data<traffic::TrafficFlowRecord>(),
              "schema checker must flag the flow record itself");
static_assert(testsupport::carries_flow_data<traffic::DataStream>(),
              "schema checker must flag types embedding flow records");

namespace {

struct FedFixture {
    TestEnv env;
    ledger::LedgerInstance model_ledger;
    ml::ModelStore store;
    std::vector<traffic::FeatureVector> validation;

    FedFixture()
        : env(make_env()),
          model_ledger(env.make_instance("auth-model", {"model"}, {})) {
        validation = normalized(9000, 30);
    }

    static TestEnv make_env() {
        TestEnv env;
        env.add_participant("auth-model", keys::Role::Authority);
        env.add_participant("coordinator", keys::Role::Coordinator);
        for (int i = 1; i <= 4; ++i) {
            env.add_participant("miner-" + std::to_string(i), keys::Role::Miner);
        }
        env.add_asset("model", "auth-model", {"coordinator"});
        return env;
    }

    static std::vector<traffic::FeatureVector> normalized(std::uint64_t seed, std::size_t count) {
        auto records = traffic::generate_traffic(seed, count, 0, {});
        auto stats = traffic::fit_normalizer(records);
        std::vector<traffic::FeatureVector> out;
        for (const auto& r : records) {
            out.push_back(traffic::normalize(traffic::extract_features(r), stats));
        }
        return out;
    }

    Coordinator make_coordinator() {
        return Coordinator("coordinator", env.keypairs.at("coordinator"), model_ledger,
                           env.keypairs.at("auth-model"), store, env.server, validation);
    }

    GlobalModel bootstrapped(Coordinator& coordinator, std::uint64_t seed = 5) {
        return coordinator.bootstrap(ml::init_model({{18, 8}, {8, 18}}, seed), 0);
    }

    Miner make_miner(const std::string& id, std::uint64_t seed, std::size_t count) {
        return Miner(id, env.keypairs.at(id), normalized(seed, count));
    }
};

}  // namespace

TEST_SUITE("federation") {

TEST_CASE("announce_round: on-chain record, exclusivity and monotone ids") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    fx.bootstrapped(coordinator);

    RoundConfig config;
    config.deadline_ticks = 10;
    auto tx = coordinator.announce_round(config, 1);
    CHECK(tx.asset_id == "model");

    ledger::QueryFilter filter;
    filter.kind = ledger::PayloadKind::RoundAnnounce;
    auto found = fx.model_ledger.query(filter);
    REQUIRE(found.size() == 1);
    CHECK(std::get<ledger::RoundAnnouncePayload>(found[0].payload).round_id == 1);

    try {
        coordinator.announce_round(config, 2);
        FAIL("expected RoundInProgress");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::RoundInProgress);
    }

    coordinator.close_round(5);  // voids (no updates, min_participants 1)
    CHECK(coordinator.history().back().voided);

    auto tx2 = coordinator.announce_round(config, 6);
    CHECK(std::get<ledger::RoundAnnouncePayload>(tx2.payload).round_id == 2);
}

TEST_CASE("miner_train bumps the version and signs verifiably") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    GlobalModel global = fx.bootstrapped(coordinator);

    Miner miner = fx.make_miner("miner-1", 11, 40);
    ml::TrainingConfig lr0{0.0, 2, 8, 77, 0.0};
    ModelUpdate update = miner.train(global, lr0);
    CHECK(update.params.weights == global.params.weights);
    CHECK(update.params.version == global.params.version + 1);
    CHECK(update.base_version == global.params.version);
    CHECK(update.sample_count == 40);
    CHECK(verify_update(update, fx.env.server));

    Miner empty("miner-2", fx.env.keypairs.at("miner-2"), {});
    CHECK_THROWS_AS(empty.train(global, lr0), Error);
}

TEST_CASE("identical shards and configs give identical params, distinct signatures") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    GlobalModel global = fx.bootstrapped(coordinator);

    auto shard = FedFixture::normalized(500, 30);
    Miner a("miner-1", fx.env.keypairs.at("miner-1"), shard);
    Miner b("miner-2", fx.env.keypairs.at("miner-2"), shard);
    ml::TrainingConfig config{0.05, 3, 8, 55, 0.0};
    ModelUpdate ua = a.train(global, config);
    ModelUpdate ub = b.train(global, config);
    CHECK(ua.params.weights == ub.params.weights);
    CHECK(ua.params.param_hash == ub.params.param_hash);
    CHECK(ua.signature != ub.signature);
    CHECK(verify_update(ua, fx.env.server));
    CHECK(verify_update(ub, fx.env.server));
}

TEST_CASE("select_updates filters signatures, staleness and deadlines") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    GlobalModel global = fx.bootstrapped(coordinator);
    ml::TrainingConfig tc{0.05, 1, 8, 3, 0.0};

    std::vector<TimedUpdate> updates;
    for (int i = 1; i <= 3; ++i) {
        Miner miner = fx.make_miner("miner-" + std::to_string(i), 100 + i, 20);
        updates.push_back({miner.train(global, tc), 5});
    }

    RoundConfig config;
    config.min_participants = 1;
    config.deadline_ticks = 10;
    config.selection_policy = SelectionPolicy::All;

    auto all = select_updates(updates, config, fx.env.server, global.params.version, 0);
    CHECK(all.size() == 3);
    CHECK(all[0].miner_id == "miner-1");  // sorted by miner id

    // flipped signature drops exactly that update
    auto tampered = updates;
    tampered[1].update.signature[5] ^= 0x01;
    auto kept = select_updates(tampered, config, fx.env.server, global.params.version, 0);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].miner_id == "miner-1");
    CHECK(kept[1].miner_id == "miner-3");

    // FreshOnly drops a stale base_version
    auto stale = updates;
    stale[2].update.base_version += 1;
    stale[2].update.params.version += 1;
    stale[2].update.signature =
        keys::sign(update_signing_bytes(stale[2].update),
                   fx.env.keypairs.at("miner-3").secret_key);
    config.selection_policy = SelectionPolicy::FreshOnly;
    auto fresh = select_updates(stale, config, fx.env.server, global.params.version, 0);
    CHECK(fresh.size() == 2);

    // late arrival is dropped
    auto late = updates;
    late[0].arrival_tick = 11;
    CHECK(select_updates(late, config, fx.env.server, global.params.version, 0).size() == 2);

    // insufficient participation voids the round
    config.min_participants = 4;
    try {
        select_updates(updates, config, fx.env.server, global.params.version, 0);
        FAIL("expected InsufficientParticipation");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InsufficientParticipation);
    }
}

TEST_CASE("aggregate: weighted mean with fixed order") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    GlobalModel global = fx.bootstrapped(coordinator);

    auto make_update = [&](const std::string& miner, double weight_value,
                           std::uint64_t samples) {
        ModelUpdate u;
        u.miner_id = miner;
        u.base_version = global.params.version;
        u.params = global.params;
        std::fill(u.params.weights.begin(), u.params.weights.end(), weight_value);
        u.params.version = global.params.version + 1;
        u.params.param_hash = ml::param_hash_of(u.params);
        u.sample_count = samples;
        u.local_loss = 0.1;
        u.signature = keys::sign(update_signing_bytes(u),
                                 fx.env.keypairs.at(miner).secret_key);
        return u;
    };

    // mean of equal updates is those updates
    auto same = {make_update("miner-1", 0.25, 3), make_update("miner-2", 0.25, 9)};
    auto merged_same = aggregate(std::vector<ModelUpdate>(same));
    for (double w : merged_same.weights) CHECK(w == 0.25);
    CHECK(merged_same.version == global.params.version + 1);

    // toy weighted case: w=0 (n=1) and w=4 (n=3) -> 3.0
    auto toys = {make_update("miner-1", 0.0, 1), make_update("miner-2", 4.0, 3)};
    auto merged = aggregate(std::vector<ModelUpdate>(toys));
    for (double w : merged.weights) CHECK(w == doctest::Approx(3.0).epsilon(1e-15));

    // shape and base-version mismatches are rejected
    auto incompatible = make_update("miner-3", 1.0, 1);
    incompatible.params = ml::init_model({{18, 4}, {4, 18}}, 1);
    CHECK_THROWS_AS(aggregate({make_update("miner-1", 0.0, 1), incompatible}), Error);

    auto mixed = make_update("miner-4", 1.0, 1);
    mixed.base_version += 1;
    CHECK_THROWS_AS(aggregate({make_update("miner-1", 0.0, 1), mixed}), Error);
}

TEST_CASE("aggregate matches an independent weighted-mean oracle and ignores order") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    GlobalModel global = fx.bootstrapped(coordinator);
    DeterministicRng rng(2024);

    for (int trial = 0; trial < 20; ++trial) {
        std::size_t count = 2 + rng.uniform_int(0, 3);
        std::vector<ModelUpdate> updates;
        for (std::size_t m = 0; m < count; ++m) {
            ModelUpdate u;
            u.miner_id = "miner-" + std::to_string(m + 1);
            u.base_version = global.params.version;
            u.params = global.params;
            for (auto& w : u.params.weights) w = rng.uniform(-1.0, 1.0);
            u.params.version = global.params.version + 1;
            u.params.param_hash = ml::param_hash_of(u.params);
            u.sample_count = 1 + rng.uniform_int(0, 99);
            u.signature = keys::sign(update_signing_bytes(u),
                                     fx.env.keypairs.at("miner-1").secret_key);
            updates.push_back(std::move(u));
        }

        auto merged = aggregate(updates);

        // oracle: sum n_i * w_i first, divide once at the end
        double total = 0;
        for (const auto& u : updates) total += static_cast<double>(u.sample_count);
        for (std::size_t k = 0; k < merged.weights.size(); ++k) {
            double acc = 0.0;
            for (const auto& u : updates) {
                acc += static_cast<double>(u.sample_count) * u.params.weights[k];
            }
            CHECK(std::abs(merged.weights[k] - acc / total) < 1e-12);
        }

        // permutation invariance (exact: fixed sorted order inside)
        std::vector<ModelUpdate> shuffled = updates;
        rng.shuffle(shuffled);
        auto merged2 = aggregate(shuffled);
        CHECK(merged2.weights == merged.weights);
    }
}

TEST_CASE("publish_model stores bytes by hash and reopens the round lifecycle") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    GlobalModel v0 = fx.bootstrapped(coordinator);

    ledger::QueryFilter filter;
    filter.kind = ledger::PayloadKind::ModelPublish;
    auto publishes = fx.model_ledger.query(filter);
    REQUIRE(publishes.size() == 1);
    const auto& payload = std::get<ledger::ModelPublishPayload>(publishes[0].payload);
    CHECK(payload.version == 0);
    CHECK(payload.param_hash_hex == to_hex(v0.params.param_hash));
    // stored bytes hash back to the recorded hash
    Hash32 hash = from_hex_fixed<32>(payload.param_hash_hex);
    CHECK(keys::sha256(fx.store.get(hash)) == hash);
}

TEST_CASE("run_federated_training: lr 0 keeps weights, versions advance") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    fx.bootstrapped(coordinator);
    std::vector<Miner> miners;
    miners.push_back(fx.make_miner("miner-1", 21, 30));

    simnet::NetworkConfig ncfg;
    ncfg.seed = 5;
    simnet::Network net(ncfg);
    net.register_node("coordinator");
    net.register_node("miner-1");

    RoundConfig rc;
    rc.deadline_ticks = 6;
    ml::TrainingConfig tc{0.0, 1, 8, 1, 0.0};
    auto result = run_federated_training(coordinator, miners, net, {rc, rc, rc}, {tc, tc, tc},
                                         fx.store);

    REQUIRE(result.rounds.size() == 3);
    ml::ModelParameters base = ml::init_model({{18, 8}, {8, 18}}, 5);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK_FALSE(result.rounds[r].voided);
        CHECK(result.rounds[r].published_version == r + 1);
    }
    CHECK(coordinator.global().params.weights == base.weights);
    CHECK(coordinator.global().params.version == 3);
}

TEST_CASE("run_federated_training converges on lossless links") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    fx.bootstrapped(coordinator);
    std::vector<Miner> miners;
    for (int i = 1; i <= 4; ++i) {
        miners.push_back(fx.make_miner("miner-" + std::to_string(i), 300 + i, 60));
    }

    simnet::NetworkConfig ncfg;
    ncfg.seed = 8;
    simnet::Network net(ncfg);
    net.register_node("coordinator");
    for (const auto& m : miners) net.register_node(m.id());

    std::vector<RoundConfig> rounds(6);
    for (auto& rc : rounds) rc.deadline_ticks = 8;
    std::vector<ml::TrainingConfig> train(6, ml::TrainingConfig{0.1, 6, 16, 9, 0.0});
    auto result = run_federated_training(coordinator, miners, net, rounds, train, fx.store);

    REQUIRE(result.rounds.size() == 6);
    std::size_t contributions = 0;
    for (const auto& r : result.rounds) {
        CHECK_FALSE(r.voided);
        CHECK(r.contributors.size() == 4);
        contributions += r.contributors.size();
    }
    CHECK(result.rounds.back().validation_loss < result.rounds.front().validation_loss);

    // every accepted contribution is recorded on chain, offline-verifiable
    ledger::QueryFilter filter;
    filter.kind = ledger::PayloadKind::ModelUpdate;
    auto recorded = fx.model_ledger.query(filter);
    CHECK(recorded.size() == contributions);
    for (const auto& tx : recorded) {
        const auto& p = std::get<ledger::ModelUpdatePayload>(tx.payload);
        ModelUpdate reconstructed;
        reconstructed.miner_id = p.miner_id;
        reconstructed.base_version = p.base_version;
        reconstructed.params = ml::deserialize(fx.store.get(from_hex_fixed<32>(p.param_hash_hex)));
        reconstructed.sample_count = p.sample_count;
        reconstructed.local_loss = p.local_loss;
        reconstructed.signature = from_hex_fixed<64>(p.miner_signature_hex);
        CHECK(verify_update(reconstructed, fx.env.server));
    }
}

TEST_CASE("a voided round leaves the global model bytes identical") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    fx.bootstrapped(coordinator);
    Bytes before = ml::serialize(coordinator.global().params);

    std::vector<Miner> miners;
    miners.push_back(fx.make_miner("miner-1", 41, 20));

    simnet::NetworkConfig ncfg;
    ncfg.drop_probability = 1.0;  // nothing ever arrives
    simnet::Network net(ncfg);
    net.register_node("coordinator");
    net.register_node("miner-1");

    RoundConfig rc;
    rc.deadline_ticks = 5;
    ml::TrainingConfig tc{0.1, 1, 8, 1, 0.0};
    auto result = run_federated_training(coordinator, miners, net, {rc}, {tc}, fx.store);
    REQUIRE(result.rounds.size() == 1);
    CHECK(result.rounds[0].voided);
    CHECK(ml::serialize(coordinator.global().params) == before);
}

TEST_CASE("updates under drops: non-void rounds keep the participation floor") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    fx.bootstrapped(coordinator);
    std::vector<Miner> miners;
    for (int i = 1; i <= 4; ++i) {
        miners.push_back(fx.make_miner("miner-" + std::to_string(i), 600 + i, 40));
    }

    simnet::NetworkConfig ncfg;
    ncfg.seed = 77;
    ncfg.drop_probability = 0.2;
    simnet::Network net(ncfg);
    net.register_node("coordinator");
    for (const auto& m : miners) net.register_node(m.id());

    std::vector<RoundConfig> rounds(8);
    for (auto& rc : rounds) {
        rc.deadline_ticks = 8;
        rc.min_participants = 2;
    }
    std::vector<ml::TrainingConfig> train(8, ml::TrainingConfig{0.05, 3, 16, 4, 0.0});
    auto result = run_federated_training(coordinator, miners, net, rounds, train, fx.store);

    for (const auto& r : result.rounds) {
        if (!r.voided) {
            CHECK(r.contributors.size() >= 2);
        }
    }
    // determinism of the whole protocol under drops
    FedFixture fx2;
    Coordinator coordinator2 = fx2.make_coordinator();
    fx2.bootstrapped(coordinator2);
    std::vector<Miner> miners2;
    for (int i = 1; i <= 4; ++i) {
        miners2.push_back(fx2.make_miner("miner-" + std::to_string(i), 600 + i, 40));
    }
    simnet::Network net2(ncfg);
    net2.register_node("coordinator");
    for (const auto& m : miners2) net2.register_node(m.id());
    auto result2 = run_federated_training(coordinator2, miners2, net2, rounds, train, fx2.store);
    CHECK(ml::serialize(coordinator.global().params) ==
          ml::serialize(coordinator2.global().params));
    REQUIRE(result2.rounds.size() == result.rounds.size());
    for (std::size_t i = 0; i < result.rounds.size(); ++i) {
        CHECK(result.rounds[i].voided == result2.rounds[i].voided);
        CHECK(result.rounds[i].contributors == result2.rounds[i].contributors);
    }
}

TEST_CASE("wire trace: miner-to-coordinator payloads are model updates only") {
    FedFixture fx;
    Coordinator coordinator = fx.make_coordinator();
    fx.bootstrapped(coordinator);
    std::vector<Miner> miners;
    for (int i = 1; i <= 2; ++i) {
        miners.push_back(fx.make_miner("miner-" + std::to_string(i), 70 + i, 25));
    }
    simnet::NetworkConfig ncfg;
    simnet::Network net(ncfg);
    net.register_node("coordinator");
    for (const auto& m : miners) net.register_node(m.id());

    RoundConfig rc;
    rc.deadline_ticks = 6;
    ml::TrainingConfig tc{0.05, 2, 8, 2, 0.0};
    run_federated_training(coordinator, miners, net, {rc, rc}, {tc, tc}, fx.store);

    for (const auto& env : net.trace()) {
        wire::Message message = wire::decode(env.payload);
        if (env.dst == "coordinator") {
            CHECK(wire::kind_of(message) == wire::MessageKind::ModelUpdate);
        } else {
            CHECK(wire::kind_of(message) == wire::MessageKind::RoundAnnounce);
        }
    }
}

}  // TEST_SUITE
