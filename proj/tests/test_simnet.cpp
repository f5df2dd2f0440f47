#include <doctest.h>

#include "fedchain/rng.hpp"
#include "fedchain/simnet.hpp"

using namespace fedchain;
using namespace fedchain::simnet;

namespace {

Network make_net(NetworkConfig config, std::initializer_list<std::string> nodes) {
    Network net(std::move(config));
    for (const auto& n : nodes) net.register_node(n);
    return net;
}

}  // namespace

TEST_SUITE("simnet") {

TEST_CASE("lossless zero-jitter delivery lands exactly at base latency") {
    NetworkConfig config;
    config.base_latency_ticks = 3;
    Network net = make_net(config, {"a", "b"});
    net.send("a", "b", bytes_of("hello"));

    CHECK(net.step().empty());
    CHECK(net.step().empty());
    auto third = net.step();
    REQUIRE(third.size() == 1);
    CHECK(third[0].dst == "b");
    CHECK(third[0].payload == bytes_of("hello"));
    CHECK(net.now() == 3);
}

TEST_CASE("drop probability one drops everything") {
    NetworkConfig config;
    config.drop_probability = 1.0;
    Network net = make_net(config, {"a", "b"});
    for (int i = 0; i < 50; ++i) net.send("a", "b", bytes_of("x"));
    CHECK(net.dropped_count() == 50);
    CHECK(net.run_until(10).empty());
    CHECK(net.delivered_count() == 0);
}

TEST_CASE("unknown nodes are rejected") {
    Network net = make_net({}, {"a"});
    CHECK_THROWS_AS(net.send("a", "ghost", {}), Error);
    CHECK_THROWS_AS(net.send("ghost", "a", {}), Error);
}

TEST_CASE("identical configs and send sequences give identical traces") {
    auto run = [] {
        NetworkConfig config;
        config.seed = 99;
        config.drop_probability = 0.3;
        config.jitter_ticks = 4;
        Network net = make_net(config, {"a", "b", "c"});
        for (int i = 0; i < 200; ++i) {
            net.send(i % 2 ? "a" : "b", i % 3 ? "b" : "c", {static_cast<std::uint8_t>(i)});
            if (i % 5 == 0) net.step();
        }
        net.run_until(net.now() + 20);
        std::vector<std::pair<std::uint64_t, std::int64_t>> fates;
        for (const auto& env : net.trace()) {
            fates.emplace_back(env.msg_id,
                               env.deliver_tick ? static_cast<std::int64_t>(*env.deliver_tick)
                                                : -1);
        }
        return fates;
    };
    CHECK(run() == run());
}

TEST_CASE("same-tick deliveries arrive in msg_id order") {
    NetworkConfig config;
    config.base_latency_ticks = 2;
    Network net = make_net(config, {"a", "b"});
    std::uint64_t first = net.send("a", "b", bytes_of("first"));
    std::uint64_t second = net.send("a", "b", bytes_of("second"));
    CHECK(first < second);
    net.step();
    auto arrivals = net.step();
    REQUIRE(arrivals.size() == 2);
    CHECK(arrivals[0].msg_id == first);
    CHECK(arrivals[1].msg_id == second);
}

TEST_CASE("conservation: sent = delivered + dropped over a seeded 1000-message run") {
    NetworkConfig config;
    config.seed = 7;
    config.drop_probability = 0.25;
    config.jitter_ticks = 5;
    Network net = make_net(config, {"a", "b"});
    for (int i = 0; i < 1000; ++i) {
        net.send("a", "b", {});
        if (i % 7 == 0) net.step();
    }
    net.run_until(net.now() + 10);  // past max latency, all fates settled
    CHECK(net.pending_deliveries() == 0);
    CHECK(net.sent_count() == 1000);
    CHECK(net.delivered_count() + net.dropped_count() == 1000);
    CHECK(net.delivered_count() > 0);
    CHECK(net.dropped_count() > 0);
}

TEST_CASE("no early delivery: deliver_tick >= send_tick + base latency") {
    NetworkConfig config;
    config.seed = 17;
    config.base_latency_ticks = 2;
    config.jitter_ticks = 3;
    Network net = make_net(config, {"a", "b"});
    for (int i = 0; i < 300; ++i) {
        net.send("a", "b", {});
        net.step();
    }
    for (const auto& env : net.trace()) {
        if (env.deliver_tick) {
            CHECK(*env.deliver_tick >= env.send_tick + 2);
            CHECK(*env.deliver_tick <= env.send_tick + 5);
        }
    }
}

TEST_CASE("run_until equals repeated step and rejects the past") {
    NetworkConfig config;
    config.seed = 23;
    config.jitter_ticks = 6;
    auto send_pattern = [](Network& net) {
        for (int i = 0; i < 40; ++i) {
            net.send("a", "b", {static_cast<std::uint8_t>(i)});
            if (i % 4 == 0) net.step();
        }
    };

    Network by_run = make_net(config, {"a", "b"});
    send_pattern(by_run);
    auto grouped = by_run.run_until(40);

    Network by_step = make_net(config, {"a", "b"});
    send_pattern(by_step);
    std::vector<std::pair<Tick, std::vector<Delivery>>> stepped;
    while (by_step.now() < 40) {
        auto deliveries = by_step.step();
        if (!deliveries.empty()) stepped.emplace_back(by_step.now(), deliveries);
    }

    REQUIRE(grouped.size() == stepped.size());
    for (std::size_t i = 0; i < grouped.size(); ++i) {
        CHECK(grouped[i].first == stepped[i].first);
        REQUIRE(grouped[i].second.size() == stepped[i].second.size());
        for (std::size_t k = 0; k < grouped[i].second.size(); ++k) {
            CHECK(grouped[i].second[k].msg_id == stepped[i].second[k].msg_id);
        }
    }

    CHECK(by_run.run_until(by_run.now()).empty());
    CHECK_THROWS_AS(by_run.run_until(by_run.now() - 1), Error);  // TimeTravel
}

TEST_CASE("partition windows force drops in both directions") {
    NetworkConfig config;
    config.base_latency_ticks = 1;
    Partition p;
    p.group_a = {"coordinator"};
    p.group_b = {"miner-3"};
    p.from_tick = 10;
    p.to_tick = 50;
    config.partitions = {p};
    Network net = make_net(config, {"coordinator", "miner-3", "miner-1"});

    // before the window: delivery at tick 1 < 10 passes
    net.send("coordinator", "miner-3", {});
    // inside the window both directions drop; unrelated pairs pass
    net.run_until(20);
    net.send("coordinator", "miner-3", {});
    net.send("miner-3", "coordinator", {});
    net.send("coordinator", "miner-1", {});
    net.run_until(30);

    const auto& trace = net.trace();
    REQUIRE(trace.size() == 4);
    CHECK(trace[0].deliver_tick.has_value());
    CHECK_FALSE(trace[1].deliver_tick.has_value());
    CHECK_FALSE(trace[2].deliver_tick.has_value());
    CHECK(trace[3].deliver_tick.has_value());

    // sends whose delivery lands after the window pass again
    net.run_until(55);
    net.send("coordinator", "miner-3", {});
    net.run_until(60);
    CHECK(net.trace().back().deliver_tick.has_value());
}

TEST_CASE("config invariants are enforced") {
    NetworkConfig zero_latency;
    zero_latency.base_latency_ticks = 0;
    CHECK_THROWS_AS(Network{zero_latency}, Error);

    NetworkConfig bad_drop;
    bad_drop.drop_probability = 1.5;
    CHECK_THROWS_AS(Network{bad_drop}, Error);
}

}  // TEST_SUITE
