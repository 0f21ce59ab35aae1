// SPDX-License-Identifier: Apache-2.0
#include "proceed/error.hpp"
#include "proceed/policy.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace proceed;

namespace
{

DecisionContext context(std::vector<std::vector<double>> rows)
{
    DecisionContext ctx;
    ctx.dim = rows.empty() ? 0 : rows.front().size();
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        ctx.candidates.push_back("a" + std::to_string(i));
        ctx.features.insert(ctx.features.end(), rows[i].begin(), rows[i].end());
    }
    return ctx;
}

PolicyParams params(std::vector<double> theta, double t = 1.0)
{
    return PolicyParams{std::move(theta), t, "test"};
}

double log_likelihood(const PolicyParams& p, const DecisionContext& ctx, std::size_t a)
{
    return action_log_distribution(p, ctx)[a];
}

} // namespace

TEST_CASE("zero parameters give a uniform distribution")
{
    auto const ctx = context({{1, 0}, {0, 1}, {0.5, 0.5}, {1, 1}});
    for (double p: action_distribution(params({0, 0}), ctx))
        CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("softmax arithmetic")
{
    auto const ctx = context({{1}, {0}, {0}});
    auto const p = action_distribution(params({1}), ctx);
    CHECK(p[0] == doctest::Approx(0.5761).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.2119).epsilon(1e-4));
    CHECK(p[2] == doctest::Approx(0.2119).epsilon(1e-4));

    auto const hot = action_distribution(params({1}, 1e6), ctx);
    CHECK(*std::max_element(hot.begin(), hot.end()) - *std::min_element(hot.begin(), hot.end()) < 1e-3);

    auto const logs = action_log_distribution(params({1}), ctx);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::exp(logs[i]) == doctest::Approx(p[i]));
}

TEST_CASE("empty candidates and bad params are rejected")
{
    DecisionContext empty;
    empty.dim = 1;
    CHECK_THROWS_AS(action_distribution(params({1}), empty), Error);
    CounterRng rng(1);
    CHECK_THROWS_AS(sample(params({1}), empty, rng), Error);
    CHECK_THROWS_AS(validate(params({1}, 0.0)), Error);
    CHECK_THROWS_AS(validate(params({NAN})), Error);
}

TEST_CASE("sampling")
{
    auto const single = context({{3}});
    CounterRng rng(9);
    auto const s = sample(params({1}), single, rng);
    CHECK(s.index == 0);
    CHECK(s.logprob == 0.0);

    auto const two = context({{std::log(0.7)}, {std::log(0.3)}});
    CounterRng r1(5);
    CounterRng r2(5);
    for (int i = 0; i < 50; ++i)
        CHECK(sample(params({1}), two, r1).index == sample(params({1}), two, r2).index);

    int const n = 100000;
    int first = 0;
    CounterRng r3(123);
    for (int i = 0; i < n; ++i)
        first += sample(params({1}), two, r3).index == 0 ? 1 : 0;
    CHECK(std::abs(static_cast<double>(first) / n - 0.7) <= 0.01);
}

TEST_CASE("grad_logprob")
{
    auto const sym = context({{1, 0}, {0, 1}});
    auto const g = grad_logprob(params({0, 0}), sym, 0);
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(-0.5));

    auto const single = context({{2, 3}});
    for (double v: grad_logprob(params({0.4, -1}), single, 0))
        CHECK(v == 0.0);

    CHECK_THROWS_AS(grad_logprob(params({0, 0}), sym, std::string_view("missing")), Error);

    CounterRng rng(31);
    for (int trial = 0; trial < 20; ++trial)
    {
        std::vector<std::vector<double>> rows(2 + rng.below(5), std::vector<double>(4));
        for (auto& r: rows)
            for (auto& v: r)
                v = rng.uniform() * 2 - 1;
        auto const ctx = context(rows);
        std::vector<double> theta(4);
        for (auto& v: theta)
            v = rng.uniform() * 4 - 2;
        double const t = 0.5 + rng.uniform() * 2;
        auto const a = rng.below(ctx.size());
        auto const grad = grad_logprob(params(theta, t), ctx, a);
        double const h = 1e-6;
        for (std::size_t k = 0; k < theta.size(); ++k)
        {
            auto up = theta;
            auto down = theta;
            up[k] += h;
            down[k] -= h;
            double const fd =
                (log_likelihood(params(up, t), ctx, a) - log_likelihood(params(down, t), ctx, a)) / (2 * h);
            CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("snapshot and weaken")
{
    auto p = params({1, 2});
    auto const snap = snapshot(p);
    p.theta[0] = 9;
    CHECK(snap.theta[0] == 1);

    auto const ctx = context({{1, 0}, {0, 1}, {0, 0}});
    auto const base = params({2, 1});
    CHECK(action_distribution(weaken(base, 0), ctx) == action_distribution(base, ctx));
    CHECK(entropy(weaken(base, 3), ctx) > entropy(base, ctx));
    CHECK(weaken(base, 3).temperature == doctest::Approx(4.0));
}

TEST_CASE("checkpoint round trip")
{
    auto const p = reference_params(EnvKind::Search);
    CHECK(p.theta.size() == 9);
    CHECK(params_from_json(params_to_json(p)) == p);

    auto const path = std::filesystem::temp_directory_path() / "proceed_test_checkpoint.json";
    save_checkpoint(path, p);
    CHECK(load_checkpoint(path) == p);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
    CHECK_THROWS_AS(params_from_json("{\"theta\": 3}"), Error);
}

TEST_CASE("softmax policy on an environment")
{
    auto env = testing::six_room_env();
    env->reset(0);
    SoftmaxPolicy policy(reference_params(EnvKind::Corridor));
    CounterRng rng(4);
    auto const d = policy.decide(*env, rng);
    REQUIRE(d.context);
    CHECK(d.context->candidates[d.action_index] == d.action);
    REQUIRE(d.logprob);
    CHECK(*policy.logprob(*env, d.action) == doctest::Approx(*d.logprob));

    auto const other = policy.decide_excluding(*env, d.action, rng);
    REQUIRE(other);
    CHECK(other->action != d.action);
}
