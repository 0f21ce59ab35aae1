// SPDX-License-Identifier: Apache-2.0
#include "proceed/policy.hpp"

#include "proceed/error.hpp"
#include "proceed/corridor_env.hpp"
#include "proceed/search_env.hpp"

#include <fmt/format.h>

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace proceed
{

namespace
{

constexpr int kCheckpointVersion = 1;

void require_candidates(const DecisionContext& ctx)
{
    if (ctx.candidates.empty())
        throw Error(Errc::EmptyCandidates, "decision has no candidate actions");
}

std::vector<double> logits(const PolicyParams& params, const DecisionContext& ctx)
{
    if (params.theta.size() != ctx.dim)
        throw Error(Errc::DomainError,
                    fmt::format("theta has dimension {}, features have {}", params.theta.size(), ctx.dim));
    std::vector<double> z(ctx.size());
    for (std::size_t i = 0; i < ctx.size(); ++i)
    {
        auto const f = ctx.row(i);
        z[i] = std::inner_product(f.begin(), f.end(), params.theta.begin(), 0.0) / params.temperature;
    }
    return z;
}

} // namespace

void validate(const PolicyParams& params)
{
    if (!(params.temperature > 0.0) || !std::isfinite(params.temperature))
        throw Error(Errc::DomainError, fmt::format("temperature must be positive, got {}", params.temperature));
    for (double v: params.theta)
        if (!std::isfinite(v))
            throw Error(Errc::DomainError, "theta has a non-finite entry");
}

PolicyParams reference_params(EnvKind kind)
{
    if (kind == EnvKind::Search)
        return PolicyParams{{9.8, 10.0, 8.6, -6.6, 20.0, 8.4, 0.2, 10.8, 10.8}, 1.0, std::string(SearchEnv::kFeatureMapId)};
    return PolicyParams{{1.5, -0.5, 2.0, 2.5, 0.5, -0.5, 0.5, 0.0}, 1.0, std::string(CorridorEnv::kFeatureMapId)};
}

PolicyParams snapshot(const PolicyParams& params)
{
    return PolicyParams{params.theta, params.temperature, params.feature_map_id};
}

PolicyParams weaken(const PolicyParams& params, double delta_t)
{
    if (!(delta_t >= 0.0))
        throw Error(Errc::DomainError, fmt::format("temperature increase must be non-negative, got {}", delta_t));
    PolicyParams out = snapshot(params);
    out.temperature += delta_t;
    return out;
}

std::vector<double> action_log_distribution(const PolicyParams& params, const DecisionContext& ctx)
{
    require_candidates(ctx);
    auto z = logits(params, ctx);
    double const top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v: z)
        sum += std::exp(v - top);
    double const lse = top + std::log(sum);
    for (double& v: z)
        v -= lse;
    return z;
}

std::vector<double> action_distribution(const PolicyParams& params, const DecisionContext& ctx)
{
    require_candidates(ctx);
    auto z = logits(params, ctx);
    double const top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v: z)
    {
        v = std::exp(v - top);
        sum += v;
    }
    for (double& v: z)
        v /= sum;
    return z;
}

SampledAction sample(const PolicyParams& params, const DecisionContext& ctx, CounterRng& rng)
{
    auto const logp = action_log_distribution(params, ctx);
    double const u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = logp.size() - 1;
    for (std::size_t i = 0; i < logp.size(); ++i)
    {
        acc += std::exp(logp[i]);
        if (u < acc)
        {
            pick = i;
            break;
        }
    }
    return {pick, logp[pick]};
}

std::vector<double> grad_logprob(const PolicyParams& params, const DecisionContext& ctx, std::size_t action)
{
    if (action >= ctx.size())
        throw Error(Errc::ActionNotCandidate, fmt::format("action index {} outside {} candidates", action, ctx.size()));
    auto const p = action_distribution(params, ctx);
    std::vector<double> g(ctx.dim, 0.0);
    for (std::size_t i = 0; i < ctx.size(); ++i)
    {
        auto const f = ctx.row(i);
        for (std::size_t k = 0; k < ctx.dim; ++k)
            g[k] -= p[i] * f[k];
    }
    auto const fa = ctx.row(action);
    for (std::size_t k = 0; k < ctx.dim; ++k)
        g[k] = (g[k] + fa[k]) / params.temperature;
    return g;
}

std::vector<double> grad_logprob(const PolicyParams& params, const DecisionContext& ctx, std::string_view action)
{
    auto const idx = ctx.index_of(action);
    if (idx == ctx.size())
        throw Error(Errc::ActionNotCandidate, fmt::format("'{}' is not a candidate", action));
    return grad_logprob(params, ctx, idx);
}

double entropy(const PolicyParams& params, const DecisionContext& ctx)
{
    auto const logp = action_log_distribution(params, ctx);
    double h = 0.0;
    for (double lp: logp)
        h -= std::exp(lp) * lp;
    return h;
}

std::string params_to_json(const PolicyParams& params)
{
    nlohmann::ordered_json j{
        {"theta", params.theta},
        {"temperature", params.temperature},
        {"feature_map_id", params.feature_map_id},
        {"version", kCheckpointVersion},
    };
    return j.dump(2);
}

PolicyParams params_from_json(std::string_view text)
{
    try
    {
        auto const j = nlohmann::json::parse(text);
        PolicyParams p{j.at("theta").get<std::vector<double>>(), j.at("temperature").get<double>(),
                       j.at("feature_map_id").get<std::string>()};
        if (j.value("version", kCheckpointVersion) != kCheckpointVersion)
            throw Error(Errc::ConfigError, fmt::format("unsupported checkpoint version {}", j.at("version").dump()));
        validate(p);
        return p;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(Errc::ConfigError, fmt::format("malformed policy checkpoint: {}", e.what()));
    }
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Errc::IoError, fmt::format("cannot write '{}'", path.string()));
    out << params_to_json(params) << '\n';
}

PolicyParams load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Errc::IoError, fmt::format("cannot read '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return params_from_json(buf.str());
}

std::int64_t text_units(std::string_view text) noexcept
{
    return static_cast<std::int64_t>(text.size());
}

SoftmaxPolicy::SoftmaxPolicy(PolicyParams params): _params(std::move(params))
{
    validate(_params);
}

PolicyDecision SoftmaxPolicy::decide(const Environment& env, CounterRng& rng) const
{
    auto ctx = std::make_shared<const DecisionContext>(env.decision_context());
    auto const s = sample(_params, *ctx, rng);
    PolicyDecision d;
    d.action = ctx->candidates[s.index];
    d.logprob = s.logprob;
    d.units = text_units(d.action);
    d.action_index = s.index;
    d.context = std::move(ctx);
    return d;
}

std::optional<PolicyDecision> SoftmaxPolicy::decide_excluding(const Environment& env, std::string_view excluded,
                                                              CounterRng& rng) const
{
    auto ctx = std::make_shared<const DecisionContext>(env.decision_context());
    auto const banned = ctx->index_of(excluded);
    if (ctx->size() == 0 || (ctx->size() == 1 && banned == 0))
        return std::nullopt;

    auto logp = action_log_distribution(_params, *ctx);
    double mass = 1.0;
    if (banned < ctx->size())
        mass -= std::exp(logp[banned]);
    double const u = rng.uniform() * mass;
    double acc = 0.0;
    std::size_t pick = ctx->size();
    for (std::size_t i = 0; i < ctx->size(); ++i)
    {
        if (i == banned)
            continue;
        acc += std::exp(logp[i]);
        pick = i;
        if (u < acc)
            break;
    }
    PolicyDecision d;
    d.action = ctx->candidates[pick];
    d.logprob = logp[pick];
    d.units = text_units(d.action);
    d.action_index = pick;
    d.context = std::move(ctx);
    return d;
}

std::optional<double> SoftmaxPolicy::logprob(const Environment& env, std::string_view action) const
{
    auto const ctx = env.decision_context();
    auto const idx = ctx.index_of(action);
    if (idx == ctx.size())
        return std::nullopt;
    return action_log_distribution(_params, ctx)[idx];
}

std::string SoftmaxPolicy::id() const
{
    std::uint64_t h = hash_string(_params.feature_map_id);
    h = combine_keys(h, std::bit_cast<std::uint64_t>(_params.temperature));
    for (double v: _params.theta)
        h = combine_keys(h, std::bit_cast<std::uint64_t>(v));
    return fmt::format("softmax-{:016x}", h);
}

} // namespace proceed
