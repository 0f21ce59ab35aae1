// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/decision.hpp"
#include "proceed/environment.hpp"
#include "proceed/rng.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace proceed
{

/// Parameters of the linear-softmax policy p(a) ∝ exp(theta·f(s,a) / T).
struct PolicyParams
{
    std::vector<double> theta;
    double temperature = 1.0;
    std::string feature_map_id;

    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Throws DomainError on T <= 0 or non-finite entries.
void validate(const PolicyParams& params);

/// Hand-set starting parameters for an environment's feature map.
PolicyParams reference_params(EnvKind kind);

/// Returns an independent copy; the snapshot never aliases the original.
PolicyParams snapshot(const PolicyParams& params);
/// Raises the temperature by delta_t >= 0.
PolicyParams weaken(const PolicyParams& params, double delta_t);

/// Throws EmptyCandidates.
std::vector<double> action_distribution(const PolicyParams& params, const DecisionContext& ctx);
std::vector<double> action_log_distribution(const PolicyParams& params, const DecisionContext& ctx);

struct SampledAction
{
    std::size_t index = 0;
    double logprob = 0.0;
};

/// Throws EmptyCandidates.
SampledAction sample(const PolicyParams& params, const DecisionContext& ctx, CounterRng& rng);

/// d/dtheta log p(action) = (f(s,a) - E_p[f]) / T. Throws ActionNotCandidate.
std::vector<double> grad_logprob(const PolicyParams& params, const DecisionContext& ctx, std::size_t action);
std::vector<double> grad_logprob(const PolicyParams& params, const DecisionContext& ctx, std::string_view action);

double entropy(const PolicyParams& params, const DecisionContext& ctx);

/// Checkpoint JSON: theta, temperature, feature_map_id, version.
std::string params_to_json(const PolicyParams& params);
PolicyParams params_from_json(std::string_view text);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

/// One policy decision during a rollout.
struct PolicyDecision
{
    std::string action;
    std::optional<double> logprob;
    std::int64_t units = 0;
    /// Set by trainable policies; shared with the recorded step.
    std::shared_ptr<const DecisionContext> context;
    std::size_t action_index = 0;
};

/// The policy contract used by rollouts. Implementations are immutable and
/// safe to call from several threads with distinct RNG streams.
class Policy
{
public:
    virtual ~Policy() = default;

    [[nodiscard]] virtual PolicyDecision decide(const Environment& env, CounterRng& rng) const = 0;

    /// A decision that avoids `excluded`; nullopt when nothing else is available.
    [[nodiscard]] virtual std::optional<PolicyDecision> decide_excluding(const Environment& env,
                                                                         std::string_view excluded,
                                                                         CounterRng& rng) const = 0;

    /// Log-probability of `action` at the environment's current state, when known.
    [[nodiscard]] virtual std::optional<double> logprob(const Environment& env, std::string_view action) const = 0;

    [[nodiscard]] virtual std::string id() const = 0;
};

/// The trainable linear-softmax policy.
class SoftmaxPolicy final : public Policy
{
public:
    explicit SoftmaxPolicy(PolicyParams params);

    [[nodiscard]] const PolicyParams& params() const noexcept { return _params; }

    [[nodiscard]] PolicyDecision decide(const Environment& env, CounterRng& rng) const override;
    [[nodiscard]] std::optional<PolicyDecision> decide_excluding(const Environment& env, std::string_view excluded,
                                                                 CounterRng& rng) const override;
    [[nodiscard]] std::optional<double> logprob(const Environment& env, std::string_view action) const override;
    [[nodiscard]] std::string id() const override;

private:
    PolicyParams _params;
};

/// Character count of an action string, the cost unit for scripted policies.
std::int64_t text_units(std::string_view text) noexcept;

} // namespace proceed
