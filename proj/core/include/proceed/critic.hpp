// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/environment.hpp"
#include "proceed/policy.hpp"
#include "proceed/rng.hpp"
#include "proceed/trajectory.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace proceed
{

enum class CriticKind
{
    Oracle,
    SelfCritic,
    Homogeneous,
    External,
};

std::string_view to_string(CriticKind kind) noexcept;
CriticKind critic_kind_from_string(std::string_view name);

struct CritiqueRecord
{
    int score = 10;
    std::string critique;
    std::optional<std::string> suggestion_action;
    std::optional<std::string> suggestion_reasoning;
    /// Generation cost of producing this record.
    std::int64_t units = 0;

    friend bool operator==(const CritiqueRecord&, const CritiqueRecord&) = default;
};

struct CriticConfig
{
    /// Steps scoring at or below the threshold are rewound and refined.
    int threshold = 3;
    CriticKind kind = CriticKind::Oracle;
    /// Reversible environments are probed so the critic sees s_{t+1}.
    bool reversible_env = true;
    int max_refinements_per_step = 1;
    /// Oracle refiner: probability of returning the best candidate.
    double refiner_fidelity = 0.8;
    /// Oracle critic: standard deviation of Gaussian score noise (0 = exact).
    double score_noise = 0.0;

    friend bool operator==(const CriticConfig&, const CriticConfig&) = default;
};

/// Throws DomainError.
void validate(const CriticConfig& config);

/// True iff record.score <= config.threshold.
bool should_rewind(const CritiqueRecord& record, const CriticConfig& config) noexcept;

/// Process critic. `env` is positioned at s_t, before `action` is applied.
class Critic
{
public:
    explicit Critic(bool reversible_env): _reversible(reversible_env) {}
    virtual ~Critic() = default;

    /// Throws ContractViolation when the presence of `next_observation` does
    /// not match the reversibility mode, BackendFailure from LLM backends.
    CritiqueRecord evaluate(const Trajectory& history, const Environment& env, std::string_view action,
                            const std::optional<std::string>& next_observation, CounterRng& rng) const;

    [[nodiscard]] bool reversible() const noexcept { return _reversible; }

protected:
    virtual CritiqueRecord do_evaluate(const Trajectory& history, const Environment& env, std::string_view action,
                                       const std::optional<std::string>& next_observation, CounterRng& rng) const = 0;

private:
    bool _reversible;
};

/// Scores with the environment's exact step value, optionally perturbed.
class OracleCritic final : public Critic
{
public:
    explicit OracleCritic(bool reversible_env, double score_noise = 0.0);

protected:
    CritiqueRecord do_evaluate(const Trajectory& history, const Environment& env, std::string_view action,
                               const std::optional<std::string>& next_observation, CounterRng& rng) const override;

private:
    double _score_noise;
};

struct Refinement
{
    std::string action;
    std::int64_t units = 0;
};

/// Refinement policy mu. `env` is positioned at s_t.
class Refiner
{
public:
    virtual ~Refiner() = default;

    /// Throws NoAlternativeAction, BackendFailure.
    [[nodiscard]] virtual Refinement refine(const Trajectory& history, const Environment& env, const Policy& policy,
                                            std::string_view rejected, const CritiqueRecord& record,
                                            CounterRng& rng) const = 0;
};

/// With probability `fidelity` returns the candidate of highest oracle value
/// (ties to the lowest index); otherwise resamples from the policy with the
/// rejected action removed.
class OracleRefiner final : public Refiner
{
public:
    explicit OracleRefiner(double fidelity);

    [[nodiscard]] Refinement refine(const Trajectory& history, const Environment& env, const Policy& policy,
                                    std::string_view rejected, const CritiqueRecord& record,
                                    CounterRng& rng) const override;

private:
    double _fidelity;
};

/// A step harvested for the offline refinement study.
struct StudyStep
{
    std::shared_ptr<const Environment> env;
    Trajectory history;
    std::string action;
    int score = 0;
};

struct DeltaBucket
{
    int original_score = 0;
    std::size_t count = 0;
    double mean_delta = 0.0;
    /// delta -> occurrences.
    std::map<int, std::size_t> distribution;
};

/// Refines each step, re-scores the refined action with the same critic and
/// buckets (new - old) by original score. One bucket per score 0..9, empty
/// ones included. Throws DomainError if any score is 10.
std::vector<DeltaBucket> refinement_delta_study(const std::vector<StudyStep>& steps, const Critic& critic,
                                                const Refiner& refiner, const Policy& policy, CounterRng rng);

} // namespace proceed
