// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/policy.hpp"
#include "proceed/rollout.hpp"
#include "proceed/tasks.hpp"
#include "proceed/trajectory.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace proceed
{

struct OptimConfig
{
    double eps_low = 0.2;
    double eps_high = 0.28;
    double learning_rate = 0.05;
    /// Weight of the mean per-state KL to the reference policy; 0 disables it.
    double kl_coeff = 0.01;
    bool drop_degenerate_groups = true;
    int iterations = 200;
    /// Groups (tasks) collected per iteration.
    int batch_groups = 8;
    /// Gradient steps taken on each collected batch.
    int inner_steps = 1;
    /// Write a checkpoint every K iterations (0 = never).
    int checkpoint_every = 0;

    friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

/// Throws DomainError.
void validate(const OptimConfig& config);

/// Standardized rewards (population std). std::nullopt means the group was
/// dropped; degenerate groups that are kept get all-zero advantages.
std::optional<std::vector<double>> group_advantage(std::span<const double> rewards, bool drop_degenerate = true);

/// exp(logp_new - logp_old) clamped to [1e-8, 1e8]. Throws DomainError on
/// non-finite input.
double is_ratio(double logp_new, double logp_old);

/// min(ratio * A, clip(ratio, 1 - eps_low, 1 + eps_high) * A).
double clipped_term(double ratio, double advantage, const OptimConfig& config);

/// Which side of the min/clip a step landed on.
enum class Branch : std::uint8_t
{
    Unclipped,
    ClipLow,
    ClipHigh,
};

Branch clip_branch(double ratio, double advantage, const OptimConfig& config);

/// p(1 - p). Throws DomainError outside [0, 1].
double sigma(double p);

/// 1 for on-policy steps, p(1 - p) for demonstrations.
double sigma(StepTag tag, double p);

/// Weight per step, indexed [group][trajectory][step]: 0 for demonstrations
/// in failed trajectories, 1 otherwise.
std::vector<std::vector<std::vector<int>>> demonstration_mask(const RolloutBuffer& buffer);

struct SurrogateResult
{
    double objective = 0.0;
    std::vector<double> gradient;
    /// Clip branch of every scored step, in buffer order.
    std::vector<Branch> branches;
    std::size_t retained_groups = 0;
    std::size_t dropped_groups = 0;
    std::size_t scored_steps = 0;
    std::size_t demonstration_steps = 0;
    std::size_t masked_steps = 0;
    double mean_abs_advantage = 0.0;
    double mean_kl = 0.0;
};

/// Objective and analytic gradient w.r.t. theta. Steps need their in-memory
/// decision context; steps without one are skipped. `reference` defaults to
/// `params_old` for the KL term. When `frozen` is given its branch pattern
/// replaces the live min/clip selection (for finite-difference checks).
/// Throws EmptyBufferAfterDrop.
SurrogateResult surrogate_and_gradient(const RolloutBuffer& buffer, const PolicyParams& params,
                                       const PolicyParams& params_old, const OptimConfig& config,
                                       const PolicyParams* reference = nullptr,
                                       const std::vector<Branch>* frozen = nullptr);

/// theta + lr * gradient.
PolicyParams ascend(const PolicyParams& params, std::span<const double> gradient, double learning_rate);

struct MetricsRow
{
    int iteration = 0;
    double success_rate = 0.0;
    double mean_reward = 0.0;
    double mean_advantage_abs = 0.0;
    double demo_fraction = 0.0;
    double masked_fraction = 0.0;
    double cost_ratio = 1.0;
    double objective = 0.0;
    double grad_norm = 0.0;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

struct TrainResult
{
    PolicyParams params;
    std::vector<MetricsRow> metrics;
};

/// Periodic checkpoint target; called with (iteration, params).
using CheckpointFn = std::function<void(int, const PolicyParams&)>;

/// Collect-update loop. Each iteration samples `batch_groups` tasks, collects
/// one group per task under the current snapshot (ProCeed slots per
/// `rollout.proceed_fraction`), and ascends the surrogate. The KL reference
/// is the initial policy. Iterations whose groups are all degenerate
/// collect but do not update.
TrainResult train(std::span<const Task> tasks, const PolicyParams& init, const OptimConfig& config,
                  const RolloutConfig& rollout, CriticSuite suite, const CheckpointFn& checkpoint = {});

/// Mean of grad log pi(a_t | s_t) over all steps with a decision context.
std::vector<double> sft_gradient(std::span<const Trajectory> trajectories, const PolicyParams& params);

/// One SFT ascent step. Throws NoCorrectSamples when empty, DomainError when
/// a trajectory failed.
PolicyParams sft_update(std::span<const Trajectory> trajectories, const PolicyParams& params, double learning_rate);

/// Vanilla groups of size g per task, keeping the successful trajectories.
/// Throws NoCorrectSamples.
std::vector<Trajectory> rft_collect(const Policy& policy, std::span<const Task> tasks, int g, std::uint64_t seed,
                                    int workers = 1);

enum class SftSource
{
    Vanilla,
    ProCeed,
};

/// Collects g trajectories per training task once from `init` (vanilla or
/// ProCeed rollouts), keeps the correct ones and runs `config.iterations`
/// SFT steps on them.
TrainResult train_sft(std::span<const Task> tasks, const PolicyParams& init, const OptimConfig& config,
                      const RolloutConfig& rollout, SftSource source, CriticSuite suite);

/// Rejection-sampling fine-tuning: each iteration re-collects vanilla groups
/// on a task batch with the current policy and takes one SFT step on the
/// successes (skipping iterations without any).
TrainResult train_rft(std::span<const Task> tasks, const PolicyParams& init, const OptimConfig& config,
                      const RolloutConfig& rollout);

/// Fraction of successful vanilla episodes, `episodes` per task.
double evaluate_success(const PolicyParams& params, std::span<const Task> tasks, int episodes, std::uint64_t seed,
                        int workers = 1);

} // namespace proceed
