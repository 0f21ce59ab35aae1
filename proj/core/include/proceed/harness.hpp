// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/critic.hpp"
#include "proceed/llm_agents.hpp"
#include "proceed/optimizer.hpp"
#include "proceed/rollout.hpp"
#include "proceed/tasks.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace proceed
{

enum class Experiment
{
    NoiseStudy,
    PassK,
    ThresholdAblation,
    RefineStudy,
    TrainCompare,
    CostReport,
};

std::string_view to_string(Experiment experiment) noexcept;

enum class Method
{
    Dapo,
    ProCeedRL,
    Rft,
    Sft,
    ProCeedSft,
};

std::string_view to_string(Method method) noexcept;
Method method_from_string(std::string_view name);

/// Starting policy. `checkpoint` wins over `uniform`; the reference
/// parameters are otherwise weakened by `delta_t`.
struct PolicySource
{
    std::optional<std::filesystem::path> checkpoint;
    bool uniform = false;
    double delta_t = 0.0;

    friend bool operator==(const PolicySource&, const PolicySource&) = default;
};

struct LlmSettings
{
    std::string endpoint_url;
    std::string model_name;
    int max_in_flight = 8;
    int max_retries = 3;
    int timeout_ms = 60000;

    friend bool operator==(const LlmSettings&, const LlmSettings&) = default;
};

struct ExperimentConfig
{
    EnvKind env = EnvKind::Search;
    /// Hops for search, optimal plan length for corridor.
    int difficulty = 4;
    double noise_level = 0.5;
    int task_count = 500;
    std::uint64_t task_seed = 1;
    std::optional<std::filesystem::path> tasks_path;
    std::uint64_t seed = 7;
    int workers = 1;
    std::filesystem::path out_dir = "results";

    PolicySource policy;
    CriticConfig critic;
    LlmSettings llm;

    int group_size = 8;
    double proceed_fraction = 0.5;
    int max_steps = 0;
    bool literal_double_step = false;

    // noise study
    double nu_low = 0.2;
    double nu_high = 0.6;
    int episodes = 500;
    double weak_delta_t = 4.0;

    // pass@k
    int vanilla_k = 32;
    int proceed_k = 8;
    int calibration_tasks = 50;

    // threshold ablation
    std::vector<int> thresholds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

    // training
    OptimConfig optim;
    std::vector<Method> methods{Method::Dapo, Method::ProCeedRL, Method::Rft, Method::Sft, Method::ProCeedSft};
    std::vector<std::uint64_t> train_seeds{1, 2, 3};
    int eval_task_count = 200;
    int eval_episodes = 4;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Defaults for one experiment at desk scale.
ExperimentConfig preset(Experiment experiment);

/// Throws ConfigError (also for referenced paths that do not exist).
void validate(const ExperimentConfig& config);

/// Overlays the keys present in `json` onto `base`. Unknown keys are
/// rejected. Throws ConfigError.
ExperimentConfig config_from_json(std::string_view json, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
std::string config_to_json(const ExperimentConfig& config);

/// 16 hex digits over the canonical JSON form.
std::string config_hash(const ExperimentConfig& config);

/// Generated from the config, or loaded from `tasks_path`; ν and max_steps
/// overrides applied.
std::vector<Task> experiment_tasks(const ExperimentConfig& config);

PolicyParams initial_params(const ExperimentConfig& config);

RolloutConfig rollout_config(const ExperimentConfig& config, std::uint64_t seed);

/// Critic and refiner built from the config; LLM kinds need `llm` settings.
struct CriticBundle
{
    std::shared_ptr<const LlmClient> client;
    std::unique_ptr<Critic> critic;
    std::unique_ptr<Refiner> refiner;

    [[nodiscard]] CriticSuite suite() const { return {critic.get(), refiner.get()}; }
};

CriticBundle make_critic(const ExperimentConfig& config);

/// 95% Wilson interval.
struct Interval
{
    double low = 0.0;
    double high = 0.0;
};

Interval wilson_interval(std::size_t successes, std::size_t n);

/// Normal-approximation interval on p1 - p2 for independent proportions.
Interval difference_interval(std::size_t s1, std::size_t n1, std::size_t s2, std::size_t n2);

/// Rows are already formatted; every row starts with config_hash and seed.
struct CsvTable
{
    std::vector<std::string> comments;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::string to_csv() const;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);

struct NoiseCell
{
    std::string policy;
    double noise_level = 0.0;
    std::size_t successes = 0;
    std::size_t episodes = 0;
    double success_rate = 0.0;
    Interval interval;
};

struct NoiseDrop
{
    std::string policy;
    double drop = 0.0;
    Interval interval;
};

struct NoiseStudyResult
{
    std::vector<NoiseCell> cells;
    std::vector<NoiseDrop> drops;
};

NoiseStudyResult exp_noise_study(const ExperimentConfig& config);
CsvTable to_table(const NoiseStudyResult& result, const ExperimentConfig& config);

struct PassKRow
{
    int k = 0;
    double vanilla = 0.0;
    std::optional<double> proceed;
    /// Vanilla generations costing the same as k ProCeed trajectories.
    std::optional<double> cost_equivalent_k;
};

struct PassKResult
{
    double cost_ratio = 1.0;
    std::vector<PassKRow> rows;

    /// Max vanilla pass@k over all k.
    [[nodiscard]] double vanilla_ceiling() const;
};

PassKResult exp_passk(const ExperimentConfig& config);
CsvTable to_table(const PassKResult& result, const ExperimentConfig& config);

/// Fraction of groups with at least one success among their first k
/// trajectories.
double pass_at_k(const RolloutBuffer& buffer, int k);

struct ThresholdRow
{
    /// nullopt is the no-rewind baseline.
    std::optional<int> threshold;
    std::size_t successes = 0;
    std::size_t episodes = 0;
    double success_rate = 0.0;
    std::size_t demonstrations = 0;
    /// Vanilla steps scoring exactly `threshold`.
    std::size_t score_count = 0;
};

struct ThresholdAblationResult
{
    /// Critic score -> vanilla steps with that score.
    std::map<int, std::size_t> histogram;
    std::vector<ThresholdRow> rows;

    [[nodiscard]] double success(std::optional<int> threshold) const;
};

ThresholdAblationResult exp_threshold_ablation(const ExperimentConfig& config);
CsvTable to_table(const ThresholdAblationResult& result, const ExperimentConfig& config);

/// Critic score of every step of a vanilla trajectory, replayed from its seed.
std::vector<int> score_trajectory(const Trajectory& traj, const Environment& prototype, const Critic& critic,
                                  CounterRng rng);

struct RefineStudyResult
{
    std::size_t harvested = 0;
    std::vector<DeltaBucket> buckets;

    /// Count-weighted mean delta over buckets [lo, hi].
    [[nodiscard]] double mean_delta(int lo, int hi) const;
    [[nodiscard]] std::size_t count(int lo, int hi) const;
};

RefineStudyResult exp_refine_study(const ExperimentConfig& config);
CsvTable to_table(const RefineStudyResult& result, const ExperimentConfig& config);

struct TrainRow
{
    Method method = Method::Dapo;
    std::uint64_t seed = 0;
    double heldout_success = 0.0;
    std::optional<Method> baseline;
    std::optional<double> paired_diff;
};

struct TrainCompareResult
{
    std::vector<TrainRow> rows;

    [[nodiscard]] std::optional<double> success(Method method, std::uint64_t seed) const;
};

/// Single training run of one method.
TrainResult train_method(Method method, std::span<const Task> train_tasks, const ExperimentConfig& config,
                         std::uint64_t seed, CriticSuite suite);

TrainCompareResult exp_train_compare(const ExperimentConfig& config);
CsvTable to_table(const TrainCompareResult& result, const ExperimentConfig& config);

struct CostRow
{
    std::string source;
    double mean_policy_units = 0.0;
    double mean_critic_units = 0.0;
    double ratio = 1.0;
};

/// Ratios for the fixed (policy, critic) unit pairs followed by the ratio
/// measured on a ProCeed run of the configured tasks.
std::vector<CostRow> cost_report(const ExperimentConfig& config);
CsvTable to_table(const std::vector<CostRow>& rows, const ExperimentConfig& config);

/// Fixed (mean policy units, mean critic units) pairs.
std::vector<std::pair<double, double>> reference_unit_pairs();

/// Runs the experiment and writes `<out_dir>/<name>.csv`; returns the path.
std::filesystem::path run_experiment(Experiment experiment, const ExperimentConfig& config);

} // namespace proceed
