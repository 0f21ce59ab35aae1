// SPDX-License-Identifier: Apache-2.0
#include "proceed/optimizer.hpp"

#include "proceed/error.hpp"
#include "proceed/rng.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace proceed
{

namespace
{

constexpr double kRatioFloor = 1e-8;
constexpr double kRatioCeil = 1e8;

/// out += w * (f_a - E_p f) / T
void add_score_function(std::vector<double>& out, double w, const DecisionContext& ctx, std::span<const double> p,
                        std::size_t a, double temperature)
{
    std::vector<double> mean(ctx.dim, 0.0);
    for (std::size_t i = 0; i < ctx.size(); ++i)
    {
        auto const f = ctx.row(i);
        for (std::size_t k = 0; k < ctx.dim; ++k)
            mean[k] += p[i] * f[k];
    }
    auto const fa = ctx.row(a);
    for (std::size_t k = 0; k < ctx.dim; ++k)
        out[k] += w * (fa[k] - mean[k]) / temperature;
}

std::vector<Environment const*> borrow(const std::vector<std::unique_ptr<Environment>>& envs)
{
    std::vector<Environment const*> out;
    out.reserve(envs.size());
    for (auto const& e: envs)
        out.push_back(e.get());
    return out;
}

std::vector<std::unique_ptr<Environment>> make_environments(std::span<const Task> tasks)
{
    std::vector<std::unique_ptr<Environment>> envs;
    envs.reserve(tasks.size());
    for (auto const& t: tasks)
        envs.push_back(make_environment(t));
    return envs;
}

std::vector<Task> sample_batch(std::span<const Task> tasks, int batch, std::uint64_t seed, int iteration)
{
    CounterRng rng(derive_seed(seed, "train-batch", static_cast<std::uint64_t>(iteration)));
    std::vector<std::size_t> idx(tasks.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<Task> out;
    auto const n = static_cast<std::size_t>(batch);
    if (n <= idx.size())
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            auto const j = i + rng.below(idx.size() - i);
            std::swap(idx[i], idx[j]);
            out.push_back(tasks[idx[i]]);
        }
    }
    else
    {
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(tasks[rng.below(tasks.size())]);
    }
    return out;
}

double norm(std::span<const double> v)
{
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::vector<Trajectory> successes(RolloutBuffer buffer)
{
    std::vector<Trajectory> out;
    for (auto& g: buffer.groups)
        for (auto& t: g.trajectories)
            if (t.reward == 1.0)
                out.push_back(std::move(t));
    return out;
}

} // namespace

void validate(const OptimConfig& config)
{
    if (!(config.eps_low > 0.0) || !(config.eps_high > 0.0))
        throw Error(Errc::DomainError, "clip epsilons must be positive");
    if (!(config.learning_rate > 0.0))
        throw Error(Errc::DomainError, "learning rate must be positive");
    if (!(config.kl_coeff >= 0.0))
        throw Error(Errc::DomainError, "KL coefficient must be non-negative");
    if (config.iterations < 0 || config.batch_groups < 1 || config.inner_steps < 1 || config.checkpoint_every < 0)
        throw Error(Errc::DomainError, "iterations, batch_groups, inner_steps or checkpoint_every out of range");
}

std::optional<std::vector<double>> group_advantage(std::span<const double> rewards, bool drop_degenerate)
{
    if (rewards.empty())
        throw Error(Errc::EmptyGroup, "advantage of an empty group");
    double const n = static_cast<double>(rewards.size());
    double const mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r: rewards)
        var += (r - mean) * (r - mean);
    double const sd = std::sqrt(var / n);
    if (sd == 0.0)
    {
        if (drop_degenerate)
            return std::nullopt;
        return std::vector<double>(rewards.size(), 0.0);
    }
    std::vector<double> adv;
    adv.reserve(rewards.size());
    for (double r: rewards)
        adv.push_back((r - mean) / sd);
    return adv;
}

double is_ratio(double logp_new, double logp_old)
{
    if (!std::isfinite(logp_new) || !std::isfinite(logp_old))
        throw Error(Errc::DomainError, "importance ratio of non-finite log-probabilities");
    double const r = std::exp(logp_new - logp_old);
    if (r < kRatioFloor || r > kRatioCeil)
    {
        spdlog::warn("importance ratio exp({} - {}) clamped", logp_new, logp_old);
        return std::clamp(r, kRatioFloor, kRatioCeil);
    }
    return r;
}

double clipped_term(double ratio, double advantage, const OptimConfig& config)
{
    double const clipped = std::clamp(ratio, 1.0 - config.eps_low, 1.0 + config.eps_high);
    return std::min(ratio * advantage, clipped * advantage);
}

Branch clip_branch(double ratio, double advantage, const OptimConfig& config)
{
    if (advantage > 0.0 && ratio > 1.0 + config.eps_high)
        return Branch::ClipHigh;
    if (advantage < 0.0 && ratio < 1.0 - config.eps_low)
        return Branch::ClipLow;
    return Branch::Unclipped;
}

double sigma(double p)
{
    if (!(p >= 0.0 && p <= 1.0))
        throw Error(Errc::DomainError, fmt::format("probability {} outside [0,1]", p));
    return p * (1.0 - p);
}

double sigma(StepTag tag, double p)
{
    if (tag == StepTag::OnPolicy)
        return 1.0;
    return sigma(p);
}

std::vector<std::vector<std::vector<int>>> demonstration_mask(const RolloutBuffer& buffer)
{
    std::vector<std::vector<std::vector<int>>> mask;
    mask.reserve(buffer.groups.size());
    for (auto const& g: buffer.groups)
    {
        auto& gm = mask.emplace_back();
        for (auto const& t: g.trajectories)
        {
            auto& tm = gm.emplace_back();
            for (auto const& s: t.steps)
                tm.push_back(s.tag == StepTag::Demonstration && t.reward == 0.0 ? 0 : 1);
        }
    }
    return mask;
}

SurrogateResult surrogate_and_gradient(const RolloutBuffer& buffer, const PolicyParams& params,
                                       const PolicyParams& params_old, const OptimConfig& config,
                                       const PolicyParams* reference, const std::vector<Branch>* frozen)
{
    validate(params);
    auto const& ref = reference ? *reference : params_old;
    auto const dim = params.theta.size();
    bool const use_kl = config.kl_coeff > 0.0;

    SurrogateResult res;
    res.gradient.assign(dim, 0.0);
    std::vector<double> kl_grad(dim, 0.0);
    double kl_sum = 0.0;
    std::size_t kl_states = 0;
    double abs_adv = 0.0;
    std::size_t adv_count = 0;
    std::size_t branch_pos = 0;

    for (auto const& group: buffer.groups)
    {
        std::vector<double> rewards;
        for (auto const& t: group.trajectories)
            rewards.push_back(t.reward);
        auto const adv = group_advantage(rewards, config.drop_degenerate_groups);
        if (!adv)
        {
            ++res.dropped_groups;
            continue;
        }
        ++res.retained_groups;
        double const inv_g = 1.0 / static_cast<double>(group.trajectories.size());

        for (std::size_t i = 0; i < group.trajectories.size(); ++i)
        {
            auto const& traj = group.trajectories[i];
            double const A = (*adv)[i];
            abs_adv += std::abs(A);
            ++adv_count;
            for (auto const& step: traj.steps)
            {
                if (!step.decision)
                    continue;
                auto const& ctx = *step.decision;
                auto const a = step.action_index;
                bool const demo = step.tag == StepTag::Demonstration;
                if (demo)
                    ++res.demonstration_steps;
                auto const logp = action_log_distribution(params, ctx);
                std::vector<double> p(logp.size());
                std::transform(logp.begin(), logp.end(), p.begin(), [](double v) { return std::exp(v); });

                if (use_kl)
                {
                    auto const logq = action_log_distribution(ref, ctx);
                    double kl = 0.0;
                    for (std::size_t j = 0; j < p.size(); ++j)
                    {
                        double const d = logp[j] - logq[j];
                        kl += p[j] * d;
                        add_score_function(kl_grad, p[j] * d, ctx, p, j, params.temperature);
                    }
                    kl_sum += kl;
                    ++kl_states;
                }

                if (demo && traj.reward == 0.0)
                {
                    ++res.masked_steps;
                    continue;
                }
                ++res.scored_steps;

                double const logp_old = action_log_distribution(params_old, ctx)[a];
                double const raw = std::exp(logp[a] - logp_old);
                double const r = is_ratio(logp[a], logp_old);
                Branch const branch =
                    frozen ? frozen->at(branch_pos) : clip_branch(r, A, config);
                ++branch_pos;
                res.branches.push_back(branch);

                double c = 0.0;
                switch (branch)
                {
                    case Branch::Unclipped: c = r * A; break;
                    case Branch::ClipLow: c = (1.0 - config.eps_low) * A; break;
                    case Branch::ClipHigh: c = (1.0 + config.eps_high) * A; break;
                }
                double const pa = p[a];
                double const s = sigma(step.tag, pa);
                res.objective += inv_g * s * c;

                double w = 0.0;
                if (branch == Branch::Unclipped && raw == r)
                    w += s * r * A;
                if (demo)
                    w += c * (1.0 - 2.0 * pa) * pa;
                if (w != 0.0)
                    add_score_function(res.gradient, inv_g * w, ctx, p, a, params.temperature);
            }
        }
    }

    if (res.retained_groups == 0)
        throw Error(Errc::EmptyBufferAfterDrop, "every group in the buffer was dropped");
    double const inv_groups = 1.0 / static_cast<double>(res.retained_groups);
    res.objective *= inv_groups;
    for (double& g: res.gradient)
        g *= inv_groups;
    res.mean_abs_advantage = adv_count ? abs_adv / static_cast<double>(adv_count) : 0.0;

    if (use_kl && kl_states > 0)
    {
        double const inv = 1.0 / static_cast<double>(kl_states);
        res.mean_kl = kl_sum * inv;
        res.objective -= config.kl_coeff * res.mean_kl;
        for (std::size_t k = 0; k < dim; ++k)
            res.gradient[k] -= config.kl_coeff * kl_grad[k] * inv;
    }
    return res;
}

PolicyParams ascend(const PolicyParams& params, std::span<const double> gradient, double learning_rate)
{
    if (gradient.size() != params.theta.size())
        throw Error(Errc::DomainError, "gradient and theta dimensions differ");
    PolicyParams out = snapshot(params);
    for (std::size_t k = 0; k < gradient.size(); ++k)
        out.theta[k] += learning_rate * gradient[k];
    return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows)
{
    out << "iteration,success_rate,mean_reward,mean_advantage_abs,demo_fraction,masked_fraction,cost_ratio,"
           "objective,grad_norm\n";
    for (auto const& r: rows)
        out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.8f},{:.8f}\n", r.iteration,
                           r.success_rate, r.mean_reward, r.mean_advantage_abs, r.demo_fraction, r.masked_fraction,
                           r.cost_ratio, r.objective, r.grad_norm);
}

TrainResult train(std::span<const Task> tasks, const PolicyParams& init, const OptimConfig& config,
                  const RolloutConfig& rollout, CriticSuite suite, const CheckpointFn& checkpoint)
{
    validate(config);
    validate(rollout);
    if (tasks.empty())
        throw Error(Errc::ConfigError, "no training tasks");

    TrainResult result{snapshot(init), {}};
    PolicyParams const reference = snapshot(init);
    for (int it = 0; it < config.iterations; ++it)
    {
        auto const batch = sample_batch(tasks, config.batch_groups, rollout.seed, it);
        auto const envs = make_environments(batch);
        auto const protos = borrow(envs);
        RolloutConfig rc = rollout;
        rc.seed = derive_seed(rollout.seed, "iteration", static_cast<std::uint64_t>(it));

        PolicyParams const old = snapshot(result.params);
        SoftmaxPolicy const policy(old);
        auto const buffer = collect_batch(protos, policy, suite, rc);

        MetricsRow row;
        row.iteration = it;
        std::size_t n_traj = 0;
        std::size_t n_vanilla = 0;
        std::size_t vanilla_success = 0;
        std::size_t steps = 0;
        std::size_t demos = 0;
        double reward = 0.0;
        std::vector<Trajectory> proceed_trajs;
        for (auto const& g: buffer.groups)
            for (auto const& t: g.trajectories)
            {
                ++n_traj;
                reward += t.reward;
                steps += t.steps.size();
                demos += t.demonstration_count();
                if (t.mode == RolloutMode::Vanilla)
                {
                    ++n_vanilla;
                    vanilla_success += t.reward == 1.0;
                }
                else
                {
                    proceed_trajs.push_back(t);
                }
            }
        row.mean_reward = reward / static_cast<double>(n_traj);
        row.success_rate = n_vanilla ? static_cast<double>(vanilla_success) / static_cast<double>(n_vanilla)
                                     : row.mean_reward;
        row.demo_fraction = steps ? static_cast<double>(demos) / static_cast<double>(steps) : 0.0;
        std::size_t masked = 0;
        for (auto const& g: demonstration_mask(buffer))
            for (auto const& t: g)
                masked += static_cast<std::size_t>(std::count(t.begin(), t.end(), 0));
        row.masked_fraction = steps ? static_cast<double>(masked) / static_cast<double>(steps) : 0.0;
        row.cost_ratio = proceed_trajs.empty() ? 1.0 : cost_ratio(proceed_trajs);

        for (int inner = 0; inner < config.inner_steps; ++inner)
        {
            try
            {
                auto const res = surrogate_and_gradient(buffer, result.params, old, config, &reference);
                if (inner == 0)
                {
                    row.objective = res.objective;
                    row.grad_norm = norm(res.gradient);
                    row.mean_advantage_abs = res.mean_abs_advantage;
                }
                result.params = ascend(result.params, res.gradient, config.learning_rate);
            }
            catch (const Error& e)
            {
                if (e.code() != Errc::EmptyBufferAfterDrop)
                    throw;
                break;
            }
        }
        result.metrics.push_back(row);
        if (checkpoint && config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0)
            checkpoint(it + 1, result.params);
    }
    return result;
}

std::vector<double> sft_gradient(std::span<const Trajectory> trajectories, const PolicyParams& params)
{
    std::vector<double> grad(params.theta.size(), 0.0);
    std::size_t n = 0;
    for (auto const& t: trajectories)
        for (auto const& s: t.steps)
        {
            if (!s.decision)
                continue;
            auto const g = grad_logprob(params, *s.decision, s.action_index);
            for (std::size_t k = 0; k < grad.size(); ++k)
                grad[k] += g[k];
            ++n;
        }
    if (n > 0)
        for (double& g: grad)
            g /= static_cast<double>(n);
    return grad;
}

PolicyParams sft_update(std::span<const Trajectory> trajectories, const PolicyParams& params, double learning_rate)
{
    if (trajectories.empty())
        throw Error(Errc::NoCorrectSamples, "no trajectories to fine-tune on");
    for (auto const& t: trajectories)
        if (t.reward != 1.0)
            throw Error(Errc::DomainError, fmt::format("SFT trajectory for task {} is not successful", t.task_id));
    return ascend(params, sft_gradient(trajectories, params), learning_rate);
}

std::vector<Trajectory> rft_collect(const Policy& policy, std::span<const Task> tasks, int g, std::uint64_t seed,
                                    int workers)
{
    RolloutConfig rc;
    rc.group_size = g;
    rc.proceed_fraction = 0.0;
    rc.seed = seed;
    rc.workers = workers;
    auto const envs = make_environments(tasks);
    auto const protos = borrow(envs);
    auto out = successes(collect_batch(protos, policy, {}, rc));
    if (out.empty())
        throw Error(Errc::NoCorrectSamples, "no successful trajectory among the collected groups");
    return out;
}

TrainResult train_sft(std::span<const Task> tasks, const PolicyParams& init, const OptimConfig& config,
                      const RolloutConfig& rollout, SftSource source, CriticSuite suite)
{
    validate(config);
    RolloutConfig rc = rollout;
    rc.proceed_fraction = source == SftSource::ProCeed ? 1.0 : 0.0;
    auto const envs = make_environments(tasks);
    auto const protos = borrow(envs);
    auto const buffer = collect_batch(protos, SoftmaxPolicy(init), suite, rc);

    std::size_t total = 0;
    for (auto const& g: buffer.groups)
        total += g.trajectories.size();
    auto const data = successes(buffer);
    if (data.empty())
        throw Error(Errc::NoCorrectSamples, "no successful trajectory to fine-tune on");
    double const yield = static_cast<double>(data.size()) / static_cast<double>(total);

    TrainResult result{snapshot(init), {}};
    for (int it = 0; it < config.iterations; ++it)
    {
        auto const grad = sft_gradient(data, result.params);
        MetricsRow row;
        row.iteration = it;
        row.success_rate = yield;
        row.mean_reward = yield;
        row.grad_norm = norm(grad);
        result.params = ascend(result.params, grad, config.learning_rate);
        result.metrics.push_back(row);
    }
    return result;
}

TrainResult train_rft(std::span<const Task> tasks, const PolicyParams& init, const OptimConfig& config,
                      const RolloutConfig& rollout)
{
    validate(config);
    TrainResult result{snapshot(init), {}};
    for (int it = 0; it < config.iterations; ++it)
    {
        auto const batch = sample_batch(tasks, config.batch_groups, rollout.seed, it);
        auto const seed = derive_seed(rollout.seed, "iteration", static_cast<std::uint64_t>(it));
        MetricsRow row;
        row.iteration = it;
        try
        {
            auto const data = rft_collect(SoftmaxPolicy(result.params), batch, rollout.group_size, seed,
                                          rollout.workers);
            auto const grad = sft_gradient(data, result.params);
            row.success_rate = static_cast<double>(data.size()) /
                               static_cast<double>(batch.size() * static_cast<std::size_t>(rollout.group_size));
            row.mean_reward = row.success_rate;
            row.grad_norm = norm(grad);
            result.params = ascend(result.params, grad, config.learning_rate);
        }
        catch (const Error& e)
        {
            if (e.code() != Errc::NoCorrectSamples)
                throw;
        }
        result.metrics.push_back(row);
    }
    return result;
}

double evaluate_success(const PolicyParams& params, std::span<const Task> tasks, int episodes, std::uint64_t seed,
                        int workers)
{
    if (tasks.empty() || episodes < 1)
        throw Error(Errc::DomainError, "evaluation needs tasks and at least one episode");
    RolloutConfig rc;
    rc.group_size = episodes;
    rc.proceed_fraction = 0.0;
    rc.seed = seed;
    rc.workers = workers;
    auto const envs = make_environments(tasks);
    auto const protos = borrow(envs);
    auto const buffer = collect_batch(protos, SoftmaxPolicy(params), {}, rc);
    std::size_t wins = 0;
    std::size_t total = 0;
    for (auto const& g: buffer.groups)
        for (auto const& t: g.trajectories)
        {
            wins += t.reward == 1.0;
            ++total;
        }
    return static_cast<double>(wins) / static_cast<double>(total);
}

} // namespace proceed
