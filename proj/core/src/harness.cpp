// SPDX-License-Identifier: Apache-2.0
#include "proceed/harness.hpp"

#include "proceed/error.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace proceed
{

using nlohmann::json;

namespace
{

constexpr double kZ95 = 1.959963984540054;

constexpr std::array<std::pair<Method, std::string_view>, 5> kMethods{{
    {Method::Dapo, "dapo"},
    {Method::ProCeedRL, "proceed-rl"},
    {Method::Rft, "rft"},
    {Method::Sft, "sft"},
    {Method::ProCeedSft, "proceed-sft"},
}};

[[noreturn]] void config_error(const std::string& what)
{
    throw Error(Errc::ConfigError, what);
}

/// Reads known keys out of one JSON object and rejects the rest.
class ObjectReader
{
public:
    ObjectReader(const json& obj, std::string where): _obj(obj), _where(std::move(where))
    {
        if (!_obj.is_object())
            config_error(fmt::format("{} must be an object", _where));
    }

    template <class T>
    void read(const char* key, T& out)
    {
        auto it = _obj.find(key);
        if (it == _obj.end())
            return;
        _seen.insert(key);
        try
        {
            convert(*it, out);
        }
        catch (const json::exception& e)
        {
            config_error(fmt::format("{}.{}: {}", _where, key, e.what()));
        }
        catch (const Error& e)
        {
            config_error(fmt::format("{}.{}: {}", _where, key, e.what()));
        }
    }

    const json* child(const char* key)
    {
        auto it = _obj.find(key);
        if (it == _obj.end())
            return nullptr;
        _seen.insert(key);
        return &*it;
    }

    void finish() const
    {
        for (auto const& [key, value]: _obj.items())
            if (!_seen.contains(key))
                config_error(fmt::format("unknown key '{}' in {}", key, _where));
    }

private:
    template <class T>
    static void convert(const json& j, T& out)
    {
        out = j.get<T>();
    }
    static void convert(const json& j, std::filesystem::path& out) { out = j.get<std::string>(); }
    static void convert(const json& j, std::optional<std::filesystem::path>& out)
    {
        if (j.is_null())
            out.reset();
        else
            out = j.get<std::string>();
    }
    static void convert(const json& j, EnvKind& out) { out = env_kind_from_string(j.get<std::string>()); }
    static void convert(const json& j, CriticKind& out) { out = critic_kind_from_string(j.get<std::string>()); }
    static void convert(const json& j, std::vector<Method>& out)
    {
        out.clear();
        for (auto const& m: j)
            out.push_back(method_from_string(m.get<std::string>()));
    }

    const json& _obj;
    std::string _where;
    std::set<std::string> _seen;
};

std::vector<std::unique_ptr<Environment>> build_envs(std::span<const Task> tasks)
{
    std::vector<std::unique_ptr<Environment>> envs;
    envs.reserve(tasks.size());
    for (auto const& t: tasks)
        envs.push_back(make_environment(t));
    return envs;
}

RolloutBuffer collect(std::span<const Task> tasks, const Policy& policy, CriticSuite suite, const RolloutConfig& rc)
{
    auto const envs = build_envs(tasks);
    std::vector<const Environment*> protos;
    protos.reserve(envs.size());
    for (auto const& e: envs)
        protos.push_back(e.get());
    return collect_batch(protos, policy, suite, rc);
}

std::size_t count_successes(const RolloutBuffer& buffer)
{
    std::size_t wins = 0;
    for (auto const& g: buffer.groups)
        for (auto const& t: g.trajectories)
            wins += t.reward == 1.0;
    return wins;
}

std::size_t count_trajectories(const RolloutBuffer& buffer)
{
    std::size_t n = 0;
    for (auto const& g: buffer.groups)
        n += g.trajectories.size();
    return n;
}

double rate(std::size_t wins, std::size_t n)
{
    return n == 0 ? 0.0 : static_cast<double>(wins) / static_cast<double>(n);
}

std::string num(double v)
{
    return fmt::format("{:.6f}", v);
}

std::vector<std::string> row_prefix(const ExperimentConfig& config)
{
    return {config_hash(config), std::to_string(config.seed)};
}

std::vector<std::string> columns(std::initializer_list<std::string_view> rest)
{
    std::vector<std::string> out{"config_hash", "seed"};
    for (auto c: rest)
        out.emplace_back(c);
    return out;
}

/// Walks a finished trajectory again from its seed, calling `visit(env at
/// s_t, history up to t, step)` before each step is applied.
template <class Visit>
void replay(const Trajectory& traj, const Environment& prototype, Visit visit)
{
    auto env = prototype.clone();
    env->reset(traj.seed);
    Trajectory history;
    history.task_id = traj.task_id;
    history.mode = traj.mode;
    history.seed = traj.seed;
    for (auto const& step: traj.steps)
    {
        visit(*env, history, step);
        env->step(step.action);
        history.steps.push_back(step);
    }
}

int critic_score(const Critic& critic, const Trajectory& history, const Environment& env, std::string_view action,
                 CounterRng& rng)
{
    std::optional<std::string> next;
    if (critic.reversible())
    {
        auto probe = env.clone();
        next = probe->step(action).observation;
    }
    return critic.evaluate(history, env, action, next, rng).score;
}

} // namespace

std::string_view to_string(Experiment experiment) noexcept
{
    switch (experiment)
    {
    case Experiment::NoiseStudy:
        return "noise_study";
    case Experiment::PassK:
        return "passk";
    case Experiment::ThresholdAblation:
        return "threshold_ablation";
    case Experiment::RefineStudy:
        return "refine_study";
    case Experiment::TrainCompare:
        return "train_compare";
    case Experiment::CostReport:
        return "cost_report";
    }
    return "unknown";
}

std::string_view to_string(Method method) noexcept
{
    for (auto const& [m, name]: kMethods)
        if (m == method)
            return name;
    return "unknown";
}

Method method_from_string(std::string_view name)
{
    for (auto const& [m, n]: kMethods)
        if (n == name)
            return m;
    config_error(fmt::format("unknown method '{}'", name));
}

ExperimentConfig preset(Experiment experiment)
{
    ExperimentConfig c;
    c.critic.threshold = 3;
    c.critic.refiner_fidelity = 0.8;
    switch (experiment)
    {
    case Experiment::NoiseStudy:
        c.difficulty = 2;
        c.task_count = 500;
        c.episodes = 500;
        break;
    case Experiment::PassK:
        c.policy.delta_t = 3.0;
        break;
    case Experiment::ThresholdAblation:
        c.policy.delta_t = 3.0;
        c.critic.refiner_fidelity = 0.2;
        break;
    case Experiment::RefineStudy:
        c.policy.delta_t = 3.0;
        c.critic.score_noise = 1.5;
        break;
    case Experiment::TrainCompare:
        c.env = EnvKind::Corridor;
        c.difficulty = 20;
        c.task_count = 64;
        c.policy.uniform = true;
        break;
    case Experiment::CostReport:
        c.policy.delta_t = 3.0;
        c.task_count = 100;
        break;
    }
    return c;
}

void validate(const ExperimentConfig& c)
{
    auto require = [](bool ok, std::string_view what) {
        if (!ok)
            config_error(std::string(what));
    };
    require(c.task_count >= 1, "task_count must be at least 1");
    require(c.noise_level >= 0.0 && c.noise_level <= 1.0, "noise_level must lie in [0, 1]");
    require(c.nu_low >= 0.0 && c.nu_low <= 1.0 && c.nu_high >= 0.0 && c.nu_high <= 1.0,
            "nu_low and nu_high must lie in [0, 1]");
    require(c.workers >= 1, "workers must be at least 1");
    require(c.group_size >= 1, "group_size must be at least 1");
    require(c.proceed_fraction >= 0.0 && c.proceed_fraction <= 1.0, "proceed_fraction must lie in [0, 1]");
    require(c.episodes >= 1, "episodes must be at least 1");
    require(c.weak_delta_t >= 0.0 && c.policy.delta_t >= 0.0, "temperature offsets must be non-negative");
    require(c.vanilla_k >= 1 && c.proceed_k >= 1, "k values must be at least 1");
    require(c.calibration_tasks >= 1, "calibration_tasks must be at least 1");
    require(!c.thresholds.empty(), "thresholds must not be empty");
    for (int t: c.thresholds)
        require(t >= 0 && t <= 10, "thresholds must lie in [0, 10]");
    require(!c.methods.empty(), "methods must not be empty");
    require(!c.train_seeds.empty(), "train_seeds must not be empty");
    require(c.eval_task_count >= 1 && c.eval_episodes >= 1, "evaluation needs tasks and episodes");
    if (c.tasks_path && !std::filesystem::exists(*c.tasks_path))
        config_error(fmt::format("tasks file '{}' does not exist", c.tasks_path->string()));
    if (c.policy.checkpoint && !std::filesystem::exists(*c.policy.checkpoint))
        config_error(fmt::format("checkpoint '{}' does not exist", c.policy.checkpoint->string()));
    try
    {
        validate(c.critic);
        validate(c.optim);
    }
    catch (const Error& e)
    {
        config_error(e.what());
    }
}

ExperimentConfig config_from_json(std::string_view text, ExperimentConfig c)
{
    json root;
    try
    {
        root = json::parse(text);
    }
    catch (const json::exception& e)
    {
        config_error(fmt::format("config is not valid JSON: {}", e.what()));
    }
    ObjectReader r(root, "config");
    r.read("env", c.env);
    r.read("difficulty", c.difficulty);
    r.read("noise_level", c.noise_level);
    r.read("task_count", c.task_count);
    r.read("task_seed", c.task_seed);
    r.read("tasks_path", c.tasks_path);
    r.read("seed", c.seed);
    r.read("workers", c.workers);
    r.read("out_dir", c.out_dir);
    r.read("group_size", c.group_size);
    r.read("proceed_fraction", c.proceed_fraction);
    r.read("max_steps", c.max_steps);
    r.read("literal_double_step", c.literal_double_step);
    r.read("nu_low", c.nu_low);
    r.read("nu_high", c.nu_high);
    r.read("episodes", c.episodes);
    r.read("weak_delta_t", c.weak_delta_t);
    r.read("vanilla_k", c.vanilla_k);
    r.read("proceed_k", c.proceed_k);
    r.read("calibration_tasks", c.calibration_tasks);
    r.read("thresholds", c.thresholds);
    r.read("methods", c.methods);
    r.read("train_seeds", c.train_seeds);
    r.read("eval_task_count", c.eval_task_count);
    r.read("eval_episodes", c.eval_episodes);

    if (auto const* p = r.child("policy"))
    {
        ObjectReader pr(*p, "policy");
        pr.read("checkpoint", c.policy.checkpoint);
        pr.read("uniform", c.policy.uniform);
        pr.read("delta_t", c.policy.delta_t);
        pr.finish();
    }
    if (auto const* p = r.child("critic"))
    {
        ObjectReader cr(*p, "critic");
        cr.read("kind", c.critic.kind);
        cr.read("threshold", c.critic.threshold);
        cr.read("reversible", c.critic.reversible_env);
        cr.read("max_refinements_per_step", c.critic.max_refinements_per_step);
        cr.read("refiner_fidelity", c.critic.refiner_fidelity);
        cr.read("score_noise", c.critic.score_noise);
        cr.finish();
    }
    if (auto const* p = r.child("llm"))
    {
        ObjectReader lr(*p, "llm");
        lr.read("endpoint_url", c.llm.endpoint_url);
        lr.read("model_name", c.llm.model_name);
        lr.read("max_in_flight", c.llm.max_in_flight);
        lr.read("max_retries", c.llm.max_retries);
        lr.read("timeout_ms", c.llm.timeout_ms);
        lr.finish();
    }
    if (auto const* p = r.child("optim"))
    {
        ObjectReader o(*p, "optim");
        o.read("eps_low", c.optim.eps_low);
        o.read("eps_high", c.optim.eps_high);
        o.read("learning_rate", c.optim.learning_rate);
        o.read("kl_coeff", c.optim.kl_coeff);
        o.read("drop_degenerate_groups", c.optim.drop_degenerate_groups);
        o.read("iterations", c.optim.iterations);
        o.read("batch_groups", c.optim.batch_groups);
        o.read("inner_steps", c.optim.inner_steps);
        o.read("checkpoint_every", c.optim.checkpoint_every);
        o.finish();
    }
    r.finish();
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base)
{
    std::ifstream in(path);
    if (!in)
        config_error(fmt::format("cannot open config '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str(), std::move(base));
}

namespace
{

json to_json_object(const ExperimentConfig& c, bool with_runtime)
{
    json j;
    j["env"] = std::string(to_string(c.env));
    j["difficulty"] = c.difficulty;
    j["noise_level"] = c.noise_level;
    j["task_count"] = c.task_count;
    j["task_seed"] = c.task_seed;
    j["tasks_path"] = c.tasks_path ? json(c.tasks_path->string()) : json(nullptr);
    j["seed"] = c.seed;
    if (with_runtime)
    {
        j["workers"] = c.workers;
        j["out_dir"] = c.out_dir.string();
    }
    j["group_size"] = c.group_size;
    j["proceed_fraction"] = c.proceed_fraction;
    j["max_steps"] = c.max_steps;
    j["literal_double_step"] = c.literal_double_step;
    j["nu_low"] = c.nu_low;
    j["nu_high"] = c.nu_high;
    j["episodes"] = c.episodes;
    j["weak_delta_t"] = c.weak_delta_t;
    j["vanilla_k"] = c.vanilla_k;
    j["proceed_k"] = c.proceed_k;
    j["calibration_tasks"] = c.calibration_tasks;
    j["thresholds"] = c.thresholds;
    std::vector<std::string> methods;
    for (auto m: c.methods)
        methods.emplace_back(to_string(m));
    j["methods"] = methods;
    j["train_seeds"] = c.train_seeds;
    j["eval_task_count"] = c.eval_task_count;
    j["eval_episodes"] = c.eval_episodes;
    j["policy"] = {
        {"checkpoint", c.policy.checkpoint ? json(c.policy.checkpoint->string()) : json(nullptr)},
        {"uniform", c.policy.uniform},
        {"delta_t", c.policy.delta_t},
    };
    j["critic"] = {
        {"kind", std::string(to_string(c.critic.kind))},
        {"threshold", c.critic.threshold},
        {"reversible", c.critic.reversible_env},
        {"max_refinements_per_step", c.critic.max_refinements_per_step},
        {"refiner_fidelity", c.critic.refiner_fidelity},
        {"score_noise", c.critic.score_noise},
    };
    j["llm"] = {
        {"endpoint_url", c.llm.endpoint_url}, {"model_name", c.llm.model_name},
        {"max_in_flight", c.llm.max_in_flight}, {"max_retries", c.llm.max_retries},
        {"timeout_ms", c.llm.timeout_ms},
    };
    j["optim"] = {
        {"eps_low", c.optim.eps_low},
        {"eps_high", c.optim.eps_high},
        {"learning_rate", c.optim.learning_rate},
        {"kl_coeff", c.optim.kl_coeff},
        {"drop_degenerate_groups", c.optim.drop_degenerate_groups},
        {"iterations", c.optim.iterations},
        {"batch_groups", c.optim.batch_groups},
        {"inner_steps", c.optim.inner_steps},
        {"checkpoint_every", c.optim.checkpoint_every},
    };
    return j;
}

} // namespace

std::string config_to_json(const ExperimentConfig& config)
{
    return to_json_object(config, true).dump(2);
}

std::string config_hash(const ExperimentConfig& config)
{
    return fmt::format("{:016x}", hash_string(to_json_object(config, false).dump()));
}

std::vector<Task> experiment_tasks(const ExperimentConfig& config)
{
    std::vector<Task> tasks;
    if (config.tasks_path)
    {
        tasks = load_tasks(*config.tasks_path);
    }
    else
    {
        TaskGenOptions o;
        o.kind = config.env;
        o.count = config.task_count;
        o.difficulty = config.difficulty;
        o.seed = config.task_seed;
        o.noise_level = config.noise_level;
        tasks = generate_tasks(o);
    }
    apply_overrides(tasks, config.noise_level,
                    config.max_steps > 0 ? std::optional<int>(config.max_steps) : std::nullopt);
    return tasks;
}

PolicyParams initial_params(const ExperimentConfig& config)
{
    if (config.policy.checkpoint)
        return load_checkpoint(*config.policy.checkpoint);
    auto p = reference_params(config.env);
    if (config.policy.uniform)
        std::fill(p.theta.begin(), p.theta.end(), 0.0);
    return config.policy.delta_t > 0.0 ? weaken(p, config.policy.delta_t) : p;
}

RolloutConfig rollout_config(const ExperimentConfig& config, std::uint64_t seed)
{
    RolloutConfig rc;
    rc.group_size = config.group_size;
    rc.proceed_fraction = config.proceed_fraction;
    rc.max_steps = config.max_steps;
    rc.critic = config.critic;
    rc.literal_double_step = config.literal_double_step;
    rc.seed = seed;
    rc.workers = config.workers;
    return rc;
}

CriticBundle make_critic(const ExperimentConfig& config)
{
    CriticBundle b;
    if (config.critic.kind == CriticKind::Oracle)
    {
        b.critic = std::make_unique<OracleCritic>(config.critic.reversible_env, config.critic.score_noise);
        b.refiner = std::make_unique<OracleRefiner>(config.critic.refiner_fidelity);
        return b;
    }
    ClientConfig cc;
    cc.endpoint_url = config.llm.endpoint_url;
    cc.model_name = config.llm.model_name;
    cc.max_in_flight = config.llm.max_in_flight;
    cc.max_retries = config.llm.max_retries;
    cc.timeout = std::chrono::milliseconds(config.llm.timeout_ms);
    validate(cc);
    b.client = std::make_shared<LlmClient>(cc);
    b.critic = std::make_unique<LlmCritic>(b.client, config.critic.reversible_env);
    b.refiner = std::make_unique<LlmRefiner>(b.client);
    return b;
}

Interval wilson_interval(std::size_t successes, std::size_t n)
{
    if (n == 0)
        return {0.0, 1.0};
    double const nn = static_cast<double>(n);
    double const p = static_cast<double>(successes) / nn;
    double const z2 = kZ95 * kZ95;
    double const denom = 1.0 + z2 / nn;
    double const center = (p + z2 / (2.0 * nn)) / denom;
    double const half = kZ95 * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

Interval difference_interval(std::size_t s1, std::size_t n1, std::size_t s2, std::size_t n2)
{
    double const p1 = rate(s1, n1);
    double const p2 = rate(s2, n2);
    double const var = (n1 ? p1 * (1.0 - p1) / static_cast<double>(n1) : 0.0)
                       + (n2 ? p2 * (1.0 - p2) / static_cast<double>(n2) : 0.0);
    double const half = kZ95 * std::sqrt(var);
    return {p1 - p2 - half, p1 - p2 + half};
}

std::string CsvTable::to_csv() const
{
    std::string out;
    for (auto const& c: comments)
        out += fmt::format("# {}\n", c);
    out += fmt::format("{}\n", fmt::join(columns, ","));
    for (auto const& r: rows)
        out += fmt::format("{}\n", fmt::join(r, ","));
    return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Errc::IoError, fmt::format("cannot write '{}'", path.string()));
    out << table.to_csv();
}

NoiseStudyResult exp_noise_study(const ExperimentConfig& config)
{
    validate(config);
    auto c = config;
    c.task_count = config.episodes;
    auto const base = experiment_tasks(c);
    auto const strong = initial_params(config);
    std::vector<std::pair<std::string, PolicyParams>> const policies{
        {"strong", strong},
        {"weak", weaken(strong, config.weak_delta_t)},
    };

    RolloutConfig rc = rollout_config(config, config.seed);
    rc.group_size = 1;
    rc.proceed_fraction = 0.0;

    NoiseStudyResult result;
    for (auto const& [name, params]: policies)
    {
        std::array<std::size_t, 2> wins{};
        std::array<double, 2> const levels{config.nu_low, config.nu_high};
        for (std::size_t i = 0; i < 2; ++i)
        {
            auto tasks = base;
            apply_overrides(tasks, levels[i], std::nullopt);
            auto const buffer = collect(tasks, SoftmaxPolicy(params), {}, rc);
            wins[i] = count_successes(buffer);
            auto const n = count_trajectories(buffer);
            result.cells.push_back({name, levels[i], wins[i], n, rate(wins[i], n), wilson_interval(wins[i], n)});
        }
        auto const n = result.cells.back().episodes;
        result.drops.push_back({name, rate(wins[0], n) - rate(wins[1], n), difference_interval(wins[0], n, wins[1], n)});
    }
    return result;
}

CsvTable to_table(const NoiseStudyResult& result, const ExperimentConfig& config)
{
    CsvTable t;
    t.comments = {"noise study: success per policy and noise level, 95% Wilson intervals",
                  "drop rows: success(nu_low) - success(nu_high), normal-approximation 95% interval"};
    t.columns = columns({"policy", "row", "noise_level", "episodes", "successes", "value", "ci_low", "ci_high"});
    for (auto const& cell: result.cells)
    {
        auto r = row_prefix(config);
        r.insert(r.end(), {cell.policy, "success", num(cell.noise_level), std::to_string(cell.episodes),
                           std::to_string(cell.successes), num(cell.success_rate), num(cell.interval.low),
                           num(cell.interval.high)});
        t.rows.push_back(std::move(r));
    }
    for (auto const& d: result.drops)
    {
        auto r = row_prefix(config);
        r.insert(r.end(), {d.policy, "drop", fmt::format("{:.2f}->{:.2f}", config.nu_low, config.nu_high), "", "",
                           num(d.drop), num(d.interval.low), num(d.interval.high)});
        t.rows.push_back(std::move(r));
    }
    return t;
}

double pass_at_k(const RolloutBuffer& buffer, int k)
{
    if (buffer.groups.empty())
        return 0.0;
    std::size_t solved = 0;
    for (auto const& g: buffer.groups)
    {
        auto const n = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), g.trajectories.size());
        solved += std::any_of(g.trajectories.begin(), g.trajectories.begin() + static_cast<std::ptrdiff_t>(n),
                              [](const Trajectory& t) { return t.reward == 1.0; });
    }
    return rate(solved, buffer.groups.size());
}

double PassKResult::vanilla_ceiling() const
{
    double best = 0.0;
    for (auto const& r: rows)
        best = std::max(best, r.vanilla);
    return best;
}

PassKResult exp_passk(const ExperimentConfig& config)
{
    validate(config);
    auto const tasks = experiment_tasks(config);
    auto const bundle = make_critic(config);
    SoftmaxPolicy const policy(initial_params(config));

    PassKResult result;
    {
        auto const n = std::min<std::size_t>(tasks.size(), static_cast<std::size_t>(config.calibration_tasks));
        RolloutConfig rc = rollout_config(config, derive_seed(config.seed, "calibration", 0));
        rc.group_size = 1;
        rc.proceed_fraction = 1.0;
        auto const buffer = collect(std::span(tasks).first(n), policy, bundle.suite(), rc);
        std::vector<Trajectory> trajs;
        for (auto const& g: buffer.groups)
            trajs.insert(trajs.end(), g.trajectories.begin(), g.trajectories.end());
        result.cost_ratio = cost_ratio(trajs);
    }

    RolloutConfig vr = rollout_config(config, config.seed);
    vr.group_size = config.vanilla_k;
    vr.proceed_fraction = 0.0;
    auto const vanilla = collect(tasks, policy, {}, vr);

    RolloutConfig pr = rollout_config(config, config.seed);
    pr.group_size = config.proceed_k;
    pr.proceed_fraction = 1.0;
    auto const proceed = collect(tasks, policy, bundle.suite(), pr);

    for (int k = 1; k <= std::max(config.vanilla_k, config.proceed_k); ++k)
    {
        PassKRow row;
        row.k = k;
        row.vanilla = pass_at_k(vanilla, std::min(k, config.vanilla_k));
        if (k <= config.proceed_k)
        {
            row.proceed = pass_at_k(proceed, k);
            row.cost_equivalent_k = k * result.cost_ratio;
        }
        result.rows.push_back(row);
    }
    return result;
}

CsvTable to_table(const PassKResult& result, const ExperimentConfig& config)
{
    CsvTable t;
    t.comments = {
        "pass@k = fraction of tasks with at least one success among the first k trajectories "
        "(empirical first-k estimator, no combinatorial correction)",
        fmt::format("cost_ratio = {:.6f} (measured on a calibration run)", result.cost_ratio),
        "proceed_cost_equivalent_k = k * cost_ratio vanilla generations",
    };
    t.columns = columns({"k", "vanilla_pass_at_k", "proceed_pass_at_k", "proceed_cost_equivalent_k",
                         "vanilla_pass_at_cost_equivalent"});
    for (auto const& r: result.rows)
    {
        std::string aligned;
        if (r.cost_equivalent_k)
        {
            auto const k = static_cast<int>(std::ceil(*r.cost_equivalent_k - 1e-9));
            if (k >= 1 && static_cast<std::size_t>(k) <= result.rows.size())
                aligned = num(result.rows[static_cast<std::size_t>(k - 1)].vanilla);
        }
        auto row = row_prefix(config);
        row.insert(row.end(), {std::to_string(r.k), num(r.vanilla), r.proceed ? num(*r.proceed) : "",
                               r.cost_equivalent_k ? num(*r.cost_equivalent_k) : "", aligned});
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<int> score_trajectory(const Trajectory& traj, const Environment& prototype, const Critic& critic,
                                  CounterRng rng)
{
    std::vector<int> scores;
    replay(traj, prototype, [&](const Environment& env, const Trajectory& history, const StepRecord& step) {
        scores.push_back(critic_score(critic, history, env, step.action, rng));
    });
    return scores;
}

double ThresholdAblationResult::success(std::optional<int> threshold) const
{
    for (auto const& r: rows)
        if (r.threshold == threshold)
            return r.success_rate;
    throw Error(Errc::DomainError, "threshold not part of the sweep");
}

ThresholdAblationResult exp_threshold_ablation(const ExperimentConfig& config)
{
    validate(config);
    auto const tasks = experiment_tasks(config);
    auto const envs = build_envs(tasks);
    auto const bundle = make_critic(config);
    SoftmaxPolicy const policy(initial_params(config));

    RolloutConfig rc = rollout_config(config, config.seed);
    rc.group_size = 1;
    rc.proceed_fraction = 0.0;
    auto const vanilla = collect(tasks, policy, {}, rc);

    ThresholdAblationResult result;
    for (std::size_t i = 0; i < vanilla.groups.size(); ++i)
        for (auto const& t: vanilla.groups[i].trajectories)
            for (int s: score_trajectory(t, *envs[i], *bundle.critic,
                                         CounterRng(derive_seed(config.seed, t.task_id, 0)).split("histogram")))
                ++result.histogram[s];

    auto const n = count_trajectories(vanilla);
    result.rows.push_back({std::nullopt, count_successes(vanilla), n, rate(count_successes(vanilla), n), 0, 0});

    for (int threshold: config.thresholds)
    {
        RolloutConfig pr = rc;
        pr.proceed_fraction = 1.0;
        pr.critic.threshold = threshold;
        auto const buffer = collect(tasks, policy, bundle.suite(), pr);
        ThresholdRow row;
        row.threshold = threshold;
        row.successes = count_successes(buffer);
        row.episodes = count_trajectories(buffer);
        row.success_rate = rate(row.successes, row.episodes);
        for (auto const& g: buffer.groups)
            for (auto const& t: g.trajectories)
                row.demonstrations += t.demonstration_count();
        auto it = result.histogram.find(threshold);
        row.score_count = it == result.histogram.end() ? 0 : it->second;
        result.rows.push_back(row);
    }
    return result;
}

CsvTable to_table(const ThresholdAblationResult& result, const ExperimentConfig& config)
{
    CsvTable t;
    t.comments = {"threshold 'none' is the no-rewind baseline",
                  "score_count = vanilla steps whose critic score equals the threshold"};
    t.columns = columns({"threshold", "episodes", "successes", "success_rate", "demonstrations", "score_count"});
    for (auto const& r: result.rows)
    {
        auto row = row_prefix(config);
        row.insert(row.end(), {r.threshold ? std::to_string(*r.threshold) : "none", std::to_string(r.episodes),
                               std::to_string(r.successes), num(r.success_rate), std::to_string(r.demonstrations),
                               r.threshold ? std::to_string(r.score_count) : ""});
        t.rows.push_back(std::move(row));
    }
    return t;
}

double RefineStudyResult::mean_delta(int lo, int hi) const
{
    double sum = 0.0;
    std::size_t n = 0;
    for (auto const& b: buckets)
        if (b.original_score >= lo && b.original_score <= hi)
        {
            sum += b.mean_delta * static_cast<double>(b.count);
            n += b.count;
        }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::size_t RefineStudyResult::count(int lo, int hi) const
{
    std::size_t n = 0;
    for (auto const& b: buckets)
        if (b.original_score >= lo && b.original_score <= hi)
            n += b.count;
    return n;
}

RefineStudyResult exp_refine_study(const ExperimentConfig& config)
{
    validate(config);
    auto const tasks = experiment_tasks(config);
    auto const envs = build_envs(tasks);
    auto const bundle = make_critic(config);
    SoftmaxPolicy const policy(initial_params(config));

    RolloutConfig rc = rollout_config(config, config.seed);
    rc.group_size = 1;
    rc.proceed_fraction = 0.0;
    auto const vanilla = collect(tasks, policy, {}, rc);

    std::vector<StudyStep> steps;
    for (std::size_t i = 0; i < vanilla.groups.size(); ++i)
        for (auto const& t: vanilla.groups[i].trajectories)
        {
            auto rng = CounterRng(derive_seed(config.seed, t.task_id, 0)).split("harvest");
            replay(t, *envs[i], [&](const Environment& env, const Trajectory& history, const StepRecord& step) {
                int const score = critic_score(*bundle.critic, history, env, step.action, rng);
                if (score < 10)
                    steps.push_back({std::shared_ptr<const Environment>(env.clone()), history, step.action, score});
            });
        }

    RefineStudyResult result;
    result.harvested = steps.size();
    result.buckets = refinement_delta_study(steps, *bundle.critic, *bundle.refiner, policy,
                                            CounterRng(derive_seed(config.seed, "refine-study", 0)));
    return result;
}

CsvTable to_table(const RefineStudyResult& result, const ExperimentConfig& config)
{
    CsvTable t;
    t.comments = {fmt::format("{} harvested steps; delta = re-scored refined action - original score",
                              result.harvested),
                  "distribution entries are delta:count separated by ';'"};
    t.columns = columns({"original_score", "count", "mean_delta", "distribution"});
    for (auto const& b: result.buckets)
    {
        std::vector<std::string> parts;
        for (auto const& [delta, n]: b.distribution)
            parts.push_back(fmt::format("{}:{}", delta, n));
        auto row = row_prefix(config);
        row.insert(row.end(), {std::to_string(b.original_score), std::to_string(b.count),
                               b.count ? num(b.mean_delta) : "", fmt::format("{}", fmt::join(parts, ";"))});
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::optional<double> TrainCompareResult::success(Method method, std::uint64_t seed) const
{
    for (auto const& r: rows)
        if (r.method == method && r.seed == seed)
            return r.heldout_success;
    return std::nullopt;
}

TrainResult train_method(Method method, std::span<const Task> train_tasks, const ExperimentConfig& config,
                         std::uint64_t seed, CriticSuite suite)
{
    auto const init = initial_params(config);
    RolloutConfig rc = rollout_config(config, seed);
    switch (method)
    {
    case Method::Dapo:
        rc.proceed_fraction = 0.0;
        return train(train_tasks, init, config.optim, rc, suite);
    case Method::ProCeedRL:
        return train(train_tasks, init, config.optim, rc, suite);
    case Method::Rft:
        return train_rft(train_tasks, init, config.optim, rc);
    case Method::Sft:
    case Method::ProCeedSft:
        try
        {
            return train_sft(train_tasks, init, config.optim, rc,
                             method == Method::Sft ? SftSource::Vanilla : SftSource::ProCeed, suite);
        }
        catch (const Error& e)
        {
            if (e.code() != Errc::NoCorrectSamples)
                throw;
            spdlog::warn("{}: no correct samples to fine-tune on; keeping the initial policy", to_string(method));
            return {snapshot(init), {}};
        }
    }
    throw Error(Errc::DomainError, "unknown method");
}

TrainCompareResult exp_train_compare(const ExperimentConfig& config)
{
    validate(config);
    auto const train_tasks = experiment_tasks(config);
    auto eval_cfg = config;
    eval_cfg.tasks_path.reset();
    eval_cfg.task_count = config.eval_task_count;
    eval_cfg.task_seed = combine_keys(config.task_seed, hash_string("heldout"));
    auto const eval_tasks = experiment_tasks(eval_cfg);
    auto const bundle = make_critic(config);

    auto baseline_of = [&](Method m) -> std::optional<Method> {
        auto has = [&](Method b) { return std::find(config.methods.begin(), config.methods.end(), b) != config.methods.end(); };
        if (m == Method::ProCeedSft && has(Method::Sft))
            return Method::Sft;
        if ((m == Method::ProCeedRL || m == Method::Rft) && has(Method::Dapo))
            return Method::Dapo;
        return std::nullopt;
    };

    TrainCompareResult result;
    for (auto seed: config.train_seeds)
        for (auto method: config.methods)
        {
            auto const trained = train_method(method, train_tasks, config, seed, bundle.suite());
            TrainRow row;
            row.method = method;
            row.seed = seed;
            row.heldout_success =
                evaluate_success(trained.params, eval_tasks, config.eval_episodes, config.seed, config.workers);
            row.baseline = baseline_of(method);
            spdlog::info("{} seed {}: held-out success {:.3f}", to_string(method), seed, row.heldout_success);
            result.rows.push_back(row);
        }
    for (auto& r: result.rows)
        if (r.baseline)
            r.paired_diff = r.heldout_success - *result.success(*r.baseline, r.seed);
    return result;
}

CsvTable to_table(const TrainCompareResult& result, const ExperimentConfig& config)
{
    CsvTable t;
    t.comments = {"held-out success per method and training seed",
                  "paired_diff = success - baseline success under the same training seed"};
    t.columns = columns({"method", "train_seed", "heldout_success", "baseline", "paired_diff"});
    for (auto const& r: result.rows)
    {
        auto row = row_prefix(config);
        row.insert(row.end(), {std::string(to_string(r.method)), std::to_string(r.seed), num(r.heldout_success),
                               r.baseline ? std::string(to_string(*r.baseline)) : "",
                               r.paired_diff ? num(*r.paired_diff) : ""});
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<std::pair<double, double>> reference_unit_pairs()
{
    return {{857.36, 1320.59}, {857.36, 211.69}, {1410.51, 1111.39}, {1010.36, 760.84}, {1010.36, 246.02}};
}

std::vector<CostRow> cost_report(const ExperimentConfig& config)
{
    validate(config);
    std::vector<CostRow> rows;
    int i = 0;
    for (auto const& [p, c]: reference_unit_pairs())
        rows.push_back({fmt::format("fixed-{}", ++i), p, c, cost_ratio(p, c)});

    auto const tasks = experiment_tasks(config);
    auto const bundle = make_critic(config);
    RolloutConfig rc = rollout_config(config, config.seed);
    rc.group_size = 1;
    rc.proceed_fraction = 1.0;
    auto const buffer = collect(tasks, SoftmaxPolicy(initial_params(config)), bundle.suite(), rc);
    double policy_units = 0.0;
    double critic_units = 0.0;
    std::size_t steps = 0;
    for (auto const& g: buffer.groups)
        for (auto const& t: g.trajectories)
            for (auto const& s: t.steps)
            {
                policy_units += static_cast<double>(s.policy_units);
                critic_units += static_cast<double>(s.critic_units);
                ++steps;
            }
    if (steps > 0)
    {
        double const mp = policy_units / static_cast<double>(steps);
        double const mc = critic_units / static_cast<double>(steps);
        rows.push_back({fmt::format("measured-{}", to_string(config.env)), mp, mc, cost_ratio(mp, mc)});
    }
    return rows;
}

CsvTable to_table(const std::vector<CostRow>& rows, const ExperimentConfig& config)
{
    CsvTable t;
    t.comments = {"ratio = 1 + mean critic units per step / mean policy units per step"};
    t.columns = columns({"source", "mean_policy_units", "mean_critic_units", "ratio"});
    for (auto const& r: rows)
    {
        auto row = row_prefix(config);
        row.insert(row.end(), {r.source, num(r.mean_policy_units), num(r.mean_critic_units), num(r.ratio)});
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::filesystem::path run_experiment(Experiment experiment, const ExperimentConfig& config)
{
    CsvTable table;
    switch (experiment)
    {
    case Experiment::NoiseStudy:
        table = to_table(exp_noise_study(config), config);
        break;
    case Experiment::PassK:
        table = to_table(exp_passk(config), config);
        break;
    case Experiment::ThresholdAblation:
        table = to_table(exp_threshold_ablation(config), config);
        break;
    case Experiment::RefineStudy:
        table = to_table(exp_refine_study(config), config);
        break;
    case Experiment::TrainCompare:
        table = to_table(exp_train_compare(config), config);
        break;
    case Experiment::CostReport:
        table = to_table(cost_report(config), config);
        break;
    }
    auto const path = config.out_dir / fmt::format("{}.csv", to_string(experiment));
    write_csv(path, table);
    return path;
}

} // namespace proceed
