// SPDX-License-Identifier: Apache-2.0
#include "proceed/trajectory.hpp"

#include "proceed/error.hpp"

#include <fmt/format.h>

#include "json.hpp"

#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace proceed
{

using ojson = nlohmann::ordered_json;

std::size_t DecisionContext::index_of(std::string_view action) const noexcept
{
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i] == action)
            return i;
    return candidates.size();
}

std::string_view to_string(StepTag tag) noexcept
{
    return tag == StepTag::OnPolicy ? "onpolicy" : "demonstration";
}

std::string_view to_string(RolloutMode mode) noexcept
{
    return mode == RolloutMode::Vanilla ? "vanilla" : "proceed";
}

bool operator==(const StepRecord& a, const StepRecord& b)
{
    return a.index == b.index && a.state_text == b.state_text && a.action == b.action
           && a.observation == b.observation && a.tag == b.tag && a.critic_score == b.critic_score
           && a.critique == b.critique && a.behavior_logprob == b.behavior_logprob
           && a.policy_units == b.policy_units && a.critic_units == b.critic_units;
}

std::size_t Trajectory::demonstration_count() const noexcept
{
    std::size_t n = 0;
    for (auto const& s: steps)
        n += s.tag == StepTag::Demonstration ? 1 : 0;
    return n;
}

void append_step_inplace(Trajectory& traj, StepRecord step)
{
    if (traj.done)
        throw Error(Errc::AppendAfterDone, fmt::format("trajectory for task '{}' is finalized", traj.task_id));
    if (step.index != traj.steps.size())
        throw Error(Errc::IndexGap, fmt::format("expected step index {}, got {}", traj.steps.size(), step.index));
    traj.steps.push_back(std::move(step));
}

Trajectory append_step(Trajectory traj, StepRecord step)
{
    append_step_inplace(traj, std::move(step));
    return traj;
}

void finalize_inplace(Trajectory& traj, bool success)
{
    if (traj.done)
        throw Error(Errc::DoubleFinalize, fmt::format("trajectory for task '{}' already finalized", traj.task_id));
    traj.done = true;
    traj.reward = success ? 1.0 : 0.0;
}

Trajectory finalize(Trajectory traj, bool success)
{
    finalize_inplace(traj, success);
    return traj;
}

GroupRewardStats group_reward_stats(const Group& group)
{
    if (group.trajectories.empty())
        throw Error(Errc::EmptyGroup, fmt::format("group for task '{}' has no trajectories", group.task_id));

    double const n = static_cast<double>(group.trajectories.size());
    double sum = 0.0;
    for (auto const& t: group.trajectories)
        sum += t.reward;
    double const mean = sum / n;
    double sq = 0.0;
    for (auto const& t: group.trajectories)
        sq += (t.reward - mean) * (t.reward - mean);
    double const std = std::sqrt(sq / n);
    return {mean, std, std == 0.0};
}

namespace
{

[[noreturn]] void violation(const std::string& what)
{
    throw Error(Errc::InvariantViolation, what);
}

} // namespace

void validate(const Trajectory& traj)
{
    if (traj.reward != 0.0 && traj.reward != 1.0)
        violation(fmt::format("task '{}': reward {} not in {{0,1}}", traj.task_id, traj.reward));
    if (traj.reward > 0.0 && !traj.done)
        violation(fmt::format("task '{}': positive reward on an unfinished trajectory", traj.task_id));
    for (std::size_t i = 0; i < traj.steps.size(); ++i)
    {
        auto const& s = traj.steps[i];
        if (s.index != i)
            violation(fmt::format("task '{}': step {} has index {}", traj.task_id, i, s.index));
        if (s.critic_score && (*s.critic_score < 0 || *s.critic_score > 10))
            violation(fmt::format("task '{}': step {} critic score {} out of [0,10]", traj.task_id, i, *s.critic_score));
        if (s.tag == StepTag::Demonstration)
        {
            if (traj.mode == RolloutMode::Vanilla)
                violation(fmt::format("task '{}': vanilla trajectory has a demonstration at step {}", traj.task_id, i));
            if (!s.critic_score)
                violation(fmt::format("task '{}': demonstration step {} lacks a critic score", traj.task_id, i));
        }
        if (s.behavior_logprob && !(*s.behavior_logprob <= 0.0))
            violation(fmt::format("task '{}': step {} behavior_logprob {} > 0", traj.task_id, i, *s.behavior_logprob));
        if (s.policy_units < 0 || s.critic_units < 0)
            violation(fmt::format("task '{}': step {} has negative units", traj.task_id, i));
    }
}

void validate(const Group& group, std::optional<std::size_t> expected_size)
{
    if (expected_size && group.trajectories.size() != *expected_size)
        violation(fmt::format("group '{}' has {} trajectories, expected {}", group.task_id, group.trajectories.size(),
                              *expected_size));
    for (auto const& t: group.trajectories)
    {
        if (t.task_id != group.task_id)
            violation(fmt::format("group '{}' contains trajectory of task '{}'", group.task_id, t.task_id));
        validate(t);
    }
}

void validate(const RolloutBuffer& buffer)
{
    for (auto const& g: buffer.groups)
        validate(g);
}

namespace
{

template <class T>
ojson nullable(const std::optional<T>& v)
{
    return v ? ojson(*v) : ojson(nullptr);
}

ojson to_json(const Trajectory& t, std::size_t group_index, const std::string& snapshot_id)
{
    ojson steps = ojson::array();
    for (auto const& s: t.steps)
    {
        steps.push_back(ojson{
            {"index", s.index},
            {"state_text", s.state_text},
            {"action", s.action},
            {"observation", nullable(s.observation)},
            {"tag", to_string(s.tag)},
            {"critic_score", nullable(s.critic_score)},
            {"critique", nullable(s.critique)},
            {"behavior_logprob", nullable(s.behavior_logprob)},
            {"policy_units", s.policy_units},
            {"critic_units", s.critic_units},
        });
    }
    return ojson{
        {"task_id", t.task_id},
        {"mode", to_string(t.mode)},
        {"seed", t.seed},
        {"reward", t.reward},
        {"done", t.done},
        {"group", group_index},
        {"policy_snapshot_id", snapshot_id},
        {"steps", std::move(steps)},
    };
}

template <class T>
std::optional<T> optional_field(const ojson& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
        return std::nullopt;
    return it->get<T>();
}

const ojson& required(const ojson& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end())
        throw std::invalid_argument(fmt::format("missing key '{}'", key));
    return *it;
}

StepRecord step_from_json(const ojson& j)
{
    if (!j.is_object())
        throw std::invalid_argument("step is not an object");
    StepRecord s;
    s.index = required(j, "index").get<std::size_t>();
    s.state_text = required(j, "state_text").get<std::string>();
    s.action = required(j, "action").get<std::string>();
    s.observation = optional_field<std::string>(j, "observation");
    auto const tag = required(j, "tag").get<std::string>();
    if (tag == "onpolicy")
        s.tag = StepTag::OnPolicy;
    else if (tag == "demonstration")
        s.tag = StepTag::Demonstration;
    else
        throw std::invalid_argument(fmt::format("unknown tag '{}'", tag));
    s.critic_score = optional_field<int>(j, "critic_score");
    s.critique = optional_field<std::string>(j, "critique");
    s.behavior_logprob = optional_field<double>(j, "behavior_logprob");
    s.policy_units = required(j, "policy_units").get<std::int64_t>();
    s.critic_units = required(j, "critic_units").get<std::int64_t>();
    return s;
}

struct ParsedLine
{
    Trajectory trajectory;
    std::optional<std::size_t> group;
    std::optional<std::string> snapshot_id;
};

ParsedLine trajectory_from_json(const ojson& j)
{
    if (!j.is_object())
        throw std::invalid_argument("record is not a JSON object");
    ParsedLine p;
    auto& t = p.trajectory;
    t.task_id = required(j, "task_id").get<std::string>();
    auto const mode = required(j, "mode").get<std::string>();
    if (mode == "vanilla")
        t.mode = RolloutMode::Vanilla;
    else if (mode == "proceed")
        t.mode = RolloutMode::ProCeed;
    else
        throw std::invalid_argument(fmt::format("unknown mode '{}'", mode));
    t.seed = required(j, "seed").get<std::uint64_t>();
    t.reward = required(j, "reward").get<double>();
    t.done = optional_field<bool>(j, "done").value_or(true);
    auto const& steps = required(j, "steps");
    if (!steps.is_array())
        throw std::invalid_argument("'steps' is not an array");
    for (auto const& s: steps)
        t.steps.push_back(step_from_json(s));
    p.group = optional_field<std::size_t>(j, "group");
    p.snapshot_id = optional_field<std::string>(j, "policy_snapshot_id");
    return p;
}

} // namespace

std::string trajectory_to_json(const Trajectory& traj)
{
    return to_json(traj, 0, "").dump();
}

void write_jsonl(std::ostream& out, const RolloutBuffer& buffer)
{
    for (std::size_t g = 0; g < buffer.groups.size(); ++g)
        for (auto const& t: buffer.groups[g].trajectories)
            out << to_json(t, g, buffer.policy_snapshot_id).dump() << '\n';
}

std::string serialize_jsonl(const RolloutBuffer& buffer)
{
    std::ostringstream out;
    write_jsonl(out, buffer);
    return std::move(out).str();
}

RolloutBuffer parse_jsonl(std::string_view text)
{
    RolloutBuffer buffer;
    std::optional<std::size_t> current_group;
    bool snapshot_seen = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size())
    {
        auto const nl = text.find('\n', pos);
        auto const end = nl == std::string_view::npos ? text.size() : nl;
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty())
            continue;

        ParsedLine parsed;
        try
        {
            parsed = trajectory_from_json(ojson::parse(line));
        }
        catch (const std::exception& e)
        {
            throw RecordError(line_no, e.what());
        }

        if (parsed.snapshot_id)
        {
            if (snapshot_seen && *parsed.snapshot_id != buffer.policy_snapshot_id)
                violation(fmt::format("line {}: mixed policy snapshots '{}' and '{}'", line_no,
                                      buffer.policy_snapshot_id, *parsed.snapshot_id));
            buffer.policy_snapshot_id = *parsed.snapshot_id;
            snapshot_seen = true;
        }

        // Without an explicit group index, consecutive lines of one task form a group.
        bool const new_group = buffer.groups.empty()
                               || (parsed.group ? parsed.group != current_group
                                                : buffer.groups.back().task_id != parsed.trajectory.task_id);
        if (new_group)
        {
            buffer.groups.push_back(Group{parsed.trajectory.task_id, {}});
            current_group = parsed.group;
        }
        if (buffer.groups.back().task_id != parsed.trajectory.task_id)
            violation(fmt::format("line {}: task '{}' inside group of task '{}'", line_no, parsed.trajectory.task_id,
                                  buffer.groups.back().task_id));
        try
        {
            validate(parsed.trajectory);
        }
        catch (const Error& e)
        {
            violation(fmt::format("line {}: {}", line_no, e.what()));
        }
        buffer.groups.back().trajectories.push_back(std::move(parsed.trajectory));
    }
    return buffer;
}

RolloutBuffer read_jsonl(std::istream& in)
{
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_jsonl(text);
}

} // namespace proceed
