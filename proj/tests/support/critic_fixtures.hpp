// SPDX-License-Identifier: Apache-2.0
// Critic replies in the deep-search and household output formats.
#pragma once

#include "proceed/critic.hpp"
#include "proceed/error.hpp"
#include "proceed/prompts.hpp"
#include "proceed/rng.hpp"

#include <array>
#include <string>
#include <vector>

namespace proceed::testing
{

struct CriticFixture
{
    std::string text;
    CritiqueRecord expected;
};

inline std::vector<CriticFixture> critic_fixtures()
{
    auto rec = [](int score, std::string critique, std::optional<std::string> action = std::nullopt,
                  std::optional<std::string> reasoning = std::nullopt) {
        CritiqueRecord r;
        r.score = score;
        r.critique = std::move(critique);
        r.suggestion_action = std::move(action);
        r.suggestion_reasoning = std::move(reasoning);
        return r;
    };
    return {
        {"```json {\"score\": 7, \"critique\": \"ok\"} ```", rec(7, "ok")},
        {"Let me review the step.\n```json\n{\n  \"critique\": \"The query repeats the previous search.\",\n"
         "  \"score\": 2,\n  \"suggestion_search_keywords\": \"Ada Lovelace father\",\n"
         "  \"suggestion_search_reasoning\": \"The next hop asks for the father.\"\n}\n```\nDone.",
         rec(2, "The query repeats the previous search.", "Ada Lovelace father", "The next hop asks for the father.")},
        {"```json\n{\"critique\": \"Walking into the pantry wastes a step.\", \"score\": 1, "
         "\"suggestion_action\": \"go to room 2\", \"suggestion_thought\": \"The door is in room 2.\"}\n```",
         rec(1, "Walking into the pantry wastes a step.", "go to room 2", "The door is in room 2.")},
        {"```\n{\"score\": 10, \"critique\": \"Correct.\"}\n```", rec(10, "Correct.")},
        {"```json\n[{\"score\": 4, \"critique\": \"first\"}, {\"score\": 9, \"critique\": \"second\"}]\n```",
         rec(4, "first")},
        {"```json {\"score\": 6.5, \"critique\": \"half\"} ```", rec(7, "half")},
        {"```json {\"score\": 0} ```", rec(0, "")},
        {"preamble ```json {\"score\": 3, \"critique\": \"a\"} ``` and ```json {\"score\": 9} ```", rec(3, "a")},
    };
}

/// Random strings biased toward fences, braces and score keys; a third are
/// byte-level mutations of the fixtures.
inline std::string fuzz_string(CounterRng& rng)
{
    static constexpr std::array<std::string_view, 24> tokens{
        "```", "```json", "{", "}", "[", "]", "\"score\"", "\"critique\"", ":", ",", "7", "-3", "11", "6.5",
        "1e400", "null", "true", "\"", "\\", "\n", " ", "x", "\xff", "\xc3\xa9"};
    static auto const fixtures = critic_fixtures();
    std::string s;
    if (rng.bernoulli(1.0 / 3.0))
    {
        s = fixtures[rng.below(fixtures.size())].text;
        auto const edits = rng.below(4);
        for (std::uint64_t i = 0; i < edits && !s.empty(); ++i)
        {
            auto const at = rng.below(s.size());
            switch (rng.below(3))
            {
                case 0: s.erase(at, 1); break;
                case 1: s.insert(at, tokens[rng.below(tokens.size())]); break;
                default: s[at] = static_cast<char>(rng.below(256)); break;
            }
        }
        return s;
    }
    auto const n = rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i)
    {
        if (rng.bernoulli(0.1))
            s += static_cast<char>(rng.below(256));
        else
            s += tokens[rng.below(tokens.size())];
    }
    return s;
}

/// True when parse_critic_response either returns an in-range record or
/// throws one of its documented errors.
inline bool parses_totally(const std::string& text)
{
    try
    {
        auto const r = parse_critic_response(text);
        return r.score >= 0 && r.score <= 10;
    }
    catch (const Error& e)
    {
        return e.code() == Errc::NoJsonBlock || e.code() == Errc::MalformedJson ||
               e.code() == Errc::ScoreOutOfRange;
    }
    catch (...)
    {
        return false;
    }
}

} // namespace proceed::testing
