// SPDX-License-Identifier: Apache-2.0
#include "proceed/error.hpp"
#include "proceed/prompts.hpp"

#include "../support/critic_fixtures.hpp"

#include <doctest.h>

using namespace proceed;

namespace
{

std::map<std::string, std::string> bind_all(std::string_view id)
{
    std::map<std::string, std::string> b;
    for (auto const& name: template_placeholders(id))
        b[name] = "<" + name + ">";
    return b;
}

Errc code_of(std::string_view text)
{
    try
    {
        (void)parse_critic_response(text);
    }
    catch (const Error& e)
    {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::IoError;
}

} // namespace

TEST_CASE("templates render with every placeholder bound")
{
    CHECK(template_ids().size() == 5);
    for (auto id: template_ids())
    {
        auto const msgs = render_prompt(id, bind_all(id));
        REQUIRE(msgs.size() == 1);
        CHECK(msgs[0].role == "user");
        for (auto const& name: template_placeholders(id))
            CHECK(msgs[0].content.find("<" + name + ">") != std::string::npos);
        CHECK(msgs[0].content.find("{problem}") == std::string::npos);
    }

    auto const search = render_prompt("search_critic", bind_all("search_critic"))[0].content;
    for (auto const* section: {"Question:", "Search Query:", "History Turns:"})
        CHECK(search.find(section) != std::string::npos);
    auto const corridor = render_prompt("corridor_critic", bind_all("corridor_critic"))[0].content;
    CHECK(corridor.find("Admissible Actions:") != std::string::npos);
}

TEST_CASE("template errors")
{
    auto b = bind_all("search_critic");
    b.erase("history");
    try
    {
        (void)render_prompt("search_critic", b);
        FAIL("expected MissingBinding");
    }
    catch (const Error& e)
    {
        CHECK(e.code() == Errc::MissingBinding);
    }
    CHECK_THROWS_AS(template_body("nope"), Error);
    CHECK_THROWS_AS(render_prompt("nope", {}), Error);
}

TEST_CASE("critic replies parse to the expected records")
{
    for (auto const& f: testing::critic_fixtures())
    {
        CAPTURE(f.text);
        CHECK(parse_critic_response(f.text) == f.expected);
    }
}

TEST_CASE("critic reply errors")
{
    CHECK(code_of("```json {\"score\": 11, \"critique\": \"x\"} ```") == Errc::ScoreOutOfRange);
    CHECK(code_of("```json {\"score\": -1} ```") == Errc::ScoreOutOfRange);
    CHECK(code_of("The step looks fine, score 7.") == Errc::NoJsonBlock);
    CHECK(code_of("```json {\"score\": 7") == Errc::NoJsonBlock);
    CHECK(code_of("```json {\"score\": } ```") == Errc::MalformedJson);
    CHECK(code_of("```json {\"critique\": \"no score\"} ```") == Errc::MalformedJson);
    CHECK(code_of("```json {\"score\": \"7\"} ```") == Errc::MalformedJson);
}

TEST_CASE("parser is total on random input")
{
    CounterRng rng(99);
    for (int i = 0; i < 2000; ++i)
    {
        auto const s = testing::fuzz_string(rng);
        CAPTURE(s);
        CHECK(testing::parses_totally(s));
    }
}

TEST_CASE("action tags")
{
    CHECK(extract_action_tag("think <action> go to room 2 </action>") == "go to room 2");
    CHECK(extract_action_tag("<action>a</action> then <action>b</action>") == "b");
    CHECK_FALSE(extract_action_tag("no tag here"));
    CHECK_FALSE(extract_action_tag("</action> only"));
}
