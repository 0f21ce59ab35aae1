// SPDX-License-Identifier: Apache-2.0
#include "proceed/llm_client.hpp"

#include "proceed/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace proceed
{

HttpTransport::HttpTransport(std::string endpoint_url, std::chrono::milliseconds timeout): _timeout(timeout)
{
    auto const scheme_end = endpoint_url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(Errc::ConfigError, fmt::format("endpoint_url '{}' has no scheme", endpoint_url));
    auto const path_start = endpoint_url.find('/', scheme_end + 3);
    _origin = endpoint_url.substr(0, path_start);
    _path = path_start == std::string::npos ? "/" : endpoint_url.substr(path_start);
}

HttpResponse HttpTransport::post(const std::string& body, const std::map<std::string, std::string>& headers)
{
    httplib::Client client(_origin);
    auto const secs = std::chrono::duration_cast<std::chrono::seconds>(_timeout);
    auto const usecs = std::chrono::duration_cast<std::chrono::microseconds>(_timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers h;
    for (auto const& [k, v]: headers)
        h.emplace(k, v);
    auto res = client.Post(_path, h, body, "application/json");
    if (!res)
        throw Error(Errc::Timeout, fmt::format("request to {}{} failed: {}", _origin, _path,
                                               httplib::to_string(res.error())));
    return {res->status, res->body};
}

void validate(const ClientConfig& config)
{
    if (config.endpoint_url.empty())
        throw Error(Errc::ConfigError, "endpoint_url is not set");
    if (config.model_name.empty())
        throw Error(Errc::ConfigError, "model_name is not set");
    if (config.max_retries < 0)
        throw Error(Errc::ConfigError, "max_retries must be non-negative");
    if (config.max_in_flight < 1)
        throw Error(Errc::ConfigError, "max_in_flight must be >= 1");
    if (config.backoff_multiplier < 1.0)
        throw Error(Errc::ConfigError, "backoff_multiplier must be >= 1");
}

LlmClient::LlmClient(ClientConfig config, std::unique_ptr<Transport> transport, Sleeper sleeper):
    _config(std::move(config)), _transport(std::move(transport)), _sleeper(std::move(sleeper))
{
    validate(_config);
    if (_config.api_key.empty())
        if (char const* key = std::getenv("PROCEED_API_KEY"))
            _config.api_key = key;
    if (!_transport)
        _transport = std::make_unique<HttpTransport>(_config.endpoint_url, _config.timeout);
    if (!_sleeper)
        _sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string LlmClient::request_body(const ChatExchange& exchange) const
{
    if (exchange.sampling.max_tokens < 1)
        throw Error(Errc::DomainError, "max_tokens must be >= 1");
    nlohmann::ordered_json messages = nlohmann::ordered_json::array();
    for (auto const& m: exchange.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::ordered_json body{
        {"model", _config.model_name},
        {"messages", std::move(messages)},
        {"temperature", exchange.sampling.temperature},
        {"top_p", exchange.sampling.top_p},
        {"max_tokens", exchange.sampling.max_tokens},
    };
    return body.dump();
}

void read_completion(const std::string& body, ChatExchange& exchange)
{
    try
    {
        auto const j = nlohmann::json::parse(body);
        exchange.response_text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        exchange.usage = {};
        if (auto it = j.find("usage"); it != j.end() && it->is_object())
        {
            exchange.usage.prompt_units = std::max<std::int64_t>(0, it->value("prompt_tokens", 0));
            exchange.usage.completion_units = std::max<std::int64_t>(0, it->value("completion_tokens", 0));
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(Errc::MalformedJson, fmt::format("unreadable completion response: {}", e.what()));
    }
}

void LlmClient::complete(ChatExchange& exchange) const
{
    auto const body = request_body(exchange);
    std::map<std::string, std::string> headers;
    if (!_config.api_key.empty())
        headers["Authorization"] = "Bearer " + _config.api_key;

    {
        std::unique_lock lock(_mutex);
        _slot_freed.wait(lock, [&] { return _in_flight < _config.max_in_flight; });
        ++_in_flight;
    }
    struct Release
    {
        const LlmClient* self;
        ~Release()
        {
            {
                std::lock_guard lock(self->_mutex);
                --self->_in_flight;
            }
            self->_slot_freed.notify_one();
        }
    } release{this};

    auto delay = _config.initial_backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= _config.max_retries; ++attempt)
    {
        if (attempt > 0)
        {
            _sleeper(delay);
            auto const next = std::chrono::milliseconds(
                static_cast<std::int64_t>(static_cast<double>(delay.count()) * _config.backoff_multiplier));
            delay = std::min(next, _config.max_backoff);
        }
        try
        {
            auto const res = _transport->post(body, headers);
            if (res.status >= 200 && res.status < 300)
            {
                read_completion(res.body, exchange);
                return;
            }
            if (res.status == 429)
            {
                last_error = Error(Errc::RateLimited, "status 429").what();
            }
            else if (res.status >= 500)
            {
                last_error = HttpStatusError(res.status, res.body).what();
            }
            else
            {
                throw HttpStatusError(res.status, res.body);
            }
        }
        catch (const HttpStatusError&)
        {
            throw;
        }
        catch (const Error& e)
        {
            if (e.code() != Errc::Timeout)
                throw;
            last_error = e.what();
        }
        spdlog::warn("completion attempt {} failed: {}", attempt + 1, last_error);
    }
    throw Error(Errc::ExhaustedRetries,
                fmt::format("{} attempts failed; last error: {}", _config.max_retries + 1, last_error));
}

} // namespace proceed
