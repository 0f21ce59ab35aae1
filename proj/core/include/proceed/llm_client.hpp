// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace proceed
{

struct ChatMessage
{
    std::string role; // system | user | assistant
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct Sampling
{
    double temperature = 0.7;
    double top_p = 1.0;
    int max_tokens = 4096;
};

struct Usage
{
    std::int64_t prompt_units = 0;
    std::int64_t completion_units = 0;
};

struct ChatExchange
{
    std::vector<ChatMessage> messages;
    Sampling sampling;
    std::string response_text;
    Usage usage;
};

struct HttpResponse
{
    int status = 0;
    std::string body;
};

/// Posts one request body. Throws Error(Timeout) when no response arrives.
class Transport
{
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& body, const std::map<std::string, std::string>& headers) = 0;
};

/// httplib-backed transport for an http(s) chat-completion URL.
class HttpTransport final : public Transport
{
public:
    HttpTransport(std::string endpoint_url, std::chrono::milliseconds timeout);
    HttpResponse post(const std::string& body, const std::map<std::string, std::string>& headers) override;

private:
    std::string _origin;
    std::string _path;
    std::chrono::milliseconds _timeout;
};

struct ClientConfig
{
    std::string endpoint_url;
    std::string model_name;
    /// Read from PROCEED_API_KEY when empty.
    std::string api_key;
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    double backoff_multiplier = 2.0;
    std::chrono::milliseconds max_backoff{8000};
    std::chrono::milliseconds timeout{60000};
    int max_in_flight = 8;
};

/// Throws ConfigError for missing URL/model or non-positive limits.
void validate(const ClientConfig& config);

/// Chat-completion client. Thread-safe; concurrent calls beyond
/// `max_in_flight` block until a slot frees.
class LlmClient
{
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit LlmClient(ClientConfig config, std::unique_ptr<Transport> transport = nullptr, Sleeper sleeper = {});

    /// Fills response_text and usage. Retries timeouts, 429 and 5xx with
    /// exponential backoff; other 4xx fail immediately with HttpError.
    /// Throws ExhaustedRetries after max_retries + 1 failed attempts,
    /// MalformedJson for an unreadable response body.
    void complete(ChatExchange& exchange) const;

    [[nodiscard]] const ClientConfig& config() const noexcept { return _config; }

    std::string request_body(const ChatExchange& exchange) const;

private:
    ClientConfig _config;
    std::unique_ptr<Transport> _transport;
    Sleeper _sleeper;
    mutable std::mutex _mutex;
    mutable std::condition_variable _slot_freed;
    mutable int _in_flight = 0;
};

/// Parses choices[0].message.content and usage.{prompt,completion}_tokens.
/// Throws MalformedJson.
void read_completion(const std::string& body, ChatExchange& exchange);

} // namespace proceed
