// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace proceed
{

enum class Errc
{
    // trajectory_core
    AppendAfterDone,
    IndexGap,
    DoubleFinalize,
    MalformedRecord,
    InvariantViolation,
    EmptyGroup,
    // environments
    InvalidTask,
    InadmissibleAction,
    StepAfterDone,
    // policy
    EmptyCandidates,
    ActionNotCandidate,
    // critic
    ContractViolation,
    BackendFailure,
    NoAlternativeAction,
    // llm_adapter
    Timeout,
    HttpError,
    RateLimited,
    ExhaustedRetries,
    MissingBinding,
    UnknownTemplate,
    NoJsonBlock,
    MalformedJson,
    ScoreOutOfRange,
    // rollout / optimizer
    ZeroPolicyUnits,
    DomainError,
    EmptyBufferAfterDrop,
    NoCorrectSamples,
    // harness
    ConfigError,
    IoError,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on kind, not text.
class Error : public std::runtime_error
{
public:
    Error(Errc code, const std::string& what);

    [[nodiscard]] Errc code() const noexcept { return _code; }

private:
    Errc _code;
};

/// MalformedRecord with the offending 1-based line number attached.
class RecordError : public Error
{
public:
    RecordError(std::size_t line, const std::string& what);

    [[nodiscard]] std::size_t line() const noexcept { return _line; }

private:
    std::size_t _line;
};

/// HttpError with the response status attached.
class HttpStatusError : public Error
{
public:
    HttpStatusError(int status, const std::string& what);

    [[nodiscard]] int status() const noexcept { return _status; }

private:
    int _status;
};

} // namespace proceed
