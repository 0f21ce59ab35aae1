// SPDX-License-Identifier: Apache-2.0
#include "proceed/error.hpp"
#include "proceed/rng.hpp"

#include <cmath>
#include <numbers>

namespace proceed
{

std::string_view to_string(Errc code) noexcept
{
    switch (code)
    {
        case Errc::AppendAfterDone: return "AppendAfterDone";
        case Errc::IndexGap: return "IndexGap";
        case Errc::DoubleFinalize: return "DoubleFinalize";
        case Errc::MalformedRecord: return "MalformedRecord";
        case Errc::InvariantViolation: return "InvariantViolation";
        case Errc::EmptyGroup: return "EmptyGroup";
        case Errc::InvalidTask: return "InvalidTask";
        case Errc::InadmissibleAction: return "InadmissibleAction";
        case Errc::StepAfterDone: return "StepAfterDone";
        case Errc::EmptyCandidates: return "EmptyCandidates";
        case Errc::ActionNotCandidate: return "ActionNotCandidate";
        case Errc::ContractViolation: return "ContractViolation";
        case Errc::BackendFailure: return "BackendFailure";
        case Errc::NoAlternativeAction: return "NoAlternativeAction";
        case Errc::Timeout: return "Timeout";
        case Errc::HttpError: return "HTTPError";
        case Errc::RateLimited: return "RateLimited";
        case Errc::ExhaustedRetries: return "ExhaustedRetries";
        case Errc::MissingBinding: return "MissingBinding";
        case Errc::UnknownTemplate: return "UnknownTemplate";
        case Errc::NoJsonBlock: return "NoJsonBlock";
        case Errc::MalformedJson: return "MalformedJson";
        case Errc::ScoreOutOfRange: return "ScoreOutOfRange";
        case Errc::ZeroPolicyUnits: return "ZeroPolicyUnits";
        case Errc::DomainError: return "DomainError";
        case Errc::EmptyBufferAfterDrop: return "EmptyBufferAfterDrop";
        case Errc::NoCorrectSamples: return "NoCorrectSamples";
        case Errc::ConfigError: return "ConfigError";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& what):
    std::runtime_error(std::string(to_string(code)) + ": " + what), _code(code)
{
}

RecordError::RecordError(std::size_t line, const std::string& what):
    Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": " + what), _line(line)
{
}

HttpStatusError::HttpStatusError(int status, const std::string& what):
    Error(Errc::HttpError, "status " + std::to_string(status) + ": " + what), _status(status)
{
}

double CounterRng::normal() noexcept
{
    // 1 - u keeps the log argument in (0, 1].
    double const u1 = 1.0 - uniform();
    double const u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace proceed
