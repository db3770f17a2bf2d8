#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace slitlab {

enum class Errc {
    invalid_parameter,
    configuration,
    degenerate_distribution,
    contract_violation,
    insufficient_data,
    empty_histogram,
    mismatched_normalization,
    negative_intensity,
    flat_data,
    empty_mask_complement,
    planning,
    version_mismatch,
    checksum_failure,
    summary_mismatch,
    replay_mismatch,
    malformed_record,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::configuration: return "configuration";
    case Errc::degenerate_distribution: return "degenerate-distribution";
    case Errc::contract_violation: return "contract-violation";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::empty_histogram: return "empty-histogram";
    case Errc::mismatched_normalization: return "mismatched-normalization";
    case Errc::negative_intensity: return "negative-intensity";
    case Errc::flat_data: return "flat-data";
    case Errc::empty_mask_complement: return "empty-mask-complement";
    case Errc::planning: return "planning";
    case Errc::version_mismatch: return "version-mismatch";
    case Errc::checksum_failure: return "checksum-failure";
    case Errc::summary_mismatch: return "summary-mismatch";
    case Errc::replay_mismatch: return "replay-mismatch";
    case Errc::malformed_record: return "malformed-record";
    }
    return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Raised by agents when a target channel cannot be steered to.
class PlanningError : public Error {
public:
    PlanningError(const std::string& message, std::optional<std::size_t> seq = std::nullopt)
        : Error(Errc::planning, seq ? message + " (attempt " + std::to_string(*seq) + ")" : message),
          reason_(message), seq_(seq) {}

    [[nodiscard]] const std::string& reason() const noexcept { return reason_; }
    [[nodiscard]] std::optional<std::size_t> seq() const noexcept { return seq_; }

private:
    std::string reason_;
    std::optional<std::size_t> seq_;
};

} // namespace slitlab
