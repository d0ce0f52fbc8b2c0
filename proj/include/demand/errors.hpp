#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace demand {

enum class ErrorCode {
    MissingColumn,
    NonPositiveValue,
    UnbalancedPanel,
    DuplicateKey,
    UnmappedVehicleClass,
    UnitMismatch,
    InsufficientPeriods,
    DimensionMismatch,
    NonPositivePrice,
    NonPositiveExpenditure,
    WrongForm,
    RankDeficientDesign,
    RankDeficientJacobian,
    SingularResidualCovariance,
    NonConvergence,
    ZeroShare,
    NegativeVariance,
    ModelNotFitted,
    NonFiniteEntry,
    DegenerateShares,
    SchemaError,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and the CLI exit-status mapping) can branch without parsing text.
class DemandError : public std::runtime_error {
public:
    DemandError(ErrorCode code, const std::string &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

    ErrorCode code() const noexcept { return code_; }
    /// what() without the code prefix.
    const std::string &message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

} // namespace demand
