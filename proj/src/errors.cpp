#include "demand/errors.hpp"

namespace demand {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::UnbalancedPanel: return "UnbalancedPanel";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::UnmappedVehicleClass: return "UnmappedVehicleClass";
    case ErrorCode::UnitMismatch: return "UnitMismatch";
    case ErrorCode::InsufficientPeriods: return "InsufficientPeriods";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositivePrice: return "NonPositivePrice";
    case ErrorCode::NonPositiveExpenditure: return "NonPositiveExpenditure";
    case ErrorCode::WrongForm: return "WrongForm";
    case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::RankDeficientJacobian: return "RankDeficientJacobian";
    case ErrorCode::SingularResidualCovariance: return "SingularResidualCovariance";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ZeroShare: return "ZeroShare";
    case ErrorCode::NegativeVariance: return "NegativeVariance";
    case ErrorCode::ModelNotFitted: return "ModelNotFitted";
    case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::DegenerateShares: return "DegenerateShares";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace demand
