#pragma once

#include <string>

namespace demand {

/// Report precision shared by the text and JSON outputs.
inline constexpr int kReportDigits = 6;

/// printf "%.*g" with `digits` significant digits; "-0" prints as "0".
std::string format_sig(double value, int digits = kReportDigits);
/// The double that format_sig prints, so JSON and text carry the same number.
double round_sig(double value, int digits = kReportDigits);

} // namespace demand
