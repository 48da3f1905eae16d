#pragma once

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace countfx {

enum class TableStyle { table3, table4, table5 };
std::string_view to_string(TableStyle style);
/// Throws ReportError for an unknown name.
TableStyle table_style_from_string(std::string_view name);

/// "-0.439 (0.508)".
std::string format_estimate_p(double estimate, double p_value);
/// "ATE -0.439 (p 0.508)".
std::string format_psm_line(double ate, double p_value);
/// 3 decimals, or one significant digit for small nonzero magnitudes.
std::string format_coef(double v);
/// 15157 -> "15,157".
std::string format_count(long long n);

/// First-stage average marginal effects, one column per probit (T = 1, I = 1), with |z| in
/// parentheses. Takes pipeline documents; the first one carrying first stages is used.
std::string render_table3(const std::vector<nlohmann::json>& docs);

/// Incidence rate ratios of up to three pipeline documents side by side, followed by the
/// weak-instrument Wald, model Wald, dispersion LR and PSM blocks. A "psm" document fills
/// the PSM row of column (1).
std::string render_table4(const std::vector<nlohmann::json>& docs);

/// Pipeline documents ordered s1..s5 as columns of IRRs, or an experiment document as
/// columns of Monte Carlo summaries.
std::string render_table5(const std::vector<nlohmann::json>& docs);

/// Throws ReportError on an empty document list or documents of the wrong kind.
std::string render(TableStyle style, const std::vector<nlohmann::json>& docs);

}  // namespace countfx
