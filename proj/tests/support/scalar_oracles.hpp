#pragma once

// hidden_dim = 1 scenarios for the attention modules and one decoder step,
// each paired with a longhand evaluation in plain double arithmetic.

#include <string>
#include <vector>

namespace cntf::testing {

inline constexpr double kScalarTolerance = 1e-10;

struct OracleComparison {
  std::string name;  // "<scenario>.<quantity>"
  double actual = 0.0;
  double expected = 0.0;
};

std::vector<OracleComparison> scalar_scenarios();

double max_abs_error(const std::vector<OracleComparison>& comparisons);

}  // namespace cntf::testing
