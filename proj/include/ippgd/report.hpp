#pragma once

#include <deque>
#include <string>
#include <vector>

namespace ippgd {

/// Worst observed violation of one inequality over a batch of samples.
/// Violations are relative: max(0, lhs - rhs) / max(|lhs|, |rhs|, floor).
struct InequalityCheck {
  std::string name;
  double max_violation = 0.0;
  int samples = 0;
  int worst_index = -1;

  void record(double lhs, double rhs, int index, double floor = 1e-300);
};

struct CheckReport {
  /// A deque keeps references returned by add() valid across later adds.
  std::deque<InequalityCheck> checks;
  double tolerance = 0.0;

  InequalityCheck& add(const std::string& name);
  InequalityCheck* find(const std::string& name);
  const InequalityCheck* find(const std::string& name) const;
  bool passed() const;
  /// Name of the check with the largest violation, empty if none.
  std::string worst() const;
  double max_violation() const;
  void merge(const CheckReport& other, const std::string& prefix = "");
};

}  // namespace ippgd
