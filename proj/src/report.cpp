#include "ippgd/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ippgd {

void InequalityCheck::record(double lhs, double rhs, int index, double floor) {
  ++samples;
  double v;
  if (!std::isfinite(lhs) || !std::isfinite(rhs)) {
    v = std::numeric_limits<double>::infinity();
  } else {
    const double scale = std::max({std::abs(lhs), std::abs(rhs), floor});
    v = std::max(0.0, lhs - rhs) / scale;
  }
  if (v > max_violation || worst_index < 0) {
    if (v > max_violation) max_violation = v;
    worst_index = index;
  }
}

InequalityCheck& CheckReport::add(const std::string& name) {
  if (auto* c = find(name)) return *c;
  checks.push_back({name});
  return checks.back();
}

InequalityCheck* CheckReport::find(const std::string& name) {
  for (auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const InequalityCheck* CheckReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

bool CheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [this](const InequalityCheck& c) { return c.max_violation <= tolerance; });
}

std::string CheckReport::worst() const {
  std::string name;
  double v = -1.0;
  for (const auto& c : checks) {
    if (c.max_violation > v) {
      v = c.max_violation;
      name = c.name;
    }
  }
  return name;
}

double CheckReport::max_violation() const {
  double v = 0.0;
  for (const auto& c : checks) v = std::max(v, c.max_violation);
  return v;
}

void CheckReport::merge(const CheckReport& other, const std::string& prefix) {
  for (const auto& c : other.checks) {
    InequalityCheck& mine = add(prefix + c.name);
    if (c.max_violation > mine.max_violation) {
      mine.max_violation = c.max_violation;
      mine.worst_index = c.worst_index;
    }
    mine.samples += c.samples;
  }
  tolerance = std::max(tolerance, other.tolerance);
}

}  // namespace ippgd
