#pragma once

// Least-squares power-law fitting on log-log axes, shared by the
// finite-difference slope checks and the convergence-rate reports.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace deeplimit {

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;  // of the log-log line
  double r2 = 1.0;
  int used = 0;     // points entering the fit
  int dropped = 0;  // nonpositive points excluded
};

// Fits log(y) = slope * log(x) + intercept.  Points with x <= 0 or y <= 0
// carry no information on these axes and are excluded (counted in dropped).
inline PowerLawFit loglog_fit(const std::vector<std::pair<double, double>>& pts) {
  PowerLawFit out;
  std::vector<std::pair<double, double>> logs;
  for (const auto& [x, y] : pts) {
    if (x > 0.0 && y > 0.0)
      logs.emplace_back(std::log(x), std::log(y));
    else
      ++out.dropped;
  }
  out.used = static_cast<int>(logs.size());
  if (logs.size() < 2) return out;

  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
  }
  const double mx = sx / logs.size(), my = sy / logs.size();
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : logs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;

  double ssres = 0.0, sstot = 0.0;
  for (const auto& [x, y] : logs) {
    const double pred = out.slope * x + out.intercept;
    ssres += (y - pred) * (y - pred);
    sstot += (y - my) * (y - my);
  }
  out.r2 = sstot > 0.0 ? 1.0 - ssres / sstot : 1.0;
  return out;
}

}  // namespace deeplimit
