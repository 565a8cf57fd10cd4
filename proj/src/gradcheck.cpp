#include "ntljb/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ntljb {

GradCheckReport check_gradient(const std::function<double()>& loss,
                               float* values, const float* analytic,
                               std::int64_t n, double h, double floor) {
  GradCheckReport rep;
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const float saved = values[i];
    values[i] = static_cast<float>(saved + h);
    const double up = loss();
    values[i] = static_cast<float>(saved - h);
    const double down = loss();
    values[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(fd), floor});
    const double rel = std::fabs(a - fd) / denom;
    sum += rel;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
      rep.worst_analytic = a;
      rep.worst_numeric = fd;
    }
    ++rep.checked;
  }
  rep.mean_rel_err = rep.checked ? sum / static_cast<double>(rep.checked) : 0.0;
  return rep;
}

}  // namespace ntljb
