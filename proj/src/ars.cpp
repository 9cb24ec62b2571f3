#include "zidyad/ars.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace zidyad::ars {

namespace detail {

void throw_max_iter(int max_iter) {
  throw Error(ErrorCategory::convergence,
              "adaptive rejection sampling exceeded " + std::to_string(max_iter) + " iterations");
}

void throw_concavity(double x, double hull, double value) {
  std::ostringstream os;
  os << "log-concavity violated: upper hull " << hull << " below log-density " << value << " at " << x;
  throw Error(ErrorCategory::numeric, os.str());
}

void throw_init(const std::string& what) { throw Error(ErrorCategory::numeric, "ARS initialization: " + what); }

}  // namespace detail

namespace {

// log(exp(a) - exp(b)) for a >= b.
double log_diff_exp(double a, double b) {
  if (b == -kInf) return a;
  return a + std::log(-std::expm1(b - a));
}

}  // namespace

bool Envelope::insert(double x, const Eval& e) {
  if (!std::isfinite(x) || !std::isfinite(e.value) || !std::isfinite(e.slope))
    throw Error(ErrorCategory::numeric, "ARS: non-finite log-density or gradient");
  if (k_ == kCapacity) return false;
  const std::size_t pos = static_cast<std::size_t>(std::lower_bound(x_.begin(), x_.begin() + k_, x) - x_.begin());
  if (pos < k_ && x_[pos] == x) return false;
  // Slopes must be non-increasing in x.
  if (pos > 0 && e.slope > s_[pos - 1] + detail::tolerance(s_[pos - 1]))
    throw Error(ErrorCategory::numeric, "ARS: log-concavity violated (gradient increases)");
  if (pos < k_ && e.slope < s_[pos] - detail::tolerance(s_[pos]))
    throw Error(ErrorCategory::numeric, "ARS: log-concavity violated (gradient increases)");
  for (std::size_t j = k_; j > pos; --j) {
    x_[j] = x_[j - 1];
    h_[j] = h_[j - 1];
    s_[j] = s_[j - 1];
  }
  x_[pos] = x;
  h_[pos] = e.value;
  s_[pos] = e.slope;
  ++k_;
  rebuild();
  return true;
}

bool Envelope::integrable() const {
  if (k_ == 0) return false;
  if (!std::isfinite(support_.lo) && !(s_[0] > 0.0)) return false;
  if (!std::isfinite(support_.hi) && !(s_[k_ - 1] < 0.0)) return false;
  return std::isfinite(log_total_);
}

void Envelope::require_integrable() const {
  if (!integrable())
    throw Error(ErrorCategory::numeric,
                "ARS: initial hull is not integrable (need a positive gradient on the left and a negative one "
                "on the right of an unbounded support)");
}

void Envelope::rebuild() {
  for (std::size_t k = 0; k + 1 < k_; ++k) {
    const double ds = s_[k] - s_[k + 1];
    double z;
    if (ds > 1e-12 * (1.0 + std::abs(s_[k]) + std::abs(s_[k + 1]))) {
      z = (h_[k + 1] - h_[k] - x_[k + 1] * s_[k + 1] + x_[k] * s_[k]) / ds;
      z = std::clamp(z, x_[k], x_[k + 1]);
    } else {
      z = 0.5 * (x_[k] + x_[k + 1]);
    }
    z_[k] = z;
  }
  double m = -kInf;
  for (std::size_t k = 0; k < k_; ++k) {
    const double a = left_edge(k), b = right_edge(k);
    const double s = s_[k];
    double lm;
    if (!(b > a)) {
      lm = -kInf;
    } else if (std::abs(s) * (std::isfinite(b - a) ? (b - a) : kInf) < 1e-10) {
      // Flat segment: mass = exp(h) * width (infinite width means non-integrable).
      lm = std::isfinite(b - a) ? h_[k] + s * (0.5 * (a + b) - x_[k]) + std::log(b - a) : kInf;
    } else if (s > 0.0) {
      if (!std::isfinite(b)) {
        lm = kInf;
      } else {
        const double ub = h_[k] + s * (b - x_[k]);
        const double ua = std::isfinite(a) ? h_[k] + s * (a - x_[k]) : -kInf;
        lm = log_diff_exp(ub, ua) - std::log(s);
      }
    } else {
      if (!std::isfinite(a)) {
        lm = kInf;
      } else {
        const double ua = h_[k] + s * (a - x_[k]);
        const double ub = std::isfinite(b) ? h_[k] + s * (b - x_[k]) : -kInf;
        lm = log_diff_exp(ua, ub) - std::log(-s);
      }
    }
    log_mass_[k] = lm;
    m = std::max(m, lm);
  }
  if (!std::isfinite(m)) {
    log_total_ = m;
    return;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < k_; ++k) total += std::exp(log_mass_[k] - m);
  log_total_ = m + std::log(total);
}

double Envelope::upper(double x) const {
  std::size_t k = static_cast<std::size_t>(std::lower_bound(z_.begin(), z_.begin() + (k_ - 1), x) - z_.begin());
  return h_[k] + s_[k] * (x - x_[k]);
}

double Envelope::lower(double x) const {
  if (k_ < 2 || x < x_[0] || x > x_[k_ - 1]) return -kInf;
  std::size_t j = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.begin() + k_, x) - x_.begin());
  if (j >= k_) j = k_ - 1;
  const std::size_t i = j - 1;
  const double w = x_[j] - x_[i];
  return ((x_[j] - x) * h_[i] + (x - x_[i]) * h_[j]) / w;
}

double Envelope::sample(double u_segment, double u_position) const {
  // Segment by cumulative mass.
  double target = u_segment;
  std::size_t k = 0;
  double cum = 0.0;
  for (; k < k_; ++k) {
    cum += std::exp(log_mass_[k] - log_total_);
    if (target <= cum) break;
  }
  if (k == k_) k = k_ - 1;
  while (log_mass_[k] == -kInf && k > 0) --k;

  const double a = left_edge(k), b = right_edge(k);
  const double s = s_[k];
  const double u = u_position;
  const double width = b - a;
  if (std::isfinite(width) && std::abs(s) * width < 1e-10) return a + u * width;
  if (s > 0.0) {
    const double tail = std::isfinite(a) ? std::exp(-s * width) : 0.0;
    return b + std::log(u + (1.0 - u) * tail) / s;
  }
  const double tail = std::isfinite(b) ? std::exp(s * width) : 0.0;
  return a + std::log(u + (1.0 - u) * tail) / s;
}

}  // namespace zidyad::ars
