#pragma once

// Nakagami-m fading model and instantaneous M-QAM bit error rates.

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nakaber/quad.hpp"
#include "nakaber/specfun.hpp"

namespace nakaber {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Nakagami shape m and linear mean SNR. m < 1 (hyper-Rayleigh) is allowed.
class ChannelParams {
 public:
  ChannelParams(double m, double mean_snr) : m_(m), mean_snr_(mean_snr) {
    if (!std::isfinite(m) || !(m > 0.0)) throw DomainError("ChannelParams: m must be positive");
    if (!std::isfinite(mean_snr) || !(mean_snr > 0.0)) {
      throw DomainError("ChannelParams: mean SNR must be positive");
    }
  }

  double m() const noexcept { return m_; }
  double mean_snr() const noexcept { return mean_snr_; }

  /// m / (alpha * mean_snr), the scaled inverse SNR used by the closed forms.
  double inverse_load(double alpha) const { return m_ / (alpha * mean_snr_); }

 private:
  double m_;
  double mean_snr_;
};

/// Square M-QAM with its BER constants c0 = (sqrt M - 1)/(sqrt M log2 M) and
/// c1 = 3 log2 M / (2 (M - 1)).
class Modulation {
 public:
  explicit Modulation(int order) : order_(order) {
    bool ok = false;
    for (int m = 4; m <= 4096; m *= 4) ok = ok || (m == order);
    if (!ok) {
      throw DomainError("Modulation: order must be a square QAM size in {4, 16, 64, 256, 1024, 4096}");
    }
    int bits = 0;
    while ((1 << bits) < order) ++bits;
    side_ = 1 << (bits / 2);
    const double s = static_cast<double>(side_);
    const double k = static_cast<double>(bits);
    c0_ = (s - 1.0) / (s * k);
    c1_ = 3.0 * k / (2.0 * (static_cast<double>(order) - 1.0));
  }

  int order() const noexcept { return order_; }
  /// sqrt(M)
  int side() const noexcept { return side_; }
  /// Number of terms in the nearest-neighbour style approximation, sqrt(M)/2.
  int lu_terms() const noexcept { return side_ / 2; }
  double c0() const noexcept { return c0_; }
  double c1() const noexcept { return c1_; }

 private:
  int order_;
  int side_ = 0;
  double c0_ = 0.0;
  double c1_ = 0.0;
};

struct ExpTerm {
  double weight;
  double rate;
};

/// Q(x) either exactly or as sum_i w_i exp(-r_i x^2).
struct QApproxVariant {
  enum class Tag { exact, chiani_two_term, custom };

  Tag tag = Tag::exact;
  std::vector<ExpTerm> terms;

  static QApproxVariant exact() { return {}; }

  static QApproxVariant chiani() {
    return {Tag::chiani_two_term, {{1.0 / 12.0, 0.5}, {0.25, 2.0 / 3.0}}};
  }

  static QApproxVariant custom(std::vector<ExpTerm> terms) {
    if (terms.empty()) throw DomainError("QApproxVariant: need at least one term");
    for (const auto& t : terms) {
      if (!(t.weight > 0.0) || !(t.rate > 0.0) || !std::isfinite(t.weight) ||
          !std::isfinite(t.rate)) {
        throw DomainError("QApproxVariant: weights and rates must be positive");
      }
    }
    return {Tag::custom, std::move(terms)};
  }

  std::string label() const {
    switch (tag) {
      case Tag::exact: return "exact";
      case Tag::chiani_two_term: return "chiani";
      case Tag::custom: return "custom";
    }
    return "unknown";
  }
};

/// Density of the instantaneous SNR (gamma law with shape m, mean mean_snr).
inline double pdf(const ChannelParams& ch, double snr) {
  if (!(snr >= 0.0)) throw DomainError("pdf: SNR must be nonnegative");
  const double m = ch.m();
  const double g = ch.mean_snr();
  if (snr == 0.0) {
    if (m < 1.0) return std::numeric_limits<double>::infinity();
    if (m > 1.0) return 0.0;
    return 1.0 / g;
  }
  if (std::isinf(snr)) return 0.0;
  const double log_density =
      m * std::log(m / g) + (m - 1.0) * std::log(snr) - m * snr / g - log_gamma(m);
  return std::exp(log_density);
}

/// E[exp(p * snr)] = (1 - p mean_snr / m)^(-m).
inline double mgf(const ChannelParams& ch, double p) {
  const double u = p * ch.mean_snr() / ch.m();
  if (!std::isfinite(u) || !(u < 1.0)) throw DomainError("mgf: argument at or beyond the pole");
  return std::exp(-ch.m() * std::log1p(-u));
}

/// Exact M-QAM BER: 4 c0 Q(sqrt(2 c1 snr)) - 4 c0^2 Q^2(sqrt(2 c1 snr)).
inline double ber_exact(const Modulation& mod, double snr) {
  if (!(snr >= 0.0)) throw DomainError("ber_exact: SNR must be nonnegative");
  const double q = gauss_q(std::sqrt(2.0 * mod.c1() * snr));
  const double c0 = mod.c0();
  return 4.0 * c0 * q - 4.0 * c0 * c0 * q * q;
}

/// Sum-of-Q approximation: 4 c0 sum_{j=1}^{sqrt(M)/2} Q((2j-1) sqrt(2 c1 snr)).
inline double ber_lu_approx(const Modulation& mod, double snr) {
  if (!(snr >= 0.0)) throw DomainError("ber_lu_approx: SNR must be nonnegative");
  const double root = std::sqrt(2.0 * mod.c1() * snr);
  double sum = 0.0;
  for (int j = 1; j <= mod.lu_terms(); ++j) {
    sum += gauss_q(static_cast<double>(2 * j - 1) * root);
  }
  return 4.0 * mod.c0() * sum;
}

inline double q_exp_approx(const QApproxVariant& v, double x) {
  if (!(x >= 0.0)) throw DomainError("q_exp_approx: argument must be nonnegative");
  if (v.tag == QApproxVariant::Tag::exact) return gauss_q(x);
  double sum = 0.0;
  for (const auto& t : v.terms) sum += t.weight * std::exp(-t.rate * x * x);
  return sum;
}

/// M-QAM BER with Q replaced by an exponential-sum approximation.
inline double ber_expq(const Modulation& mod, const QApproxVariant& v, double snr) {
  if (!(snr >= 0.0)) throw DomainError("ber_expq: SNR must be nonnegative");
  const double q = q_exp_approx(v, std::sqrt(2.0 * mod.c1() * snr));
  const double c0 = mod.c0();
  return 4.0 * c0 * q - 4.0 * c0 * c0 * q * q;
}

/// E[g(snr)] under the fading density, by quadrature.
///
/// Substitutes snr = mean_snr * w^2, which folds the sqrt(snr) inside Q(.)
/// into a smooth argument and replaces the snr^(m-1) factor by w^(2m-1).
template <typename G>
QuadratureResult average_over_fading(const ChannelParams& ch, G&& g, const QuadratureSpec& spec = {}) {
  const double m = ch.m();
  const double g_bar = ch.mean_snr();
  const double log_norm = std::log(2.0) + m * std::log(m) - log_gamma(m);
  auto integrand = [&](double w) {
    if (w == 0.0) return 0.0;
    const double log_weight = log_norm + (2.0 * m - 1.0) * std::log(w) - m * w * w;
    if (log_weight < -745.0) return 0.0;
    return g(g_bar * w * w) * std::exp(log_weight);
  };
  return integrate_semi_infinite(integrand, 0.0, spec);
}

}  // namespace nakaber
