#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vgidm/rng.hpp"

namespace vgidm::theory {

using Distribution = std::vector<double>;

class InvalidModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void validate_distribution(const Distribution& p, const char* what) {
  if (p.empty()) throw InvalidModelError(std::string(what) + ": empty support");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidModelError(std::string(what) + ": negative or non-finite mass");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) throw InvalidModelError(std::string(what) + ": masses sum to " + std::to_string(s));
}

/**
 * Graph-conditioned distributions and the neighbourhood agreement rates
 *   rate_matched   = P(graphs agree | x matches y)
 *   rate_unmatched = P(graphs agree | x does not match y).
 */
struct Corruption {
  double rate_matched = 1.0;
  double rate_unmatched = 0.0;
  Distribution matched_agree;       ///< p(. | x matches y, graphs agree)
  Distribution matched_disagree;    ///< p(. | x matches y, graphs disagree)
  Distribution unmatched_agree;     ///< p(. | x does not match y, graphs agree)
  Distribution unmatched_disagree;  ///< p(. | x does not match y, graphs disagree)
};

/// Finite-support joint model of embedding pairs given the match label.
struct DiscreteJointModel {
  Distribution matched;    ///< p_m
  Distribution unmatched;  ///< p_u
  double prior = 0.5;      ///< P(x matches y)
  std::optional<Corruption> corruption;

  std::size_t support() const { return matched.size(); }

  void validate() const {
    validate_distribution(matched, "matched");
    validate_distribution(unmatched, "unmatched");
    if (matched.size() != unmatched.size()) throw InvalidModelError("matched and unmatched supports differ");
    if (!(prior > 0.0 && prior < 1.0)) throw InvalidModelError("prior must lie strictly inside (0, 1)");
  }

  /// P * p_m + (1 - P) * p_u.
  Distribution marginal() const {
    Distribution out(support());
    for (std::size_t a = 0; a < support(); ++a) out[a] = prior * matched[a] + (1.0 - prior) * unmatched[a];
    return out;
  }
};

/// Discriminator table d(a), one value per outcome.
struct DiscriminatorFn {
  std::vector<double> values;

  DiscriminatorFn shifted(double eps) const {
    DiscriminatorFn out = *this;
    for (auto& v : out.values) v += eps;
    return out;
  }
  bool interior() const {
    for (double v : values)
      if (!(v > 0.0 && v < 1.0)) return false;
    return true;
  }
};

inline double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binary_entropy: p outside [0, 1]");
  return -xlogx(p) - xlogx(1.0 - p);
}

struct Divergence {
  double value = 0.0;
  bool infinite = false;  ///< q(a) = 0 where p(a) > 0
};

inline Divergence kl_divergence(const Distribution& p, const Distribution& q) {
  validate_distribution(p, "kl p");
  validate_distribution(q, "kl q");
  if (p.size() != q.size()) throw InvalidModelError("kl: supports differ");
  Divergence d;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] == 0.0) continue;
    if (q[a] == 0.0) return {std::numeric_limits<double>::infinity(), true};
    d.value += p[a] * std::log(p[a] / q[a]);
  }
  return d;
}

/// Half the L1 distance.
inline double tv_distance(const Distribution& p, const Distribution& q) {
  validate_distribution(p, "tv p");
  validate_distribution(q, "tv q");
  if (p.size() != q.size()) throw InvalidModelError("tv: supports differ");
  // Overlap form 1 - sum min(p, q): exact for disjoint supports.
  double overlap = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) overlap += std::min(p[a], q[a]);
  return std::clamp(1.0 - overlap, 0.0, 1.0);
}

/// Sum of p - q over the set where p >= q.
inline double tv_distance_dominant(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw InvalidModelError("tv: supports differ");
  double s = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a)
    if (p[a] >= q[a]) s += p[a] - q[a];
  return s;
}

/// Exact expected log-likelihood: P * E_pm[ln d] + (1 - P) * E_pu[ln(1 - d)]. Zero-mass terms contribute 0.
inline double l_id_exact(const DiscreteJointModel& m, const DiscriminatorFn& d) {
  if (d.values.size() != m.support()) throw InvalidModelError("l_id: discriminator table size differs from support");
  double s = 0.0;
  for (std::size_t a = 0; a < m.support(); ++a) {
    if (m.matched[a] > 0.0) s += m.prior * m.matched[a] * std::log(d.values[a]);
    if (m.unmatched[a] > 0.0) s += (1.0 - m.prior) * m.unmatched[a] * std::log(1.0 - d.values[a]);
  }
  return s;
}

/**
 * d*(a) = P p_m(a) / p(a). Outcomes with zero marginal mass are excluded from
 * the support: they get 0.5 and are counted in *excluded.
 */
inline DiscriminatorFn optimal_discriminator(const DiscreteJointModel& m, std::size_t* excluded = nullptr) {
  const auto p = m.marginal();
  DiscriminatorFn d{std::vector<double>(m.support(), 0.5)};
  std::size_t skipped = 0;
  for (std::size_t a = 0; a < m.support(); ++a) {
    if (p[a] > 0.0) d.values[a] = m.prior * m.matched[a] / p[a];
    else ++skipped;
  }
  if (excluded) *excluded = skipped;
  return d;
}

struct Prop1Report {
  double kl = 0.0;       ///< KL(p_m || p_u)
  double bound = 0.0;    ///< (L_ID(d*) + H_b(P)) / P
  double margin = 0.0;   ///< kl - bound
  double jensen_slack = 0.0;  ///< E_p[ln(p_u / p)], recorded only
  bool kl_infinite = false;
  bool pass = false;
};

inline Prop1Report check_prop1(const DiscreteJointModel& m, double tol = 1e-9) {
  m.validate();
  Prop1Report r;
  const auto kl = kl_divergence(m.matched, m.unmatched);
  r.kl_infinite = kl.infinite;
  r.kl = kl.value;
  r.bound = (l_id_exact(m, optimal_discriminator(m)) + binary_entropy(m.prior)) / m.prior;
  const auto p = m.marginal();
  for (std::size_t a = 0; a < m.support(); ++a) {
    if (p[a] == 0.0) continue;
    r.jensen_slack += m.unmatched[a] == 0.0 ? -std::numeric_limits<double>::infinity()
                                            : p[a] * std::log(m.unmatched[a] / p[a]);
  }
  r.margin = r.kl_infinite ? std::numeric_limits<double>::infinity() : r.kl - r.bound;
  r.pass = r.kl_infinite || r.margin >= -tol;
  return r;
}

struct ScalingReport {
  std::vector<double> eps_used;
  std::vector<double> delta_generic;  ///< |L(d + eps) - L(d)|
  std::vector<double> delta_optimal;  ///< |L(d* + eps) - L(d*)|
  std::vector<double> signed_optimal; ///< L(d* + eps) - L(d*)
  double slope_generic = 0.0;
  double slope_optimal = 0.0;
  std::size_t skipped = 0;            ///< grid points where a perturbed table left (0, 1)
};

/// Least-squares slope of y on x.
inline double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("regression_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

/// Perturbation sizes as fractions of the smallest distance from a table entry to 0 or 1.
inline const std::vector<double>& default_eps_grid() {
  static const std::vector<double> grid{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  return grid;
}

inline double boundary_margin(const DiscriminatorFn& d) {
  double m = 1.0;
  for (double v : d.values) m = std::min({m, v, 1.0 - v});
  return m;
}

/// L_ID(d + eps) - L_ID(d) summed per outcome with log1p, free of cancellation.
inline double l_id_shift(const DiscreteJointModel& m, const DiscriminatorFn& d, double eps) {
  double s = 0.0;
  for (std::size_t a = 0; a < m.support(); ++a) {
    if (m.matched[a] > 0.0) s += m.prior * m.matched[a] * std::log1p(eps / d.values[a]);
    if (m.unmatched[a] > 0.0) s += (1.0 - m.prior) * m.unmatched[a] * std::log1p(-eps / (1.0 - d.values[a]));
  }
  return s;
}

/// First and second derivatives of L_ID along a constant shift of the table.
inline std::pair<double, double> shift_derivatives(const DiscreteJointModel& m, const DiscriminatorFn& d) {
  double first = 0.0, second = 0.0;
  for (std::size_t a = 0; a < d.values.size(); ++a) {
    const double wm = m.prior * m.matched[a], wu = (1.0 - m.prior) * m.unmatched[a];
    const double v = d.values[a];
    first += wm / v - wu / (1.0 - v);
    second -= wm / (v * v) + wu / ((1.0 - v) * (1.0 - v));
  }
  return {first, second};
}

/**
 * Log-log slopes of |L_ID change| against a constant shift eps, at a generic
 * table and at d*. The grid is relative unless `relative` is false:
 * eps = g * min(distance of either table to the boundary, |L'/L''| at the
 * generic table), so every point lies where the leading Taylor term dominates.
 */
inline ScalingReport perturbation_scaling(const DiscreteJointModel& m, const DiscriminatorFn& generic,
                                          const std::vector<double>& grid = default_eps_grid(),
                                          bool relative = true) {
  m.validate();
  const auto opt = optimal_discriminator(m);
  double scale = 1.0;
  if (relative) {
    const auto [first, second] = shift_derivatives(m, generic);
    scale = std::min({boundary_margin(generic), boundary_margin(opt), std::abs(first / second)});
  }
  ScalingReport r;
  std::vector<double> lx;
  std::vector<double> ly_generic, ly_optimal;
  for (double g_rel : grid) {
    const double eps = g_rel * scale;
    const auto g = generic.shifted(eps);
    const auto o = opt.shifted(eps);
    if (!g.interior() || !o.interior()) {
      ++r.skipped;
      continue;
    }
    const double dg = l_id_shift(m, generic, eps);
    const double dopt = l_id_shift(m, opt, eps);
    r.eps_used.push_back(eps);
    r.delta_generic.push_back(std::abs(dg));
    r.delta_optimal.push_back(std::abs(dopt));
    r.signed_optimal.push_back(dopt);
    lx.push_back(std::log(eps));
    ly_generic.push_back(std::log(std::abs(dg)));
    ly_optimal.push_back(std::log(std::abs(dopt)));
  }
  if (lx.size() < 2) {
    r.slope_generic = r.slope_optimal = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.slope_generic = regression_slope(lx, ly_generic);
  r.slope_optimal = regression_slope(lx, ly_optimal);
  return r;
}

struct Prop3Report {
  double tv = 0.0;
  double tv_check = 0.0;  ///< TV by the dominant-set formula
  double bound = 0.0;
  bool pass = false;
};

/// Mixes the graph-conditioned distributions into p_m and p_u by the agreement rates.
inline DiscreteJointModel mix_corruption(const Corruption& c, double prior = 0.5) {
  for (double r : {c.rate_matched, c.rate_unmatched})
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidModelError("agreement rate outside [0, 1]");
  validate_distribution(c.matched_agree, "matched_agree");
  validate_distribution(c.matched_disagree, "matched_disagree");
  validate_distribution(c.unmatched_agree, "unmatched_agree");
  validate_distribution(c.unmatched_disagree, "unmatched_disagree");
  const std::size_t k = c.matched_agree.size();
  for (const auto* d : {&c.matched_disagree, &c.unmatched_agree, &c.unmatched_disagree})
    if (d->size() != k) throw InvalidModelError("graph-conditioned supports differ");
  DiscreteJointModel m;
  m.prior = prior;
  m.matched.resize(k);
  m.unmatched.resize(k);
  for (std::size_t a = 0; a < k; ++a) {
    m.matched[a] = c.rate_matched * c.matched_agree[a] + (1.0 - c.rate_matched) * c.matched_disagree[a];
    m.unmatched[a] = c.rate_unmatched * c.unmatched_agree[a] + (1.0 - c.rate_unmatched) * c.unmatched_disagree[a];
  }
  // Renormalize away rounding so the mixture passes the 1e-12 sum check.
  for (auto* d : {&m.matched, &m.unmatched}) {
    const double s = std::accumulate(d->begin(), d->end(), 0.0);
    for (auto& v : *d) v /= s;
  }
  m.corruption = c;
  return m;
}

/**
 * TV(p_m, p_u) against
 *   rate_m * sum_B (matched_agree - unmatched_disagree) + rate_m - rate_u - 1,
 * B = {a : p_m(a) >= p_u(a)}.
 */
inline Prop3Report check_prop3(const DiscreteJointModel& m, double tol = 1e-9) {
  if (!m.corruption) throw InvalidModelError("check_prop3: model has no graph-conditioned distributions");
  const auto& c = *m.corruption;
  Prop3Report r;
  r.tv = tv_distance(m.matched, m.unmatched);
  r.tv_check = tv_distance_dominant(m.matched, m.unmatched);
  double s = 0.0;
  for (std::size_t a = 0; a < m.support(); ++a)
    if (m.matched[a] >= m.unmatched[a]) s += c.matched_agree[a] - c.unmatched_disagree[a];
  r.bound = c.rate_matched * s + c.rate_matched - c.rate_unmatched - 1.0;
  r.pass = r.tv >= r.bound - tol;
  return r;
}

/// Random model: p_m and p_u from a symmetric Dirichlet, prior uniform in [0.1, 0.9].
inline DiscreteJointModel random_model(Rng& rng, std::size_t support, double alpha = 1.0) {
  DiscreteJointModel m;
  m.matched = rng.dirichlet(support, alpha);
  m.unmatched = rng.dirichlet(support, alpha);
  m.prior = rng.uniform(0.1, 0.9);
  return m;
}

inline DiscreteJointModel random_corrupted_model(Rng& rng, std::size_t support, double alpha = 1.0) {
  Corruption c;
  c.rate_matched = rng.uniform(0.0, 1.0);
  c.rate_unmatched = rng.uniform(0.0, 1.0);
  c.matched_agree = rng.dirichlet(support, alpha);
  c.matched_disagree = rng.dirichlet(support, alpha);
  c.unmatched_agree = rng.dirichlet(support, alpha);
  c.unmatched_disagree = rng.dirichlet(support, alpha);
  return mix_corruption(c, rng.uniform(0.1, 0.9));
}

/// Noiseless case: graphs always agree on matches and never on non-matches, clean distributions disjoint.
inline DiscreteJointModel ideal_corrupted_model(Rng& rng, std::size_t support, double alpha = 1.0) {
  if (support < 2) throw InvalidModelError("ideal model needs two or more outcomes");
  const std::size_t half = support / 2;
  auto on_range = [&](std::size_t lo, std::size_t hi) {
    const auto w = rng.dirichlet(hi - lo, alpha);
    Distribution d(support, 0.0);
    for (std::size_t a = lo; a < hi; ++a) d[a] = w[a - lo];
    return d;
  };
  Corruption c;
  c.rate_matched = 1.0;
  c.rate_unmatched = 0.0;
  c.matched_agree = on_range(0, half);
  c.unmatched_disagree = on_range(half, support);
  c.matched_disagree = rng.dirichlet(support, alpha);
  c.unmatched_agree = rng.dirichlet(support, alpha);
  return mix_corruption(c);
}

inline DiscriminatorFn random_table(Rng& rng, std::size_t support, double lo = 0.2, double hi = 0.8) {
  DiscriminatorFn d;
  for (std::size_t a = 0; a < support; ++a) d.values.push_back(rng.uniform(lo, hi));
  return d;
}

}  // namespace vgidm::theory
